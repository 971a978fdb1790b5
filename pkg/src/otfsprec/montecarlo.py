"""Seeded, reproducible BER simulation.

Frames are drawn in fixed-size blocks. Block ``b`` of SNR point ``i`` uses
a generator seeded from ``(master_seed, i, b)`` only, and inside a block
the draws happen in a fixed order (bits, channel, noise), so results do
not depend on the precoder, the detector or how blocks are scheduled.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import channel as chn
from .channel import FreqSelective, TimeSelective
from .detector import (
    DEFAULT_ML_BUDGET,
    DetectorKind,
    check_ml_feasible,
    lmmse_spectral,
    ml_detect_batch,
    slice_indices,
)
from .errors import ParameterError, StatisticalValidityError
from .modem import OtfsDims, add_cp, bits_to_indices, get_alphabet, indices_to_bits, otfs_demodulate, otfs_modulate, remove_cp
from .precoder import make_precoder, precode, unprecode

log = logging.getLogger(__name__)

CSV_FIELDS = [
    "snr_db", "frames", "bits", "bit_errors", "ber", "precoder", "detector",
    "scenario", "M", "N", "L_or_Q", "seed", "fingerprint",
]


def block_size(mn: int) -> int:
    """Frames per seeded block; a fixed function of the grid size."""
    return int(min(4096, max(64, 2**16 // mn)))


@dataclass(frozen=True)
class SimConfig:
    dims: OtfsDims
    scenario: FreqSelective | TimeSelective
    snr_grid_db: tuple[float, ...]
    precoder: str = "proposed"
    theta_step: float | None = None
    alphabet: str = "QPSK"
    detector: str = "ML"
    max_frames: int = 10**6
    target_bit_errors: int = 500
    master_seed: int = 0
    delta_f: float = chn.DEFAULT_DELTA_F
    carrier: float = chn.DEFAULT_CARRIER
    ml_budget: int = DEFAULT_ML_BUDGET
    cp_len: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        object.__setattr__(self, "alphabet", self.alphabet.upper())
        object.__setattr__(self, "detector", self.detector.upper())
        if self.max_frames < 1:
            raise ParameterError("max_frames must be >= 1")
        if self.target_bit_errors < 1:
            raise ParameterError("target_bit_errors must be >= 1")
        grid = self.snr_grid_db
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ParameterError("SNR grid must be nonempty and strictly increasing")
        if not self.delta_f > 0:
            raise ParameterError("delta_f must be positive")
        if self.precoder not in ("proposed", "identity", "phase"):
            raise ParameterError(f"unknown precoder {self.precoder!r}")
        if self.detector not in ("ML", "LMMSE"):
            raise ParameterError(f"unknown detector {self.detector!r}")
        get_alphabet(self.alphabet)
        sc = self.scenario
        if isinstance(sc, FreqSelective):
            if not 1 <= sc.L <= self.dims.MN:
                raise ParameterError(f"need 1 <= L <= MN, got L={sc.L}")
            if self.cp_len is not None and self.cp_len < sc.L - 1:
                raise ParameterError("cp_len must cover the channel delay spread (L - 1)")
        elif sc.f_max is not None and chn.bem_order(self.dims, sc.f_max, self.delta_f) != sc.Q:
            raise ParameterError("BEM order Q is inconsistent with f_max and delta_f")

    @property
    def family(self) -> str:
        return self.scenario.family

    @property
    def lcp(self) -> int:
        if self.cp_len is not None:
            return self.cp_len
        return self.scenario.L - 1 if isinstance(self.scenario, FreqSelective) else 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = {"M": self.dims.M, "N": self.dims.N}
        sc = self.scenario
        d["scenario"] = (
            {"family": "fir", "L": sc.L}
            if isinstance(sc, FreqSelective)
            else {"family": "bem", "Q": sc.Q, "f_max": sc.f_max}
        )
        d["snr_grid_db"] = list(self.snr_grid_db)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        d["dims"] = OtfsDims(int(d["dims"]["M"]), int(d["dims"]["N"]))
        sc = d["scenario"]
        if sc["family"] == "fir":
            d["scenario"] = FreqSelective(int(sc["L"]))
        else:
            f = sc.get("f_max")
            d["scenario"] = TimeSelective(int(sc["Q"]), None if f is None else float(f))
        d["snr_grid_db"] = tuple(d["snr_grid_db"])
        return cls(**d)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class BerRecord:
    snr_db: float
    frames: int
    bits: int
    bit_errors: int
    ber: float
    config_fingerprint: str
    seed: int
    precoder: str = ""
    detector: str = ""
    scenario: str = ""
    M: int = 0
    N: int = 0
    L_or_Q: int = 0

    def row(self) -> dict:
        return {
            "snr_db": repr(self.snr_db), "frames": self.frames, "bits": self.bits,
            "bit_errors": self.bit_errors, "ber": repr(self.ber), "precoder": self.precoder,
            "detector": self.detector, "scenario": self.scenario, "M": self.M, "N": self.N,
            "L_or_Q": self.L_or_Q, "seed": self.seed, "fingerprint": self.config_fingerprint,
        }


@dataclass
class _Context:
    cfg: SimConfig
    alphabet: object
    precoder: object
    nbits: int
    block: int
    dense_basis: np.ndarray | None = field(default=None, repr=False)
    basis_h_v: np.ndarray | None = field(default=None, repr=False)


def _make_context(cfg: SimConfig) -> _Context:
    alphabet = get_alphabet(cfg.alphabet)
    dims = cfg.dims
    p = make_precoder(cfg.precoder, dims, cfg.family, cfg.theta_step)
    ctx = _Context(cfg, alphabet, p, dims.MN * alphabet.bits_per_symbol, block_size(dims.MN))
    if cfg.detector == "ML":
        U = chn.fir_basis(dims) if cfg.family == "fir" else chn.bem_basis(dims)
        ctx.dense_basis = U
        ctx.basis_h_v = U.conj().T @ p.V
    return ctx


def _cn(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    z = rng.standard_normal(tuple(shape) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * math.sqrt(var / 2)


def _block_rng(seed: int, snr_idx: int, block_idx: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(snr_idx, block_idx)))


def simulate_block(ctx: _Context, snr_idx: int, block_idx: int, n0: float,
                   stop_after_errors: int | None = None) -> np.ndarray:
    """Bit errors per frame for one block.

    With ``stop_after_errors`` the returned array is cut right after the
    frame at which the running error count reaches that value; the frames
    it does contain are identical to those of an uncut run.
    """
    cfg, dims, B = ctx.cfg, ctx.cfg.dims, ctx.block
    sc, lcp = cfg.scenario, cfg.lcp
    rng = _block_rng(cfg.master_seed, snr_idx, block_idx)

    bits = rng.integers(0, 2, size=(B, ctx.nbits), dtype=np.uint8)
    if cfg.family == "fir":
        params = _cn(rng, (B, sc.L), 1.0 / sc.L)
    else:
        params = _cn(rng, (B, sc.Q + 1), 1.0 / (sc.Q + 1))
    noise = _cn(rng, (B, dims.MN + lcp), 1.0) * math.sqrt(n0)

    x = ctx.alphabet.points[bits_to_indices(bits, ctx.alphabet)]
    s = add_cp(otfs_modulate(precode(ctx.precoder, x), dims), lcp)
    if cfg.family == "fir":
        rx = chn.linear_convolve(params, s)
        g = chn.fir_spectrum(params, dims.MN)
    else:
        omegas = chn.bem_omegas(dims.MN, sc.Q)
        gt = chn.bem_gains(params, omegas, np.arange(-lcp, dims.MN))
        rx = gt * s
        g = gt[:, lcp:]
    y = otfs_demodulate(remove_cp(rx + noise, lcp), dims)

    if cfg.detector == "ML":
        # A = U diag(g) U^H V, built per frame
        step = 256
        errors = np.empty(0, dtype=np.int64)
        for lo in range(0, B, step):
            A = (ctx.dense_basis[None] * g[lo : lo + step, None, :]) @ ctx.basis_h_v
            est = ml_detect_batch(y[lo : lo + step], A, ctx.alphabet, cfg.ml_budget)
            errors = np.concatenate([errors, (est != bits[lo : lo + step]).sum(axis=1)])
            if stop_after_errors is not None and errors.sum() >= stop_after_errors:
                break
    else:
        to_spec, from_spec = (
            (chn.fir_to_spectral, chn.fir_from_spectral)
            if cfg.family == "fir"
            else (chn.bem_to_spectral, chn.bem_from_spectral)
        )
        soft = unprecode(ctx.precoder, from_spec(lmmse_spectral(to_spec(y, dims), g, n0), dims))
        est = indices_to_bits(slice_indices(soft, ctx.alphabet), ctx.alphabet)
        errors = (est != bits).sum(axis=1)

    if stop_after_errors is not None:
        hit = np.flatnonzero(np.cumsum(errors) >= stop_after_errors)
        if hit.size:
            errors = errors[: hit[0] + 1]
    return errors


def noise_variance(snr_db: float) -> float:
    """``N0 = 10^(-snr/10)`` for unit-energy symbols."""
    return 10.0 ** (-snr_db / 10.0)


def _run_point(ctx: _Context, snr_idx: int, n0: float, workers: int) -> tuple[int, int]:
    cfg = ctx.cfg
    frames = errors = 0
    block_idx = 0

    def consume(errs: np.ndarray) -> bool:
        nonlocal frames, errors
        errs = errs[: cfg.max_frames - frames]
        cum = errors + np.cumsum(errs)
        hit = np.flatnonzero(cum >= cfg.target_bit_errors)
        if hit.size:
            errs = errs[: hit[0] + 1]
        frames += len(errs)
        errors += int(errs.sum())
        return errors >= cfg.target_bit_errors or frames >= cfg.max_frames

    if workers <= 1:
        while True:
            need = cfg.target_bit_errors - errors
            if consume(simulate_block(ctx, snr_idx, block_idx, n0, need)):
                return frames, errors
            block_idx += 1

    with ThreadPoolExecutor(workers) as pool:
        pending = [pool.submit(simulate_block, ctx, snr_idx, b, n0) for b in range(workers)]
        block_idx = workers
        while True:
            done = consume(pending.pop(0).result())
            if done:
                for f in pending:
                    f.cancel()
                return frames, errors
            pending.append(pool.submit(simulate_block, ctx, snr_idx, block_idx, n0))
            block_idx += 1


def run_ber(cfg: SimConfig, workers: int = 1, noise_var_override: float | None = None) -> list[BerRecord]:
    """Run every SNR point of ``cfg``.

    Parameters
    ----------
    cfg : SimConfig
    workers : int
        Blocks simulated concurrently; results do not depend on it.
    noise_var_override : float, optional
        Use this ``N0`` at every point instead of the SNR grid (testing aid;
        ``0`` gives a noiseless run).

    Raises
    ------
    CapacityError
        Before any work, when ML is requested for an infeasible size.
    """
    alphabet = get_alphabet(cfg.alphabet)
    if cfg.detector == "ML":
        check_ml_feasible(cfg.dims.MN, alphabet, cfg.ml_budget)
    elif noise_var_override is not None and not noise_var_override > 0:
        raise ParameterError("LMMSE needs a positive noise variance")
    ctx = _make_context(cfg)
    fp = cfg.fingerprint()
    out = []
    for i, snr in enumerate(cfg.snr_grid_db):
        n0 = noise_variance(snr) if noise_var_override is None else noise_var_override
        frames, errors = _run_point(ctx, i, n0, workers)
        nbits = frames * ctx.nbits
        out.append(BerRecord(
            snr_db=snr, frames=frames, bits=nbits, bit_errors=errors, ber=errors / nbits,
            config_fingerprint=fp, seed=cfg.master_seed, precoder=cfg.precoder,
            detector=cfg.detector, scenario=cfg.family, M=cfg.dims.M, N=cfg.dims.N,
            L_or_Q=cfg.scenario.order,
        ))
        log.info("snr=%g dB frames=%d errors=%d ber=%.3e", snr, frames, errors, errors / nbits)
    check_monotonic(out)
    return out


def check_monotonic(records: list[BerRecord], min_errors: int = 100, z: float = 3.0) -> list[tuple[float, float]]:
    """SNR pairs where BER rises beyond binomial confidence; logged, not raised."""
    flagged = []
    for a, b in zip(records, records[1:]):
        if a.bit_errors < min_errors or b.bit_errors < min_errors:
            continue
        sd = math.sqrt(a.ber * (1 - a.ber) / a.bits + b.ber * (1 - b.ber) / b.bits)
        if b.ber - a.ber > z * sd:
            log.warning("BER increases from %g dB to %g dB beyond %g sigma", a.snr_db, b.snr_db, z)
            flagged.append((a.snr_db, b.snr_db))
    return flagged


def estimate_slope(records: list[BerRecord], lo_db: float, hi_db: float, min_errors: int = 50) -> float:
    """Diversity-order estimate ``-(log10 BER_hi - log10 BER_lo) / ((hi - lo) / 10)``."""
    def find(snr):
        for r in records:
            if math.isclose(r.snr_db, snr, abs_tol=1e-9):
                return r
        raise StatisticalValidityError(f"no record at {snr} dB")

    lo, hi = find(lo_db), find(hi_db)
    for r in (lo, hi):
        if r.bit_errors < min_errors:
            raise StatisticalValidityError(
                f"{r.bit_errors} bit errors at {r.snr_db} dB; need at least {min_errors}"
            )
    return -(math.log10(hi.ber) - math.log10(lo.ber)) / ((hi_db - lo_db) / 10.0)


def records_to_csv(records: list[BerRecord]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def records_to_json(records: list[BerRecord]) -> str:
    return json.dumps([asdict(r) for r in records], indent=2, sort_keys=True) + "\n"
