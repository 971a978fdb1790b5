"""Built-in property checks run by ``otfsprec selfcheck``."""

from __future__ import annotations

import itertools

import numpy as np

from . import channel as chn
from .detector import lmmse_estimate, lmmse_spectral, ml_detect_batch
from .modem import BPSK, QPSK, OtfsDims, add_cp, otfs_demodulate, otfs_modulate, remove_cp
from .precoder import (
    make_precoder,
    precode,
    precoder_frequency_selective,
    precoder_time_selective,
    unprecode,
    vandermonde_theta,
)

SUPPORTED_MN = (2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64)
_DIMS = ((2, 2), (4, 2), (2, 4))


def _cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def check_theta_unitary() -> str | None:
    for mn in SUPPORTED_MN:
        th, _ = vandermonde_theta(mn)
        err = np.abs(th.conj().T @ th - np.eye(mn)).max()
        if err > 1e-10:
            return f"MN={mn}: max deviation {err:.2e}"
    return None


def check_precoder_power() -> str | None:
    for mn in SUPPORTED_MN:
        dims = OtfsDims(mn, 1)
        for p in (precoder_frequency_selective(dims), precoder_time_selective(dims)):
            tr = np.trace(p.V @ p.V.conj().T).real
            if abs(tr - mn) > 1e-9:
                return f"{p.kind.value} MN={mn}: trace {tr}"
    return None


def check_channel_oracle(family: str, cases: int = 20) -> str | None:
    rng = np.random.default_rng(1)
    for M, N in _DIMS:
        dims = OtfsDims(M, N)
        for _ in range(cases):
            x = _cn(rng, dims.MN)
            s = otfs_modulate(x, dims)
            if family == "fir":
                ch = chn.sample_fir(int(rng.integers(1, dims.MN + 1)), rng)
                H, r = chn.effective_matrix_fir(ch, dims), chn.apply_fir(ch, s)
            else:
                ch = chn.sample_bem_order(dims, int(rng.integers(0, 4)), rng)
                H, r = chn.effective_matrix_bem(ch, dims), chn.apply_bem(ch, s)
            err = np.linalg.norm(H @ x - otfs_demodulate(r, dims))
            if err > 1e-9:
                return f"({M},{N}): residual {err:.2e}"
    return None


def check_modulation_roundtrip() -> str | None:
    rng = np.random.default_rng(2)
    for M, N in _DIMS + ((3, 5),):
        dims = OtfsDims(M, N)
        x = _cn(rng, dims.MN)
        err = np.abs(otfs_demodulate(remove_cp(add_cp(otfs_modulate(x, dims), 3), 3), dims) - x).max()
        if err > 1e-12:
            return f"({M},{N}): {err:.2e}"
    return None


def check_precoder_roundtrip() -> str | None:
    rng = np.random.default_rng(3)
    for (M, N), fam, name in itertools.product(_DIMS, ("fir", "bem"), ("proposed", "identity", "phase")):
        dims = OtfsDims(M, N)
        p = make_precoder(name, dims, fam)
        x = _cn(rng, dims.MN)
        err = np.abs(unprecode(p, precode(p, x)) - x).max()
        if err > 1e-12:
            return f"{name}/{fam} ({M},{N}): {err:.2e}"
    return None


def check_ml_bruteforce(trials: int = 20) -> str | None:
    rng = np.random.default_rng(4)
    for alphabet, n in ((BPSK, 4), (QPSK, 3)):
        cands = np.array(list(itertools.product(range(alphabet.size), repeat=n)))
        X = alphabet.points[cands]
        for _ in range(trials):
            A = _cn(rng, n, n)
            y = _cn(rng, n) * 1.5
            best = cands[np.argmin(np.linalg.norm(y[:, None] - A @ X.T, axis=0))]
            bits = ml_detect_batch(y[None], A[None], alphabet)[0]
            want = alphabet.labels[best].reshape(-1)
            if not np.array_equal(bits, want):
                return f"{alphabet.name.value}: mismatch"
    return None


def check_lmmse_spectral() -> str | None:
    rng = np.random.default_rng(5)
    dims = OtfsDims(4, 2)
    for fam in ("fir", "bem"):
        p = make_precoder("proposed", dims, fam)
        if fam == "fir":
            ch = chn.sample_fir(3, rng)
            H, g = chn.effective_matrix_fir(ch, dims), chn.fir_spectrum(ch.taps, dims.MN)
            to_s, from_s = chn.fir_to_spectral, chn.fir_from_spectral
        else:
            ch = chn.sample_bem_order(dims, 2, rng)
            H, g = chn.effective_matrix_bem(ch, dims), ch.gains()
            to_s, from_s = chn.bem_to_spectral, chn.bem_from_spectral
        y = _cn(rng, dims.MN)
        dense = lmmse_estimate(y, H @ p.V, 0.1)
        fast = unprecode(p, from_s(lmmse_spectral(to_s(y, dims), g, 0.1), dims))
        err = np.abs(dense - fast).max()
        if err > 1e-9:
            return f"{fam}: {err:.2e}"
    return None


CHECKS = [
    ("theta unitarity", check_theta_unitary),
    ("precoder power", check_precoder_power),
    ("channel oracle (fir)", lambda: check_channel_oracle("fir")),
    ("channel oracle (bem)", lambda: check_channel_oracle("bem")),
    ("modulation round trip", check_modulation_roundtrip),
    ("precoder round trip", check_precoder_roundtrip),
    ("ML versus brute force", check_ml_bruteforce),
    ("LMMSE spectral versus dense", check_lmmse_spectral),
]


def run_all() -> list[tuple[str, bool, str]]:
    out = []
    for name, fn in CHECKS:
        try:
            detail = fn()
        except Exception as exc:  # report, keep going
            detail = f"{type(exc).__name__}: {exc}"
        out.append((name, detail is None, detail or ""))
    return out
