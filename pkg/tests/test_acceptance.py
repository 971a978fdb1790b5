"""Acceptance criteria 1-11.

Each test records a single PASS/FAIL line that is repeated in the pytest
terminal summary under "acceptance criteria". BER runs go through the CLI
so every one of them leaves a CSV plus manifest; criterion 10 replays
those manifests and compares bytes.
"""

import csv
import itertools
import os
import time

import numpy as np
import pytest

from conftest import cn
from otfsprec import analysis as ana
from otfsprec import channel as chn
from otfsprec.channel import FreqSelective, TimeSelective
from otfsprec.cli import main
from otfsprec.modem import BPSK, QPSK, OtfsDims, add_cp, otfs_demodulate, otfs_modulate, remove_cp
from otfsprec.precoder import make_precoder, vandermonde_theta

pytestmark = pytest.mark.acceptance

SEED = 1
SUPPORTED_MN = (2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64)
# stop a point at this many errors unless the frame cap comes first
TARGET_ERRORS = 2000


class BerRuns:
    """Lazily executed, cached CLI BER runs keyed by name."""

    def __init__(self, root):
        self.root = root
        self.argv = {}
        self.rows = {}

    def get(self, name, argv):
        if name not in self.rows:
            out = self.root / f"{name}.csv"
            full = ["ber", *argv, "--seed", str(SEED), "--out", str(out)]
            assert main(full) == 0, f"ber run {name} failed"
            self.argv[name] = full
            with out.open() as fh:
                self.rows[name] = {float(r["snr_db"]): r for r in csv.DictReader(fh)}
        return self.rows[name]

    def ber(self, name, argv, snr):
        return float(self.get(name, argv)[snr]["ber"])


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    saved = os.environ.pop("OTFS_SEED", None)
    yield BerRuns(tmp_path_factory.mktemp("acceptance"))
    if saved is not None:
        os.environ["OTFS_SEED"] = saved


def _fmt(x):
    return f"{x:.3e}"


# ---------------------------------------------------------------- 1

def test_01_theta_unitarity_and_power(report):
    t0 = time.perf_counter()
    worst_u, worst_p = 0.0, 0.0
    for mn in SUPPORTED_MN:
        th, _ = vandermonde_theta(mn)
        worst_u = max(worst_u, np.abs(th.conj().T @ th - np.eye(mn)).max())
        for M in (d for d in range(1, mn + 1) if mn % d == 0):
            dims = OtfsDims(M, mn // M)
            for fam in ("fir", "bem"):
                V = make_precoder("proposed", dims, fam).V
                worst_p = max(worst_p, abs(np.trace(V @ V.conj().T).real - mn))
    dt = time.perf_counter() - t0
    ok = worst_u <= 1e-10 and worst_p <= 1e-9 and dt < 5
    report(1, ok, f"max|Theta^H Theta - I| = {worst_u:.1e}, max|Tr(VV^H) - MN| = {worst_p:.1e}, {dt:.1f} s")
    assert ok


# ---------------------------------------------------------------- 2

def _pipeline(xbar, dims, family, params):
    """Transmit chain with CP, time-domain channel, CP removal and demodulation."""
    s = otfs_modulate(xbar, dims)
    if family == "fir":
        lcp = len(params) - 1
        rx = chn.linear_convolve(params, add_cp(s, lcp)) if lcp else chn.linear_convolve(params, s)
        rx = remove_cp(rx, lcp)
    else:
        rx = chn.bem_gains(params, chn.bem_omegas(dims.MN, len(params) - 1), np.arange(dims.MN)) * s
    return otfs_demodulate(rx, dims)


def test_02_channel_oracle_equivalence(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for (M, N), family in itertools.product([(2, 2), (4, 2), (2, 4)], ["fir", "bem"]):
        dims = OtfsDims(M, N)
        for _ in range(100):
            xbar = cn(rng, dims.MN)
            if family == "fir":
                ch = chn.sample_fir(int(rng.integers(1, dims.MN + 1)), rng)
                H, params = chn.effective_matrix_fir(ch, dims), ch.taps
            else:
                ch = chn.sample_bem_order(dims, int(rng.integers(0, dims.MN)), rng)
                H, params = chn.effective_matrix_bem(ch, dims), ch.coeffs
            worst = max(worst, np.linalg.norm(H @ xbar - _pipeline(xbar, dims, family, params)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and dt < 10
    report(2, ok, f"600 cases, max ||H xbar - pipeline(xbar)|| = {worst:.1e}, {dt:.1f} s")
    assert ok


# ---------------------------------------------------------------- 3, 4

def _certify(report, scenarios, number, label):
    t0 = time.perf_counter()
    dims = OtfsDims(2, 2)
    parts, ok = [], True
    for sc in scenarios:
        V = make_precoder("proposed", dims, sc.family).V
        rep = ana.diversity_gain(sc, V, dims, QPSK)
        good = rep.exhaustive and rep.pairs_examined == 6560 and rep.g_d == sc.max_diversity
        ok &= good
        parts.append(f"{label}={sc.order}: g_d={rep.g_d}")
    dt = time.perf_counter() - t0
    ok &= dt < 120
    report(number, ok, f"exhaustive over 6560 differences; {', '.join(parts)}; {dt:.1f} s")
    return ok


def test_03_full_diversity_frequency_selective(report):
    assert _certify(report, [FreqSelective(L) for L in (1, 2, 3, 4)], 3, "L")


def test_04_full_diversity_time_selective(report):
    assert _certify(report, [TimeSelective(Q) for Q in (0, 1, 2, 3)], 4, "Q")


# ---------------------------------------------------------------- 5

def test_05_unprecoded_deficiency(report):
    configs = [
        ("M=2,N=1,L=2,BPSK", OtfsDims(2, 1), FreqSelective(2), BPSK),
        ("M=2,N=2,Q=2,QPSK", OtfsDims(2, 2), TimeSelective(2), QPSK),
    ]
    parts, deficient = [], 0
    for label, dims, sc, alphabet in configs:
        rep = ana.diversity_gain(sc, np.eye(dims.MN), dims, alphabet)
        assert rep.exhaustive
        if rep.full_diversity:
            parts.append(f"{label}: full rank {rep.g_d} certified (no deficiency here)")
            continue
        deficient += 1
        shown = "; ".join(
            "(" + ", ".join(f"{z.real:+.3g}{z.imag:+.3g}j" for z in e) + ")" for e in rep.worst_pairs[:4]
        )
        parts.append(f"{label}: min rank {rep.g_d} < {rep.max_diversity} for {len(rep.worst_pairs)} "
                     f"difference vectors, e.g. {shown}")
    ok = deficient >= 1
    report(5, ok, " | ".join(parts))
    assert ok


# ---------------------------------------------------------------- 6

def _two_candidate_errors(V, dims, x, xh, rho_db, draws, rng):
    L = 2
    n0 = 10 ** (-rho_db / 10)
    s, sh = (add_cp(otfs_modulate(V @ v, dims), L - 1) for v in (x, xh))
    errors = 0
    for lo in range(0, draws, 200_000):
        n = min(200_000, draws - lo)
        h = cn(rng, n, L) / np.sqrt(L)
        noise = cn(rng, n, dims.MN + L - 1) * np.sqrt(n0)
        rx = chn.linear_convolve(h, np.broadcast_to(s, (n, s.size))) + noise
        y = otfs_demodulate(remove_cp(rx, L - 1), dims)
        ref = otfs_demodulate(remove_cp(chn.linear_convolve(h, np.broadcast_to(s, (n, s.size))), L - 1), dims)
        alt = otfs_demodulate(remove_cp(chn.linear_convolve(h, np.broadcast_to(sh, (n, sh.size))), L - 1), dims)
        d_true = np.sum(np.abs(y - ref) ** 2, axis=1)
        d_alt = np.sum(np.abs(y - alt) ** 2, axis=1)
        errors += int(np.count_nonzero(d_alt <= d_true))
    return errors / draws


def test_06_pep_bound(report):
    t0 = time.perf_counter()
    dims, sc = OtfsDims(2, 1), FreqSelective(2)
    x, xh = np.array([1.0 + 0j, 1.0]), np.array([-1.0 + 0j, -1.0])
    rng = np.random.default_rng(SEED)
    parts, ok = [], True
    for name in ("proposed", "identity"):
        V = make_precoder(name, dims, "fir").V
        lam = ana.pairwise_report(x - xh, sc, V, dims).eigenvalues
        for rho_db in (10, 15, 20):
            freq = _two_candidate_errors(V, dims, x, xh, rho_db, 10**6, rng)
            bound = ana.pep_bound(lam, 10 ** (rho_db / 10), sc.L)
            ok &= freq <= bound
            parts.append(f"{name}@{rho_db}dB {_fmt(freq)}<={_fmt(bound)}")
    dt = time.perf_counter() - t0
    ok &= dt < 120
    report(6, ok, f"e=(2,2), 1e6 draws: {', '.join(parts)}; {dt:.0f} s")
    assert ok


# ---------------------------------------------------------------- 7

def _fir_argv(L, precoder, snr="4:2:16"):
    return ["--M", "4", "--N", "2", "--scenario", f"fir:L={L}", "--precoder", precoder, "--detector", "ml",
            "--alphabet", "qpsk", "--snr", snr, "--frames", "100000", "--target-errors", str(TARGET_ERRORS)]


CRIT7 = {f"c7_L{L}_{p}": _fir_argv(L, p) for L in (2, 3) for p in ("proposed", "identity", "phase")}
CRIT7["c7_L1_proposed"] = _fir_argv(1, "proposed")


def test_07_ber_ordering_frequency_selective(runs, report):
    t0 = time.perf_counter()
    bad = []
    for L in (2, 3):
        for snr in (12.0, 14.0, 16.0):
            p, i, ph = (runs.ber(f"c7_L{L}_{n}", CRIT7[f"c7_L{L}_{n}"], snr) for n in ("proposed", "identity", "phase"))
            if not (p < i and p <= ph):
                bad.append(f"L={L}@{snr:g}dB P={_fmt(p)} I={_fmt(i)} Ph={_fmt(ph)}")
    at14 = [runs.ber(f"c7_L{L}_proposed", CRIT7[f"c7_L{L}_proposed"], 14.0) for L in (1, 2, 3)]
    l_ok = at14[0] > at14[1] > at14[2]
    dt = time.perf_counter() - t0
    ok = not bad and l_ok and dt < 1800
    r = runs.rows
    detail = (f"16dB L=2 P/I/Ph = {_fmt(float(r['c7_L2_proposed'][16.0]['ber']))}/"
              f"{_fmt(float(r['c7_L2_identity'][16.0]['ber']))}/{_fmt(float(r['c7_L2_phase'][16.0]['ber']))}, "
              f"L=3 P/I/Ph = {_fmt(float(r['c7_L3_proposed'][16.0]['ber']))}/"
              f"{_fmt(float(r['c7_L3_identity'][16.0]['ber']))}/{_fmt(float(r['c7_L3_phase'][16.0]['ber']))}; "
              f"14dB proposed L=1,2,3: {', '.join(_fmt(b) for b in at14)}; {dt:.0f} s")
    if bad:
        detail += "; ordering violated at " + "; ".join(bad)
    report(7, ok, detail)
    assert ok


# ---------------------------------------------------------------- 8

def _bem_argv(v, precoder):
    return ["--M", "2", "--N", "4", "--scenario", f"bem:v={v}", "--precoder", precoder, "--detector", "ml",
            "--alphabet", "qpsk", "--snr", "4:2:16", "--frames", "100000", "--target-errors", str(TARGET_ERRORS)]


CRIT8 = {f"c8_v{v}_{p}": _bem_argv(v, p) for v in (120, 500) for p in ("proposed", "identity")}


def test_08_ber_ordering_time_selective(runs, report):
    t0 = time.perf_counter()
    bad = []
    for v in (120, 500):
        for snr in (12.0, 14.0, 16.0):
            p = runs.ber(f"c8_v{v}_proposed", CRIT8[f"c8_v{v}_proposed"], snr)
            i = runs.ber(f"c8_v{v}_identity", CRIT8[f"c8_v{v}_identity"], snr)
            if not p < i:
                bad.append(f"v={v}@{snr:g}dB P={_fmt(p)} I={_fmt(i)}")
    slow, fast = (runs.ber(f"c8_v{v}_proposed", CRIT8[f"c8_v{v}_proposed"], 14.0) for v in (120, 500))
    orders = [int(runs.rows[f"c8_v{v}_proposed"][14.0]["L_or_Q"]) for v in (120, 500)]
    v_ok = fast < slow
    dt = time.perf_counter() - t0
    ok = not bad and v_ok and dt < 1800
    detail = (f"precoder ordering {'holds' if not bad else 'violated at ' + '; '.join(bad)}; "
              f"14dB proposed BER v=120: {_fmt(slow)}, v=500: {_fmt(fast)} "
              f"(BEM order Q={orders[0]} and Q={orders[1]}); velocity ordering {'holds' if v_ok else 'does not hold'}; "
              f"{dt:.0f} s")
    report(8, ok, detail)
    assert ok


# ---------------------------------------------------------------- 9

def _slope_argv(precoder):
    return ["--M", "2", "--N", "1", "--scenario", "fir:L=2", "--precoder", precoder, "--detector", "ml",
            "--alphabet", "bpsk", "--snr", "14:4:18", "--frames", "100000000", "--target-errors", str(TARGET_ERRORS)]


CRIT9 = {f"c9_{p}": _slope_argv(p) for p in ("proposed", "identity")}


def _slope(rows):
    lo, hi = rows[14.0], rows[18.0]
    assert int(lo["bit_errors"]) >= 500 and int(hi["bit_errors"]) >= 500
    return -(np.log10(float(hi["ber"])) - np.log10(float(lo["ber"]))) / 0.4


def test_09_slope(runs, report):
    from otfsprec.montecarlo import BerRecord, estimate_slope

    t0 = time.perf_counter()
    slopes = {}
    for name, argv in CRIT9.items():
        rows = runs.get(name, argv)
        recs = [BerRecord(float(r["snr_db"]), int(r["frames"]), int(r["bits"]), int(r["bit_errors"]),
                          float(r["ber"]), r["fingerprint"], SEED) for r in rows.values()]
        slopes[name] = estimate_slope(recs, 14.0, 18.0, min_errors=500)
        assert slopes[name] == pytest.approx(_slope(rows), rel=1e-12)
    dt = time.perf_counter() - t0
    sp, si = slopes["c9_proposed"], slopes["c9_identity"]
    ok = sp >= 1.3 and sp >= si and dt < 1200
    report(9, ok, f"slope over [14, 18] dB: proposed {sp:.3f}, unprecoded {si:.3f}; {dt:.0f} s")
    assert ok


# ---------------------------------------------------------------- 10

def test_10_determinism(runs, report, tmp_path):
    names = {**CRIT7, **CRIT8, **CRIT9}
    for name, argv in names.items():
        runs.get(name, argv)
    mismatched = []
    for name in names:
        first = runs.root / f"{name}.csv"
        again = tmp_path / f"{name}.csv"
        assert main(["ber", "--manifest", str(first) + ".manifest.json", "--out", str(again)]) == 0
        if first.read_bytes() != again.read_bytes():
            mismatched.append(name)
    ok = not mismatched
    report(10, ok, f"{len(names)} manifests replayed, byte-identical CSVs: {len(names) - len(mismatched)}/{len(names)}"
           + (f"; differing: {', '.join(mismatched)}" if mismatched else ""))
    assert ok


# ---------------------------------------------------------------- 11

def test_11_large_dimension_lmmse(runs, report):
    t0 = time.perf_counter()
    parts, ok = [], True
    for L in (2, 4):
        bers = {}
        for p in ("proposed", "identity"):
            argv = ["--M", "128", "--N", "16", "--scenario", f"fir:L={L}", "--precoder", p, "--detector", "lmmse",
                    "--alphabet", "qpsk", "--snr", "12", "--frames", "10000", "--target-errors", str(10**12)]
            row = runs.get(f"c11_L{L}_{p}", argv)[12.0]
            assert int(row["frames"]) == 10_000
            bers[p] = float(row["ber"])
        ok &= bers["proposed"] <= bers["identity"]
        parts.append(f"L={L}: P={bers['proposed']:.5e} I={bers['identity']:.5e}")
    dt = time.perf_counter() - t0
    ok &= dt < 1800
    report(11, ok, f"M=128,N=16 LMMSE 12dB, 1e4 frames: {'; '.join(parts)}; {dt:.0f} s")
    assert ok
