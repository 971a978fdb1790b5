"""Pairwise-error analysis: diversity and coding gain of a precoder.

For either channel family the noiseless observation is linear in the
channel parameters, ``y = Phi(x) h``, and ``Phi`` is linear in ``x``. The
pairwise matrix ``C = Phi(e)^H Phi(e)`` therefore depends only on the
difference ``e = x - x_hat``, and enumerating differences over the
per-entry difference set covers every symbol pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import FreqSelective, TimeSelective, bem_omegas
from .errors import DegenerateBasisError, DimensionError, ParameterError
from .linalg import (
    DEFAULT_RANK_TOL,
    dft_matrix,
    dft_submatrix,
    eig_hermitian,
    kron,
    numerical_rank,
)
from .modem import Alphabet, OtfsDims

DEFAULT_PAIR_BUDGET = 10**6
_CHUNK = 1 << 15

Scenario = FreqSelective | TimeSelective


@dataclass(frozen=True)
class PairwiseReport:
    e: np.ndarray = field(repr=False)
    rank: int
    eigenvalues: np.ndarray
    det_c: float


@dataclass(frozen=True)
class DiversityReport:
    scenario: Scenario
    g_d: int
    g_c: float
    worst_pairs: np.ndarray = field(repr=False)
    pairs_examined: int
    exhaustive: bool
    max_diversity: int
    g_c_normalized: float | None = None
    min_theta_gain: float = 0.0

    @property
    def full_diversity(self) -> bool:
        return self.g_d == self.max_diversity


def _check_x(x, dims: OtfsDims) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    if x.shape != (dims.MN,):
        raise DimensionError(f"x must have length MN={dims.MN}, got shape {x.shape}")
    return x


def build_b(mn: int, omegas) -> np.ndarray:
    """``B = [b_0 .. b_Q]`` with ``b_q[c] = exp(1j w_q c)``, ``c = 0..mn-1``."""
    omegas = np.asarray(omegas, dtype=float)
    nodes = np.exp(1j * omegas)
    gaps = np.abs(nodes[:, None] - nodes[None, :]) + np.eye(len(nodes))
    if np.any(gaps < 1e-12):
        raise DegenerateBasisError("BEM modeling frequencies must be distinct modulo 2*pi")
    return np.exp(1j * np.outer(np.arange(mn), omegas))


def phi_freq(x, V, dims: OtfsDims, L: int) -> np.ndarray:
    """``Phi(x)`` for an ``L``-tap FIR channel, so that ``Phi(x) h = H V x``."""
    x = _check_x(x, dims)
    if not 1 <= L <= dims.MN:
        raise DimensionError(f"need 1 <= L <= MN={dims.MN}, got L={L}")
    T = kron(dft_matrix(dims.N), np.eye(dims.M))
    F = dft_matrix(dims.MN)
    spec = F @ T.conj().T @ (np.asarray(V) @ x)
    return T @ F.conj().T @ (spec[:, None] * (np.sqrt(dims.MN) * dft_submatrix(dims.MN, L)))


def phi_time(x, V, dims: OtfsDims, Q: int, omegas=None) -> np.ndarray:
    """``Phi(x)`` for a BEM channel, so that ``Phi(x) c = H V x``."""
    x = _check_x(x, dims)
    if omegas is None:
        omegas = bem_omegas(dims.MN, Q)
    if len(omegas) != Q + 1:
        raise DimensionError(f"expected {Q + 1} modeling frequencies, got {len(omegas)}")
    T = kron(dft_matrix(dims.N), np.eye(dims.M))
    return T @ ((T.conj().T @ (np.asarray(V) @ x))[:, None] * build_b(dims.MN, omegas))


def phi(x, V, dims: OtfsDims, scenario: Scenario) -> np.ndarray:
    if isinstance(scenario, FreqSelective):
        return phi_freq(x, V, dims, scenario.L)
    return phi_time(x, V, dims, scenario.Q)


def effective_theta(V, dims: OtfsDims, scenario: Scenario) -> np.ndarray:
    """Matrix whose rows ``theta_i`` drive the pairwise rank: ``C`` has full
    rank whenever every ``theta_i^T e`` is nonzero.

    FIR: ``F_MN (F_N^H kron I_M) V``; BEM: ``(F_N^H kron I_M) V``.
    """
    T = kron(dft_matrix(dims.N), np.eye(dims.M))
    core = T.conj().T @ np.asarray(V)
    if isinstance(scenario, FreqSelective):
        core = dft_matrix(dims.MN) @ core
    return core


def _right_factor(dims: OtfsDims, scenario: Scenario) -> np.ndarray:
    if isinstance(scenario, FreqSelective):
        if not 1 <= scenario.L <= dims.MN:
            raise DimensionError(f"need 1 <= L <= MN={dims.MN}, got L={scenario.L}")
        return np.sqrt(dims.MN) * dft_submatrix(dims.MN, scenario.L)
    return build_b(dims.MN, bem_omegas(dims.MN, scenario.Q))


def pairwise_report(e, scenario: Scenario, V, dims: OtfsDims,
                    rank_tol: float = DEFAULT_RANK_TOL) -> PairwiseReport:
    """Rank and nonzero eigenvalues of ``C = Phi(e)^H Phi(e)``."""
    e = _check_x(e, dims)
    if not np.any(e):
        raise ParameterError("difference vector must be nonzero")
    P = phi(e, V, dims, scenario)
    rank = numerical_rank(P, rank_tol)
    lam, _ = eig_hermitian(P.conj().T @ P)
    lam = np.clip(lam[:rank], 0.0, None)
    det_c = float(np.prod(lam)) if rank == P.shape[1] else 0.0
    return PairwiseReport(e, rank, lam, det_c)


def _difference_chunks(mn: int, deltas: np.ndarray, pair_budget: int, seed: int):
    """Yield ``(E, exhaustive)`` chunks of nonzero difference vectors."""
    base = len(deltas)
    total = base**mn  # Python int, no overflow
    if total - 1 <= pair_budget:
        powers = base ** np.arange(mn - 1, -1, -1, dtype=np.int64)
        for lo in range(1, total, _CHUNK):
            idx = np.arange(lo, min(lo + _CHUNK, total), dtype=np.int64)
            yield deltas[(idx[:, None] // powers) % base], True
        return
    rng = np.random.default_rng(seed)
    left = pair_budget
    while left > 0:
        n = min(left, _CHUNK)
        digits = rng.integers(0, base, size=(n, mn))
        zero = ~digits.any(axis=1)
        while zero.any():
            digits[zero] = rng.integers(0, base, size=(int(zero.sum()), mn))
            zero = ~digits.any(axis=1)
        yield deltas[digits], False
        left -= n


def diversity_gain(scenario: Scenario, V, dims: OtfsDims, alphabet: Alphabet,
                   pair_budget: int = DEFAULT_PAIR_BUDGET, rank_tol: float = DEFAULT_RANK_TOL,
                   seed: int = 0) -> DiversityReport:
    """Minimum pairwise rank (diversity gain) and minimum pairwise coding gain.

    Enumerates every nonzero difference vector when there are at most
    ``pair_budget`` of them, otherwise draws ``pair_budget`` of them
    uniformly at random (``exhaustive=False`` in the report).

    The rank of ``Phi(e)`` equals that of ``diag(Theta e) W`` where ``W`` is
    the scaled partial DFT (FIR) or the BEM basis ``B``, because the factor
    on the left of the diagonal is unitary; the scan uses that reduced form.
    """
    if pair_budget < 1:
        raise ParameterError("pair_budget must be >= 1")
    theta = effective_theta(V, dims, scenario)
    W = _right_factor(dims, scenario)
    D = W.shape[1]
    deltas = alphabet.difference_set()

    best_rank = D + 1
    worst: list[np.ndarray] = []
    g_c = np.inf
    min_theta_gain = np.inf
    examined = 0
    exhaustive = True
    for E, exh in _difference_chunks(dims.MN, deltas, pair_budget, seed):
        exhaustive = exh
        examined += len(E)
        te = E @ theta.T
        min_theta_gain = min(min_theta_gain, float(np.min(np.abs(te) ** 2)))
        sv = np.linalg.svd(te[:, :, None] * W[None], compute_uv=False)
        ranks = np.count_nonzero(sv > rank_tol * sv[:, :1], axis=1)
        ranks[sv[:, 0] == 0] = 0
        lam = sv**2
        logs = np.where(np.arange(D)[None, :] < ranks[:, None], np.log(np.maximum(lam, 1e-300)), 0.0)
        gains = np.exp(logs.sum(axis=1) / np.maximum(ranks, 1))
        g_c = min(g_c, float(gains[ranks > 0].min(initial=np.inf)))

        r = int(ranks.min())
        if r < best_rank:
            best_rank, worst = r, []
        if r == best_rank:
            worst.append(E[ranks == r])

    max_div = min(D, dims.MN)
    g_c_norm = None
    if best_rank == D:
        # det(R_h)^(1/D) det(C)^(1/D) with R_h = I / D
        g_c_norm = g_c / D
    return DiversityReport(
        scenario=scenario,
        g_d=best_rank,
        g_c=g_c,
        worst_pairs=np.concatenate(worst) if worst else np.zeros((0, dims.MN), complex),
        pairs_examined=examined,
        exhaustive=exhaustive,
        max_diversity=max_div,
        g_c_normalized=g_c_norm,
        min_theta_gain=min_theta_gain,
    )


def coding_gain(scenario: Scenario, V, dims: OtfsDims, alphabet: Alphabet, **kwargs) -> float:
    """``min_e (prod_i lambda_i)^(1/R)`` over the examined differences."""
    return diversity_gain(scenario, V, dims, alphabet, **kwargs).g_c


def pep_bound(eigenvalues, rho: float, d: int) -> float:
    """Averaged Chernoff bound ``1/2 prod_i 1 / (1 + rho/4 * lambda_i / d)``.

    ``d`` is the number of channel parameters (``L`` or ``Q + 1``) whose
    i.i.d. law ``CN(0, I/d)`` the bound averages over.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if rho < 0 or np.any(lam < 0) or d < 1:
        raise ParameterError("need rho >= 0, eigenvalues >= 0 and d >= 1")
    return float(0.5 * np.prod(1.0 / (1.0 + rho / 4.0 * lam / d)))
