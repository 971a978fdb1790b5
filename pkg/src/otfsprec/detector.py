"""Symbol detectors: exhaustive ML, LMMSE with slicing.

The ML search works on the real-valued form of the problem. For BPSK and
Gray QPSK every symbol is a sum of +-1 weighted complex columns (one per
bit), so the metric is a quadratic form over sign vectors ``s = 1 - 2 b``.
The sign vector is split in two halves and the full cross table of the
halves is evaluated at once; no candidate is skipped. Candidate index
order is the bit-label order, i.e. lexicographic in symbol indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import CapacityError, DimensionError, NumericalError, ParameterError
from .modem import Alphabet, AlphabetName, Frame, OtfsDims, bits_to_indices

DEFAULT_ML_BUDGET = 2**20
COND_LIMIT = 1e12
# cap on float64 entries of the ML cross table held in memory at once
_ML_CHUNK_ENTRIES = 2**17


class DetectorKind(str, Enum):
    ML = "ML"
    LMMSE = "LMMSE"


@dataclass(frozen=True)
class DetectorConfig:
    kind: DetectorKind = DetectorKind.ML
    ml_budget: int = DEFAULT_ML_BUDGET
    noise_var: float = 1.0

    def __post_init__(self):
        if self.ml_budget < 1:
            raise ParameterError("ml_budget must be >= 1")
        if self.kind is DetectorKind.LMMSE and not self.noise_var > 0:
            raise ParameterError("LMMSE needs noise_var > 0")


def ml_candidate_count(mn: int, alphabet: Alphabet) -> int:
    return alphabet.size**mn


def check_ml_feasible(mn: int, alphabet: Alphabet, budget: int = DEFAULT_ML_BUDGET) -> None:
    """Raise :class:`CapacityError` when ``|A|^MN`` exceeds ``budget``."""
    # compare in log domain; |A|^MN can be astronomically large
    if mn * np.log2(alphabet.size) > np.log2(budget) + 1e-12:
        raise CapacityError(
            f"ML needs {alphabet.size}^{mn} candidate evaluations, above the budget of "
            f"{budget}; use the LMMSE detector for this size"
        )


@lru_cache(maxsize=32)
def _sign_table(k: int) -> np.ndarray:
    """All +-1 vectors of length ``k``; row ``p`` encodes the bits of ``p`` MSB first."""
    p = np.arange(2**k)[:, None]
    bits = (p >> np.arange(k - 1, -1, -1)[None, :]) & 1
    return 1.0 - 2.0 * bits


def _bit_columns(A: np.ndarray, alphabet: Alphabet) -> np.ndarray:
    """Complex column per bit so that ``A x = cols @ s`` with ``s = 1 - 2 b``."""
    if alphabet.name is AlphabetName.BPSK:
        return A.copy()
    if alphabet.name is AlphabetName.QPSK:
        B, n, mn = A.shape
        cols = np.empty((B, n, 2 * mn), dtype=np.complex128)
        cols[:, :, 0::2] = A / np.sqrt(2)
        cols[:, :, 1::2] = 1j * A / np.sqrt(2)
        return cols
    raise ValueError(f"ML detection is implemented for BPSK and QPSK, not {alphabet.name}")


def _ml_chunk(Y: np.ndarray, A: np.ndarray, alphabet: Alphabet) -> np.ndarray:
    cols = _bit_columns(A, alphabet)
    nb = cols.shape[-1]
    k1 = nb // 2
    S1, S2 = _sign_table(k1), _sign_table(nb - k1)
    K2 = S2.shape[0]

    t = np.einsum("bij,bi->bj", cols.conj(), Y).real
    G = np.einsum("bij,bik->bjk", cols.conj(), cols).real
    f1 = -2.0 * t[:, :k1] @ S1.T + ((S1 @ G[:, :k1, :k1]) * S1).sum(axis=-1)
    f2 = -2.0 * t[:, k1:] @ S2.T + ((S2 @ G[:, k1:, k1:]) * S2).sum(axis=-1)
    # metric[i, j] = f1[i] + f2[j] + 2 s1_i^T G12 s2_j as one augmented product
    nf = len(Y)
    left = np.empty((nf, S1.shape[0], k1 + 2))
    left[:, :, :k1] = S1
    left[:, :, k1] = f1
    left[:, :, k1 + 1] = 1.0
    right = np.empty((nf, k1 + 2, K2))
    right[:, :k1] = 2.0 * G[:, :k1, k1:] @ S2.T
    right[:, k1] = 1.0
    right[:, k1 + 1] = f2
    table = np.matmul(left, right).reshape(nf, -1)

    picks = table.argmin(axis=1)
    best = table[np.arange(nf), picks]
    scale = np.einsum("bi,bi->b", Y.conj(), Y).real + np.abs(best) + 1.0
    # resolve near-ties by the exact residual, then by smallest index
    near = table <= (best + 1e-9 * scale)[:, None]
    for b in np.flatnonzero(np.count_nonzero(near, axis=1) > 1):
        idx = np.flatnonzero(near[b])
        s = np.concatenate([S1[idx // K2], S2[idx % K2]], axis=1)
        res = np.linalg.norm(Y[b][:, None] - cols[b] @ s.T, axis=0) ** 2
        picks[b] = idx[np.argmin(res)]
    out = np.empty((len(Y), nb), dtype=np.uint8)
    out[:, :k1] = S1[picks // K2] < 0
    out[:, k1:] = S2[picks % K2] < 0
    return out


def ml_detect_batch(Y, A, alphabet: Alphabet, ml_budget: int = DEFAULT_ML_BUDGET) -> np.ndarray:
    """Exact ML bits for a batch of frames.

    Parameters
    ----------
    Y : array_like, shape (B, n)
        Observations.
    A : array_like, shape (B, n, MN)
        Effective matrices ``H V``.
    alphabet : Alphabet
    ml_budget : int
        Maximum number of candidates per frame.

    Returns
    -------
    numpy.ndarray, shape (B, MN * bits_per_symbol)
        Detected bits of ``argmin_x ||y - A x||^2``.
    """
    Y = np.asarray(Y, dtype=np.complex128)
    A = np.asarray(A, dtype=np.complex128)
    if Y.ndim != 2 or A.ndim != 3 or A.shape[:2] != Y.shape:
        raise DimensionError(f"inconsistent shapes Y{Y.shape} and A{A.shape}")
    mn = A.shape[2]
    check_ml_feasible(mn, alphabet, ml_budget)
    per_frame = ml_candidate_count(mn, alphabet)
    step = max(1, _ML_CHUNK_ENTRIES // per_frame)
    nbits = mn * alphabet.bits_per_symbol
    out = np.empty((len(Y), nbits), dtype=np.uint8)
    for lo in range(0, len(Y), step):
        out[lo : lo + step] = _ml_chunk(Y[lo : lo + step], A[lo : lo + step], alphabet)
    return out


def _frame_from_bits(bits: np.ndarray, alphabet: Alphabet) -> Frame:
    return Frame(alphabet.points[bits_to_indices(bits, alphabet)], bits)


def ml_detect(y, a_eff, alphabet: Alphabet, cfg: DetectorConfig = DetectorConfig()) -> Frame:
    """Maximum-likelihood frame ``argmin_x ||y - A x||^2`` over ``alphabet^MN``.

    Ties go to the lexicographically smallest candidate.
    """
    y = np.asarray(y, dtype=np.complex128)
    a_eff = np.asarray(a_eff, dtype=np.complex128)
    if y.ndim != 1 or a_eff.ndim != 2 or a_eff.shape[0] != y.size:
        raise DimensionError(f"inconsistent shapes y{y.shape} and A{a_eff.shape}")
    bits = ml_detect_batch(y[None], a_eff[None], alphabet, cfg.ml_budget)[0]
    return _frame_from_bits(bits, alphabet)


def slice_indices(v, alphabet: Alphabet) -> np.ndarray:
    """Index of the nearest alphabet point per entry; ties go to the smaller index."""
    v = np.asarray(v, dtype=np.complex128)
    return np.argmin(np.abs(v[..., None] - alphabet.points) ** 2, axis=-1)


def slice(v, alphabet: Alphabet) -> Frame:
    """Per-entry nearest-point decision."""
    idx = slice_indices(v, alphabet)
    lab = alphabet.labels[idx]
    return Frame(alphabet.points[idx], lab.reshape(idx.shape[:-1] + (-1,)))


def lmmse_estimate(y, a_eff, noise_var: float) -> np.ndarray:
    """Soft estimate ``A^H (A A^H + N0 I)^-1 y``."""
    if not noise_var > 0:
        raise ParameterError("noise_var must be positive")
    y = np.asarray(y, dtype=np.complex128)
    A = np.asarray(a_eff, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != y.shape[-1]:
        raise DimensionError(f"inconsistent shapes y{y.shape} and A{A.shape}")
    R = A @ A.conj().T + noise_var * np.eye(A.shape[0])
    cond = np.linalg.cond(R)
    if not cond < COND_LIMIT:
        raise NumericalError(f"LMMSE system is ill-conditioned (cond ~ {cond:.3g})")
    return A.conj().T @ np.linalg.solve(R, y)


def lmmse_detect(y, a_eff, alphabet: Alphabet, cfg: DetectorConfig) -> Frame:
    """LMMSE soft estimate followed by nearest-point slicing."""
    return slice(lmmse_estimate(y, a_eff, cfg.noise_var), alphabet)


def lmmse_spectral(z, g, noise_var: float) -> np.ndarray:
    """Per-bin LMMSE weights applied to spectral observations ``z = U^H y``.

    For ``A = U diag(g) U^H V`` with unitary ``U`` and ``V`` this equals
    ``U^H V`` times the dense estimate, so
    ``lmmse_estimate(y, A) == V^H U lmmse_spectral(U^H y, g)``.
    """
    if not noise_var > 0:
        raise ParameterError("noise_var must be positive")
    g = np.asarray(g)
    return g.conj() / (np.abs(g) ** 2 + noise_var) * z


def detect(y, a_eff, alphabet: Alphabet, cfg: DetectorConfig) -> Frame:
    if cfg.kind is DetectorKind.ML:
        return ml_detect(y, a_eff, alphabet, cfg)
    return lmmse_detect(y, a_eff, alphabet, cfg)


def ml_feasible_for(dims: OtfsDims, alphabet: Alphabet, cfg: DetectorConfig) -> bool:
    try:
        check_ml_feasible(dims.MN, alphabet, cfg.ml_budget)
    except CapacityError:
        return False
    return True
