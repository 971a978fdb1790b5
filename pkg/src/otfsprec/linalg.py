"""Complex-matrix primitives.

Matrices and vectors are plain ``numpy`` arrays of dtype ``complex128``.
Vectorization is column-major throughout (``vec`` stacks columns), which
is the convention used for the delay-Doppler grid.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, DimensionError

DEFAULT_RANK_TOL = 1e-10


def as_cmatrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D complex array."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractViolation(f"{name} has non-finite entries")
    return m


def as_cvector(v, name: str = "vector") -> np.ndarray:
    """Return ``v`` as a finite, non-empty 1-D complex array."""
    x = np.asarray(v, dtype=np.complex128)
    if x.ndim != 1 or x.size == 0:
        raise DimensionError(f"{name} must be a non-empty 1-D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ContractViolation(f"{name} has non-finite entries")
    return x


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix with entries ``exp(-2j*pi*k*l/n) / sqrt(n)``.

    Parameters
    ----------
    n : int
        Transform size, at least 1.

    Returns
    -------
    numpy.ndarray
        ``n x n`` complex matrix ``F_n``.
    """
    if n < 1:
        raise DimensionError(f"DFT size must be >= 1, got {n}")
    k = np.arange(n)
    # reduce k*l modulo n before scaling to keep phases exact for large n
    phase = np.outer(k, k) % n
    return np.exp(-2j * np.pi * phase / n) / np.sqrt(n)


def dft_submatrix(n: int, l: int) -> np.ndarray:
    """First ``l`` columns of :func:`dft_matrix` of size ``n``."""
    if l < 1 or l > n:
        raise DimensionError(f"need 1 <= l <= n, got l={l}, n={n}")
    return dft_matrix(n)[:, :l]


def kron(a, b) -> np.ndarray:
    """Kronecker product of two complex matrices."""
    a = as_cmatrix(a, "a")
    b = as_cmatrix(b, "b")
    rows = a.shape[0] * b.shape[0]
    cols = a.shape[1] * b.shape[1]
    if rows * cols > 2**31:
        raise DimensionError(f"Kronecker product of size {rows}x{cols} is too large")
    return np.kron(a, b)


def vec(x) -> np.ndarray:
    """Stack the columns of ``x`` into one vector."""
    return as_cmatrix(x).reshape(-1, order="F")


def invec(v, rows: int) -> np.ndarray:
    """Inverse of :func:`vec`: fold ``v`` column-wise into ``rows`` rows."""
    v = as_cvector(v)
    if rows < 1 or v.size % rows:
        raise DimensionError(f"length {v.size} is not divisible by rows={rows}")
    return v.reshape(rows, -1, order="F")


def numerical_rank(a, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values above ``rel_tol * sigma_max``.

    The zero matrix has rank 0.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    s = np.linalg.svd(as_cmatrix(a), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))


def eig_hermitian(a, herm_tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues descending.

    Parameters
    ----------
    a : array_like
        Square Hermitian matrix.
    herm_tol : float
        Allowed ``max|a - a^H|`` relative to ``max|a|``.

    Returns
    -------
    eigenvalues : numpy.ndarray
        Real eigenvalues sorted in descending order (stable for ties).
    eigenvectors : numpy.ndarray
        Unitary matrix whose columns match ``eigenvalues``.
    """
    a = as_cmatrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"matrix must be square, got {a.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if np.max(np.abs(a - a.conj().T), initial=0.0) > herm_tol * max(scale, 1e-300):
        raise ContractViolation("matrix is not Hermitian")
    w, u = np.linalg.eigh((a + a.conj().T) / 2)
    order = np.argsort(-w, kind="stable")
    return w[order], u[:, order]
