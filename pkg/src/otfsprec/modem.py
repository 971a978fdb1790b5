"""OTFS modulation/demodulation with rectangular pulses, CP handling, alphabets.

With rectangular pulses the ISFFT + Heisenberg chain collapses to
``S = X F_N^H`` and the Wigner + SFFT chain to ``Y = R F_N``, where
``X = invec(xbar, M)``. Both maps are unitary. All transforms here accept
batches: the last axis holds the length-MN vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class OtfsDims:
    """Delay-Doppler grid size: ``M`` delay bins by ``N`` Doppler bins."""

    M: int
    N: int

    def __post_init__(self):
        if int(self.M) != self.M or int(self.N) != self.N or self.M < 1 or self.N < 1:
            raise DimensionError(f"M and N must be positive integers, got M={self.M}, N={self.N}")

    @property
    def MN(self) -> int:
        return self.M * self.N


class AlphabetName(str, Enum):
    BPSK = "BPSK"
    QPSK = "QPSK"


@dataclass(frozen=True)
class Alphabet:
    """Unit-energy constellation with its bit labelling.

    ``points[i]`` carries the bit pattern given by the binary expansion of
    ``i`` (most significant bit first), so index order is label order.
    """

    name: AlphabetName
    points: np.ndarray = field(repr=False)
    bits_per_symbol: int

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def labels(self) -> np.ndarray:
        """``(size, bits_per_symbol)`` array of bit patterns, row ``i`` for point ``i``."""
        i = np.arange(self.size)[:, None]
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)[None, :]
        return ((i >> shifts) & 1).astype(np.uint8)

    def bit_map(self, bits) -> complex:
        """Point for a single bit pattern."""
        bits = tuple(int(b) for b in bits)
        if len(bits) != self.bits_per_symbol or any(b not in (0, 1) for b in bits):
            raise DimensionError(f"{self.name.value} needs {self.bits_per_symbol} bits, got {bits}")
        idx = 0
        for b in bits:
            idx = 2 * idx + b
        return complex(self.points[idx])

    def difference_set(self) -> np.ndarray:
        """Distinct values of ``a - b`` over all point pairs, zero first."""
        d = (self.points[:, None] - self.points[None, :]).ravel()
        keys = np.round(d, 12) + 0.0  # merge float duplicates, drop -0.0
        _, first = np.unique(keys, return_index=True)
        uniq = d[np.sort(first)]
        uniq = uniq[np.abs(uniq) > 1e-12]
        return np.concatenate([[0j], uniq])


BPSK = Alphabet(AlphabetName.BPSK, np.array([1.0 + 0j, -1.0 + 0j]), 1)
# Gray: (b0, b1) -> ((1 - 2 b0) + 1j (1 - 2 b1)) / sqrt(2)
QPSK = Alphabet(
    AlphabetName.QPSK,
    np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2),
    2,
)


def get_alphabet(name: str) -> Alphabet:
    key = name.upper()
    if key == "BPSK":
        return BPSK
    if key == "QPSK":
        return QPSK
    raise ValueError(f"unknown alphabet {name!r}; expected bpsk or qpsk")


@dataclass(frozen=True)
class Frame:
    """Delay-Doppler symbol vector ``x`` and the bits it carries."""

    x: np.ndarray
    bits: np.ndarray


def bits_to_indices(bits, alphabet: Alphabet) -> np.ndarray:
    """Group bits (last axis) into symbol indices, MSB first."""
    bits = np.asarray(bits)
    b = alphabet.bits_per_symbol
    if bits.shape[-1] % b:
        raise DimensionError(f"bit count {bits.shape[-1]} is not a multiple of {b}")
    grouped = bits.reshape(bits.shape[:-1] + (-1, b)).astype(np.int64)
    weights = 1 << np.arange(b - 1, -1, -1)
    return grouped @ weights


def indices_to_bits(idx, alphabet: Alphabet) -> np.ndarray:
    """Inverse of :func:`bits_to_indices`."""
    idx = np.asarray(idx, dtype=np.int64)
    lab = alphabet.labels[idx]
    return lab.reshape(idx.shape[:-1] + (-1,))


def map_bits(bits, alphabet: Alphabet, dims: OtfsDims) -> Frame:
    """Map ``MN * bits_per_symbol`` bits onto a delay-Doppler frame."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 1 or bits.size != dims.MN * alphabet.bits_per_symbol:
        raise DimensionError(
            f"expected {dims.MN * alphabet.bits_per_symbol} bits, got shape {bits.shape}"
        )
    if np.any(bits > 1):
        raise ValueError("bits must be 0 or 1")
    idx = bits_to_indices(bits, alphabet)
    return Frame(alphabet.points[idx], bits.copy())


def demap_symbols(x, alphabet: Alphabet) -> np.ndarray:
    """Bits of exact alphabet points (nearest point for anything else)."""
    x = np.asarray(x, dtype=np.complex128)
    idx = np.argmin(np.abs(x[..., None] - alphabet.points), axis=-1)
    return indices_to_bits(idx, alphabet)


def _check_len(v: np.ndarray, dims: OtfsDims, what: str) -> None:
    if v.ndim < 1 or v.shape[-1] != dims.MN:
        raise DimensionError(f"{what} must have length MN={dims.MN}, got shape {v.shape}")


def otfs_modulate(xbar, dims: OtfsDims) -> np.ndarray:
    """Delay-Doppler symbols to time-domain samples, ``s = vec(invec(xbar) F_N^H)``."""
    xbar = np.asarray(xbar, dtype=np.complex128)
    _check_len(xbar, dims, "xbar")
    # vec index m + M n, so reshape (..., N, M) puts the Doppler axis at -2
    grid = xbar.reshape(xbar.shape[:-1] + (dims.N, dims.M))
    return np.fft.ifft(grid, axis=-2, norm="ortho").reshape(xbar.shape)


def otfs_demodulate(r, dims: OtfsDims) -> np.ndarray:
    """Time-domain samples to delay-Doppler observations, ``y = vec(invec(r) F_N)``."""
    r = np.asarray(r, dtype=np.complex128)
    _check_len(r, dims, "r")
    grid = r.reshape(r.shape[:-1] + (dims.N, dims.M))
    return np.fft.fft(grid, axis=-2, norm="ortho").reshape(r.shape)


def add_cp(s, lcp: int) -> np.ndarray:
    """Prepend the last ``lcp`` samples (last axis)."""
    s = np.asarray(s, dtype=np.complex128)
    if lcp < 0 or lcp >= s.shape[-1]:
        raise DimensionError(f"CP length must satisfy 0 <= lcp < {s.shape[-1]}, got {lcp}")
    if lcp == 0:
        return s.copy()
    return np.concatenate([s[..., -lcp:], s], axis=-1)


def remove_cp(v, lcp: int) -> np.ndarray:
    """Drop the first ``lcp`` samples (last axis)."""
    v = np.asarray(v, dtype=np.complex128)
    if lcp < 0 or lcp >= v.shape[-1]:
        raise DimensionError(f"CP length must satisfy 0 <= lcp < {v.shape[-1]}, got {lcp}")
    return v[..., lcp:].copy()
