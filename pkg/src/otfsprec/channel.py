"""Frequency-selective (FIR) and time-selective (BEM) channels.

The time-domain models are the ground truth. The effective delay-Doppler
matrices are built so that ``H @ xbar`` matches
``otfs_demodulate(apply(otfs_modulate(xbar)))`` exactly under the unitary
DFT convention, which puts a ``sqrt(MN)`` on the spectral diagonal of the
FIR form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError
from .linalg import dft_matrix, dft_submatrix, kron
from .modem import OtfsDims, otfs_demodulate, otfs_modulate

SPEED_OF_LIGHT = 3e8
DEFAULT_CARRIER = 4e9
DEFAULT_DELTA_F = 15e3


@dataclass(frozen=True)
class FreqSelective:
    """Scenario tag: FIR channel with ``L`` taps."""

    L: int

    family = "fir"

    @property
    def order(self) -> int:
        return self.L

    @property
    def max_diversity(self) -> int:
        return self.L


@dataclass(frozen=True)
class TimeSelective:
    """Scenario tag: BEM channel with ``Q + 1`` bases.

    ``f_max`` (Hz) is kept when the order was derived from a Doppler value.
    """

    Q: int
    f_max: float | None = None

    family = "bem"

    @property
    def order(self) -> int:
        return self.Q

    @property
    def max_diversity(self) -> int:
        return self.Q + 1

    @classmethod
    def from_doppler(cls, dims: OtfsDims, f_max: float, delta_f: float = DEFAULT_DELTA_F):
        return cls(bem_order(dims, f_max, delta_f), float(f_max))


@dataclass(frozen=True)
class FirChannel:
    taps: np.ndarray = field(repr=False)

    @property
    def L(self) -> int:
        return len(self.taps)


@dataclass(frozen=True)
class BemChannel:
    coeffs: np.ndarray = field(repr=False)
    omegas: np.ndarray = field(repr=False)
    dims: OtfsDims
    f_max: float = 0.0
    fbar_max: float = 0.0

    @property
    def Q(self) -> int:
        return len(self.coeffs) - 1

    def gains(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Time-varying gain ``h[c] = sum_q c_q exp(1j w_q c)`` for ``c`` in ``[start, stop)``."""
        stop = self.dims.MN if stop is None else stop
        return bem_gains(self.coeffs, self.omegas, np.arange(start, stop))


def doppler_from_velocity(v_kmh: float, carrier: float = DEFAULT_CARRIER) -> float:
    """Maximum Doppler in Hz for a speed in km/h."""
    return v_kmh / 3.6 * carrier / SPEED_OF_LIGHT


def bem_order(dims: OtfsDims, f_max: float, delta_f: float = DEFAULT_DELTA_F) -> int:
    """``Q = 2 * ceil(N * f_max / delta_f)``."""
    if delta_f <= 0:
        raise ParameterError(f"delta_f must be positive, got {delta_f}")
    if f_max < 0:
        raise ParameterError(f"f_max must be non-negative, got {f_max}")
    return 2 * math.ceil(dims.N * f_max / delta_f)


def bem_omegas(mn: int, Q: int) -> np.ndarray:
    """Modeling frequencies ``2*pi/MN * (q - ceil(Q/2))``, ``q = 0..Q``."""
    q = np.arange(Q + 1)
    return 2 * np.pi / mn * (q - math.ceil(Q / 2))


def bem_gains(coeffs, omegas, times) -> np.ndarray:
    """Evaluate the BEM gain at integer ``times``; ``coeffs`` may be batched (..., Q+1)."""
    basis = np.exp(1j * np.outer(omegas, times))  # (Q+1, T)
    return np.asarray(coeffs) @ basis


def _cn(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    z = rng.standard_normal(tuple(shape) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(var / 2)


def sample_fir(L: int, rng: np.random.Generator) -> FirChannel:
    """``L`` i.i.d. CN(0, 1/L) taps."""
    if L < 1:
        raise DimensionError(f"L must be >= 1, got {L}")
    return FirChannel(_cn(rng, (L,), 1.0 / L))


def sample_bem_order(dims: OtfsDims, Q: int, rng: np.random.Generator) -> BemChannel:
    """BEM realization of a given order with i.i.d. CN(0, 1/(Q+1)) coefficients."""
    if Q < 0:
        raise ParameterError(f"Q must be >= 0, got {Q}")
    return BemChannel(_cn(rng, (Q + 1,), 1.0 / (Q + 1)), bem_omegas(dims.MN, Q), dims)


def sample_bem(dims: OtfsDims, f_max: float, delta_f: float, rng: np.random.Generator) -> BemChannel:
    """BEM realization for maximum Doppler ``f_max`` (Hz) and subcarrier spacing ``delta_f``."""
    Q = bem_order(dims, f_max, delta_f)
    ch = sample_bem_order(dims, Q, rng)
    return BemChannel(ch.coeffs, ch.omegas, dims, float(f_max), f_max / delta_f)


def apply_fir(ch: FirChannel, s) -> np.ndarray:
    """Circular convolution ``r[c] = sum_p h[p] s[(c - p) mod len(s)]`` (last axis)."""
    s = np.asarray(s, dtype=np.complex128)
    if ch.L > s.shape[-1]:
        raise DimensionError(f"channel length {ch.L} exceeds block length {s.shape[-1]}")
    r = np.zeros_like(s)
    for p, h in enumerate(ch.taps):
        r += h * np.roll(s, p, axis=-1)
    return r


def linear_convolve(taps, s) -> np.ndarray:
    """Causal linear convolution truncated to ``len(s)`` samples.

    ``taps`` is ``(L,)`` or batched ``(B, L)`` matching a ``(B, n)`` signal.
    """
    s = np.asarray(s, dtype=np.complex128)
    taps = np.asarray(taps, dtype=np.complex128)
    n = s.shape[-1]
    r = np.zeros_like(s)
    for p in range(min(taps.shape[-1], n)):
        h = taps[..., p]
        if h.ndim:
            h = h[..., None]
        r[..., p:] += h * s[..., : n - p]
    return r


def apply_bem(ch: BemChannel, s) -> np.ndarray:
    """``r[c] = h[c] s[c]``."""
    s = np.asarray(s, dtype=np.complex128)
    if s.shape[-1] != ch.dims.MN:
        raise DimensionError(f"signal length must be MN={ch.dims.MN}, got {s.shape[-1]}")
    return ch.gains() * s


def _doppler_kron(dims: OtfsDims) -> np.ndarray:
    return kron(dft_matrix(dims.N), np.eye(dims.M))


def effective_matrix_fir(ch: FirChannel, dims: OtfsDims) -> np.ndarray:
    """Delay-Doppler matrix of an FIR channel.

    ``H = (F_N kron I_M) F_MN^H diag(sqrt(MN) F_{MN x L} h) F_MN (F_N^H kron I_M)``
    """
    if ch.L > dims.MN:
        raise DimensionError(f"L={ch.L} exceeds MN={dims.MN}")
    T = _doppler_kron(dims)
    F = dft_matrix(dims.MN)
    spectrum = np.sqrt(dims.MN) * (dft_submatrix(dims.MN, ch.L) @ ch.taps)
    return T @ F.conj().T @ np.diag(spectrum) @ F @ T.conj().T


def effective_matrix_bem(ch: BemChannel, dims: OtfsDims) -> np.ndarray:
    """Delay-Doppler matrix ``sum_q c_q (F_N kron I_M) D_q (F_N^H kron I_M)``."""
    T = _doppler_kron(dims)
    H = np.zeros((dims.MN, dims.MN), dtype=np.complex128)
    c = np.arange(dims.MN)
    for cq, wq in zip(ch.coeffs, ch.omegas):
        H += cq * (T @ np.diag(np.exp(1j * wq * c)) @ T.conj().T)
    return H


# Batched spectral forms used by the simulator. Both channels are
# H = U diag(g) U^H with a fixed unitary U, so only g varies per frame.


def fir_spectrum(taps, mn: int) -> np.ndarray:
    """Unnormalized MN-point DFT of zero-padded taps (batched over leading axes)."""
    return np.fft.fft(taps, n=mn, axis=-1)


def fir_basis(dims: OtfsDims) -> np.ndarray:
    """``U = (F_N kron I_M) F_MN^H`` as a dense matrix."""
    eye = np.eye(dims.MN, dtype=np.complex128)
    return otfs_demodulate(np.fft.ifft(eye, axis=0, norm="ortho").T, dims).T


def bem_basis(dims: OtfsDims) -> np.ndarray:
    """``U = F_N kron I_M`` as a dense matrix."""
    eye = np.eye(dims.MN, dtype=np.complex128)
    return otfs_demodulate(eye.T, dims).T


def fir_to_spectral(y, dims: OtfsDims) -> np.ndarray:
    """``U^H y`` for the FIR basis."""
    return np.fft.fft(otfs_modulate(y, dims), axis=-1, norm="ortho")


def fir_from_spectral(z, dims: OtfsDims) -> np.ndarray:
    """``U z`` for the FIR basis."""
    return otfs_demodulate(np.fft.ifft(z, axis=-1, norm="ortho"), dims)


def bem_to_spectral(y, dims: OtfsDims) -> np.ndarray:
    return otfs_modulate(y, dims)


def bem_from_spectral(z, dims: OtfsDims) -> np.ndarray:
    return otfs_demodulate(z, dims)


def channel_csv_rows(ch: FirChannel | BemChannel) -> list[tuple[int, float, float]]:
    """``(index, re, im)`` rows: tap index for FIR, basis index q for BEM."""
    vals = ch.taps if isinstance(ch, FirChannel) else ch.coeffs
    return [(i, float(v.real), float(v.imag)) for i, v in enumerate(vals)]
