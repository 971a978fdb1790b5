"""Vandermonde generator and precoding matrices.

The proposed precoders are built from a unitary Vandermonde matrix whose
nodes ``alpha_k`` are chosen so that ``Theta @ e`` has no zero entry for
any nonzero difference ``e`` of (Gaussian-integer scaled) constellation
points. Only grid sizes ``2^d``, ``3 * 2^d`` and ``2^d * 3^t`` are covered.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionError, UnsupportedDimensionError
from .modem import OtfsDims, otfs_demodulate

SUPPORTED_CLASSES = "MN = 2^d (d >= 0), MN = 3 * 2^d (d >= 0), MN = 2^d * 3^t (d >= 1, t >= 1)"


class PrecoderKind(str, Enum):
    PROPOSED_FREQ_SEL = "ProposedFreqSel"
    PROPOSED_TIME_SEL = "ProposedTimeSel"
    IDENTITY = "Identity"
    PHASE_ROTATION = "PhaseRotation"


@dataclass(frozen=True)
class Precoder:
    kind: PrecoderKind
    V: np.ndarray = field(repr=False)
    dims: OtfsDims
    theta: np.ndarray | None = field(default=None, repr=False)
    xi: float = 1.0
    theta_step: float | None = None

    @property
    def is_unitary(self) -> bool:
        """All kinds built here are unitary by construction."""
        return True


def _factor(n: int, p: int) -> tuple[int, int]:
    e = 0
    while n % p == 0:
        n //= p
        e += 1
    return e, n


def node_rule(mn: int) -> tuple[int, int, int]:
    """Return ``(a, b, c)`` with ``alpha_k = exp(1j*pi*(a*k - b) / (c*mn))``.

    Rules are tried in order 2^d, 3 * 2^d, 2^d * 3^t; the first match wins.
    """
    if mn < 1:
        raise UnsupportedDimensionError(f"MN={mn} is not supported; supported: {SUPPORTED_CLASSES}")
    d, rest = _factor(mn, 2)
    t, rest = _factor(rest, 3)
    if rest != 1:
        raise UnsupportedDimensionError(f"MN={mn} is not supported; supported: {SUPPORTED_CLASSES}")
    if t == 0:
        return 4, 3, 2
    if t == 1:
        return 6, 1, 3
    if d >= 1:
        return 6, 5, 3
    raise UnsupportedDimensionError(f"MN={mn} is not supported; supported: {SUPPORTED_CLASSES}")


def vandermonde_nodes(mn: int) -> np.ndarray:
    """The ``mn`` unit-modulus nodes ``alpha_1 .. alpha_mn``."""
    a, b, c = node_rule(mn)
    k = np.arange(1, mn + 1)
    return np.exp(1j * np.pi * (a * k - b) / (c * mn))


def vandermonde_theta(mn: int) -> tuple[np.ndarray, float]:
    """Normalized Vandermonde generator ``Theta`` and its scale ``xi``.

    Row ``k`` is ``[1, alpha_k, ..., alpha_k^(mn-1)] / xi`` with ``xi = sqrt(mn)``,
    which makes ``Theta`` unitary.

    Raises
    ------
    UnsupportedDimensionError
        If ``mn`` is not in one of the supported classes.
    """
    a, b, c = node_rule(mn)
    k = np.arange(1, mn + 1)[:, None]
    m = np.arange(mn)[None, :]
    # alpha_k^m = exp(1j*pi*p / (c*mn)) with p taken modulo 2*c*mn, exact in integers
    p = ((a * k - b) * m) % (2 * c * mn)
    xi = float(np.sqrt(mn))
    return np.exp(1j * np.pi * p / (c * mn)) / xi, xi


def _doppler_spread(z: np.ndarray, dims: OtfsDims) -> np.ndarray:
    """``(F_N kron I_M) @ z`` applied column-wise."""
    return otfs_demodulate(z.T, dims).T


def precoder_frequency_selective(dims: OtfsDims) -> Precoder:
    """``V = (F_N kron I_M) F_MN^H Theta``."""
    theta, xi = vandermonde_theta(dims.MN)
    V = _doppler_spread(np.fft.ifft(theta, axis=0, norm="ortho"), dims)
    return Precoder(PrecoderKind.PROPOSED_FREQ_SEL, V, dims, theta, xi)


def precoder_time_selective(dims: OtfsDims) -> Precoder:
    """``V = (F_N kron I_M) Theta``."""
    theta, xi = vandermonde_theta(dims.MN)
    V = _doppler_spread(theta, dims)
    return Precoder(PrecoderKind.PROPOSED_TIME_SEL, V, dims, theta, xi)


def precoder_identity(dims: OtfsDims) -> Precoder:
    return Precoder(PrecoderKind.IDENTITY, np.eye(dims.MN, dtype=np.complex128), dims)


def default_theta_step(dims: OtfsDims) -> float:
    return np.pi / (2 * dims.MN)


def precoder_phase_rotation(dims: OtfsDims, theta_step: float | None = None) -> Precoder:
    """Diagonal baseline ``diag(1, e^{j t}, ..., e^{j (MN-1) t})``."""
    if theta_step is None:
        theta_step = default_theta_step(dims)
    V = np.diag(np.exp(1j * theta_step * np.arange(dims.MN)))
    return Precoder(PrecoderKind.PHASE_ROTATION, V, dims, theta_step=float(theta_step))


def precode(p: Precoder, x) -> np.ndarray:
    """``xbar = V x``; ``x`` may carry leading batch axes."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim < 1 or x.shape[-1] != p.dims.MN:
        raise DimensionError(f"x must have length MN={p.dims.MN}, got shape {x.shape}")
    if p.kind is PrecoderKind.IDENTITY:
        return x.copy()
    if p.kind is PrecoderKind.PHASE_ROTATION:
        return x * np.diagonal(p.V)
    return x @ p.V.T


def make_precoder(name: str, dims: OtfsDims, scenario: str, theta_step: float | None = None) -> Precoder:
    """Build a precoder by CLI-style name.

    ``name`` is ``proposed``, ``identity`` or ``phase``; ``scenario`` (``fir``
    or ``bem``) selects which proposed construction is used.
    """
    if name == "proposed":
        if scenario == "fir":
            return precoder_frequency_selective(dims)
        if scenario == "bem":
            return precoder_time_selective(dims)
        raise ValueError(f"unknown scenario family {scenario!r}")
    if name == "identity":
        return precoder_identity(dims)
    if name == "phase":
        return precoder_phase_rotation(dims, theta_step)
    raise ValueError(f"unknown precoder {name!r}")


def unprecode(p: Precoder, xbar) -> np.ndarray:
    """``V^H xbar`` (batched over leading axes)."""
    xbar = np.asarray(xbar, dtype=np.complex128)
    if p.kind is PrecoderKind.IDENTITY:
        return xbar.copy()
    if p.kind is PrecoderKind.PHASE_ROTATION:
        return xbar * np.diagonal(p.V).conj()
    return xbar @ p.V.conj()
