"""Fourier coefficients, the Fourier frequency grid and periodograms.

Conventions: time runs ``t = 1..n`` in the exponent, coefficients carry the
unitary ``n**-0.5`` scaling, and the half grid holds ``j = 0..floor(n/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class BoundaryBlockError(ValueError):
    pass


@dataclass(frozen=True)
class FrequencyGrid:
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("series length must be at least 2")

    @property
    def n_half(self) -> int:
        """Number of half-grid frequencies, ``floor(n/2) + 1``."""
        return self.n // 2 + 1

    @property
    def omegas(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_half) / self.n

    @property
    def N(self) -> int:
        return -(-self.n // 2) - 1

    @property
    def interior(self) -> np.ndarray:
        return np.arange(1, self.N + 1)

    @property
    def boundary(self) -> np.ndarray:
        return np.array([0, self.n // 2]) if self.n % 2 == 0 else np.array([0])

    @property
    def is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.n_half, dtype=bool)
        mask[self.boundary] = True
        return mask

    @property
    def weights(self) -> np.ndarray:
        """Multiplicity of each half-grid index in the full ``0..n-1`` grid."""
        w = np.full(self.n_half, 2.0)
        w[self.boundary] = 1.0
        return w


def _as_series(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.ndim != 2:
        raise ValueError("time series must be an (n, d) array")
    if not np.all(np.isfinite(z)):
        raise ValueError("time series has non-finite entries")
    return z


def dft(z) -> np.ndarray:
    """Unitary DFT, all ``n`` coefficients as an ``(n, d)`` complex array."""
    z = _as_series(z)
    n = z.shape[0]
    if n < 2:
        raise ValueError("need n >= 2")
    phase = np.exp(-2j * np.pi * np.arange(n) / n)
    return np.fft.fft(z, axis=0) * phase[:, None] / np.sqrt(n)


def inverse_dft(coeffs) -> np.ndarray:
    coeffs = np.asarray(coeffs)
    n = coeffs.shape[0]
    phase = np.exp(2j * np.pi * np.arange(n) / n)
    return np.fft.ifft(coeffs * phase[:, None], axis=0) * np.sqrt(n)


def naive_dft(z) -> np.ndarray:
    z = _as_series(z)
    n = z.shape[0]
    t = np.arange(1, n + 1)
    j = np.arange(n)
    kernel = np.exp(-1j * np.outer(j, t) * 2 * np.pi / n)
    return kernel @ z / np.sqrt(n)


def periodogram(z, j: int | None = None, coeffs: np.ndarray | None = None) -> np.ndarray:
    """Periodogram matrix ``(2 pi)^-1 Z_j Z_j^*``.

    With ``j=None`` returns the stack over the half grid.
    """
    if coeffs is None:
        coeffs = dft(z)
    n = coeffs.shape[0]
    if j is None:
        c = coeffs[: n // 2 + 1]
        return np.einsum("ja,jb->jab", c, np.conj(c)) / (2 * np.pi)
    if not 0 <= j <= n // 2:
        raise IndexError(f"frequency index {j} outside 0..{n // 2}")
    c = coeffs[j]
    return np.outer(c, np.conj(c)) / (2 * np.pi)


def blocked_transform(z, blocks) -> np.ndarray:
    """Apply per-frequency ``d x d`` blocks in the frequency domain.

    ``blocks`` covers the half grid ``j = 0..floor(n/2)``; the remaining
    frequencies use the conjugate blocks so the result stays real.
    """
    z = _as_series(z)
    n, d = z.shape
    blocks = np.asarray(blocks)
    if blocks.shape != (n // 2 + 1, d, d):
        raise ValueError(f"expected blocks of shape {(n // 2 + 1, d, d)}, got {blocks.shape}")
    grid = FrequencyGrid(n)
    bnd = blocks[grid.boundary]
    if np.any(np.abs(bnd.imag) > 1e-12 * np.maximum(1.0, np.abs(bnd).max())):
        raise BoundaryBlockError("blocks at boundary frequencies must be real")
    # rfft's t = 0 origin differs from the t = 1 convention only by a scalar phase,
    # which commutes with the blocks.
    zh = np.fft.rfft(z, axis=0)
    xh = np.einsum("jab,jb->ja", blocks, zh)
    return np.fft.irfft(xh, n=n, axis=0)


@dataclass(frozen=True)
class FourierCache:
    """Forward transform of one data set, computed once per chain."""

    z: np.ndarray

    @classmethod
    def from_series(cls, z) -> "FourierCache":
        z = _as_series(z).copy()
        z.setflags(write=False)
        return cls(z)

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def d(self) -> int:
        return self.z.shape[1]

    @cached_property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(self.n)

    @cached_property
    def coeffs(self) -> np.ndarray:
        return dft(self.z)

    @cached_property
    def half(self) -> np.ndarray:
        """rfft-convention coefficients ``rfft(z) / sqrt(n)`` on the half grid."""
        return np.fft.rfft(self.z, axis=0) / np.sqrt(self.n)
