"""Hermitian matrix algebra used throughout the package.

Every routine accepts either a single ``(d, d)`` matrix or a stack of shape
``(..., d, d)``; the trailing two axes are always the matrix axes.  Square
roots, inverse square roots and log-determinants all go through one
Hermitian eigendecomposition so that a caller needing several of them can
decompose once and reuse the result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NumericPolicy:
    hermitian_tol: float = 1e-10
    singular_rel: float = 1e-14


POLICY = NumericPolicy()


class NotHermitianError(ValueError):
    pass


class SingularMatrixError(ValueError):
    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


def _hermitian_part(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    ah = np.conj(np.swapaxes(a, -1, -2))
    scale = np.linalg.norm(a, axis=(-2, -1))
    drift = np.linalg.norm(a - ah, axis=(-2, -1))
    bad = drift > POLICY.hermitian_tol * np.maximum(scale, 1e-300)
    if np.any(bad):
        raise NotHermitianError(
            f"matrix is not Hermitian (max relative drift {np.max(drift / np.maximum(scale, 1e-300)):.3e})"
        )
    return 0.5 * (a + ah)


def hermitian_eigen(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and unitary eigenvectors of a Hermitian matrix."""
    return np.linalg.eigh(_hermitian_part(a))


def _check_positive(lam: np.ndarray) -> None:
    lmin = lam[..., 0]
    lmax = lam[..., -1]
    d = lam.shape[-1]
    bad = lmin <= d * POLICY.singular_rel * np.maximum(lmax, 0.0)
    bad |= lmin <= 0
    if np.any(bad):
        worst = float(np.min(lmin))
        raise SingularMatrixError(f"matrix is numerically singular (min eigenvalue {worst:.3e})", worst)


def _from_eigen(lam: np.ndarray, v: np.ndarray) -> np.ndarray:
    return (v * lam[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def hpd_sqrt(a: np.ndarray) -> np.ndarray:
    """Principal square root of a Hermitian positive (semi)definite matrix."""
    lam, v = hermitian_eigen(a)
    if np.any(lam[..., 0] < -lam.shape[-1] * POLICY.singular_rel * np.abs(lam[..., -1])):
        raise SingularMatrixError("matrix has a negative eigenvalue", float(np.min(lam[..., 0])))
    return _from_eigen(np.sqrt(np.clip(lam, 0.0, None)), v)


def hpd_inv_sqrt(a: np.ndarray) -> np.ndarray:
    lam, v = hermitian_eigen(a)
    _check_positive(lam)
    return _from_eigen(1.0 / np.sqrt(lam), v)


def hpd_logdet(a: np.ndarray) -> np.ndarray | float:
    lam, _ = hermitian_eigen(a)
    _check_positive(lam)
    out = np.sum(np.log(lam), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def hpd_inv(a: np.ndarray) -> np.ndarray:
    lam, v = hermitian_eigen(a)
    _check_positive(lam)
    return _from_eigen(1.0 / lam, v)


def realify(a: np.ndarray) -> np.ndarray:
    """Map a Hermitian matrix to a real one of the same shape.

    Real parts of the upper triangle stay in place, imaginary parts of the
    upper triangle are written to the mirrored lower-triangle position and
    the (real) diagonal is kept.
    """
    a = np.asarray(a)
    d = a.shape[-1]
    iu = np.triu_indices(d, 1)
    out = np.array(a.real, dtype=float, copy=True)
    out[..., iu[1], iu[0]] = a.imag[..., iu[0], iu[1]]
    return out


def derealify(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    d = h.shape[-1]
    iu = np.triu_indices(d, 1)
    out = np.zeros(h.shape, dtype=complex)
    idx = np.arange(d)
    out[..., idx, idx] = h[..., idx, idx]
    upper = h[..., iu[0], iu[1]] + 1j * h[..., iu[1], iu[0]]
    out[..., iu[0], iu[1]] = upper
    out[..., iu[1], iu[0]] = np.conj(upper)
    return out


def realified_labels(d: int) -> list[str]:
    """Component names in row-major order of the realified matrix."""
    labels = []
    for i in range(d):
        for j in range(d):
            if i == j:
                labels.append(f"f{i + 1}{j + 1}")
            elif i < j:
                labels.append(f"Re_f{i + 1}{j + 1}")
            else:
                labels.append(f"Im_f{j + 1}{i + 1}")
    return labels
