"""Posterior summaries of spectral density matrix draws.

Everything works on realified draws: each Hermitian ``d x d`` matrix becomes
``d*d`` real components (diagonals plus real and imaginary parts of the
off-diagonal entries), so medians, deviations and bands are componentwise real numbers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import derealify, realified_labels, realify

SIGMA_FLOOR = 1e-12


def _stack(draws) -> np.ndarray:
    # accept PosteriorDraws or a raw (M, W, d, d) array
    f = getattr(draws, "f", draws)
    f = np.asarray(f)
    if f.ndim != 4 or f.shape[-1] != f.shape[-2]:
        raise ValueError("draws must have shape (M, W, d, d)")
    if f.shape[0] < 1:
        raise ValueError("need at least one draw")
    return f


def components(f: np.ndarray) -> np.ndarray:
    """Realified matrices flattened to ``d*d`` components in row-major order."""
    f = np.asarray(f)
    d = f.shape[-1]
    return realify(f).reshape(f.shape[:-2] + (d * d,))


def from_components(h: np.ndarray) -> np.ndarray:
    d = int(round(math.sqrt(h.shape[-1])))
    return derealify(h.reshape(h.shape[:-1] + (d, d)))


def pointwise_median(draws) -> np.ndarray:
    """Componentwise median of realified draws, mapped back to Hermitian matrices."""
    return from_components(np.median(components(_stack(draws)), axis=0))


def pointwise_band(draws, level: float = 0.9) -> tuple[np.ndarray, np.ndarray]:
    """Equal-tailed pointwise quantiles of the realified components, shape ``(W, d*d)``."""
    h = components(_stack(draws))
    a = (1 - level) / 2
    return np.quantile(h, a, axis=0), np.quantile(h, 1 - a, axis=0)


def mad(h: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Raw median absolute deviation along the draw axis, floored."""
    return np.maximum(np.median(np.abs(h - center[None]), axis=0), SIGMA_FLOOR)


@dataclass
class UniformRegion:
    center: np.ndarray  # (W, d*d) realified median
    sigma: np.ndarray  # (W, d*d) MAD
    xi: float
    level: float

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.xi * self.sigma

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.xi * self.sigma

    def contains(self, h: np.ndarray) -> bool:
        return bool(np.all((h >= self.lower) & (h <= self.upper)))

    def widths(self) -> np.ndarray:
        """``2 xi median_w sigma_k`` per realified component."""
        return 2 * self.xi * np.median(self.sigma, axis=0)


def uniform_region(draws, level: float = 0.9) -> UniformRegion:
    """Simultaneous band ``h +- xi sigma`` covering a ``level`` fraction of the draws.

    ``xi`` is the ``ceil(level M)``-th smallest per-draw sup-normalised deviation.
    """
    h = components(_stack(draws))
    M = h.shape[0]
    center = np.median(h, axis=0)
    sigma = mad(h, center)
    dev = np.max(np.abs(h - center[None]) / sigma[None], axis=(1, 2))
    rank = min(max(math.ceil(level * M - 1e-9), 1), M)
    xi = float(np.sort(dev)[rank - 1])
    return UniformRegion(center, sigma, xi, level)


def squared_coherency(f: np.ndarray, i: int = 0, j: int = 1) -> np.ndarray:
    """``|f_ij|^2 / (f_ii f_jj)``; works on single matrices or stacks."""
    f = np.asarray(f)
    fii = f[..., i, i].real
    fjj = f[..., j, j].real
    if np.any(fii <= 0) or np.any(fjj <= 0):
        raise ValueError("squared coherency needs positive diagonal entries")
    k = np.abs(f[..., i, j]) ** 2 / (fii * fjj)
    if np.any(k > 1 + 1e-12) or np.any(k < 0):
        raise ValueError("squared coherency outside [0, 1]; input is not positive semidefinite")
    return np.clip(k, 0.0, 1.0)


def trapezoid_weights(omegas: np.ndarray) -> np.ndarray:
    omegas = np.asarray(omegas, dtype=float)
    dw = np.diff(omegas)
    w = np.zeros_like(omegas)
    w[:-1] += dw / 2
    w[1:] += dw / 2
    return w


def l1_l2_error(estimate: np.ndarray, truth: np.ndarray, omegas: np.ndarray) -> tuple[float, float]:
    """Frobenius-norm L1 and L2 distances, trapezoid rule over the grid, normalised by pi.

    With a half grid that stops short of pi (odd ``n``) the integral covers the
    grid's range only.
    """
    estimate, truth = np.asarray(estimate), np.asarray(truth)
    if estimate.shape != truth.shape or estimate.shape[0] != len(omegas):
        raise ValueError("estimate, truth and grid must agree")
    dist = np.sqrt(np.sum(np.abs(estimate - truth) ** 2, axis=(-2, -1)))
    w = trapezoid_weights(omegas)
    return float(np.sum(w * dist) / np.pi), float(np.sqrt(np.sum(w * dist**2) / np.pi))


def coverage_and_width(draws, truth: np.ndarray, level: float = 0.9) -> tuple[bool, np.ndarray]:
    reg = uniform_region(draws, level)
    return reg.contains(components(truth)), reg.widths()


@dataclass
class SummaryBundle:
    omegas: np.ndarray
    median: np.ndarray  # (W, d, d)
    lo_pointwise: np.ndarray  # (W, d*d)
    hi_pointwise: np.ndarray
    region: UniformRegion
    labels: list[str]
    coherency_median: np.ndarray | None = None
    coherency_lo: np.ndarray | None = None
    coherency_hi: np.ndarray | None = None
    scalars: dict = field(default_factory=dict)

    @property
    def xi(self) -> float:
        return self.region.xi

    def widths(self) -> dict[str, float]:
        return dict(zip(self.labels, map(float, self.region.widths())))

    def component_table(self, idx: int) -> np.ndarray:
        """Columns omega, median, pointwise lo/hi, uniform lo/hi."""
        return np.column_stack([
            self.omegas,
            self.region.center[:, idx],
            self.lo_pointwise[:, idx],
            self.hi_pointwise[:, idx],
            self.region.lower[:, idx],
            self.region.upper[:, idx],
        ])

    def write(self, out_dir, extra: dict | None = None) -> list[str]:
        from .io import write_csv

        written = []
        header = ["omega", "median", "lo90_pointwise", "hi90_pointwise", "lo90_uniform", "hi90_uniform"]
        for idx, lab in enumerate(self.labels):
            path = f"{out_dir}/summary_{lab}.csv"
            write_csv(path, header, self.component_table(idx))
            written.append(path)
        if self.coherency_median is not None:
            path = f"{out_dir}/coherency.csv"
            write_csv(
                path, ["omega", "median", "lo90_pointwise", "hi90_pointwise"],
                np.column_stack([self.omegas, self.coherency_median, self.coherency_lo, self.coherency_hi]),
            )
            written.append(path)
        payload = {"xi": self.xi, "level": self.region.level, "widths": self.widths(), **self.scalars, **(extra or {})}
        with open(f"{out_dir}/summary.json", "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        written.append(f"{out_dir}/summary.json")
        return written


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def summarize(draws, truth: np.ndarray | None = None, level: float = 0.9, pair: tuple[int, int] | None = None) -> SummaryBundle:
    """Full summary; adds errors and coverage when ``truth`` is given."""
    f = _stack(draws)
    omegas = np.asarray(getattr(draws, "omegas", np.linspace(0, np.pi, f.shape[1])))
    d = f.shape[-1]
    med = pointwise_median(f)
    lo, hi = pointwise_band(f, level)
    reg = uniform_region(f, level)
    b = SummaryBundle(omegas, med, lo, hi, reg, realified_labels(d))
    if pair is None and d == 2:
        pair = (0, 1)
    if pair is not None:
        k = squared_coherency(f, *pair)
        a = (1 - level) / 2
        b.coherency_median = np.median(k, axis=0)
        b.coherency_lo = np.quantile(k, a, axis=0)
        b.coherency_hi = np.quantile(k, 1 - a, axis=0)
    if truth is not None:
        l1, l2 = l1_l2_error(med, truth, omegas)
        b.scalars.update(L1=l1, L2=l2, covered=reg.contains(components(truth)))
    return b
