"""Bernstein mixture prior with Hpd-Gamma-process weights.

The process is represented by ``L`` atoms ``(x_l, r_l, U_l)`` with
radial parts in decreasing order.  Radial parts follow the ordered largest
points of a Poisson process with intensity ``C exp(-b r) / r``; spherical
parts are unit-trace Hermitian PSD matrices parameterised by
hyperspherical angles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np
from scipy import special

EULER_GAMMA = 0.5772156649015329


@dataclass(frozen=True)
class LevyConfig:
    alpha_mass: float = 1.0
    beta0: float = 2e-4

    def __post_init__(self):
        if not (self.alpha_mass > 0 and self.beta0 > 0):
            raise ValueError("Levy intensity parameters must be positive")

    @classmethod
    def default(cls, d: int) -> "LevyConfig":
        return cls(1.0, d * 1e-4)


def _default_k_weights(k_max: int) -> np.ndarray:
    k = np.arange(1, k_max + 1)
    logw = -0.01 * k * np.log(k)
    w = np.exp(logw - logw.max())
    return w / w.sum()


@dataclass(frozen=True)
class BernsteinConfig:
    k_max: int = 300
    tau_l: float = 0.1
    tau_r: float = 0.9
    truncated: bool = True
    k_weights: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not (0 <= self.tau_l < self.tau_r <= 1):
            raise ValueError("need 0 <= tau_l < tau_r <= 1")
        if self.k_weights is None:
            object.__setattr__(self, "k_weights", _default_k_weights(self.k_max))
        w = np.asarray(self.k_weights, dtype=float)
        if w.shape != (self.k_max,) or abs(w.sum() - 1) > 1e-10 or np.any(w < 0):
            raise ValueError("k_weights must be a probability vector of length k_max")
        object.__setattr__(self, "k_weights", w)


# --------------------------------------------------------------------------
# exponential integral and inverse Levy tail


def exp_integral_e1(x):
    """``E1(x) = int_x^inf exp(-t)/t dt`` for ``x > 0`` (scalar or array)."""
    if np.ndim(x) == 0:
        x = float(x)
        if not x > 0:
            raise ValueError("E1 requires x > 0")
        return float(special.exp1(x))
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("E1 requires x > 0")
    return special.exp1(arr)


def _log_e1_newton(target_log, y0):
    # Solve log E1(y) = target_log in u = log y; d/du log E1 = -exp(-y)/E1(y).
    u = np.log(y0)
    lo = np.full_like(u, -700.0)
    hi = np.full_like(u, np.log(800.0))
    for _ in range(100):
        y = np.exp(u)
        e1 = exp_integral_e1(y)
        g = np.log(e1) - target_log
        # g is decreasing in u
        lo = np.where(g > 0, u, lo)
        hi = np.where(g <= 0, u, hi)
        slope = -np.exp(-y) / e1
        step = g / slope
        u_new = u - step
        outside = (u_new <= lo) | (u_new >= hi) | ~np.isfinite(u_new)
        u_new = np.where(outside, 0.5 * (lo + hi), u_new)
        if np.all(np.abs(u_new - u) < 1e-14 * np.maximum(1.0, np.abs(u))):
            u = u_new
            break
        u = u_new
    return np.exp(u)


def inverse_levy(w, cfg: LevyConfig):
    """Radial size ``r`` with ``C * E1(b * r) = w`` (decreasing in ``w``)."""
    scalar = np.ndim(w) == 0
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if np.any(~(w > 0)):
        raise ValueError("w must be positive")
    t = w / cfg.alpha_mass
    # initial guesses from the small- and large-argument asymptotics
    y0 = np.where(t > 0.5, np.exp(-EULER_GAMMA - t), np.maximum(-np.log(t) - np.log(np.maximum(-np.log(t), 1.0)), 0.3))
    y0 = np.clip(y0, 1e-300, 700.0)
    y = _log_e1_newton(np.log(t), y0)
    r = y / cfg.beta0
    return float(r[0]) if scalar else r


def levy_tail(r, cfg: LevyConfig):
    return cfg.alpha_mass * exp_integral_e1(cfg.beta0 * np.asarray(r, dtype=float))


def largest_atom_cdf(t, cfg: LevyConfig):
    """CDF of the largest radial part, ``exp(-C E1(b t))``."""
    return np.exp(-levy_tail(t, cfg))


# --------------------------------------------------------------------------
# spherical parts


def n_angles(d: int) -> int:
    return d * d - 1


def angle_upper(d: int) -> np.ndarray:
    m = n_angles(d)
    up = np.full(m, np.pi)
    if m:
        up[-1] = 2 * np.pi
    return up


def unit_vector_from_angles(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    m = phi.shape[-1]
    e = np.ones(phi.shape[:-1] + (m + 1,))
    s = np.ones(phi.shape[:-1])
    for i in range(m):
        e[..., i] = s * np.cos(phi[..., i])
        s = s * np.sin(phi[..., i])
    e[..., m] = s
    return e


def spherical_from_angles(phi, d: int | None = None) -> np.ndarray:
    """Unit-trace Hermitian PSD matrix ``T T^*`` from hyperspherical angles.

    The unit vector fills a lower-triangular ``T``: ``d`` real diagonal
    entries first, then one complex entry per consecutive pair.
    Accepts a stack of angle vectors along leading axes.
    """
    phi = np.asarray(phi, dtype=float)
    m = phi.shape[-1]
    dd = int(round(math.sqrt(m + 1)))
    if d is None:
        d = dd
    if dd * dd != m + 1 or d != dd:
        raise ValueError(f"need d*d - 1 angles, got {m}")
    e = unit_vector_from_angles(phi)
    T = np.zeros(phi.shape[:-1] + (d, d), dtype=complex)
    idx = np.arange(d)
    T[..., idx, idx] = e[..., :d]
    il = np.tril_indices(d, -1)
    if len(il[0]):
        T[..., il[0], il[1]] = e[..., d::2] + 1j * e[..., d + 1 :: 2]
    return T @ np.conj(np.swapaxes(T, -1, -2))


@numba.njit(cache=True)
def _spherical_one(phi, d):
    m = phi.shape[0]
    e = np.empty(m + 1)
    s = 1.0
    for i in range(m):
        e[i] = s * np.cos(phi[i])
        s *= np.sin(phi[i])
    e[m] = s
    T = np.zeros((d, d), dtype=np.complex128)
    for i in range(d):
        T[i, i] = e[i]
    pos = d
    for i in range(1, d):
        for j in range(i):
            T[i, j] = e[pos] + 1j * e[pos + 1]
            pos += 2
    out = np.empty((d, d), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            acc = 0j
            for c in range(d):
                acc += T[i, c] * np.conj(T[j, c])
            out[i, j] = acc
    return out


def spherical_one(phi: np.ndarray, d: int) -> np.ndarray:
    """Compiled single-vector version of :func:`spherical_from_angles`."""
    return _spherical_one(np.asarray(phi, dtype=np.float64), d)


# --------------------------------------------------------------------------
# atoms


@dataclass
class AtomSet:
    x: np.ndarray
    r: np.ndarray
    phi: np.ndarray  # (L, d*d - 1)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float).reshape(len(self.x), -1)

    @property
    def L(self) -> int:
        return len(self.r)

    @property
    def d(self) -> int:
        return int(round(math.sqrt(self.phi.shape[1] + 1)))

    def U(self) -> np.ndarray:
        return spherical_from_angles(self.phi, self.d)

    def copy(self) -> "AtomSet":
        return AtomSet(self.x.copy(), self.r.copy(), self.phi.copy())


def default_truncation(n: int) -> int:
    return max(20, int(math.ceil(n ** (1 / 3))))


def sample_atoms_series(cfg: LevyConfig, L: int, d: int, seed=None) -> AtomSet:
    rng = np.random.default_rng(seed)
    if L < 1:
        raise ValueError("L must be at least 1")
    w = np.cumsum(rng.exponential(1.0, size=L))
    r = inverse_levy(w, cfg)
    x = rng.uniform(0.0, np.pi, size=L)
    phi = rng.uniform(0.0, 1.0, size=(L, n_angles(d))) * angle_upper(d)
    return AtomSet(x, np.atleast_1d(r), phi)


def log_radial_prior(r, cfg: LevyConfig) -> float:
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)) or np.any(np.diff(r) >= 0):
        return -np.inf
    return float(
        np.sum(math.log(cfg.alpha_mass) - cfg.beta0 * r - np.log(r))
        - cfg.alpha_mass * exp_integral_e1(cfg.beta0 * r[-1])
    )


def log_prior_atoms(a: AtomSet, cfg: LevyConfig) -> float:
    """Log-density of the truncated atom set; ``-inf`` outside the support."""
    lr = log_radial_prior(a.r, cfg)
    if not np.isfinite(lr):
        return -np.inf
    if np.any((a.x < 0) | (a.x > np.pi)):
        return -np.inf
    up = angle_upper(a.d)
    if np.any((a.phi < 0) | (a.phi > up)) or np.any(a.phi[:, -1:] >= 2 * np.pi):
        return -np.inf
    return lr - a.L * math.log(np.pi) - a.L * float(np.sum(np.log(up)))


def log_prior_k(k: int, cfg: BernsteinConfig) -> float:
    if not 1 <= k <= cfg.k_max:
        return -np.inf
    return float(np.log(cfg.k_weights[k - 1]))


# --------------------------------------------------------------------------
# Bernstein basis and the correction matrix


def _beta_density(x, j, k):
    # Beta(j, k-j+1) density as k * Binomial(k-1, x) pmf at j-1, in log space
    logp = special.xlogy(j - 1, x) + special.xlog1py(k - j, -x)
    return k * special.comb(k - 1, j - 1) * np.exp(logp)


def bernstein_basis(x, j: int, k: int, cfg: BernsteinConfig | None = None):
    """Beta(j, k-j+1) density at ``x``, domain-compressed in truncated mode."""
    x = np.asarray(x, dtype=float)
    if cfg is not None and cfg.truncated:
        x = cfg.tau_l + (cfg.tau_r - cfg.tau_l) * x
    return _beta_density(x, j, k)


@lru_cache(maxsize=512)
def _basis_table(k: int, n: int, tau_l: float, tau_r: float, truncated: bool) -> np.ndarray:
    x = 2 * np.arange(n // 2 + 1) / n
    if truncated:
        x = tau_l + (tau_r - tau_l) * x
    j = np.arange(1, k + 1)[:, None]
    table = _beta_density(x[None, :], j, k)
    table.setflags(write=False)
    return table


def basis_table(k: int, n: int, cfg: BernsteinConfig) -> np.ndarray:
    """Basis values ``(k, floor(n/2)+1)`` on the Fourier half grid of length ``n``."""
    return _basis_table(int(k), int(n), float(cfg.tau_l), float(cfg.tau_r), bool(cfg.truncated))


def bin_index(x, k: int) -> np.ndarray:
    """Zero-based bin of ``x`` in the partition ``((j-1) pi/k, j pi/k]``; 0 goes to bin 0."""
    x = np.asarray(x, dtype=float)
    j = np.ceil(x * k / np.pi).astype(int) - 1
    return np.clip(j, 0, k - 1)


def eval_Q(a: AtomSet, k: int, omegas, cfg: BernsteinConfig) -> np.ndarray:
    """Correction matrix at arbitrary frequencies in ``[0, pi]``."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    bins = bin_index(a.x, k)
    basis = np.stack([bernstein_basis(omegas / np.pi, b + 1, k, cfg) for b in bins])  # (L, W)
    return np.einsum("lw,l,lab->wab", basis, a.r, a.U())


def eval_Q_grid(a: AtomSet, k: int, n: int, cfg: BernsteinConfig, U: np.ndarray | None = None) -> np.ndarray:
    table = basis_table(k, n, cfg)
    bins = bin_index(a.x, k)
    U = a.U() if U is None else U
    return np.einsum("lw,l,lab->wab", table[bins], a.r, U)
