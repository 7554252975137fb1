"""VAR(p) working model: least squares, conditional likelihood, spectra, simulators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_2PI = np.log(2 * np.pi)


class RankDeficiencyError(ValueError):
    pass


class StationarityError(ValueError):
    pass


class TransferSingularityError(ValueError):
    pass


@dataclass
class VarParams:
    """Coefficients ``B`` of shape ``(p, d, d)`` and innovation covariance ``Sigma``."""

    B: np.ndarray
    Sigma: np.ndarray
    _sigma_cache: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.Sigma = np.asarray(self.Sigma, dtype=float)
        d = self.Sigma.shape[0]
        self.B = np.asarray(self.B, dtype=float).reshape(-1, d, d)
        if not np.allclose(self.Sigma, self.Sigma.T, rtol=0, atol=1e-12 * max(1.0, np.abs(self.Sigma).max())):
            raise ValueError("Sigma must be symmetric")

    @property
    def p(self) -> int:
        return self.B.shape[0]

    @property
    def d(self) -> int:
        return self.Sigma.shape[0]

    @property
    def beta(self) -> np.ndarray:
        return stack_beta(self.B)

    def with_beta(self, beta: np.ndarray) -> "VarParams":
        return self.with_B(unstack_beta(beta, self.p, self.d))

    def with_B(self, B: np.ndarray) -> "VarParams":
        """Same Sigma (and its cached factors), new coefficients."""
        return VarParams(B, self.Sigma, self._sigma_cache)

    def sigma_factors(self) -> tuple[np.ndarray, float]:
        """``(Sigma^-1, log|Sigma|)``; raises if Sigma is singular."""
        if self._sigma_cache is None:
            lam = np.linalg.eigvalsh(self.Sigma)
            if lam[0] <= 0:
                raise np.linalg.LinAlgError(f"Sigma is singular (min eigenvalue {lam[0]:.3e})")
            self._sigma_cache = (np.linalg.inv(self.Sigma), float(np.sum(np.log(lam))))
        return self._sigma_cache


def stack_beta(B: np.ndarray) -> np.ndarray:
    """Row-major stacking: all lags of row 1, then all lags of row 2, ..."""
    B = np.asarray(B, dtype=float)
    p, d, _ = B.shape
    return np.transpose(B, (1, 0, 2)).reshape(-1).copy()


def unstack_beta(beta: np.ndarray, p: int, d: int) -> np.ndarray:
    return np.transpose(np.asarray(beta, dtype=float).reshape(d, p, d), (1, 0, 2)).copy()


def lag_matrix(z: np.ndarray, p: int, w: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Response rows ``z_t`` and regressors ``[z_{t-1}, ..., z_{t-p}]`` for ``t > w``."""
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    w = p if w is None else w
    y = z[w:]
    x = np.concatenate([z[w - j : n - j] for j in range(1, p + 1)], axis=1) if p else np.zeros((n - w, 0))
    return y, x


def _ols(z: np.ndarray, p: int, w: int) -> VarParams:
    z = np.asarray(z, dtype=float)
    n, d = z.shape
    y, x = lag_matrix(z, p, w)
    if p == 0:
        sigma = y.T @ y / (n - w)
        return VarParams(np.zeros((0, d, d)), 0.5 * (sigma + sigma.T))
    gram = x.T @ x
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise RankDeficiencyError(f"regressor Gram matrix is rank deficient for p={p}")
    coef = np.linalg.solve(gram, x.T @ y)  # (p d, d), coef = Bcat^T
    resid = y - x @ coef
    sigma = resid.T @ resid / (n - w)
    B = unstack_beta(coef.T.reshape(-1), p, d)
    return VarParams(B, 0.5 * (sigma + sigma.T))


def fit_ols(z, p: int) -> VarParams:
    """Least-squares VAR(p) fit; Sigma uses divisor ``n - p``."""
    z = np.asarray(z, dtype=float)
    n, d = z.shape
    if p < 0:
        raise ValueError("order must be non-negative")
    if n <= d * p + d:
        raise RankDeficiencyError(f"need n > d*p + d = {d * p + d}, got n = {n}")
    return _ols(z, p, p)


def conditional_gaussian_loglik(z, theta: VarParams, w: int | None = None) -> float:
    """Gaussian log-density of ``z_{w+1..n}`` given the first ``w`` observations."""
    z = np.asarray(z, dtype=float)
    p = theta.p
    w = p if w is None else w
    if w < p:
        raise ValueError("conditioning window must be at least the order")
    sinv, logdet = theta.sigma_factors()
    n, d = z.shape
    resid = z[w:].copy()
    for j in range(1, p + 1):
        resid -= z[w - j : n - j] @ theta.B[j - 1].T
    quad = np.einsum("ta,ab,tb->", resid, sinv, resid)
    m = n - w
    return float(-0.5 * m * (d * LOG_2PI + logdet) - 0.5 * quad)


def transfer(B: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    """``A(e^{-i w}) = I - sum_j B_j e^{-i j w}`` for each frequency."""
    B = np.asarray(B)
    p, d = B.shape[0], B.shape[-1]
    omegas = np.atleast_1d(omegas)
    phases = np.exp(-1j * np.outer(omegas, np.arange(1, p + 1)))
    return np.eye(d)[None] - np.einsum("wj,jab->wab", phases, B)


def _force_real_at_ends(f: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    ends = np.isclose(omegas, 0.0, atol=1e-14) | np.isclose(omegas, np.pi, atol=1e-14)
    if np.any(ends):
        f = f.copy()
        f[ends] = f[ends].real
    return f


def var_spectral_density(theta: VarParams, omegas) -> np.ndarray:
    """``(2 pi)^-1 A^-1 Sigma A^-*``; a single matrix for scalar ``omegas``."""
    scalar = np.ndim(omegas) == 0
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    A = transfer(theta.B, omegas)
    try:
        Ainv = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise TransferSingularityError("transfer matrix is singular") from exc
    # Frobenius condition number; bounds the 2-norm one from above
    cond = np.linalg.norm(A, axis=(-2, -1)) * np.linalg.norm(Ainv, axis=(-2, -1))
    if np.any(~np.isfinite(cond) | (cond > 1e12)):
        raise TransferSingularityError("transfer matrix is numerically singular")
    f = Ainv @ theta.Sigma @ np.conj(np.swapaxes(Ainv, -1, -2)) / (2 * np.pi)
    f = 0.5 * (f + np.conj(np.swapaxes(f, -1, -2)))
    f = _force_real_at_ends(f, omegas)
    return f[0] if scalar else f


def vma_spectral_density(Theta: np.ndarray, Sigma: np.ndarray, omegas) -> np.ndarray:
    """Spectral density of ``Z_t = e_t + Theta e_{t-1}``."""
    scalar = np.ndim(omegas) == 0
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    d = Sigma.shape[0]
    M = np.eye(d)[None] + np.exp(-1j * omegas)[:, None, None] * np.asarray(Theta)[None]
    f = M @ Sigma @ np.conj(np.swapaxes(M, -1, -2)) / (2 * np.pi)
    f = 0.5 * (f + np.conj(np.swapaxes(f, -1, -2)))
    f = _force_real_at_ends(f, omegas)
    return f[0] if scalar else f


def companion(B: np.ndarray) -> np.ndarray:
    p, d, _ = B.shape
    top = np.concatenate(list(B), axis=1)
    if p == 1:
        return top
    bottom = np.concatenate([np.eye(d * (p - 1)), np.zeros((d * (p - 1), d))], axis=1)
    return np.concatenate([top, bottom], axis=0)


def simulate_var(theta: VarParams, n: int, seed=None, burn_in: int = 1000) -> np.ndarray:
    rng = np.random.default_rng(seed)
    p, d = theta.p, theta.d
    if p and np.max(np.abs(np.linalg.eigvals(companion(theta.B)))) >= 1:
        raise StationarityError("VAR is not stationary (companion spectral radius >= 1)")
    total = n + burn_in
    chol = np.linalg.cholesky(theta.Sigma)
    eps = rng.standard_normal((total, d)) @ chol.T
    z = np.zeros((total + p, d))
    for t in range(total):
        acc = eps[t].copy()
        for j in range(p):
            acc += theta.B[j] @ z[p + t - 1 - j]
        z[p + t] = acc
    return z[p + burn_in :]


def simulate_vma(Theta: np.ndarray, Sigma: np.ndarray, n: int, seed=None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    Sigma = np.asarray(Sigma, dtype=float)
    d = Sigma.shape[0]
    eps = rng.standard_normal((n + 1, d)) @ np.linalg.cholesky(Sigma).T
    return eps[1:] + eps[:-1] @ np.asarray(Theta).T


# Study models.
VAR2_PARAMS = VarParams(
    np.array([[[0.5, 0.0], [0.0, -0.3]], [[0.0, 0.0], [0.0, -0.5]]]),
    np.array([[1.0, 0.9], [0.9, 1.0]]),
)
VMA1_THETA = np.array([[-0.75, 0.5], [0.5, 0.75]])
VMA1_SIGMA = np.array([[1.0, 0.5], [0.5, 1.0]])


def aic(z, p: int, w: int | None = None) -> float:
    z = np.asarray(z, dtype=float)
    d = z.shape[1]
    w = p if w is None else w
    theta = _ols(z, p, w)
    return -2 * conditional_gaussian_loglik(z, theta, w) + 2 * p * d * d


def select_order_aic(z, p_max: int) -> int:
    z = np.asarray(z, dtype=float)
    n, d = z.shape
    p_max = min(p_max, (n - 1) // d - 1)
    scores = [aic(z, p, p_max) for p in range(1, p_max + 1)]
    return int(np.argmin(scores)) + 1


@dataclass
class ElbowTable:
    orders: np.ndarray
    neg_max_loglik: np.ndarray
    aic: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("order,neg_max_loglik,aic\n")
            for p, v, a in zip(self.orders, self.neg_max_loglik, self.aic):
                fh.write(f"{int(p)},{v:.17g},{a:.17g}\n")


def elbow_table(z, p_max: int) -> ElbowTable:
    """Negative maximised log-likelihood for ``p = 0..p_max`` on the window ``t > p_max``."""
    z = np.asarray(z, dtype=float)
    n, d = z.shape
    if n <= d * p_max + d:
        raise RankDeficiencyError(f"p_max={p_max} needs n > {d * p_max + d}")
    orders = np.arange(p_max + 1)
    nll = np.empty(p_max + 1)
    for p in orders:
        theta = _ols(z, int(p), p_max)
        nll[p] = -conditional_gaussian_loglik(z, theta, p_max)
    return ElbowTable(orders, nll, 2 * nll + 2 * orders * d * d)
