"""Metropolis-within-Gibbs sampling for the corrected-likelihood posterior.

One sweep updates, in order: the Bernstein degree ``k``; each radial part;
each atom location; each atom's angle vector; each VAR coefficient matrix
``B_j``.  Proposal scales of the radial, angle and coefficient blocks are
tuned during burn-in and frozen afterwards.  The innovation covariance is
pre-estimated and held fixed.

The parametric VAR baseline (:func:`run_var_baseline`) samples the
coefficients exactly from their Gaussian conditional posterior.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .likelihood import CorrectedLikelihood, corrected_loglik, working_spectrum
from .linalg import hpd_sqrt
from .prior import (
    AtomSet,
    BernsteinConfig,
    LevyConfig,
    angle_upper,
    basis_table,
    bin_index,
    default_truncation,
    exp_integral_e1,
    log_prior_atoms,
    log_prior_k,
    sample_atoms_series,
    spherical_from_angles,
    spherical_one,
)
from .timefreq import FourierCache, FrequencyGrid
from .var import RankDeficiencyError, TransferSingularityError, VarParams, fit_ols, lag_matrix, unstack_beta, var_spectral_density

log = logging.getLogger(__name__)

BETA_RIDGE = 1e-8
PROCEDURES = ("vnpc", "vnp", "var")


class ChainFailure(RuntimeError):
    pass


@dataclass
class McmcConfig:
    procedure: str = "vnpc"
    order: int = 1
    iterations: int = 80000
    burn_in: int = 30000
    thin: int = 5
    L: int | None = None
    k_max: int = 300
    seed: int | None = 0
    levy: LevyConfig | None = None
    bernstein: BernsteinConfig | None = None
    k_init: int = 10
    k_jump: int = 3
    adapt_batch: int = 50
    target_accept: float = 0.44
    adapt_c: float = 1.0
    check_every: int = 1000
    use_likelihood: bool = True

    def __post_init__(self):
        if self.procedure not in PROCEDURES:
            raise ValueError(f"procedure must be one of {PROCEDURES}")
        if self.order < 0:
            raise ValueError("order must be non-negative")
        if self.procedure == "var" and self.order < 1:
            raise ValueError("procedure var needs order >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def working_order(self) -> int:
        return 0 if self.procedure == "vnp" else self.order

    def truncation(self, n: int) -> int:
        return self.L if self.L is not None else default_truncation(n)

    def bernstein_config(self) -> BernsteinConfig:
        if self.bernstein is not None:
            return self.bernstein
        return BernsteinConfig(k_max=self.k_max)

    def levy_config(self, d: int) -> LevyConfig:
        return self.levy if self.levy is not None else LevyConfig.default(d)


@dataclass
class PosteriorDraws:
    """Retained draws.  ``f`` has shape ``(M, floor(n/2)+1, d, d)``."""

    omegas: np.ndarray
    f: np.ndarray
    k: np.ndarray
    beta: np.ndarray
    log_posterior: np.ndarray
    iters: np.ndarray
    n: int
    d: int
    procedure: str
    order: int
    r: np.ndarray | None = None
    acceptance: dict = field(default_factory=dict)
    acceptance_trace: np.ndarray | None = None
    scales: dict = field(default_factory=dict)
    scale_trace: np.ndarray | None = None
    sigma: np.ndarray | None = None
    wall_time: float = 0.0

    @property
    def M(self) -> int:
        return self.f.shape[0]


@dataclass
class ChainState:
    k: int
    atoms: AtomSet
    U: np.ndarray
    working: VarParams
    Q: np.ndarray
    loglik: float
    scales_radial: np.ndarray
    scales_angle: np.ndarray
    scales_beta: np.ndarray

    @property
    def beta(self) -> np.ndarray:
        return self.working.beta


# --------------------------------------------------------------------------
# proposals


def propose_k(k: int, k_max: int, rng, jump: int = 3) -> int:
    """Symmetric random walk on ``{1..k_max}``, folded at the half-integers 0.5 and k_max+0.5."""
    s = int(rng.integers(1, jump + 1)) * (1 if rng.random() < 0.5 else -1)
    kk = k + s
    if kk < 1:
        kk = 1 - kk
    elif kk > k_max:
        kk = 2 * k_max + 1 - kk
    return min(max(kk, 1), k_max)


def propose_radial(r: float, scale: float, rng) -> float:
    return r * math.exp(scale * rng.standard_normal())


def location_halfwidth(l: int, n: int) -> float:
    """Half-width ``pi l / (l + 2 sqrt(n))`` for the 1-based atom index ``l``."""
    return math.pi * l / (l + 2 * math.sqrt(n))


def _fold(x, upper):
    # reflect into [0, upper]
    y = np.mod(x, 2 * upper)
    return np.where(y > upper, 2 * upper - y, y)


def _fold_scalar(x: float, upper: float) -> float:
    y = math.fmod(x, 2 * upper)
    if y < 0:
        y += 2 * upper
    return 2 * upper - y if y > upper else y


def _bin(x: float, k: int) -> int:
    # scalar bin_index
    j = math.ceil(x * k / math.pi) - 1
    return 0 if j < 0 else (k - 1 if j > k - 1 else j)


def propose_location(x: float, l: int, n: int, rng) -> float:
    delta = location_halfwidth(l, n)
    return _fold_scalar(x + delta * (2.0 * rng.random() - 1.0), math.pi)


def propose_angles(phi: np.ndarray, scale: float, rng) -> np.ndarray:
    m = phi.shape[0]
    out = phi + rng.uniform(-scale, scale, size=m)
    if m:
        out[:-1] = _fold(out[:-1], math.pi)
        out[-1] = np.mod(out[-1], 2 * math.pi)
    return out


def propose_beta_block(block: np.ndarray, scale: float, rng) -> np.ndarray:
    return block + scale * rng.standard_normal(block.shape)


def log_prior_beta(beta: np.ndarray, ridge: float = BETA_RIDGE) -> float:
    return -0.5 * ridge * float(np.dot(beta, beta))


# --------------------------------------------------------------------------
# chain


def _working_model(z: np.ndarray, cfg: McmcConfig) -> VarParams:
    p = cfg.working_order
    try:
        return fit_ols(z, p)
    except (RankDeficiencyError, np.linalg.LinAlgError) as exc:
        raise ChainFailure(f"least-squares pre-fit failed: {exc}") from exc


class _Chain:
    def __init__(self, z: np.ndarray, cfg: McmcConfig):
        self.cfg = cfg
        self.cache = FourierCache.from_series(z)
        self.n, self.d = self.cache.n, self.cache.d
        self.grid = self.cache.grid
        self.bern = cfg.bernstein_config()
        self.levy = cfg.levy_config(self.d)
        self.L = cfg.truncation(self.n)
        self.rng = np.random.default_rng(cfg.seed)
        self.working0 = _working_model(self.cache.z, cfg)
        self.lik = CorrectedLikelihood(self.cache) if cfg.use_likelihood else None
        self.wk = None
        self._S_for, self._S = None, None
        self.upper = angle_upper(self.d)
        self.log_upper_sum = float(np.sum(np.log(self.upper)))

    # -- target pieces

    def _table(self, k: int) -> np.ndarray:
        return basis_table(k, self.n, self.bern)

    def _Q(self, k: int, atoms: AtomSet, U: np.ndarray) -> np.ndarray:
        t = self._table(k)[bin_index(atoms.x, k)] * atoms.r[:, None]
        L, d = U.shape[0], self.d
        return (t.T @ U.reshape(L, d * d)).reshape(-1, d, d)

    def _loglik(self, Q: np.ndarray, wk=None) -> float:
        if self.lik is None:
            return 0.0
        return self.lik.evaluate(Q, wk if wk is not None else self.wk)

    def log_prior(self, s: ChainState) -> float:
        return log_prior_k(s.k, self.bern) + log_prior_atoms(s.atoms, self.levy) + log_prior_beta(s.beta)

    # -- initialisation

    def init_state(self) -> ChainState:
        p = self.working0.p
        for attempt in range(100):
            atoms = sample_atoms_series(self.levy, self.L, self.d, self.rng)
            U = spherical_from_angles(atoms.phi, self.d)
            k = min(self.cfg.k_init, self.bern.k_max)
            Q = self._Q(k, atoms, U)
            if self.lik is not None:
                self.wk = self.lik.prepare(self.working0)
                if self.wk is None:
                    raise ChainFailure("working-model spectrum is singular at the least-squares estimate")
            ll = self._loglik(Q)
            state = ChainState(
                k, atoms, U, self.working0, Q, ll,
                np.full(self.L, 0.5), np.full(self.L, 0.3), np.full(p, 0.05),
            )
            if np.isfinite(ll + self.log_prior(state)):
                return state
        raise ChainFailure("non-finite initial posterior after 100 attempts")

    # -- updates; each returns True on acceptance

    def update_k(self, s: ChainState) -> bool:
        kk = propose_k(s.k, self.bern.k_max, self.rng, self.cfg.k_jump)
        if kk == s.k:
            return True
        Qn = self._Q(kk, s.atoms, s.U)
        lln = self._loglik(Qn)
        logr = lln - s.loglik + log_prior_k(kk, self.bern) - log_prior_k(s.k, self.bern)
        if math.log(self.rng.random()) < logr:
            s.k, s.Q, s.loglik = kk, Qn, lln
            return True
        return False

    def update_radial(self, s: ChainState, l: int) -> bool:
        r = s.atoms.r
        old = r[l]
        new = propose_radial(old, s.scales_radial[l], self.rng)
        # draw the acceptance uniform unconditionally so the stream does not depend on the ordering check
        u = self.rng.random()
        if (l > 0 and new >= r[l - 1]) or (l < self.L - 1 and new <= r[l + 1]):
            return False
        b0 = self.levy.beta0
        dprior = -b0 * (new - old) - math.log(new) + math.log(old)
        if l == self.L - 1:
            dprior -= self.levy.alpha_mass * (exp_integral_e1(b0 * new) - exp_integral_e1(b0 * old))
        bl = self._table(s.k)[_bin(s.atoms.x[l], s.k)]
        Qn = s.Q + (new - old) * bl[:, None, None] * s.U[l][None]
        lln = self._loglik(Qn)
        logr = lln - s.loglik + dprior + math.log(new / old)
        if math.log(u) < logr:
            r[l] = new
            s.Q, s.loglik = Qn, lln
            return True
        return False

    def update_location(self, s: ChainState, l: int) -> bool:
        x = s.atoms.x
        new = propose_location(x[l], l + 1, self.n, self.rng)
        u = self.rng.random()
        b_old = _bin(x[l], s.k)
        b_new = _bin(new, s.k)
        if b_old == b_new:
            # target unchanged: the Metropolis ratio is exactly one
            x[l] = new
            return True
        t = self._table(s.k)
        Qn = s.Q + s.atoms.r[l] * (t[b_new] - t[b_old])[:, None, None] * s.U[l][None]
        lln = self._loglik(Qn)
        if math.log(u) < lln - s.loglik:
            x[l] = new
            s.Q, s.loglik = Qn, lln
            return True
        return False

    def update_angles(self, s: ChainState, l: int) -> bool:
        phi = s.atoms.phi
        new = propose_angles(phi[l], s.scales_angle[l], self.rng)
        u = self.rng.random()
        Un = spherical_one(new, self.d)
        bl = self._table(s.k)[_bin(s.atoms.x[l], s.k)]
        Qn = s.Q + s.atoms.r[l] * bl[:, None, None] * (Un - s.U[l])[None]
        lln = self._loglik(Qn)
        if math.log(u) < lln - s.loglik:
            phi[l] = new
            s.U[l] = Un
            s.Q, s.loglik = Qn, lln
            return True
        return False

    def update_beta(self, s: ChainState, j: int) -> bool:
        B = s.working.B.copy()
        B[j] = propose_beta_block(B[j], s.scales_beta[j], self.rng)
        u = self.rng.random()
        cand = s.working.with_B(B)
        wk = self.lik.prepare(cand) if self.lik is not None else True
        if wk is None:
            return False
        lln = self._loglik(s.Q, wk) if self.lik is not None else 0.0
        logr = lln - s.loglik + log_prior_beta(cand.beta) - log_prior_beta(s.working.beta)
        if math.log(u) < logr:
            s.working, s.loglik = cand, lln
            if self.lik is not None:
                self.wk = wk
            return True
        return False

    # -- bookkeeping

    def spectrum(self, s: ChainState) -> np.ndarray:
        if self.lik is not None:
            S = self.wk.S
        else:
            # prior-only mode: the square root changes only when the working model does
            if self._S_for is not s.working:
                self._S_for, self._S = s.working, hpd_sqrt(working_spectrum(s.working, self.grid))
            S = self._S
        f = S @ s.Q @ S
        f = 0.5 * (f + np.conj(np.swapaxes(f, -1, -2)))
        f[self.grid.boundary] = f[self.grid.boundary].real
        return f

    def check_cache(self, s: ChainState) -> None:
        Qf = self._Q(s.k, s.atoms, spherical_from_angles(s.atoms.phi, self.d))
        if not np.allclose(Qf, s.Q, rtol=1e-10, atol=1e-12 * max(1.0, float(np.abs(Qf).max()))):
            raise ChainFailure("cached correction matrix drifted from a fresh evaluation")
        s.Q = Qf
        if self.lik is None:
            return
        fresh = corrected_loglik(self.cache, s.working, Qf)
        cached = self._loglik(Qf)
        if not abs(fresh - s.loglik) <= 1e-8 * max(1.0, abs(fresh)):
            raise ChainFailure(f"cached log-likelihood {s.loglik!r} disagrees with fresh value {fresh!r}")
        s.loglik = cached


def run_chain(z, cfg: McmcConfig) -> PosteriorDraws:
    """Run one Metropolis-within-Gibbs chain and return the retained draws."""
    if cfg.procedure == "var":
        return run_var_baseline(z, cfg.order, cfg)
    t0 = time.perf_counter()
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    ch = _Chain(z, cfg)
    s = ch.init_state()
    L, p = ch.L, s.working.p
    blocks = ("k", "radial", "location", "angles", "beta")
    acc_total = {b: 0 for b in blocks}
    n_total = {b: 0 for b in blocks}
    batch_rad = np.zeros(L)
    batch_ang = np.zeros(L)
    batch_beta = np.zeros(p)
    batch_index = 0
    keep = []
    for it in range(cfg.iterations):
        post = it >= cfg.burn_in
        a = ch.update_k(s)
        if post:
            acc_total["k"] += a
            n_total["k"] += 1
        for l in range(L):
            a = ch.update_radial(s, l)
            batch_rad[l] += a
            if post:
                acc_total["radial"] += a
        for l in range(L):
            a = ch.update_location(s, l)
            if post:
                acc_total["location"] += a
        if ch.d > 1:
            for l in range(L):
                a = ch.update_angles(s, l)
                batch_ang[l] += a
                if post:
                    acc_total["angles"] += a
        for j in range(p):
            a = ch.update_beta(s, j)
            batch_beta[j] += a
            if post:
                acc_total["beta"] += a
        if post:
            n_total["radial"] += L
            n_total["location"] += L
            n_total["angles"] += L if ch.d > 1 else 0
            n_total["beta"] += p
        if not post and (it + 1) % cfg.adapt_batch == 0:
            batch_index += 1
            step = cfg.adapt_c / math.sqrt(batch_index)
            tgt = cfg.target_accept
            s.scales_radial = np.minimum(s.scales_radial * np.exp(step * (batch_rad / cfg.adapt_batch - tgt)), 10.0)
            s.scales_angle = np.minimum(s.scales_angle * np.exp(step * (batch_ang / cfg.adapt_batch - tgt)), math.pi)
            s.scales_beta = s.scales_beta * np.exp(step * (batch_beta / cfg.adapt_batch - tgt))
            batch_rad[:] = 0
            batch_ang[:] = 0
            batch_beta[:] = 0
        if cfg.check_every and (it + 1) % cfg.check_every == 0:
            ch.check_cache(s)
        if post and (it - cfg.burn_in + 1) % cfg.thin == 0:
            rates = [acc_total[b] / n_total[b] if n_total[b] else np.nan for b in blocks]
            keep.append(
                (
                    it + 1, ch.spectrum(s), s.k, s.working.beta.copy(), s.loglik + ch.log_prior(s), s.atoms.r.copy(), rates,
                    np.concatenate([s.scales_radial, s.scales_angle, s.scales_beta]),
                )
            )
    if not keep:
        raise ChainFailure("no draws retained")
    acceptance = {b: (acc_total[b] / n_total[b] if n_total[b] else float("nan")) for b in blocks}
    return PosteriorDraws(
        omegas=ch.grid.omegas,
        f=np.stack([k[1] for k in keep]),
        k=np.array([k[2] for k in keep]),
        beta=np.stack([k[3] for k in keep]),
        log_posterior=np.array([k[4] for k in keep]),
        iters=np.array([k[0] for k in keep]),
        n=ch.n,
        d=ch.d,
        procedure=cfg.procedure,
        order=p,
        r=np.stack([k[5] for k in keep]),
        acceptance=acceptance,
        acceptance_trace=np.array([k[6] for k in keep]),
        scale_trace=np.stack([k[7] for k in keep]),
        scales={"radial": s.scales_radial.tolist(), "angles": s.scales_angle.tolist(), "beta": s.scales_beta.tolist()},
        sigma=s.working.Sigma.copy(),
        wall_time=time.perf_counter() - t0,
    )


# --------------------------------------------------------------------------
# parametric baseline


def var_posterior(z, p: int, ridge: float = BETA_RIDGE) -> tuple[np.ndarray, np.ndarray, VarParams]:
    """Gaussian conditional posterior of the stacked coefficients with Sigma fixed at OLS.

    Returns ``(mean, covariance, ols_fit)``.  The prior is ``N(0, ridge^-1 I)``.
    """
    z = np.asarray(z, dtype=float)
    theta = fit_ols(z, p)
    y, x = lag_matrix(z, p)
    d = z.shape[1]
    sinv = np.linalg.inv(theta.Sigma)
    # with beta = vec(Gamma), Gamma = Bcat^T (pd x d) column-stacked
    prec = np.kron(sinv, x.T @ x) + ridge * np.eye(p * d * d)
    rhs = (x.T @ y @ sinv).T.reshape(-1)
    chol = np.linalg.cholesky(prec)
    mean = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
    cov = np.linalg.inv(prec)
    return mean, 0.5 * (cov + cov.T), theta


def run_var_baseline(z, p: int, cfg: McmcConfig | None = None, n_draws: int | None = None) -> PosteriorDraws:
    """Exact conjugate draws of the VAR(p) coefficients mapped to spectra."""
    t0 = time.perf_counter()
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if p < 1:
        raise ValueError("VAR baseline needs p >= 1")
    cfg = cfg or McmcConfig(procedure="var", order=p)
    if n_draws is None:
        n_draws = (cfg.iterations - cfg.burn_in) // cfg.thin
    n, d = z.shape
    mean, cov, theta = var_posterior(z, p)
    rng = np.random.default_rng(cfg.seed)
    chol = np.linalg.cholesky(cov)
    betas = mean[None] + rng.standard_normal((n_draws, mean.size)) @ chol.T
    grid = FrequencyGrid(n)
    f = np.empty((n_draws, grid.n_half, d, d), dtype=complex)
    lp = np.empty(n_draws)
    keep = np.ones(n_draws, dtype=bool)
    for m in range(n_draws):
        th = VarParams(unstack_beta(betas[m], p, d), theta.Sigma)
        try:
            f[m] = var_spectral_density(th, grid.omegas)
        except TransferSingularityError:
            keep[m] = False
        lp[m] = 0.0
    return PosteriorDraws(
        omegas=grid.omegas,
        f=f[keep],
        k=np.zeros(int(keep.sum()), dtype=int),
        beta=betas[keep],
        log_posterior=lp[keep],
        iters=np.arange(1, n_draws + 1)[keep],
        n=n,
        d=d,
        procedure="var",
        order=p,
        sigma=theta.Sigma.copy(),
        wall_time=time.perf_counter() - t0,
    )
