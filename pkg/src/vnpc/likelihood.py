"""Whittle and nonparametrically corrected log-likelihoods.

The model spectral density is ``f = f_pa^{1/2} Q f_pa^{1/2}`` where
``f_pa`` is the VAR working-model spectrum and ``Q`` the correction matrix.
The corrected log-likelihood transforms the data frequency-by-frequency
with ``f_pa^{1/2} f^{-1/2}``, evaluates the working model's conditional
Gaussian likelihood on the back-transformed series and adds the Jacobian
``-1/2 sum_j log det(f f_pa^{-1})`` over all ``n`` Fourier frequencies.

Two evaluation routes exist.  :func:`corrected_loglik` follows that
recipe literally (inverse FFT, time-domain residuals).  :class:`CorrectedLikelihood`
is the sampler's evaluator: the circular part of the residual quadratic
form equals the Whittle quadratic form ``sum_j z_j^* f_j^{-1} z_j / 2pi``,
so only the first ``p`` residuals, which wrap around the series ends, are
reconstructed in the time domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from . import linalg
from .prior import AtomSet, BernsteinConfig, eval_Q_grid
from .timefreq import FourierCache, FrequencyGrid, blocked_transform
from .var import LOG_2PI, TransferSingularityError, VarParams, conditional_gaussian_loglik, var_spectral_density

DEGENERATE_REL = 1e-12


class DegenerateSpectrumError(ValueError):
    pass


@dataclass
class SpectralModel:
    working: VarParams
    atoms: AtomSet
    k: int
    grid: FrequencyGrid
    cfg: BernsteinConfig

    def Q(self) -> np.ndarray:
        return eval_Q_grid(self.atoms, self.k, self.grid.n, self.cfg)


def working_spectrum(theta: VarParams, grid: FrequencyGrid) -> np.ndarray:
    return var_spectral_density(theta, grid.omegas)


def compose_spectrum(fpa: np.ndarray, Q: np.ndarray, grid: FrequencyGrid) -> np.ndarray:
    """``f_pa^{1/2} Q f_pa^{1/2}`` on the half grid, real at the boundary indices."""
    s = linalg.hpd_sqrt(fpa)
    f = s @ Q @ s
    f = 0.5 * (f + np.conj(np.swapaxes(f, -1, -2)))
    bnd = grid.boundary
    f[bnd] = f[bnd].real
    return f


def _check_degenerate(f: np.ndarray) -> None:
    lam = np.linalg.eigvalsh(f)
    tr = np.trace(f, axis1=-2, axis2=-1).real
    bad = ~np.isfinite(lam).all(axis=-1) | (lam[..., 0] < DEGENERATE_REL * tr)
    if np.any(bad):
        raise DegenerateSpectrumError(f"model spectral density degenerate at indices {np.flatnonzero(bad)[:5]}")


def model_spectral_density(m: SpectralModel, j: int | None = None) -> np.ndarray:
    f = compose_spectrum(working_spectrum(m.working, m.grid), m.Q(), m.grid)
    _check_degenerate(f)
    return f if j is None else f[j]


def whittle_loglik(coeffs: np.ndarray, f: np.ndarray, grid: FrequencyGrid) -> float:
    """Multivariate Whittle log-likelihood over the interior frequencies ``1..N``.

    ``coeffs`` holds Fourier coefficients indexed from ``j = 0`` (either the
    full set or the half grid); ``f`` is indexed the same way.
    """
    idx = grid.interior
    z = np.asarray(coeffs)[idx]
    fj = np.asarray(f)[idx]
    d = z.shape[1]
    lam, v = linalg.hermitian_eigen(fj)
    if np.any(lam[:, 0] <= 0) or not np.all(np.isfinite(lam)):
        return -np.inf
    logdet = np.sum(np.log(2 * np.pi * lam), axis=-1)
    y = np.einsum("jba,jb->ja", np.conj(v), z)
    quad = np.sum(np.abs(y) ** 2 / lam, axis=-1) / (2 * np.pi)
    return float(np.sum(-d * np.log(np.pi) - logdet - quad))


def corrected_loglik(cache: FourierCache, working: VarParams, Q: np.ndarray) -> float:
    """Reference evaluation of the corrected log-likelihood.

    ``Q`` is the correction matrix on the half grid.  Returns ``-inf`` when
    the model spectrum is degenerate or the working spectrum is singular.
    """
    grid = cache.grid
    try:
        fpa = working_spectrum(working, grid)
        f = compose_spectrum(fpa, np.asarray(Q), grid)
        _check_degenerate(f)
        blocks = linalg.hpd_sqrt(fpa) @ linalg.hpd_inv_sqrt(f)
        bnd = grid.boundary
        blocks[bnd] = blocks[bnd].real
        x = blocked_transform(cache.z, blocks)
        det = np.sum(grid.weights * (linalg.hpd_logdet(f) - linalg.hpd_logdet(fpa)))
        ll = -0.5 * det + conditional_gaussian_loglik(x, working, working.p)
    except (DegenerateSpectrumError, TransferSingularityError, linalg.SingularMatrixError, np.linalg.LinAlgError):
        return -np.inf
    return float(ll) if np.isfinite(ll) else -np.inf


# --------------------------------------------------------------------------
# compiled evaluator


@numba.njit(cache=True)
def _herm_eig(a, lam, v):
    """Cyclic complex Jacobi; ``a`` is overwritten, eigenpairs unsorted."""
    d = a.shape[0]
    if d == 1:
        lam[0] = a[0, 0].real
        v[0, 0] = 1.0
        return
    for i in range(d):
        for j in range(d):
            v[i, j] = 1.0 if i == j else 0.0
    for sweep in range(60):
        off = 0.0
        tot = 0.0
        for i in range(d):
            tot += a[i, i].real ** 2
            for j in range(i + 1, d):
                off += abs(a[i, j]) ** 2
        if off <= 1e-32 * tot or off == 0.0:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                g = abs(a[p, q])
                if g == 0.0:
                    continue
                ph = a[p, q] / g
                app = a[p, p].real
                aqq = a[q, q].real
                theta = 0.5 * np.arctan2(2.0 * g, app - aqq)
                c = np.cos(theta)
                s = np.sin(theta)
                # G = diag(1, conj(ph)) @ [[c, -s], [s, c]]
                g00 = c + 0j
                g01 = -s + 0j
                g10 = np.conj(ph) * s
                g11 = np.conj(ph) * c
                for i in range(d):
                    aip = a[i, p]
                    aiq = a[i, q]
                    a[i, p] = aip * g00 + aiq * g10
                    a[i, q] = aip * g01 + aiq * g11
                for j in range(d):
                    apj = a[p, j]
                    aqj = a[q, j]
                    a[p, j] = np.conj(g00) * apj + np.conj(g10) * aqj
                    a[q, j] = np.conj(g01) * apj + np.conj(g11) * aqj
                a[p, q] = 0.0
                a[q, p] = 0.0
                for i in range(d):
                    vip = v[i, p]
                    viq = v[i, q]
                    v[i, p] = vip * g00 + viq * g10
                    v[i, q] = vip * g01 + viq * g11
    for i in range(d):
        lam[i] = a[i, i].real


@numba.njit(cache=True)
def _corrected_kernel(zh, S, logdet_fpa, w, bnd, Q, B, sinv, edge_phase, edge_pos, n):
    nh, d = zh.shape
    p = B.shape[0]
    ne = edge_phase.shape[0]
    f = np.empty((d, d), dtype=np.complex128)
    tmp = np.empty((d, d), dtype=np.complex128)
    v = np.empty((d, d), dtype=np.complex128)
    lam = np.empty(d)
    isq = np.empty(d)
    y = np.empty(d, dtype=np.complex128)
    u = np.empty(d, dtype=np.complex128)
    xe = np.zeros((ne, d))
    det = 0.0
    quad = 0.0
    for j in range(nh):
        # f = S Q S
        for a in range(d):
            for b in range(d):
                acc = 0j
                for c in range(d):
                    acc += Q[j, a, c] * S[j, c, b]
                tmp[a, b] = acc
        for a in range(d):
            for b in range(d):
                acc = 0j
                for c in range(d):
                    acc += S[j, a, c] * tmp[c, b]
                f[a, b] = acc
        for a in range(d):
            for b in range(a, d):
                h = 0.5 * (f[a, b] + np.conj(f[b, a]))
                if bnd[j]:
                    h = h.real + 0j
                f[a, b] = h
                f[b, a] = np.conj(h)
        tr = 0.0
        for a in range(d):
            tr += f[a, a].real
        if not np.isfinite(tr):
            return -np.inf, 0.0, 0.0
        if d == 2:
            # closed forms: no eigendecomposition needed
            fa = f[0, 0].real
            fc = f[1, 1].real
            fb = f[0, 1]
            gb = fb.real * fb.real + fb.imag * fb.imag
            dt = fa * fc - gb
            hd = 0.5 * (fa - fc)
            lmax = 0.5 * tr + np.sqrt(hd * hd + gb)
            if not (tr > 0.0 and dt > 0.0 and dt / lmax >= DEGENERATE_REL * tr):
                return -np.inf, 0.0, 0.0
            det += w[j] * (np.log(dt) - logdet_fpa[j])
            z0 = zh[j, 0]
            z1 = zh[j, 1]
            cross = np.conj(z0) * fb * z1
            qj = (fc * (z0.real ** 2 + z0.imag ** 2) + fa * (z1.real ** 2 + z1.imag ** 2) - 2.0 * cross.real) / dt
            quad += w[j] * qj / (2.0 * np.pi)
            if ne > 0:
                # f^{-1/2} = adj(f + sqrt(det) I) / (sqrt(det) sqrt(tr + 2 sqrt(det)))
                sd = np.sqrt(dt)
                k = 1.0 / (sd * np.sqrt(tr + 2.0 * sd))
                u[0] = k * ((fc + sd) * z0 - fb * z1)
                u[1] = k * ((fa + sd) * z1 - np.conj(fb) * z0)
                for a in range(2):
                    acc = S[j, a, 0] * u[0] + S[j, a, 1] * u[1]
                    for e in range(ne):
                        xe[e, a] += w[j] * (acc * edge_phase[e, j]).real
            continue
        _herm_eig(f, lam, v)
        lmin = lam[0]
        for a in range(1, d):
            if lam[a] < lmin:
                lmin = lam[a]
        if not (lmin >= DEGENERATE_REL * tr) or tr <= 0.0:
            return -np.inf, 0.0, 0.0
        ld = 0.0
        for a in range(d):
            ld += np.log(lam[a])
        det += w[j] * (ld - logdet_fpa[j])
        qj = 0.0
        for a in range(d):
            acc = 0j
            for b in range(d):
                acc += np.conj(v[b, a]) * zh[j, b]
            y[a] = acc
            qj += (acc.real ** 2 + acc.imag ** 2) / lam[a]
        quad += w[j] * qj / (2.0 * np.pi)
        if ne > 0:
            for a in range(d):
                isq[a] = 1.0 / np.sqrt(lam[a])
            # x_hat = S V diag(lam^-1/2) V^* z
            for a in range(d):
                acc = 0j
                for b in range(d):
                    acc += v[a, b] * y[b] * isq[b]
                u[a] = acc
            for a in range(d):
                acc = 0j
                for b in range(d):
                    acc += S[j, a, b] * u[b]
                for e in range(ne):
                    xe[e, a] += w[j] * (acc * edge_phase[e, j]).real
    if p == 0:
        return det, quad, 0.0
    scale = 1.0 / np.sqrt(n)
    for e in range(ne):
        for a in range(d):
            xe[e, a] *= scale
    # edge_pos[e] is the time index of xe[e]; the first p rows are s = 0..p-1,
    # the last p rows are s = n-p..n-1.
    edge = 0.0
    r = np.empty(d)
    for s in range(p):
        for a in range(d):
            r[a] = xe[s, a]
        for m in range(1, p + 1):
            src = s - m
            row = src if src >= 0 else ne - p + (src + p)
            for a in range(d):
                acc = 0.0
                for b in range(d):
                    acc += B[m - 1, a, b] * xe[row, b]
                r[a] -= acc
        for a in range(d):
            for b in range(d):
                edge += r[a] * sinv[a, b] * r[b]
    return det, quad, edge


@dataclass
class WorkingCache:
    """Working-model quantities reused across correction-matrix updates."""

    working: VarParams
    S: np.ndarray
    logdet_fpa: np.ndarray
    sinv: np.ndarray
    B: np.ndarray
    const: float
    edge_phase: np.ndarray
    edge_pos: np.ndarray


class CorrectedLikelihood:
    """Fast corrected log-likelihood for one data set.

    :meth:`prepare` builds the working-model cache (square roots of
    ``f_pa`` and the wrap-around phases); :meth:`evaluate` then costs one
    small eigendecomposition per half-grid frequency.
    """

    def __init__(self, cache: FourierCache, working: VarParams | None = None):
        self.cache = cache
        grid = cache.grid
        self.n = grid.n
        self.d = cache.d
        self.zh = np.ascontiguousarray(cache.half)
        self.w = grid.weights
        self.bnd = grid.is_boundary
        self.wk = None
        self._edge_cache = {}
        if working is not None and not self.set_working(working):
            raise TransferSingularityError("working-model spectrum is singular")

    def prepare(self, working: VarParams) -> WorkingCache | None:
        """Cache for ``working``, or None if its spectrum is singular."""
        grid = self.cache.grid
        p = working.p
        try:
            fpa = working_spectrum(working, grid)
            sinv, logdet_sigma = working.sigma_factors()
        except (TransferSingularityError, np.linalg.LinAlgError):
            return None
        if self.d == 2:
            # closed-form 2x2 square root: (F + sqrt(det) I) / sqrt(tr + 2 sqrt(det))
            a, c = fpa[:, 0, 0].real, fpa[:, 1, 1].real
            dt = a * c - np.abs(fpa[:, 0, 1]) ** 2
            if not np.all((dt > 0) & (a > 0)):
                return None
            sd = np.sqrt(dt)
            S = (fpa + sd[:, None, None] * np.eye(2)) / np.sqrt(a + c + 2 * sd)[:, None, None]
            logdet_fpa = np.log(dt)
        else:
            lam, v = np.linalg.eigh(fpa)
            if np.any(lam[:, 0] <= 0):
                return None
            S = (v * np.sqrt(lam)[:, None, :]) @ np.conj(np.swapaxes(v, -1, -2))
            logdet_fpa = np.sum(np.log(lam), axis=-1)
        S[self.bnd] = S[self.bnd].real
        pos, phase = self._edges(p)
        return WorkingCache(
            working=working,
            S=np.ascontiguousarray(S),
            logdet_fpa=logdet_fpa,
            sinv=np.ascontiguousarray(sinv),
            B=np.ascontiguousarray(working.B),
            const=-0.5 * (self.n - p) * (self.d * LOG_2PI + logdet_sigma),
            edge_phase=phase,
            edge_pos=pos,
        )

    def _edges(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        # time indices of the wrap-around residuals and their Fourier phases
        if p not in self._edge_cache:
            pos = np.concatenate([np.arange(p), np.arange(self.n - p, self.n)]) if p else np.zeros(0, dtype=np.int64)
            j = np.arange(self.cache.grid.n_half)
            self._edge_cache[p] = (pos, np.ascontiguousarray(np.exp(2j * np.pi * np.outer(pos, j) / self.n)))
        return self._edge_cache[p]

    def set_working(self, working: VarParams) -> bool:
        wk = self.prepare(working)
        if wk is None:
            return False
        self.wk = wk
        return True

    def evaluate(self, Q: np.ndarray, wk: WorkingCache) -> float:
        det, quad, edge = _corrected_kernel(
            self.zh, wk.S, wk.logdet_fpa, self.w, self.bnd, np.ascontiguousarray(Q, dtype=np.complex128),
            wk.B, wk.sinv, wk.edge_phase, wk.edge_pos, self.n,
        )
        if not np.isfinite(det):
            return -np.inf
        return float(-0.5 * det + wk.const - 0.5 * (quad - edge))

    def __call__(self, Q: np.ndarray) -> float:
        return self.evaluate(Q, self.wk)
