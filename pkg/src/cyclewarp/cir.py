"""Square-root (CIR) diffusion: exact transition law, simulation, stationary law."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy.special import gammaln, ive

from .errors import InvalidParamsError
from .model import GrowthPath, ModelParams, integrate_rate

# terms this far below the running maximum are dropped from the Poisson series
_SERIES_CUTOFF = 40.0
# above this non-centrality the scaled Bessel form is used instead of the series
_LARGE_LAMBDA = 1e4


@dataclass(frozen=True)
class TransitionLaw:
    """xi_{x+delta} | xi_x  ~  chi'^2_nu(2 c rho xi_x) / (2c)."""

    nu: float
    c: float
    rho: float

    def __post_init__(self):
        if not (self.nu > 0 and self.c > 0 and 0.0 < self.rho < 1.0):
            raise InvalidParamsError(
                f"invalid transition law nu={self.nu}, c={self.c}, rho={self.rho}")

    @classmethod
    def from_params(cls, params: ModelParams):
        nu = 4.0 * params.a * params.beta / params.omega2
        c = 2.0 * params.beta / ((1.0 - params.rho) * params.omega2)
        return cls(nu, c, params.rho)

    def noncentrality(self, xi_prev):
        return 2.0 * self.c * self.rho * np.asarray(xi_prev, dtype=float)

    def mean(self, xi_prev):
        """Conditional mean (nu + lambda) / (2c)."""
        return (self.nu + self.noncentrality(xi_prev)) / (2.0 * self.c)

    def var(self, xi_prev):
        """Conditional variance (2 nu + 4 lambda) / (4 c^2)."""
        return (2.0 * self.nu + 4.0 * self.noncentrality(xi_prev)) / (4.0 * self.c ** 2)


def transition_sample(xi_prev, law: TransitionLaw, rng: np.random.Generator):
    """Exact draw of the next rate via the Poisson mixture of central chi-squares."""
    xi_prev = np.asarray(xi_prev, dtype=float)
    if np.any(xi_prev < 0):
        raise InvalidParamsError("previous rate must be nonnegative")
    k = rng.poisson(0.5 * law.noncentrality(xi_prev))
    # chi2_{nu+2k} / (2c) == Gamma(nu/2 + k, 1) / c
    out = rng.standard_gamma(0.5 * law.nu + k) / law.c
    return float(out) if out.ndim == 0 else out


def _ncx2_logpdf_series(z, nu, lam):
    """log density of chi'^2_nu(lam) at z > 0 by the Poisson-weighted series."""
    half_lam = 0.5 * lam
    # index of the largest term: (k+1)(k+nu/2) = lam*z/4
    q = 0.25 * lam * z
    p = 0.5 * nu + 1.0
    kstar = np.floor(0.5 * (-p + np.sqrt(p * p + 4.0 * (q - 0.5 * nu))))
    kstar = np.maximum(kstar, 0.0)
    width = np.ceil(8.0 * np.sqrt(kstar + 1.0)) + 8.0
    log_z = np.log(z)
    log_hl = np.log(np.where(half_lam > 0, half_lam, 1.0))

    def terms(k):
        m2 = 0.5 * nu + k
        pois = np.where(half_lam[..., None] > 0,
                        -half_lam[..., None] + k * log_hl[..., None] - gammaln(k + 1.0),
                        np.where(k == 0, 0.0, -np.inf))
        chi = ((m2 - 1.0) * log_z[..., None] - 0.5 * z[..., None]
               - m2 * math.log(2.0) - gammaln(m2))
        return pois + chi

    while True:
        span = int(width.max())
        offsets = np.arange(-span, span + 1, dtype=float)
        k = kstar[..., None] + offsets
        valid = (k >= 0) & (np.abs(offsets) <= width[..., None])
        t = np.where(valid, terms(np.maximum(k, 0.0)), -np.inf)
        tmax = t.max(axis=-1)
        # the terms are log-concave in k, so checking the window edges suffices
        lo_edge = np.where(kstar - width >= 0,
                           terms(np.maximum(kstar - width, 0.0)[..., None])[..., 0], -np.inf)
        hi_edge = terms((kstar + width)[..., None])[..., 0]
        short = ((lo_edge > tmax - _SERIES_CUTOFF) | (hi_edge > tmax - _SERIES_CUTOFF))
        if not np.any(short):
            break
        width = np.where(short, 2.0 * width, width)
    keep = t >= (tmax - _SERIES_CUTOFF)[..., None]
    t = np.where(keep, t, -np.inf)
    return tmax + np.log(np.exp(t - tmax[..., None]).sum(axis=-1))


def _ncx2_logpdf_bessel(z, nu, lam):
    s = np.sqrt(lam * z)
    order = 0.5 * nu - 1.0
    return (-math.log(2.0) - 0.5 * (z + lam) + 0.5 * order * np.log(z / lam)
            + np.log(ive(order, s)) + s)


def ncx2_logpdf(z, nu, lam):
    """Log density of the non-central chi-square distribution (vectorized)."""
    z, lam = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(lam, dtype=float))
    out = np.full(z.shape, -np.inf)
    pos = z > 0
    big = pos & (lam > _LARGE_LAMBDA)
    small = pos & ~big
    if np.any(small):
        out[small] = _ncx2_logpdf_series(z[small], nu, lam[small])
    if np.any(big):
        out[big] = _ncx2_logpdf_bessel(z[big], nu, lam[big])
    return out


def transition_log_density(xi_next, xi_prev, law: TransitionLaw):
    """Log density of ``xi_next`` given ``xi_prev``; ``-inf`` for ``xi_next <= 0``."""
    xi_next = np.asarray(xi_next, dtype=float)
    xi_prev = np.asarray(xi_prev, dtype=float)
    z = 2.0 * law.c * xi_next
    out = ncx2_logpdf(z, law.nu, law.noncentrality(xi_prev)) + math.log(2.0 * law.c)
    return float(out) if out.ndim == 0 else out


def transition_cdf(xi_next, xi_prev, law: TransitionLaw):
    from scipy.stats import ncx2
    return ncx2.cdf(2.0 * law.c * np.asarray(xi_next), law.nu, law.noncentrality(xi_prev))


@nb.njit(cache=True)
def _euler_truncated(xi0, a, beta, omega, h, normals, substeps, out):
    # full truncation: drift and diffusion see max(state, 0); reported rate too
    state = xi0
    sqh = math.sqrt(h)
    acc = 0.0
    out[0, 0] = max(xi0, 0.0)
    out[0, 1] = 0.0
    n = out.shape[0] - 1
    for i in range(1, n + 1):
        for j in range(substeps):
            pos = state if state > 0.0 else 0.0
            state = state + beta * (a - pos) * h + omega * math.sqrt(pos) * sqh * normals[(i - 1) * substeps + j]
            acc += (state if state > 0.0 else 0.0) * h
        out[i, 0] = state if state > 0.0 else 0.0
        out[i, 1] = acc


def simulate_path(params: ModelParams, n: int, delta: float, substeps: int = 100,
                  xi0: float = 0.0, rng: np.random.Generator | None = None) -> GrowthPath:
    """Euler-Maruyama on a grid ``substeps`` times finer than ``delta``.

    The phase is accumulated with the right-endpoint rectangle rule on the
    fine grid; the returned path holds rate and phase at ``x_i = i*delta``.
    Parameters violating the Feller condition are accepted here.
    """
    if substeps < 1:
        raise InvalidParamsError("substeps must be >= 1")
    if not (params.a > 0 and params.beta > 0 and params.omega2 >= 0):
        raise InvalidParamsError("simulation needs a > 0, beta > 0, omega2 >= 0")
    rng = np.random.default_rng() if rng is None else rng
    normals = rng.standard_normal(n * substeps)
    out = np.empty((n + 1, 2))
    _euler_truncated(float(xi0), params.a, params.beta, math.sqrt(params.omega2),
                     delta / substeps, normals, substeps, out)
    return GrowthPath(out[:, 0], out[:, 1])


def simulate_exact_path(params: ModelParams, n: int, delta: float, xi0: float | None = None,
                        rng: np.random.Generator | None = None, rule="trapezoid") -> GrowthPath:
    """Rate path drawn step by step from the exact transition law."""
    rng = np.random.default_rng() if rng is None else rng
    law = TransitionLaw.from_params(params.with_delta(delta))
    xi = np.empty(n + 1)
    xi[0] = params.a if xi0 is None else xi0
    half = 0.5 * law.nu
    lam_half = law.c * law.rho
    for i in range(1, n + 1):
        k = rng.poisson(lam_half * xi[i - 1])
        xi[i] = rng.standard_gamma(half + k) / law.c
    return GrowthPath.from_rates(xi, delta, rule)


def stationary_moments(params: ModelParams):
    """(mean, variance, shape, scale) of the stationary Gamma law."""
    if not (params.a > 0 and params.beta > 0 and params.omega2 > 0):
        raise InvalidParamsError("stationary law needs a, beta, omega2 > 0")
    if not params.feller:
        raise InvalidParamsError("Feller condition 2*a*beta >= omega2 fails; no strictly "
                                 "positive stationary regime")
    scale = params.omega2 / (2.0 * params.beta)
    shape = 2.0 * params.beta * params.a / params.omega2
    return params.a, params.a * params.omega2 / (2.0 * params.beta), shape, scale
