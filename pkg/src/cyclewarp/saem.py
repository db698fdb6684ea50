"""Stochastic approximation EM with martingale estimating functions."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DegeneratePathError, FitFailure, NumericalError
from .initialize import InitConfig, initialize
from .model import (PARAM_KEYS, GrowthPath, ModelParams, Signal, arc_distance,
                    cycle_count, signal_mean)
from .smc import GRID_SCORES, grid_half_width, smc_plus
from .streams import substream

log = logging.getLogger(__name__)

PARAM_NAMES = PARAM_KEYS
# a collapse of the whole phase grid this many iterations in a row aborts the fit
_MAX_COLLAPSES = 3


@dataclass(frozen=True)
class SAEMConfig:
    m0: int = 50
    max_iter: int = 400
    stop_threshold: float = 1e-4
    stop_consecutive: int = 1
    n_particles: int = 1500
    grid_G: int = 20
    a_clamp: float = 2.0
    rule: str = "trapezoid"
    systematic: bool = False
    grid_score: str = "evidence"

    def validate(self):
        if self.m0 < 1:
            raise ConfigError("m0 must be >= 1")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if not self.stop_threshold > 0:
            raise ConfigError("stop_threshold must be positive")
        if self.stop_consecutive < 1:
            raise ConfigError("stop_consecutive must be >= 1")
        if self.n_particles < 2 or self.grid_G < 2:
            raise ConfigError("need n_particles >= 2 and grid_G >= 2")
        if not self.a_clamp > 1:
            raise ConfigError("a_clamp must exceed 1")
        if self.grid_score not in GRID_SCORES:
            raise ConfigError(f"grid_score must be one of {GRID_SCORES}")
        if self.rule not in ("trapezoid", "rectangle"):
            raise ConfigError(f"unknown quadrature rule {self.rule!r}")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class Statistics(NamedTuple):
    S1: float
    S2: float
    S3: float
    S4: float


@dataclass(frozen=True, eq=False)
class FitResult:
    theta_hat: ModelParams
    path: GrowthPath
    fitted: np.ndarray
    trace: list
    cycles: float
    converged: bool
    iterations: int
    theta0: ModelParams
    diagnostics: dict = field(default_factory=dict)

    @property
    def a0(self):
        return self.theta0.a

    def residuals(self, signal):
        return signal.y - self.fitted


def statistics(path: GrowthPath, signal: Signal, theta_prev: ModelParams) -> Statistics:
    """Martingale estimating-function statistics plus the residual mean square.

    ``theta_prev`` provides the amplitudes and phase used for the residuals;
    its ``beta`` is only used if the path gives no valid autocorrelation.
    Transition pairs starting from a zero rate are dropped.
    """
    xi = np.asarray(path.xi, dtype=float)
    prev, nxt = xi[:-1], xi[1:]
    keep = prev > 0
    prev, nxt = prev[keep], nxt[keep]
    n = prev.size
    if n < 2:
        raise DegeneratePathError("fewer than two usable transitions")
    inv = 1.0 / prev
    m_ratio = np.mean(nxt * inv)
    m_next = np.mean(nxt)
    m_prev = np.mean(prev)
    m_inv = np.mean(inv)
    den = 1.0 - m_prev * m_inv
    if abs(den) < 1e-12:
        raise DegeneratePathError("rate path has no variation; autocorrelation undefined")
    S1 = (m_ratio - m_next * m_inv) / den
    if S1 == 1.0:
        raise DegeneratePathError("autocorrelation statistic equals one")
    S2 = m_next + S1 / (n * (1.0 - S1)) * (xi[-1] - xi[0])
    num3 = np.sum(inv * (nxt - prev * S1 - S2 * (1.0 - S1)) ** 2)
    den3 = np.sum(inv * ((0.5 * S2 - prev) * S1 ** 2 - (S2 - prev) * S1 + 0.5 * S2))
    # the ratio estimates omega2/beta; rescale by the implied beta
    beta_hat = -math.log(S1) / signal.delta if 0.0 < S1 < 1.0 else theta_prev.beta
    S3 = num3 / den3 * beta_hat if den3 > 0 else math.nan
    r = signal.y - signal_mean(path.g, theta_prev)
    S4 = float(r @ r) / signal.n
    return Statistics(float(S1), float(S2), float(S3), S4)


def step_size(m, m0):
    """Gain 1 during the first ``m0`` iterations, then (m - m0)^-0.8."""
    if m < 1:
        raise ConfigError("iterations are counted from 1")
    return 1.0 if m <= m0 else float((m - m0) ** -0.8)


def sa_update(s_prev, S_new, m, m0):
    alpha = step_size(m, m0)
    if s_prev is None or alpha == 1.0:
        return Statistics(*S_new)
    out = []
    for old, new in zip(s_prev, S_new):
        if not math.isfinite(new):
            out.append(old)
        elif not math.isfinite(old):
            out.append(new)
        else:
            out.append(old + alpha * (new - old))
    return Statistics(*out)


def update_A(signal: Signal, path: GrowthPath, b: float, previous: float | None = None):
    """Least-squares amplitude under A + B = 1, clamped to [0.5, 1]."""
    u = path.g[1:] + b
    v = -np.cos(2.0 * u)
    w = np.sin(u) - v
    ww = float(w @ w)
    if ww == 0.0:
        if previous is None:
            raise DegeneratePathError("amplitude regression has no signal")
        return previous
    est = float(w @ (signal.y[1:] - v)) / ww
    return min(1.0, max(0.5, est))


def update_theta(s: Statistics, theta_prev: ModelParams, a0: float, path: GrowthPath,
                 signal: Signal, a_clamp: float = 2.0, warnings=None):
    """M-step: map smoothed statistics back to parameters.

    Out-of-range statistics leave the corresponding parameter unchanged.
    """
    warn = warnings.append if warnings is not None else (lambda msg: None)
    rho, beta = theta_prev.rho, theta_prev.beta
    if 0.0 < s.S1 < 1.0:
        rho = s.S1
        beta = -math.log(rho) / signal.delta
    else:
        warn(f"s1={s.S1:.6g} outside (0,1); rho and beta kept")
    a = theta_prev.a
    if a0 / a_clamp < s.S2 < a_clamp * a0:
        a = s.S2
    omega2 = theta_prev.omega2
    if math.isfinite(s.S3) and 0.0 < s.S3 < 2.0 * a * beta:
        omega2 = s.S3
    else:
        warn(f"s3={s.S3:.6g} outside (0, 2*a*beta); omega2 kept")
    if not omega2 < 2.0 * a * beta:
        omega2 = 2.0 * a * beta * (1.0 - 1e-6)
        warn("omega2 clipped to the Feller boundary")
    sigma2 = s.S4 if s.S4 > 0 else theta_prev.sigma2
    A = update_A(signal, path, theta_prev.b, theta_prev.A)
    return ModelParams(A=A, B=1.0 - A, b=theta_prev.b, a=a, beta=beta, rho=rho,
                       omega2=omega2, sigma2=sigma2)


def relative_change(old: ModelParams, new: ModelParams):
    """Largest relative parameter change; phases use arc length over pi."""
    out = {}
    for name in PARAM_NAMES:
        o, n_ = getattr(old, name), getattr(new, name)
        if name == "b":
            out[name] = arc_distance(o, n_) / math.pi
        else:
            out[name] = abs(n_ - o) / abs(o) if o != 0 else abs(n_ - o)
    return out


def _trace_row(m, alpha, w, theta, S, s, ll, change, failures, warnings, cycles):
    row = {"iteration": m, "alpha": alpha, "half_width": w, "cycles": cycles}
    row.update({k: getattr(theta, k) for k in PARAM_NAMES})
    row.update({f"S{i + 1}": v for i, v in enumerate(S)})
    row.update({f"s{i + 1}": v for i, v in enumerate(s)})
    row["loglik"] = ll
    row["max_rel_change"] = max(change.values()) if change else math.nan
    row["failed_candidates"] = failures
    row["warnings"] = "; ".join(warnings)
    return row


def fit(signal: Signal, config: SAEMConfig, init: ModelParams, rng=0, threads=1,
        callback=None) -> FitResult:
    """Run the SAEM iterations from ``init`` until the parameters settle.

    Each iteration: phase-grid particle filter for (b, xi), statistics,
    stochastic approximation, parameter update. Stops when the largest
    relative change stays below ``stop_threshold`` for ``stop_consecutive``
    iterations, or after ``max_iter`` iterations.
    """
    config.validate()
    theta = init.with_delta(signal.delta)
    a0 = theta.a
    s = None
    trace = []
    below = 0
    collapses = 0
    path = None
    converged = False
    m = 0
    for m in range(1, config.max_iter + 1):
        warnings = []
        alpha = step_size(m, config.m0)
        try:
            grid = smc_plus(signal, theta, m, config.m0, config.grid_G, config.n_particles,
                            substream(rng, m), config.rule, config.systematic, threads,
                            config.grid_score)
        except NumericalError as exc:
            collapses += 1
            log.warning("iteration %d: %s", m, exc)
            if collapses >= _MAX_COLLAPSES:
                raise FitFailure(f"particle filter collapsed on the whole grid "
                                 f"{collapses} iterations in a row", trace) from exc
            continue
        collapses = 0
        path = grid.path
        with_b = theta.replace(b=grid.b_star)
        try:
            S = statistics(path, signal, with_b)
        except DegeneratePathError as exc:
            warnings.append(str(exc))
            S = Statistics(math.nan, math.nan, math.nan, math.nan)
        s = sa_update(s, S, m, config.m0)
        new = update_theta(s, with_b, a0, path, signal, config.a_clamp, warnings)
        change = relative_change(theta, new)
        trace.append(_trace_row(m, alpha, grid.half_width, new, S, s,
                                float(grid.loglik_per_candidate.max()), change,
                                len(grid.failures), warnings, cycle_count(path)))
        theta = new
        if callback is not None:
            callback(m, theta, path)
        below = below + 1 if max(change.values()) < config.stop_threshold else 0
        if below >= config.stop_consecutive:
            converged = True
            break
    if path is None:
        raise FitFailure("no iteration produced a latent path", trace)
    fitted = signal_mean(path.g, theta)
    diag = {"A_over_B": theta.A / theta.B if theta.B > 0 else math.inf,
            "feller": theta.feller}
    return FitResult(theta_hat=theta, path=path, fitted=fitted, trace=trace,
                     cycles=cycle_count(path), converged=converged, iterations=len(trace),
                     theta0=init, diagnostics=diag)


def estimate(signal: Signal, config: SAEMConfig = SAEMConfig(),
             init_config: InitConfig = InitConfig(), rng=0, threads=1,
             init: ModelParams | None = None) -> FitResult:
    """Initialization followed by :func:`fit`; ``init`` skips the heuristic start."""
    init_config = init_config if init_config.n_particles else InitConfig()
    theta0 = init if init is not None else initialize(signal, init_config, substream(rng, 0),
                                                      config.rule)
    return fit(signal, config, theta0, substream(rng, 1), threads)
