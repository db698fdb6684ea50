"""Heuristic starting values for the SAEM iterations."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, InvalidParamsError
from .model import TWO_PI, ModelParams, Signal
from .preprocess import loess_smooth
from .smc import run_filter
from .streams import generator, substream

_MAX_REJECTIONS = 100_000
STRATEGIES = ("evidence", "extremes")


def default_cycle_bounds(n):
    """Prior cycle range used by the simulation study: (2, max(6, 5n/100))."""
    return 2.0, max(6.0, n / 100.0 * 5.0)


@dataclass(frozen=True)
class InitConfig:
    c_min: float | None = None
    c_max: float | None = None
    span: float = 0.02
    n_particles: int = 1500
    beta_range: tuple = (0.01, 0.5)
    omega2_range: tuple = (0.01, 0.3)
    strategy: str = "evidence"
    amplitude_grid: int = 5

    def bounds(self, n):
        lo, hi = default_cycle_bounds(n)
        return (lo if self.c_min is None else self.c_min,
                hi if self.c_max is None else self.c_max)

    def validate(self, n=None):
        if n is not None:
            c_min, c_max = self.bounds(n)
            if not (c_min > 0 and c_min < c_max):
                raise ConfigError(f"need 0 < c_min < c_max, got {c_min}, {c_max}")
        for name in ("beta_range", "omega2_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo < hi:
                raise ConfigError(f"{name} must be an increasing positive pair")
        if not 0 < self.span <= 1:
            raise ConfigError("span must lie in (0, 1]")
        if self.n_particles < 2:
            raise ConfigError("n_particles must be >= 2")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if self.amplitude_grid < 0:
            raise ConfigError("amplitude_grid must be >= 0")
        return self

    def to_dict(self):
        d = asdict(self)
        d["beta_range"] = list(self.beta_range)
        d["omega2_range"] = list(self.omega2_range)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("beta_range", "omega2_range"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def amplitude_candidates(y_max, y_min):
    """Candidate (A, B) pairs from the extremes of the smoothed signal.

    Inverts max f = A + B and min f = -B - A^2/(8B); both roots are kept
    when A > B, and (y_max, 0) is always present.
    """
    p = y_max - 4.0 * y_min
    disc = p * p - 9.0 * y_max * y_max
    out = []
    if disc >= 0:
        r = math.sqrt(disc)
        for B in ((p + r) / 9.0, (p - r) / 9.0):
            A = y_max - B
            if A > B:
                out.append((A, B))
    out.append((y_max, 0.0))
    return out


def init_amplitudes(smoothed, rng):
    """Draw (A0, B0) uniformly from the candidate set; the phase starts at pi."""
    smoothed = np.asarray(smoothed, dtype=float)
    cands = amplitude_candidates(float(smoothed.max()), float(smoothed.min()))
    A, B = cands[int(rng.integers(len(cands)))]
    return A, B, math.pi


def init_sigma2(signal, smoothed):
    y = signal.y if isinstance(signal, Signal) else np.asarray(signal, dtype=float)
    r = y - np.asarray(smoothed, dtype=float)
    return float(np.mean(r * r))


def sample_process_params(n_p, a_range, beta_range, omega2_range, rng):
    """Uniform draws from the boxes, kept only when 2*a*beta > omega2."""
    keep = []
    total = 0
    misses = 0
    while total < n_p:
        m = max(2 * (n_p - total), 64)
        a = rng.uniform(*a_range, m)
        beta = rng.uniform(*beta_range, m)
        om2 = rng.uniform(*omega2_range, m)
        ok = 2.0 * a * beta > om2
        if not ok.any():
            misses += m
            if misses >= _MAX_REJECTIONS:
                raise ConfigError(
                    f"{misses} consecutive draws violated 2*a*beta > omega2; the "
                    f"boxes a={a_range}, beta={beta_range}, omega2={omega2_range} are infeasible")
            continue
        misses = 0
        sel = np.column_stack([a[ok], beta[ok], om2[ok]])
        keep.append(sel)
        total += sel.shape[0]
    return np.vstack(keep)[:n_p]


def _a_range(signal, config):
    c_min, c_max = config.bounds(signal.n)
    return TWO_PI * c_min / signal.length, TWO_PI * c_max / signal.length


def _triple_filter(signal, A, B, b, sigma2, triples, rng, rule):
    a, beta, om2 = triples.T
    rho = np.exp(-signal.delta * beta)
    nu = 4.0 * a * beta / om2
    c = 2.0 * beta / ((1.0 - rho) * om2)
    return run_filter(signal, A, B, b, sigma2, a, nu, c, rho, rng, rule,
                      keep_trajectories=False)


def init_process_params(signal: Signal, partial: ModelParams, config: InitConfig, rng,
                        rule="trapezoid"):
    """Pick (a0, beta0, omega2_0) by one particle-filter pass with per-particle parameters.

    ``partial`` supplies A, B, b and sigma2; its process fields are ignored.
    Each particle keeps the triple it was born with through resampling; the
    returned triple belongs to the particle drawn from the final weights.
    """
    triples = sample_process_params(config.n_particles, _a_range(signal, config),
                                    config.beta_range, config.omega2_range, generator(rng, 0))
    _, who = _triple_filter(signal, partial.A, partial.B, partial.b, partial.sigma2, triples,
                            substream(rng, 1), rule)
    return tuple(float(v) for v in triples[who])


def amplitude_shortlist(smoothed, grid):
    """The candidate set plus ``grid`` shapes ``(y_max A, y_max (1 - A))``, A in [0.55, 1]."""
    smoothed = np.asarray(smoothed, dtype=float)
    y_max = float(smoothed.max())
    out = amplitude_candidates(y_max, float(smoothed.min()))
    if grid:
        for A in np.linspace(0.55, 1.0, grid):
            pair = (y_max * float(A), y_max * (1.0 - float(A)))
            if pair not in out:
                out.append(pair)
    return out


@dataclass(frozen=True)
class ShapeScore:
    A: float
    B: float
    log_evidence: float
    triple: tuple
    path_rate: float


def score_shapes(signal, shapes, sigma2, config, rng, rule="trapezoid"):
    """Run the per-particle-parameter filter once per (A, B) shape with b = pi.

    All shapes share the parameter draws and the filter seed, so the
    evidence differences reflect the shapes rather than Monte Carlo noise.
    """
    triples = sample_process_params(config.n_particles, _a_range(signal, config),
                                    config.beta_range, config.omega2_range, generator(rng, 0))
    out = []
    for A, B in shapes:
        ens, who = _triple_filter(signal, A, B, math.pi, sigma2, triples, substream(rng, 1), rule)
        rate = float(ens.g[0, -1]) / signal.length
        out.append(ShapeScore(A, B, ens.log_evidence, tuple(float(v) for v in triples[who]),
                              rate))
    return out


def initialize(signal: Signal, config: InitConfig = InitConfig(), rng=0, rule="trapezoid"):
    """Full starting vector theta^0 from a (normalized) signal.

    With ``strategy="extremes"`` the amplitudes are a uniform draw from the
    candidate set and the rate parameters are the selected particle's
    triple. The default ``"evidence"`` scores every shortlisted shape by the
    filter's marginal likelihood, keeps the best, and takes ``a0`` from the
    mean rate of the traced path.
    """
    config.validate(signal.n)
    n_obs = signal.y.size
    span = config.span
    if span * n_obs < 4:
        # short signals: widen the smoother to the smallest usable window
        span = min(1.0, 4.5 / n_obs)
    smoothed = loess_smooth(signal, span)
    sigma2 = init_sigma2(signal, smoothed)
    if not sigma2 > 0:
        # a perfectly smooth signal would give sigma2 = 0 and a degenerate filter
        sigma2 = 1e-6 * max(float(np.var(signal.y)), 1e-12)
    if config.strategy == "extremes":
        A, B, b = init_amplitudes(smoothed, generator(rng, 0))
        placeholder = ModelParams.create(A, B, b, 1.0, 1.0, 0.5, sigma2, signal.delta)
        a, beta, om2 = init_process_params(signal, placeholder, config, substream(rng, 1), rule)
    else:
        scores = score_shapes(signal, amplitude_shortlist(smoothed, config.amplitude_grid),
                              sigma2, config, substream(rng, 1), rule)
        best = max(scores, key=lambda sc: sc.log_evidence)
        A, B, b = best.A, best.B, math.pi
        _, beta, om2 = best.triple
        # the traced path's mean rate, not the lineage's parameter, sets the cycle scale
        lo, hi = _a_range(signal, config)
        a = float(np.clip(best.path_rate, lo * (1 + 1e-9), hi * (1 - 1e-9)))
        if not om2 < 2.0 * a * beta:
            om2 = 2.0 * a * beta * (1.0 - 1e-6)
    theta = ModelParams.create(A, B, b, a, beta, om2, sigma2, signal.delta)
    if theta.violations(signal.delta, stationary=True):
        raise InvalidParamsError("initialization produced invalid parameters: "
                                 + "; ".join(theta.violations(signal.delta)))
    return theta
