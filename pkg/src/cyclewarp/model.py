"""Parameter vector, observation model and complete-data log-likelihood."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DegeneratePathError, InvalidParamsError, NonEquidistantError

TWO_PI = 2.0 * math.pi

QUADRATURE_RULES = ("trapezoid", "rectangle")
PARAM_KEYS = ("A", "B", "b", "a", "beta", "rho", "omega2", "sigma2")


def wrap_phase(b):
    """Map an angle (scalar or array) into [0, 2*pi)."""
    w = np.mod(b, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    w = np.where(w >= TWO_PI, 0.0, w)
    return float(w) if np.ndim(w) == 0 else w


def arc_distance(b1, b2):
    """Shortest distance between two angles on the unit circle, in [0, pi]."""
    d = np.abs(np.mod(np.asarray(b1) - np.asarray(b2), TWO_PI))
    d = np.minimum(d, TWO_PI - d)
    return float(d) if np.ndim(d) == 0 else d


@dataclass(frozen=True)
class ModelParams:
    """Full parameter vector of the time warping model.

    ``rho`` is tied to the sampling step of the signal being fitted
    (``rho = exp(-delta * beta)``); build instances with :meth:`create`
    when starting from ``beta`` and a step size.
    """

    A: float
    B: float
    b: float
    a: float
    beta: float
    rho: float
    omega2: float
    sigma2: float

    def __post_init__(self):
        object.__setattr__(self, "b", wrap_phase(float(self.b)))
        for name in ("A", "B", "a", "beta", "rho", "omega2", "sigma2"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def create(cls, A, B, b, a, beta, omega2, sigma2, delta=1.0):
        return cls(A=A, B=B, b=b, a=a, beta=beta, rho=math.exp(-delta * beta),
                   omega2=omega2, sigma2=sigma2)

    @property
    def gamma2(self):
        return self.a * self.omega2 / (2.0 * self.beta)

    @property
    def feller(self):
        return 2.0 * self.a * self.beta >= self.omega2

    def replace(self, **changes):
        return replace(self, **changes)

    def with_delta(self, delta):
        """Copy with ``rho`` recomputed for step ``delta``."""
        return replace(self, rho=math.exp(-delta * self.beta))

    def violations(self, delta=None, stationary=True):
        out = []
        if not self.A > 0:
            out.append("A must be positive")
        if not self.B >= 0:
            out.append("B must be nonnegative")
        if not self.A > self.B:
            out.append("A must exceed B")
        if not self.a > 0:
            out.append("a must be positive")
        if not self.beta > 0:
            out.append("beta must be positive")
        if not self.sigma2 > 0:
            out.append("sigma2 must be positive")
        if not self.omega2 > 0:
            out.append("omega2 must be positive")
        if not 0.0 < self.rho < 1.0:
            out.append("rho must lie in (0, 1)")
        if delta is not None and not math.isclose(self.rho, math.exp(-delta * self.beta),
                                                  rel_tol=1e-12):
            out.append("rho is inconsistent with exp(-delta*beta)")
        if stationary and not self.feller:
            out.append(f"Feller condition fails: 2*a*beta={2 * self.a * self.beta:.6g} "
                       f"< omega2={self.omega2:.6g}")
        return out

    def validate(self, delta=None, stationary=True):
        problems = self.violations(delta, stationary)
        if problems:
            raise InvalidParamsError("; ".join(problems))
        return self

    def as_dict(self):
        d = {k: getattr(self, k) for k in PARAM_KEYS}
        d["gamma2"] = self.gamma2
        return d

    @classmethod
    def from_dict(cls, d, delta=None):
        if "rho" not in d or d["rho"] is None:
            if delta is None:
                raise InvalidParamsError("rho missing and no step size given")
            return cls.create(d["A"], d["B"], d["b"], d["a"], d["beta"], d["omega2"],
                              d["sigma2"], delta)
        return cls(A=d["A"], B=d["B"], b=d["b"], a=d["a"], beta=d["beta"], rho=d["rho"],
                   omega2=d["omega2"], sigma2=d["sigma2"])


@dataclass(frozen=True)
class Preprocessing:
    ybar: Optional[float] = None
    envelope: Optional[np.ndarray] = None
    window: Optional[int] = None

    @property
    def centered(self):
        return self.ybar is not None

    @property
    def normalized(self):
        return self.envelope is not None


@dataclass(frozen=True, eq=False)
class Signal:
    """Equidistant samples ``(x_i, y_i)``, ``i = 0..n``."""

    x: np.ndarray
    y: np.ndarray
    delta: float
    preproc: Preprocessing = field(default_factory=Preprocessing)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
            raise InvalidParamsError("x and y must be 1-d arrays of equal length")
        if x.size < 2:
            raise InvalidParamsError("a signal needs at least two samples")
        if not self.delta > 0:
            raise InvalidParamsError("delta must be positive")
        steps = np.diff(x)
        bad = np.flatnonzero(np.abs(steps - self.delta) > 1e-9 * self.delta)
        if bad.size:
            raise NonEquidistantError(int(bad[0]) + 1)
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", float(self.delta))

    @classmethod
    def from_arrays(cls, x, y):
        x = np.asarray(x, dtype=float)
        if x.size < 2:
            raise InvalidParamsError("a signal needs at least two samples")
        delta = (x[-1] - x[0]) / (x.size - 1)
        if not delta > 0:
            raise NonEquidistantError(1, "x must be strictly increasing")
        return cls(x, y, delta)

    @classmethod
    def regular(cls, y, delta=1.0, x0=0.0):
        y = np.asarray(y, dtype=float)
        return cls(x0 + delta * np.arange(y.size), y, delta)

    @property
    def n(self):
        """Number of steps (the signal has ``n + 1`` samples)."""
        return self.x.size - 1

    @property
    def length(self):
        return self.n * self.delta

    def with_y(self, y, preproc=None):
        return Signal(self.x, y, self.delta, self.preproc if preproc is None else preproc)


def integrate_rate(xi, delta, rule="trapezoid", g0=0.0):
    """Cumulative phase from instantaneous rates on the observation grid.

    ``trapezoid``: g_i = g_{i-1} + delta*(xi_{i-1}+xi_i)/2.
    ``rectangle``: g_i = g_{i-1} + delta*xi_i (right endpoint).
    """
    xi = np.asarray(xi, dtype=float)
    if rule == "trapezoid":
        inc = 0.5 * delta * (xi[:-1] + xi[1:])
    elif rule == "rectangle":
        inc = delta * xi[1:]
    else:
        raise InvalidParamsError(f"unknown quadrature rule {rule!r}")
    g = np.empty_like(xi)
    g[0] = g0
    np.cumsum(inc, out=g[1:])
    g[1:] += g0
    return g


@dataclass(frozen=True, eq=False)
class GrowthPath:
    xi: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float)
        g = np.array(self.g, dtype=float)
        if xi.shape != g.shape or xi.ndim != 1:
            raise InvalidParamsError("xi and g must be 1-d arrays of equal length")
        xi.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "g", g)

    @classmethod
    def from_rates(cls, xi, delta, rule="trapezoid", g0=0.0):
        return cls(xi, integrate_rate(xi, delta, rule, g0))

    def __len__(self):
        return self.xi.size

    @property
    def increasing(self):
        return bool(np.all(np.diff(self.g) > 0))


def signal_mean(g, params):
    """Noise-free signal ``A sin(g+b) - B cos(2g+2b)`` at cumulative phase ``g``."""
    u = np.asarray(g) + params.b
    return params.A * np.sin(u) - params.B * np.cos(2.0 * u)


def signal_extremes(A, B):
    """Analytic (max, min) of the mean signal.

    The interior minimum at sin u = -A/(4B) exists only for A <= 4B;
    otherwise the minimum sits at sin u = -1.
    """
    if A <= 4.0 * B:
        return A + B, -B - A * A / (8.0 * B)
    return A + B, B - A


def observation_loglik(y, fitted, sigma2):
    r = np.asarray(y) - np.asarray(fitted)
    return -0.5 * float(r @ r) / sigma2 - 0.5 * r.size * math.log(sigma2)


def complete_log_likelihood(signal, path, params):
    """Complete-data log-likelihood of ``(y, xi)``.

    The density of the deterministic starting value ``xi_0`` contributes a
    constant and is omitted.
    """
    from .cir import TransitionLaw, transition_log_density

    if len(path) != signal.x.size:
        raise InvalidParamsError("path and signal lengths differ")
    obs = observation_loglik(signal.y, signal_mean(path.g, params), params.sigma2)
    law = TransitionLaw.from_params(params)
    trans = transition_log_density(path.xi[1:], path.xi[:-1], law)
    if not np.all(np.isfinite(trans)):
        bad = int(np.flatnonzero(~np.isfinite(trans))[0]) + 1
        raise DegeneratePathError(f"transition density vanishes at step {bad}")
    return obs + float(trans.sum())


def cycle_count(path):
    return float(path.g[-1] / TWO_PI)
