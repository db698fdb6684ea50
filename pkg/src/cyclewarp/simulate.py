"""Synthetic signals for the simulation study and for tests."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cir import simulate_path
from .errors import ConfigError
from .initialize import default_cycle_bounds
from .model import TWO_PI, GrowthPath, ModelParams, Signal, cycle_count, signal_mean
from .streams import generator

_MAX_DRAWS = 100_000


@dataclass(frozen=True)
class ParameterBoxes:
    """Uniform supports for random parameter draws; ``a`` comes from cycle bounds."""

    beta: tuple = (0.01, 3.0)
    omega: tuple = (0.01, 0.3)
    sigma: tuple = (0.2, 0.6)
    A: tuple = (0.5, 1.0)
    b: tuple = (0.0, TWO_PI)
    cycles: tuple | None = None

    def a_range(self, n, delta=1.0):
        c_min, c_max = self.cycles if self.cycles is not None else default_cycle_bounds(n)
        return TWO_PI * c_min / (n * delta), TWO_PI * c_max / (n * delta)

    def validate(self):
        for name in ("beta", "omega", "sigma", "A", "b"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigError(f"empty box for {name}: ({lo}, {hi})")
        if self.cycles is not None and not 0 < self.cycles[0] <= self.cycles[1]:
            raise ConfigError("cycle bounds must satisfy 0 < c_min <= c_max")
        return self

    def to_dict(self):
        return {k: list(getattr(self, k)) if getattr(self, k) is not None else None
                for k in ("beta", "omega", "sigma", "A", "b", "cycles")}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: tuple(v) if v is not None else None for k, v in d.items()})


def draw_params(n, rng, boxes: ParameterBoxes = ParameterBoxes(), delta=1.0) -> ModelParams:
    """Random parameters; the rate triple is redrawn until 2*a*beta > omega^2."""
    boxes.validate()
    a_lo, a_hi = boxes.a_range(n, delta)
    for _ in range(_MAX_DRAWS):
        beta = rng.uniform(*boxes.beta)
        a = rng.uniform(a_lo, a_hi)
        omega = rng.uniform(*boxes.omega)
        if 2.0 * a * beta > omega * omega:
            break
    else:
        raise ConfigError("parameter boxes admit no Feller-satisfying (a, beta, omega)")
    sigma = rng.uniform(*boxes.sigma)
    b = rng.uniform(*boxes.b)
    A = rng.uniform(*boxes.A)
    return ModelParams.create(A, 1.0 - A, b, a, beta, omega * omega, sigma * sigma, delta)


@dataclass(frozen=True, eq=False)
class Simulation:
    params: ModelParams
    signal: Signal
    path: GrowthPath
    noise_free: np.ndarray

    @property
    def cycles(self):
        return cycle_count(self.path)


def simulate_signal(params: ModelParams, n: int, delta: float = 1.0, rng=None,
                    substeps: int = 100, xi0: float = 0.0) -> Simulation:
    """Fine-grid Euler path for the rate, then the noisy observation curve."""
    rng = rng if isinstance(rng, np.random.Generator) else generator(0 if rng is None else rng)
    params = params.with_delta(delta)
    path = simulate_path(params, n, delta, substeps, xi0, rng)
    mean = signal_mean(path.g, params)
    y = mean + math.sqrt(params.sigma2) * rng.standard_normal(n + 1)
    return Simulation(params, Signal.regular(y, delta), path, mean)


def simulation_study(count: int, n: int, seed, boxes: ParameterBoxes = ParameterBoxes(),
                     delta: float = 1.0):
    """``count`` independent simulations; unit ``k`` uses substream ``k`` of ``seed``."""
    out = []
    for k in range(count):
        rng = generator(seed, k)
        params = draw_params(n, rng, boxes, delta)
        out.append(simulate_signal(params, n, delta, rng))
    return out
