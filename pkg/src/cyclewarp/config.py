"""Run configuration: one JSON document with a section per stage.

Every field has a default, so ``{}`` is a valid configuration. Command-line
flags override values read from the file.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigError
from .formats import read_json
from .initialize import InitConfig
from .model import ModelParams
from .saem import SAEMConfig
from .simulate import ParameterBoxes

PREPROCESS_MODES = ("normalize", "center", "none")


@dataclass(frozen=True)
class PreprocessConfig:
    mode: str = "normalize"
    window_fraction: float = 0.10

    def validate(self):
        if self.mode not in PREPROCESS_MODES:
            raise ConfigError(f"preprocess.mode must be one of {PREPROCESS_MODES}")
        if not 0.0 < self.window_fraction <= 0.5:
            raise ConfigError("preprocess.window_fraction must lie in (0, 0.5]")
        return self


@dataclass(frozen=True)
class BootstrapConfig:
    M: int = 100
    warm_start: bool = False
    max_failure_rate: float = 0.5

    def validate(self):
        if self.M < 1:
            raise ConfigError("bootstrap.M must be >= 1")
        if not 0.0 <= self.max_failure_rate <= 1.0:
            raise ConfigError("bootstrap.max_failure_rate must lie in [0, 1]")
        return self


@dataclass(frozen=True)
class AggregateConfig:
    death_year: float = 2010.0
    level: float = 0.95
    n_combinations: int = 100_000
    with_ci: bool = True

    def validate(self):
        if not 0.0 < self.level < 1.0:
            raise ConfigError("aggregate.level must lie in (0, 1)")
        if self.n_combinations < 1:
            raise ConfigError("aggregate.n_combinations must be >= 1")
        return self


@dataclass(frozen=True)
class SimulateConfig:
    n: int = 400
    delta: float = 1.0
    count: int = 1
    substeps: int = 100
    params: dict | None = None
    boxes: ParameterBoxes = field(default_factory=ParameterBoxes)

    def validate(self):
        if self.n < 2:
            raise ConfigError("simulate.n must be >= 2")
        if not self.delta > 0:
            raise ConfigError("simulate.delta must be positive")
        if self.count < 1 or self.substeps < 1:
            raise ConfigError("simulate.count and simulate.substeps must be >= 1")
        if self.params is not None:
            missing = {"A", "B", "b", "a", "beta", "omega2", "sigma2"} - set(self.params)
            if missing:
                raise ConfigError(f"simulate.params lacks {sorted(missing)}")
            # simulation accepts parameters outside the Feller region
            ModelParams.from_dict(self.params, self.delta).validate(self.delta, stationary=False)
        self.boxes.validate()
        return self

    def explicit_params(self):
        return None if self.params is None else ModelParams.from_dict(self.params, self.delta)


@dataclass(frozen=True)
class BenchConfig:
    count: int = 40
    n: int = 400

    def validate(self):
        if self.count < 1 or self.n < 2:
            raise ConfigError("bench.count >= 1 and bench.n >= 2 required")
        return self


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    threads: int | None = None
    input: str | None = None
    out: str = "out"
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    init: InitConfig = field(default_factory=InitConfig)
    saem: SAEMConfig = field(default_factory=SAEMConfig)
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    aggregate: AggregateConfig = field(default_factory=AggregateConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)

    def validate(self):
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not self.out:
            raise ConfigError("output directory must be nonempty")
        for section in (self.preprocess, self.init, self.saem, self.bootstrap, self.aggregate,
                        self.simulate, self.bench):
            section.validate()
        return self

    def to_dict(self):
        return {
            "seed": self.seed, "threads": self.threads, "input": self.input, "out": self.out,
            "preprocess": dataclasses.asdict(self.preprocess),
            "init": self.init.to_dict(),
            "saem": self.saem.to_dict(),
            "bootstrap": dataclasses.asdict(self.bootstrap),
            "aggregate": dataclasses.asdict(self.aggregate),
            "simulate": {**{k: getattr(self.simulate, k)
                            for k in ("n", "delta", "count", "substeps", "params")},
                         "boxes": self.simulate.boxes.to_dict()},
            "bench": dataclasses.asdict(self.bench),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        d = dict(d)
        sections = {"preprocess": PreprocessConfig, "init": InitConfig, "saem": SAEMConfig,
                    "bootstrap": BootstrapConfig, "aggregate": AggregateConfig,
                    "simulate": SimulateConfig, "bench": BenchConfig}
        kwargs = {}
        try:
            for name, typ in sections.items():
                if name not in d:
                    continue
                sec = d.pop(name)
                if not isinstance(sec, dict):
                    raise ConfigError(f"section {name!r} must be an object")
                _check_keys(name, sec, typ)
                if name == "simulate" and "boxes" in sec:
                    sec = dict(sec)
                    _check_keys("simulate.boxes", sec["boxes"], ParameterBoxes)
                    sec["boxes"] = ParameterBoxes.from_dict(sec["boxes"])
                kwargs[name] = typ.from_dict(sec) if hasattr(typ, "from_dict") else typ(**sec)
            _check_keys("top level", d, cls)
            kwargs.update(d)
            return cls(**kwargs).validate()
        except (TypeError, ValueError, KeyError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid configuration: {exc}") from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(read_json(path))

    def override(self, **flags) -> "RunConfig":
        """Replace top-level fields with the flags that are not ``None``."""
        changes = {k: v for k, v in flags.items() if v is not None}
        return dataclasses.replace(self, **changes).validate() if changes else self


def _check_keys(where, d, typ):
    allowed = {f.name for f in dataclasses.fields(typ)}
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
