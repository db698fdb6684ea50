"""Residual bootstrap, percentile intervals and residual diagnostics."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import CycleWarpError, ConfigError, NumericalError
from .initialize import InitConfig
from .model import PARAM_KEYS, ModelParams, Signal, arc_distance
from .saem import FitResult, SAEMConfig, estimate
from .streams import derive_int, generator, parallel_map, substream

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BootstrapRun:
    M: int
    estimates: list          # ModelParams per successful replicate
    cycles: np.ndarray       # cycle count per successful replicate
    indices: np.ndarray      # replicate index of each successful estimate
    seeds: list              # integer seed per replicate (all M)
    failures: list           # replicate indices whose refit failed
    converged: np.ndarray    # convergence flag per successful replicate

    def __post_init__(self):
        if len(self.estimates) + len(self.failures) != self.M:
            raise ValueError("estimates and failures must account for every replicate")


@dataclass(frozen=True, eq=False)
class Diagnostics:
    residuals: np.ndarray
    qq: np.ndarray           # (n+1) x 2: theoretical, empirical standardized quantiles
    rel_diff: dict           # parameter -> vector over replicates


def replicate_signal(signal: Signal, fitted, residuals, rng):
    """Fitted curve plus residuals drawn with replacement."""
    draw = rng.choice(residuals, size=residuals.size, replace=True)
    return signal.with_y(np.asarray(fitted) + draw)


def residual_bootstrap(signal: Signal, fit: FitResult, M: int, config: SAEMConfig, rng=0,
                       init_config: InitConfig = InitConfig(), warm_start=False, threads=1,
                       max_failure_rate=0.5) -> BootstrapRun:
    """Refit ``M`` replicate signals ``y_hat + r*``.

    Each replicate is re-initialized from its own data unless
    ``warm_start`` is set, in which case it starts from the original
    estimate. Replicate ``k`` draws from substream ``k`` of ``rng``.
    """
    if M < 1:
        raise ConfigError("M must be >= 1")
    residuals = signal.y - fit.fitted
    seeds = [derive_int(rng, k) for k in range(M)]

    def one(k):
        rep = replicate_signal(signal, fit.fitted, residuals, generator(seeds[k], 0))
        try:
            res = estimate(rep, config, init_config, substream(seeds[k], 1), threads=1,
                           init=fit.theta_hat if warm_start else None)
        except CycleWarpError as exc:
            log.warning("bootstrap replicate %d failed: %s", k, exc)
            return k, None
        return k, res

    results = parallel_map(one, range(M), threads)
    ok = [(k, r) for k, r in results if r is not None]
    failures = [k for k, r in results if r is None]
    if len(failures) > max_failure_rate * M:
        raise NumericalError(f"{len(failures)} of {M} bootstrap replicates failed")
    return BootstrapRun(M=M, estimates=[r.theta_hat for _, r in ok],
                        cycles=np.array([r.cycles for _, r in ok]),
                        indices=np.array([k for k, _ in ok], dtype=int), seeds=seeds,
                        failures=failures, converged=np.array([r.converged for _, r in ok]))


def percentile_ci(values, level=0.95):
    """Equal-tailed empirical interval (linear interpolation between order statistics)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ConfigError("no values to summarize")
    if not 0.0 < level < 1.0:
        raise ConfigError("level must lie strictly between 0 and 1")
    tail = 0.5 * (1.0 - level)
    lo, hi = np.quantile(values, [tail, 1.0 - tail])
    return float(lo), float(hi)


def qq_pairs(residuals, scale):
    """Standard-normal quantiles against sorted standardized residuals."""
    r = np.sort(np.asarray(residuals, dtype=float) / scale)
    k = r.size
    probs = (np.arange(1, k + 1) - 0.5) / k
    return np.column_stack([norm.ppf(probs), r])


def relative_differences(theta_hat: ModelParams, estimates):
    """(theta_tilde - theta_hat)/theta_hat per parameter; phases as arc length over pi."""
    out = {}
    for key in PARAM_KEYS:
        ref = getattr(theta_hat, key)
        vals = np.array([getattr(e, key) for e in estimates], dtype=float)
        if key == "b":
            out[key] = arc_distance(vals, ref) / math.pi if vals.size else vals
        else:
            out[key] = (vals - ref) / ref if ref != 0 else vals - ref
    return out


def diagnostics(signal: Signal, fit: FitResult, run: BootstrapRun | None = None) -> Diagnostics:
    res = signal.y - fit.fitted
    qq = qq_pairs(res, math.sqrt(fit.theta_hat.sigma2))
    rel = relative_differences(fit.theta_hat, run.estimates) if run is not None else {}
    if run is not None:
        rel["cycles"] = (run.cycles - fit.cycles) / fit.cycles if fit.cycles else run.cycles
    return Diagnostics(residuals=res, qq=qq, rel_diff=rel)
