"""Counting growth cycles in quasi-periodic signals.

The signal is a two-harmonic curve of a hidden, randomly warped phase whose
rate follows a square-root diffusion. Parameters, phase offset and the
warping path are estimated jointly by stochastic approximation EM with a
particle filter; a residual bootstrap gives interval estimates, and fitted
segments can be glued into one dated timeline.
"""
__version__ = "0.1.0"

from .errors import (ConfigError, CycleWarpError, DegeneratePathError, FitFailure,  # noqa: E402
                     InvalidParamsError, NonEquidistantError, NumericalError,
                     WeightCollapseError)
from .model import GrowthPath, ModelParams, Signal, complete_log_likelihood, cycle_count  # noqa: E402
from .saem import FitResult, SAEMConfig, estimate, fit  # noqa: E402
from .initialize import InitConfig, initialize  # noqa: E402
from .bootstrap import residual_bootstrap, percentile_ci  # noqa: E402
from .aggregate import Segment, SegmentSet, aggregate, age_ci, date_observations  # noqa: E402

__all__ = [
    "ConfigError", "CycleWarpError", "DegeneratePathError", "FitFailure", "InvalidParamsError",
    "NonEquidistantError", "NumericalError", "WeightCollapseError", "GrowthPath", "ModelParams",
    "Signal", "complete_log_likelihood", "cycle_count", "FitResult", "SAEMConfig", "estimate",
    "fit", "InitConfig", "initialize", "residual_bootstrap", "percentile_ci", "Segment",
    "SegmentSet", "aggregate", "age_ci", "date_observations",
]
