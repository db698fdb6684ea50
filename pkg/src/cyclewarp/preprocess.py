"""Centering, Hilbert-envelope amplitude normalization and a local-linear smoother."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import hilbert
from statsmodels.nonparametric.smoothers_lowess import lowess

from .errors import ConfigError, NumericalError
from .model import Preprocessing, Signal


@dataclass(frozen=True, eq=False)
class EnvelopeRecord:
    ybar: float
    z: np.ndarray
    window: int


def center(signal: Signal) -> Signal:
    """Subtract the sample mean; the subtracted value accumulates in ``preproc.ybar``."""
    ybar = float(np.mean(signal.y))
    prev = signal.preproc.ybar or 0.0
    pre = Preprocessing(ybar=prev + ybar, envelope=signal.preproc.envelope,
                        window=signal.preproc.window)
    return signal.with_y(signal.y - ybar, pre)


def analytic_signal(y):
    """FFT analytic signal: drop negative frequencies, double positive ones."""
    return hilbert(np.asarray(y, dtype=float))


def hilbert_envelope(signal_or_y):
    """Magnitude of the analytic signal.

    An all-zero input yields an all-zero envelope, which cannot be used for
    normalization; :func:`normalize_amplitude` reports it.
    """
    y = signal_or_y.y if isinstance(signal_or_y, Signal) else np.asarray(signal_or_y, float)
    if y.size < 4:
        raise ConfigError("envelope needs at least 4 samples")
    return np.abs(analytic_signal(y))


def rolling_mean(v, window):
    """Centered moving average; the window shrinks symmetrically near the ends."""
    v = np.asarray(v, dtype=float)
    n = v.size
    half = max(0, (int(window) - 1) // 2)
    cs = np.concatenate([[0.0], np.cumsum(v)])
    i = np.arange(n)
    k = np.minimum(half, np.minimum(i, n - 1 - i))
    return (cs[i + k + 1] - cs[i - k]) / (2 * k + 1)


def normalize_amplitude(signal: Signal, window_fraction: float = 0.10):
    """Center and divide by the smoothed Hilbert envelope.

    Returns the normalized signal and the envelope record needed to map a
    fit back to the original scale (``y_orig = ybar + z * y``).
    """
    if not 0.0 < window_fraction <= 0.5:
        raise ConfigError("window_fraction must lie in (0, 0.5]")
    centered = center(signal) if not signal.preproc.centered else signal
    ybar = centered.preproc.ybar
    window = max(1, int(round(window_fraction * signal.y.size)))
    if window % 2 == 0:
        window += 1
    z = rolling_mean(hilbert_envelope(centered.y), window)
    bad = np.flatnonzero(~(z > 0))
    if bad.size:
        raise NumericalError(f"envelope is zero on samples {bad[0]}..{bad[-1]}; "
                             "cannot normalize a flat signal")
    pre = Preprocessing(ybar=ybar, envelope=z, window=window)
    return centered.with_y(centered.y / z, pre), EnvelopeRecord(ybar, z, window)


def loess_smooth(signal_or_y, span: float = 0.02, x=None):
    """Local linear regression with tricube weights over the nearest ``span*N`` points."""
    if isinstance(signal_or_y, Signal):
        y, x = signal_or_y.y, signal_or_y.x
    else:
        y = np.asarray(signal_or_y, dtype=float)
        x = np.arange(y.size, dtype=float) if x is None else np.asarray(x, dtype=float)
    N = y.size
    if not 0.0 < span <= 1.0:
        raise ConfigError("span must lie in (0, 1]")
    q = int(np.floor(span * N))
    if q < 4:
        raise ConfigError(f"span {span} covers {q} points; at least 4 are needed")
    # degree-1 fit, tricube weights, no robustness passes
    return lowess(y, x, frac=min(q, N) / N, it=0, delta=0.0, return_sorted=False)
