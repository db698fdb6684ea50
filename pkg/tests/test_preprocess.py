import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cyclewarp.errors import ConfigError, NumericalError
from cyclewarp.preprocess import (center, hilbert_envelope, loess_smooth, normalize_amplitude,
                                  rolling_mean)
from cyclewarp.simulate import simulate_signal

from conftest import regular_signal


def _interior(v, frac=0.1):
    k = int(len(v) * frac)
    return v[k:len(v) - k]


def test_center_examples():
    s = center(regular_signal([1.0, 2.0, 3.0]))
    assert s.y.tolist() == [-1.0, 0.0, 1.0]
    assert s.preproc.ybar == 2.0
    c = center(regular_signal(np.full(7, 3.25)))
    assert np.all(c.y == 0) and c.preproc.ybar == 3.25


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60))
def test_center_idempotent(values):
    once = center(regular_signal(values))
    twice = center(once)
    scale = max(1.0, max(abs(v) for v in values))
    assert abs(once.y.mean()) <= 1e-12 * scale * len(values)
    assert np.allclose(twice.y, once.y, atol=1e-12 * scale * len(values))


def test_envelope_of_pure_sinusoid():
    i = np.arange(1024)
    y = np.sin(2 * np.pi * 5 * i / 1024)
    env = hilbert_envelope(regular_signal(y))
    assert np.max(np.abs(_interior(env) - 1.0)) < 0.02
    half = hilbert_envelope(0.5 * y)
    assert np.max(np.abs(_interior(half) - 0.5)) < 0.01


def test_envelope_tracks_slow_modulation():
    n = 1024
    i = np.arange(n)
    mod = 1 + 0.3 * np.sin(2 * np.pi * i / n)
    env = hilbert_envelope(mod * np.sin(2 * np.pi * 20 * i / n))
    assert np.max(np.abs(_interior(env) / _interior(mod) - 1)) < 0.05


def test_envelope_needs_four_samples():
    with pytest.raises(ConfigError):
        hilbert_envelope(np.ones(3))


def test_rolling_mean_shrinks_at_edges():
    v = np.array([0.0, 3.0, 6.0, 9.0, 30.0])
    out = rolling_mean(v, 3)
    assert out.tolist() == [0.0, 3.0, 6.0, 15.0, 30.0]


def test_normalize_pure_sinusoid_amplitude_two():
    i = np.arange(1000)
    s, rec = normalize_amplitude(regular_signal(2 * np.sin(2 * np.pi * 12 * i / 1000)))
    peaks = np.abs(_interior(s.y))
    assert abs(peaks.max() - 1.0) < 0.05
    assert rec.window % 2 == 1 and rec.window >= 1
    assert np.all(rec.z > 0)
    assert s.preproc.normalized and s.preproc.centered


def test_normalize_already_normalized_signal_barely_changes():
    i = np.arange(1000)
    y = np.sin(2 * np.pi * 15 * i / 1000)
    s, _ = normalize_amplitude(regular_signal(y))
    assert np.max(np.abs(_interior(s.y) - _interior(y))) < 0.05


def test_normalize_scale_invariance():
    rng = np.random.default_rng(0)
    i = np.arange(600)
    y = np.sin(2 * np.pi * 9 * i / 600) + 0.2 * rng.standard_normal(600) + 3.0
    a, _ = normalize_amplitude(regular_signal(y))
    b, _ = normalize_amplitude(regular_signal(7.5 * y))
    assert np.max(np.abs(a.y - b.y)) < 1e-6


def test_normalized_simulated_signal_scale(worked_params):
    # the two-harmonic envelope swings between |A-B| and A+B inside a cycle, so
    # the rolling mean sits below the peaks and the normalized maximum exceeds 1
    peaks = []
    for seed in range(20):
        sim = simulate_signal(worked_params, 500, 1.0, np.random.default_rng(seed))
        s, _ = normalize_amplitude(sim.signal)
        peaks.append(np.abs(loess_smooth(s, 0.02)).max())
    peaks = np.array(peaks)
    assert 1.0 <= np.median(peaks) <= 1.4
    assert np.mean((peaks >= 0.85) & (peaks <= 1.8)) >= 0.9


def test_normalized_two_harmonic_peak_matches_envelope_average():
    # constant rate, many cycles per window: peak / mean|A e^{iu} - i B e^{2iu}|
    u = 2 * np.pi * 40 * np.arange(4000) / 4000
    y = 0.6 * np.sin(u) - 0.4 * np.cos(2 * u)
    s, _ = normalize_amplitude(regular_signal(y))
    grid = np.linspace(0, 2 * np.pi, 200001)
    mean_env = np.mean(np.sqrt(0.52 + 0.48 * np.sin(grid)))
    assert _interior(s.y).max() == pytest.approx(1.0 / mean_env, rel=0.02)


def test_flat_signal_cannot_be_normalized():
    with pytest.raises(NumericalError, match="envelope is zero"):
        normalize_amplitude(regular_signal(np.full(50, 2.0)))


def test_window_fraction_bounds():
    with pytest.raises(ConfigError):
        normalize_amplitude(regular_signal(np.sin(np.arange(50.0))), 0.0)
    with pytest.raises(ConfigError):
        normalize_amplitude(regular_signal(np.sin(np.arange(50.0))), 0.6)


def test_loess_reproduces_lines_and_constants():
    x = np.arange(500.0)
    assert np.allclose(loess_smooth(2 * x, 0.02), 2 * x, atol=1e-8)
    assert np.allclose(loess_smooth(np.full(500, 4.2), 0.02), 4.2, atol=1e-12)


def test_loess_reduces_noise():
    rng = np.random.default_rng(2)
    i = np.arange(501)
    clean = np.sin(2 * np.pi * 4 * i / 501)
    noisy = clean + 0.3 * rng.standard_normal(501)
    sm = loess_smooth(noisy, 0.02)
    rmse = lambda v: math.sqrt(np.mean((v - clean) ** 2))
    assert rmse(sm) < 0.5 * rmse(noisy)


def test_loess_is_linear():
    rng = np.random.default_rng(3)
    y1, y2 = rng.standard_normal((2, 400))
    lhs = loess_smooth(2.5 * y1 + y2, 0.05)
    rhs = 2.5 * loess_smooth(y1, 0.05) + loess_smooth(y2, 0.05)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_loess_span_checks():
    with pytest.raises(ConfigError):
        loess_smooth(np.zeros(100), 0.02)
    with pytest.raises(ConfigError):
        loess_smooth(np.zeros(100), 0.0)
