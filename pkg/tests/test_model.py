import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from cyclewarp.cir import TransitionLaw, simulate_exact_path
from cyclewarp.errors import DegeneratePathError, InvalidParamsError, NonEquidistantError
from cyclewarp.model import (TWO_PI, GrowthPath, ModelParams, Signal, arc_distance,
                             complete_log_likelihood, cycle_count, integrate_rate,
                             signal_extremes, signal_mean, wrap_phase)

from conftest import WORKED


def test_signal_mean_at_zero_phase():
    p = ModelParams.create(0.6, 0.4, 0.0, 0.05, 0.07, 0.006, 0.09)
    assert signal_mean(0.0, p) == pytest.approx(-0.4, abs=1e-15)


def test_signal_mean_peak_is_a_plus_b():
    p = ModelParams.create(0.6, 0.4, 0.0, 0.05, 0.07, 0.006, 0.09)
    assert signal_mean(math.pi / 2, p) == pytest.approx(1.0, abs=1e-15)


def test_global_minimum_matches_closed_form():
    p = ModelParams.create(0.6, 0.4, 0.0, 0.05, 0.07, 0.006, 0.09)
    g = np.arange(0.0, TWO_PI, 1e-6)
    assert signal_mean(g, p).min() == pytest.approx(-0.5125, abs=1e-10)
    assert signal_extremes(0.6, 0.4) == pytest.approx((1.0, -0.5125))


@settings(max_examples=50, deadline=None)
@given(A=st.floats(0.5, 1.0), b=st.floats(0, TWO_PI, exclude_max=True),
       g=st.floats(-50, 50))
def test_signal_mean_bounds_and_period(A, b, g):
    B = 1.0 - A
    if not A > B:
        return
    p = ModelParams.create(A, B, b, 0.1, 0.5, 0.01, 0.1)
    hi, lo = signal_extremes(A, B)
    v = signal_mean(g, p)
    assert lo - 1e-12 <= v <= hi + 1e-12
    assert signal_mean(g + TWO_PI, p) == pytest.approx(v, abs=1e-12)


def test_minimum_without_interior_trough():
    g = np.linspace(0, TWO_PI, 200001)
    for A in (0.85, 1.0):
        p = ModelParams.create(A, 1 - A, 0.0, 0.1, 0.5, 0.01, 0.1)
        assert signal_mean(g, p).min() == pytest.approx(signal_extremes(A, 1 - A)[1], abs=1e-9)


def test_upper_bound_is_attained():
    p = ModelParams.create(0.75, 0.25, 0.3, 0.1, 0.5, 0.01, 0.1)
    g = np.arange(0.0, TWO_PI, 1e-4)
    assert signal_mean(g, p).max() == pytest.approx(1.0, abs=1e-7)


def test_params_wrap_phase_and_rho():
    p = ModelParams.create(0.6, 0.4, -0.5, 0.1, 0.2, 0.01, 0.1, delta=2.0)
    assert 0.0 <= p.b < TWO_PI
    assert p.b == pytest.approx(TWO_PI - 0.5)
    assert p.rho == math.exp(-0.4)
    assert p.gamma2 == pytest.approx(0.1 * 0.01 / 0.4)
    assert p.gamma2 < p.a ** 2
    assert p.validate(delta=2.0) is p


def test_wrap_phase_never_returns_two_pi():
    assert wrap_phase(-1e-18) == 0.0
    assert arc_distance(0.1, TWO_PI - 0.1) == pytest.approx(0.2)


def test_validation_flags_each_violation(worked_params):
    assert any("Feller" in v for v in worked_params.violations())
    assert worked_params.violations(stationary=False) == []
    with pytest.raises(InvalidParamsError):
        worked_params.validate()
    bad = ModelParams.create(0.4, 0.6, 0, 0.1, 0.5, 0.01, 0.1)
    assert "A must exceed B" in bad.violations()
    off = worked_params.replace(rho=0.5)
    assert any("inconsistent" in v for v in off.violations(delta=1.0, stationary=False))


def test_params_dict_round_trip(feller_params):
    d = feller_params.as_dict()
    assert d["gamma2"] == feller_params.gamma2
    assert ModelParams.from_dict(d) == feller_params
    assert ModelParams.from_dict({k: v for k, v in d.items() if k != "rho"}, 1.0) == feller_params


def test_signal_requires_equidistant_grid():
    x = np.array([0.0, 1.0, 2.0, 3.5, 4.5])
    with pytest.raises(NonEquidistantError) as err:
        Signal(x, np.zeros(5), 1.0)
    assert err.value.index == 3
    s = Signal.regular(np.arange(5.0), 0.5)
    assert s.n == 4 and s.length == 2.0
    with pytest.raises(ValueError):
        s.y[0] = 1.0


def test_signal_tolerates_rounding_in_grid():
    x = np.arange(11) * 0.1
    s = Signal.from_arrays(x, np.zeros(11))
    assert s.delta == pytest.approx(0.1)


def test_integration_rules():
    xi = np.array([1.0, 3.0, 5.0])
    assert integrate_rate(xi, 0.5).tolist() == [0.0, 1.0, 3.0]
    assert integrate_rate(xi, 0.5, "rectangle").tolist() == [0.0, 1.5, 4.0]
    with pytest.raises(InvalidParamsError):
        integrate_rate(xi, 0.5, "simpson")


def test_cycle_count_examples():
    assert cycle_count(GrowthPath([1.0, 1.0], [0.0, TWO_PI])) == 1.0
    assert cycle_count(GrowthPath([0.0, 0.0], [0.0, 0.0])) == 0.0


def test_cycle_count_invariant_under_refinement_for_constant_rate():
    coarse = GrowthPath.from_rates(np.full(11, 0.3), 1.0, "rectangle")
    fine = GrowthPath.from_rates(np.full(101, 0.3), 0.1, "rectangle")
    assert cycle_count(coarse) == pytest.approx(cycle_count(fine), rel=1e-12)


def test_expected_cycle_count_of_worked_example(worked_params):
    from cyclewarp.cir import simulate_path
    rng = np.random.default_rng(0)
    counts = [cycle_count(simulate_path(worked_params, 500, 1.0, 10, worked_params.a, rng))
              for _ in range(400)]
    assert np.mean(counts) == pytest.approx(500 * 0.05 / TWO_PI, rel=0.05)


def _worked_signal(params, seed=11):
    rng = np.random.default_rng(seed)
    path = simulate_exact_path(params, 500, 1.0, rng=rng)
    y = signal_mean(path.g, params) + math.sqrt(params.sigma2) * rng.standard_normal(501)
    return Signal.regular(y), path


def test_complete_loglik_matches_independent_sum(worked_params):
    sig, path = _worked_signal(worked_params)
    law = TransitionLaw.from_params(worked_params)
    r = sig.y - signal_mean(path.g, worked_params)
    gauss = stats.norm.logpdf(r, scale=math.sqrt(worked_params.sigma2)).sum()
    gauss += 0.5 * r.size * math.log(TWO_PI)  # the likelihood drops the 2*pi constant
    z = 2 * law.c * path.xi[1:]
    trans = (stats.ncx2.logpdf(z, law.nu, 2 * law.c * law.rho * path.xi[:-1])
             + math.log(2 * law.c)).sum()
    assert complete_log_likelihood(sig, path, worked_params) == pytest.approx(gauss + trans,
                                                                            rel=1e-8)


def test_perfect_fit_leaves_only_transition_terms(feller_params):
    p = feller_params.replace(sigma2=1.0)
    path = simulate_exact_path(p, 50, 1.0, rng=np.random.default_rng(1))
    sig = Signal.regular(signal_mean(path.g, p))
    law = TransitionLaw.from_params(p)
    from cyclewarp.cir import transition_log_density
    expected = transition_log_density(path.xi[1:], path.xi[:-1], law).sum()
    assert complete_log_likelihood(sig, path, p) == pytest.approx(expected, rel=1e-13)


def test_doubling_residuals_costs_three_times_the_quadratic_term(feller_params):
    path = simulate_exact_path(feller_params, 80, 1.0, rng=np.random.default_rng(2))
    f = signal_mean(path.g, feller_params)
    r = np.random.default_rng(3).standard_normal(81) * 0.2
    l1 = complete_log_likelihood(Signal.regular(f + r), path, feller_params)
    l2 = complete_log_likelihood(Signal.regular(f + 2 * r), path, feller_params)
    quad = -0.5 * (r @ r) / feller_params.sigma2
    assert l2 - l1 == pytest.approx(3 * quad, rel=1e-10)


def test_loglik_decreases_with_residual_size(feller_params):
    path = simulate_exact_path(feller_params, 60, 1.0, rng=np.random.default_rng(4))
    f = signal_mean(path.g, feller_params)
    r = np.random.default_rng(5).standard_normal(61)
    vals = [complete_log_likelihood(Signal.regular(f + s * r), path, feller_params)
            for s in (0.0, 0.1, 0.5, 1.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_zero_rate_is_a_degenerate_path(feller_params):
    xi = np.array([0.2, 0.0, 0.2])
    path = GrowthPath.from_rates(xi, 1.0)
    with pytest.raises(DegeneratePathError):
        complete_log_likelihood(Signal.regular(np.zeros(3)), path, feller_params)


def test_loglik_rejects_length_mismatch(feller_params):
    path = GrowthPath.from_rates(np.full(4, 0.2), 1.0)
    with pytest.raises(InvalidParamsError):
        complete_log_likelihood(Signal.regular(np.zeros(3)), path, feller_params)
