import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from gravdiamag.analytics import scattering_angle_from_k
from gravdiamag.protocol import ScenarioConfig
from gravdiamag.sensitivity import (
    FluctuationSpec,
    SegmentedPath,
    beta_coefficient,
    current_fluctuation_curve,
    current_limit,
    delta_theta,
    draw_offsets,
    first_deviation,
    k_from_angle,
    linear_response,
    monte_carlo_deviation,
    protocol_path_length,
    second_deviation,
)


def test_beta_is_log_derivative_of_angle():
    # theta(I) with k = 1 + c I^2; beta = I dtheta/dI, evaluated symbolically
    I, c = sp.symbols("I c", positive=True)
    k = 1 + c * I**2
    theta = (1 - 1 / sp.sqrt(k)) * sp.pi
    beta = sp.simplify(I * sp.diff(theta, I))
    ks = sp.symbols("k", positive=True)
    expected = (ks - 1) * sp.pi / ks ** sp.Rational(3, 2)
    assert sp.simplify(beta.subs(c, (ks - 1) / I**2) - expected) == 0
    for kv in (1.5, 4.0, 16.0, 29.0):
        assert beta_coefficient(kv) == pytest.approx(float(expected.subs(ks, kv)), rel=1e-14)


def test_beta_exact_values():
    assert beta_coefficient(4.0) == 3 * math.pi / 8
    assert beta_coefficient(16.0) == 15 * math.pi / 64
    assert beta_coefficient(1.0) == 0.0
    with pytest.raises(ValueError):
        beta_coefficient(0.9)


@given(st.floats(0.0, 3.0))
def test_k_from_angle_inverse(theta):
    assert scattering_angle_from_k(k_from_angle(theta)) == pytest.approx(theta, abs=1e-12)


def test_default_path_uses_quarter_and_three_quarter_turns():
    p = SegmentedPath.from_angles(500e-6, 0.5e-6)
    assert p.beta1 == pytest.approx(SegmentedPath(500e-6, 0.5e-6).beta1)
    assert p.beta2 == pytest.approx(SegmentedPath(500e-6, 0.5e-6).beta2)


def test_delta_theta_terms():
    d = delta_theta(1e-6, 2e-6, 1.0)
    assert d.from_current == 1e-6 and d.from_impact == -2e-6
    assert d.total == pytest.approx(-1e-6)


def test_deviation_chain():
    p = SegmentedPath(500e-6, 0.5e-6)
    assert first_deviation(1e-6, p) == pytest.approx(p.beta1 * 1e-6 * 500e-6)
    assert second_deviation(1e-6, p) == pytest.approx(-p.beta2 * first_deviation(1e-6, p) * p.L / p.b)
    with pytest.raises(ValueError):
        second_deviation(1e-6, SegmentedPath(10e-6, 0.5e-6))


@given(st.floats(1e-14, 1e-6), st.floats(100e-6, 1e-2))
def test_limit_inverts_second_deviation(target, L):
    p = SegmentedPath(L, 0.5e-6)
    assert abs(second_deviation(current_limit(target, p), p)) == pytest.approx(target, rel=1e-12)


def test_limit_published_values_and_scaling():
    lim500 = current_limit(2e-11, SegmentedPath(500e-6, 0.5e-6))
    lim50 = current_limit(2e-11, SegmentedPath(50e-6, 0.5e-6))
    assert lim500 == pytest.approx(5e-11, rel=0.2)
    assert lim50 == pytest.approx(5e-9, rel=0.2)
    assert lim50 / lim500 == pytest.approx(100.0)
    with pytest.raises(ValueError):
        current_limit(0.0, SegmentedPath(50e-6, 0.5e-6))


def test_curve_is_linear_in_target():
    rows = current_fluctuation_curve(SegmentedPath(500e-6, 0.5e-6), [1e-12, 1e-11, 1e-10])
    assert rows[1][1] == pytest.approx(10 * rows[0][1])
    assert rows[2][1] == pytest.approx(10 * rows[1][1])


def test_protocol_path_length():
    assert protocol_path_length(ScenarioConfig()) == pytest.approx(math.hypot(491e-6, 122.6e-6))


def test_offsets_deterministic_and_bounded():
    spec = FluctuationSpec(relative_sigma=1e-6, samples=200, seed=3)
    a, b = draw_offsets(spec), draw_offsets(spec)
    assert a == b
    assert max(abs(x) for x in a) <= 1e-6
    assert draw_offsets(FluctuationSpec(samples=200, seed=4)) != draw_offsets(FluctuationSpec(samples=200, seed=3))
    assert draw_offsets(FluctuationSpec(relative_sigma=2e-9, samples=3, distribution="fixed")) == [2e-9] * 3
    g = np.array(draw_offsets(FluctuationSpec(relative_sigma=1.0, samples=4000, distribution="gaussian")))
    assert g.std() == pytest.approx(1.0, rel=0.05)


def test_prefix_stable_when_adding_samples():
    few = draw_offsets(FluctuationSpec(samples=5, seed=11))
    many = draw_offsets(FluctuationSpec(samples=50, seed=11))
    assert many[:5] == few


def test_fluctuation_validation():
    with pytest.raises(ValueError):
        FluctuationSpec(samples=0)
    with pytest.raises(ValueError):
        FluctuationSpec(distribution="cauchy")


def test_zero_sigma_gives_zero_deviation():
    res = monte_carlo_deviation(ScenarioConfig(), FluctuationSpec(relative_sigma=0.0, samples=1))
    assert res.deviations == (0.0,)
    assert res.summary()["sd"] == 0.0


def test_fixed_offset_samples_are_identical():
    res = monte_carlo_deviation(ScenarioConfig(), FluctuationSpec(relative_sigma=1e-6, samples=2, distribution="fixed"))
    assert res.deviations[0] == res.deviations[1] != 0.0
    assert res.mean == pytest.approx(res.deviations[0])


def test_linear_response_small():
    devs, fit = linear_response(ScenarioConfig(), [-1e-7, 0.0, 1e-7])
    assert devs[1] == 0.0
    assert devs[0] == pytest.approx(-devs[2], rel=1e-3)
    assert fit.r2 > 0.999


def test_worker_count_does_not_change_results():
    spec = FluctuationSpec(relative_sigma=1e-7, samples=3, seed=21)
    serial = monte_carlo_deviation(ScenarioConfig(), spec, workers=1)
    pooled = monte_carlo_deviation(ScenarioConfig(), spec, workers=2)
    assert serial == pooled
