import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vtcontrol.bounds import (
    bounds_report,
    cost_exponent_lower,
    cost_exponent_upper,
    geometric_constants,
    limit_transport_time,
    lower_bound_T14,
    lower_bound_T15,
    min_cost_exponent_upper,
    minimize_F,
    sup_G14,
    threshold_G,
    threshold_time,
    upper_bound_T16,
)
from vtcontrol.classical import interaction_time, kappa0, sup_period
from vtcontrol.errors import AssumptionViolation, DomainError, HypothesisViolation, InvalidParameter
from vtcontrol.problem import custom_field, make_example_field, potential


def half_jump(M, a, L):
    # value of the increasing example antiderivative at half length
    return L / 8 * math.sqrt(a * a * L * L + 4 * M * M) + M * M / (2 * a) * math.asinh(a * L / (2 * M))


def flushing_closed(M, a, L):
    return 2 / a * math.asinh(a * L / (2 * M))


@pytest.mark.parametrize("M, a, L", [(1.0, 2.0, 2.0), (0.5, 4.0, 1.0), (2.0, 0.5, 2.0)])
def test_limit_transport_time_closed_form(M, a, L):
    for sign in "+-":
        val = limit_transport_time(make_example_field(M, a, sign, L))
        assert val == pytest.approx(flushing_closed(M, a, L), rel=1e-10)


def test_limit_transport_time_reference_value():
    assert limit_transport_time(make_example_field(1.0, 1.0, "+", 2.0)) == pytest.approx(
        2 * math.log(1 + math.sqrt(2)), rel=1e-12)
    assert 2 * math.log(1 + math.sqrt(2)) == pytest.approx(1.762747, abs=1e-6)


def test_limit_transport_time_small_convexity():
    assert limit_transport_time(make_example_field(2.0, 1e-4, "-", 3.0)) == pytest.approx(1.5, rel=1e-8)


def test_limit_transport_time_needs_nonvanishing_speed():
    fld = custom_field(1.0, lambda x: (x - 0.5) ** 2, lambda x: 2 * (x - 0.5), lambda x: 2.0 + 0 * x)
    with pytest.raises(AssumptionViolation):
        limit_transport_time(fld)


def test_preset_constants(minus_pot):
    g = geometric_constants(minus_pot, minus_pot.E0)
    assert g.G14 == pytest.approx(half_jump(1, 2, 2), rel=1e-10)
    assert g.G14 == pytest.approx(1.478943, abs=1e-6)
    assert g.G15 == pytest.approx(2 * 4 / 8, rel=1e-10)
    assert g.G16 == g.G14 and g.S14 == 0.0
    assert g.S16 == pytest.approx(2 * math.sqrt(2) * 0.5 * math.pi * math.sqrt(5), rel=1e-10)


def test_increasing_preset_constants(plus_pot):
    g = geometric_constants(plus_pot, plus_pot.E0)
    assert abs(g.G14) < 1e-12
    assert g.G15 == pytest.approx(2 * 4 / 8 - half_jump(1, 2, 2), rel=1e-10)
    assert g.G15 <= 0


def test_geometric_constants_reject_negative_shift(minus_pot):
    with pytest.raises(InvalidParameter):
        geometric_constants(minus_pot, 0.5, -1.0)


def test_T14_values(minus_pot, plus_pot):
    val, arg = lower_bound_T14(minus_pot)
    assert val == pytest.approx(half_jump(1, 2, 2) / 0.25, rel=1e-9)
    assert arg == pytest.approx(0.25, abs=1e-9)
    assert lower_bound_T14(plus_pot)[0] == pytest.approx(0.0, abs=1e-10)


def test_T14_grows_linearly_in_convexity():
    M, L = 1.0, 2.0
    ratios = [lower_bound_T14(potential(make_example_field(M, a, "-", L)))[0] / (a * L * L / (2 * M * M))
              for a in (50.0, 400.0)]
    assert abs(ratios[1] - 1) < abs(ratios[0] - 1) < 0.1
    assert abs(ratios[1] - 1) < 0.02


def test_T16_values(minus_pot, plus_pot):
    T1 = math.pi * math.sqrt(5)
    assert upper_bound_T16(plus_pot) == pytest.approx(4 * math.sqrt(2) * T1, rel=1e-9)
    assert upper_bound_T16(plus_pot) == pytest.approx(39.74, abs=5e-3)
    assert upper_bound_T16(minus_pot) == pytest.approx(half_jump(1, 2, 2) / 0.25 + 4 * math.sqrt(2) * T1, rel=1e-9)


def test_bounds_need_half_derivative_correction():
    fld = make_example_field(1.0, 2.0, "-", 2.0)
    odd = dataclasses.replace(fld, half_b=False, b=lambda x: 0.5 * fld.fpp(x) + 0.1)
    with pytest.raises(HypothesisViolation):
        upper_bound_T16(odd)
    with pytest.raises(HypothesisViolation):
        lower_bound_T15(odd)


def test_T15_preset(minus_pot):
    r = lower_bound_T15(minus_pot)
    E0 = minus_pot.E0
    ref = (1.0 + interaction_time(minus_pot, E0, 0.0)) / E0
    assert r["T15"] >= ref - 1e-12
    assert not r["B_on_edge"]
    assert r["T15"] <= upper_bound_T16(minus_pot)


@pytest.mark.slow
@pytest.mark.parametrize("sign, B_opt, limit", [("-", 0.0, 2 * math.sqrt(2) * 2.0), ("+", 0.25, 2.0)])
def test_T15_small_convexity_limits(sign, B_opt, limit):
    pot = potential(make_example_field(1.0, 1e-3, sign, 2.0))
    r = lower_bound_T15(pot, B_max=5.0, n_E=6, n_B=48)
    assert r["T15"] == pytest.approx(limit, rel=0.01)
    assert r["B"] == pytest.approx(B_opt, abs=0.05)


@pytest.mark.slow
def test_T15_nondecreasing_in_box(minus_pot):
    vals = [lower_bound_T15(minus_pot, B_max=b, n_E=12, n_B=16)["T15"] for b in (0.0, 0.5, 5.0)]
    assert vals[0] <= vals[1] + 1e-12 <= vals[2] + 2e-12


def test_compare_chain(minus_pot):
    rng = np.random.default_rng(3)
    k0 = kappa0()[0]
    E0 = minus_pot.E0
    s16 = geometric_constants(minus_pot, E0).S16
    for _ in range(10):
        E = float(rng.uniform(E0, 2 * minus_pot.Vmax))
        B = float(rng.uniform(0, 3))
        g = geometric_constants(minus_pot, E, B)
        assert g.G14 >= g.G15 - 1e-12
        assert g.G14 / E0 >= g.G14 / E >= g.G15 / (E + B) - 1e-12
        assert 0 <= g.S15 / (E + B) <= k0 * s16 / E0


def test_G15_nonincreasing_in_energy(minus_pot, plus_pot):
    for pot in (minus_pot, plus_pot):
        Es = np.linspace(pot.E0, 1.5 * pot.Vmax, 20)
        g15 = [geometric_constants(pot, float(E)).G15 for E in Es]
        assert np.all(np.diff(g15) <= 1e-12)


def test_sandwich_on_family_grid():
    for M in (0.5, 1.0, 2.0):
        for a in (0.5, 1.0, 2.0, 4.0):
            for sign in "+-":
                pot = potential(make_example_field(M, a, sign, 2.0))
                assert lower_bound_T14(pot, n=64)[0] <= upper_bound_T16(pot)


@pytest.mark.slow
def test_T15_sandwich_on_family_grid():
    for M in (0.5, 1.0, 2.0):
        for a in (0.5, 1.0, 2.0, 4.0):
            for sign in "+-":
                pot = potential(make_example_field(M, a, sign, 2.0))
                assert lower_bound_T15(pot, n_E=6, n_B=12)["T15"] <= upper_bound_T16(pot)


def test_cost_exponent_upper_small_fraction_limit(minus_pot):
    T = 20.0
    T1 = math.pi * math.sqrt(5)
    g, _ = sup_G14(minus_pot)
    assert cost_exponent_upper(minus_pot, T, 1e-9) == pytest.approx(2 * T1 * T1 / T + g, rel=1e-7)


def test_cost_exponent_upper_domain(minus_pot):
    for m in (0.0, 1.0, -0.2):
        with pytest.raises(DomainError):
            cost_exponent_upper(minus_pot, 10.0, m)
    with pytest.raises(InvalidParameter):
        cost_exponent_upper(minus_pot, 0.0, 0.5)


def test_uniform_cost_beyond_upper_bound(minus_pot):
    val, m = min_cost_exponent_upper(minus_pot, 2 * upper_bound_T16(minus_pot))
    assert val < 0 and 0 < m < 1


def test_threshold_reproduces_upper_bound(minus_pot):
    T1, _ = sup_period(minus_pot)
    g, _ = sup_G14(minus_pot)
    T = threshold_time(2 * T1 * T1, minus_pot.E0, g)
    assert T == pytest.approx(upper_bound_T16(minus_pot), rel=1e-12)
    assert min_cost_exponent_upper(minus_pot, 1.01 * T)[0] < 0


def test_cost_exponent_lower_preset(minus_pot):
    rate, E = cost_exponent_lower(minus_pot, 3.0)
    assert rate == pytest.approx(half_jump(1, 2, 2) - 0.25 * 3.0, rel=1e-9)
    assert E == pytest.approx(0.25)
    assert cost_exponent_lower(minus_pot, 1.01 * lower_bound_T14(minus_pot)[0])[0] < 0


def test_minimize_F_closed_forms():
    assert minimize_F(1.0, 4.0) == pytest.approx((0.5, 0.0), abs=1e-15)
    assert minimize_F(4.0, 1.0) == (0.0, 4.0)
    with pytest.raises(InvalidParameter):
        minimize_F(0.0, 1.0)


def test_minimize_F_against_grid():
    rng = np.random.default_rng(11)
    m = np.linspace(0.0, 1.0, 2_000_001)[:-1]
    for _ in range(20):
        a, b = np.exp(rng.uniform(-2, 2, size=2))
        vals = a / (1 - m) - b * m
        i = int(vals.argmin())
        # parabolic refinement of the grid minimum
        if 0 < i < m.size - 1:
            y0, y1, y2 = vals[i - 1:i + 2]
            ref = y1 - (y2 - y0) ** 2 / (8 * (y2 - 2 * y1 + y0))
        else:
            ref = vals[i]
        assert minimize_F(a, b)[1] == pytest.approx(ref, abs=1e-8)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.01, 100), b=st.floats(0.01, 100))
def test_minimize_F_is_a_lower_envelope(a, b):
    m_star, v = minimize_F(a, b)
    assert 0 <= m_star < 1
    assert v == pytest.approx(a / (1 - m_star) - b * m_star, rel=1e-12, abs=1e-12)
    for m in (0.0, 0.3, 0.9):
        assert v <= a / (1 - m) - b * m + 1e-12


def test_threshold_time():
    assert threshold_time(1.0, 1.0, 1.0) == 3.0
    assert threshold_G(2.9, 1, 1, 1) > 0 > threshold_G(3.1, 1, 1, 1)
    assert threshold_time(4.0, 1.0, 0.0) == 4.0
    with pytest.raises(InvalidParameter):
        threshold_time(1.0, 0.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.1, 10), b=st.floats(0.1, 10), c=st.floats(0.0, 10))
def test_threshold_sign_change(a, b, c):
    T = threshold_time(a, b, c)
    assert threshold_G(0.99 * T, a, b, c) > 0 > threshold_G(1.01 * T, a, b, c)


def test_report_shift_invariance(minus_field):
    r1 = bounds_report(minus_field, with_T15=False)
    r2 = bounds_report(minus_field.shifted(7.5), with_T15=False)
    for name in ("T_limit", "T14", "T16", "T1", "E0", "sup_G14"):
        assert getattr(r2, name) == pytest.approx(getattr(r1, name), rel=1e-10, abs=1e-12)


def test_report_preset(minus_field):
    rep = bounds_report(minus_field)
    assert rep.T14 == pytest.approx(5.915771, abs=1e-6)
    assert rep.T16 == pytest.approx(45.654124, abs=1e-6)
    assert rep.T14 <= rep.T15 <= rep.T16
    assert any("distinct-endpoint" in n for n in rep.notes)
    assert rep.to_dict()["T1"] == pytest.approx(math.pi * math.sqrt(5))
