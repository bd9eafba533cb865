import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vtcontrol.classical import (
    classical_table,
    gamma0,
    gamma0_quad,
    harmonic_period,
    interaction_time,
    interaction_time_quad,
    kappa0,
    period_integral,
    phase_volume,
    phi_inverse,
    sup_period,
)
from vtcontrol.errors import DomainError, EnergyBelowGround, InvalidParameter
from vtcontrol.problem import make_example_field, potential


def example_pot(M, a, L=2.0, sign="-"):
    return potential(make_example_field(M, a, sign, L))


@pytest.mark.parametrize("E", [0.3, 0.5, 0.8, 1.25])
def test_phase_volume_harmonic_branch(minus_pot, E):
    assert phase_volume(minus_pot, E) == pytest.approx(math.pi / 2 * (E - 0.25), rel=1e-11)


def test_phase_volume_at_ground_is_zero(minus_pot):
    assert phase_volume(minus_pot, minus_pot.E0) == 0.0


@pytest.mark.parametrize("E", ["0.3", "0.5", "1.0", "1.25", "3.0", "20.0"])
def test_phase_volume_against_quadrature(minus_pot, oracle, E):
    assert phase_volume(minus_pot, float(E)) == pytest.approx(oracle["phase_volume"][E], rel=1e-10)


def test_phase_volume_second_branch(minus_pot):
    # above the barrier: L/8 sqrt(4 Lam - a^2 L^2) + Lam/(2a) arcsin(a L / (2 sqrt Lam)), Lam = 4E - M^2
    a, L = 2.0, 2.0
    for E in (1.5, 3.0, 9.0):
        lam = 4 * E - 1.0
        ref = L / 8 * math.sqrt(4 * lam - a * a * L * L) + lam / (2 * a) * math.asin(a * L / (2 * math.sqrt(lam)))
        assert phase_volume(minus_pot, E) == pytest.approx(ref, rel=1e-11)


@pytest.mark.parametrize("E", ["0.3", "0.5", "1.0", "1.25", "3.0", "20.0"])
def test_period_against_quadrature(minus_pot, oracle, E):
    assert period_integral(minus_pot, float(E)) == pytest.approx(oracle["period"][E], rel=1e-9)


@pytest.mark.parametrize("E", [0.3, 0.7, 1.2])
def test_period_harmonic_branch(minus_pot, E):
    assert period_integral(minus_pot, E) == pytest.approx(4 * math.pi * math.sqrt(E) / 2.0, rel=1e-10)


def test_period_tends_to_twice_length(minus_pot):
    assert abs(period_integral(minus_pot, 1e4) - 4.0) < 1e-3
    assert abs(period_integral(minus_pot, 1e6) - 4.0) < 1e-5


def test_period_undefined_at_ground(minus_pot):
    with pytest.raises(EnergyBelowGround):
        period_integral(minus_pot, minus_pot.E0)
    assert harmonic_period(minus_pot) == pytest.approx(math.pi, rel=1e-7)
    assert period_integral(minus_pot, 0.25 + 1e-9) == pytest.approx(math.pi, rel=1e-7)


def test_sup_period_closed_form(minus_pot, oracle):
    T1, arg = sup_period(minus_pot)
    assert T1 == pytest.approx(oracle["T1"], rel=1e-10)
    assert arg == pytest.approx(1.25, rel=1e-8)


@pytest.mark.parametrize("M, a, L", [(0.5, 1.0, 1.0), (2.0, 4.0, 2.0), (1.0, 0.5, 2.0)])
def test_sup_period_family(M, a, L):
    T1, _ = sup_period(example_pot(M, a, L))
    assert T1 == pytest.approx(math.pi * math.sqrt(L * L + 4 * M * M / (a * a)), rel=1e-9)


def test_sup_period_large_convexity():
    T1, _ = sup_period(example_pot(1.0, 400.0, 2.0))
    assert T1 == pytest.approx(2 * math.pi, rel=1e-4)


def test_table_invariants(minus_pot):
    tab = classical_table(minus_pot)
    assert tab.phi[0] == 0.0
    assert np.all(np.diff(tab.phi) > 0)
    assert math.isnan(tab.period_T[0])
    assert abs(tab.period_T[-1] - 2 * minus_pot.L) < 0.05 * 2 * minus_pot.L
    assert np.allclose(tab.calT[1:], tab.period_T[1:] / (2 * np.sqrt(tab.energies[1:])))
    assert tab.T1 == pytest.approx(math.pi * math.sqrt(5), rel=1e-10)


def test_weyl_tail(minus_pot):
    E = 100 * minus_pot.Vmax
    assert phase_volume(minus_pot, E) / (minus_pot.L * math.sqrt(E)) == pytest.approx(1.0, abs=0.02)


@pytest.mark.parametrize("E", [0.4, 0.9, 2.0, 7.0])
def test_phase_derivative_identity(minus_pot, E):
    h = 1e-4 * E
    fd = (phase_volume(minus_pot, E + h) - phase_volume(minus_pot, E - h)) / (2 * h)
    assert abs(fd - period_integral(minus_pot, E) / (4 * math.sqrt(E))) / abs(fd) < 1e-5


def test_phi_inverse_round_trip(minus_pot):
    for E in (0.3, 1.0, 4.0):
        assert phi_inverse(minus_pot, phase_volume(minus_pot, E)) == pytest.approx(E, rel=1e-11)
    assert phi_inverse(minus_pot, -1.0) == minus_pot.E0


@pytest.mark.parametrize("key", ["M=1,a=2,L=2,E=0.25,B=0", "M=1,a=2,L=2,E=0.6,B=0.5", "M=1,a=2,L=2,E=2.0,B=0"])
def test_interaction_time_against_closed_derivative(minus_pot, oracle, key):
    parts = dict(kv.split("=") for kv in key.split(","))
    E, B = float(parts["E"]), float(parts["B"])
    assert interaction_time(minus_pot, E, B) == pytest.approx(oracle["interaction"][key], rel=1e-8)


@pytest.mark.slow
def test_interaction_time_two_routes(minus_pot):
    for E, B in ((0.4, 0.0), (0.8, 0.3), (2.0, 0.0)):
        assert interaction_time(minus_pot, E, B) == pytest.approx(interaction_time_quad(minus_pot, E, B), rel=1e-7)


def test_interaction_time_small_convexity_limit(oracle):
    pot = example_pot(1.0, 1e-3)
    for B in (0.0, 0.25, 1.0):
        limit = math.sqrt(2 + 8 * B)
        val = interaction_time(pot, pot.E0, B)
        assert val == pytest.approx(oracle["interaction"][f"M=1,a=0.001,L=2,E=0.25,B={B:g}"], rel=1e-7)
        assert abs(val - limit) / val < 0.01


def test_interaction_time_decays_with_convexity():
    vals = [interaction_time(example_pot(1.0, a), 0.25, 0.0) for a in (2.0, 50.0, 400.0)]
    assert vals[0] > vals[1] > vals[2] > 0
    assert vals[2] < 0.02


def test_interaction_time_rejects_negative_shift(minus_pot):
    with pytest.raises(InvalidParameter):
        interaction_time(minus_pot, 0.5, -0.1)


@settings(max_examples=8, deadline=None)
@given(E=st.floats(0.25, 2.0))
def test_interaction_time_nondecreasing_in_shift(minus_pot, E):
    vals = interaction_time(minus_pot, E, np.array([0.0, 0.1, 0.5, 1.0, 3.0]))
    assert np.all(np.diff(vals) >= -1e-12)


def test_gamma0_at_corner():
    assert gamma0(1.0, 1.0) == pytest.approx(math.pi / 2 + math.log(2), rel=1e-15)


def test_gamma0_against_quadrature(oracle):
    for al, be, ref in oracle["gamma0"]:
        assert gamma0(al, be) == pytest.approx(ref, rel=1e-10)
        assert gamma0_quad(al, be) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("al, be", [(1.0, 0.9), (2.0, 3.0)])
def test_gamma0_domain(al, be):
    with pytest.raises(DomainError):
        gamma0(al, be)


@settings(max_examples=40, deadline=None)
@given(al=st.floats(1.0, 1e3), frac=st.floats(0.0, 1.0))
def test_gamma0_nonnegative(al, frac):
    be = 1.0 + (al - 1.0) * frac
    y = np.linspace(1.0, 10 * al, 50)
    assert np.all(y * y + al * al >= np.abs(y * y - be * be))
    assert gamma0(al, be) >= 0.0


def test_gamma0_ratio_decays_along_unit_beta():
    ratios = [gamma0(a, 1.0) / (a * a + 1) for a in (10.0, 100.0, 1000.0)]
    assert ratios[0] > ratios[1] > ratios[2]
    assert ratios[2] < 1e-2


def test_kappa0(oracle):
    k, al, be = kappa0()
    assert k > 0
    assert k == pytest.approx(oracle["kappa0"]["value"], rel=1e-7)
    assert np.isfinite(al) and al < 100
