import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermolab import dynamics as dy
from thermolab.analysis import (
    ConfinementObserver,
    chicone_criterion,
    chicone_criterion_third,
    confinement,
    period_ode_oracle,
    period_quadrature,
    turning_points,
    twist_check,
)
from thermolab.integrators import IntegratorSpec, integrate

TWO_PI = 2 * math.pi


def V(s):
    return math.expm1(s) - s


# --- turning points -------------------------------------------------------------------------

def test_turning_points_small_G():
    G = 1e-8
    sm, sp = turning_points(G)
    assert sm / -math.sqrt(2 * G) == pytest.approx(1.0, abs=1e-3)
    assert sp / math.sqrt(2 * G) == pytest.approx(1.0, abs=1e-3)


def test_turning_point_exact():
    sm, sp = turning_points(math.e - 2)
    assert sp == pytest.approx(1.0, abs=1e-14)
    assert sm < 0


@given(st.floats(1e-6, 200.0))
@settings(max_examples=100, deadline=None)
def test_turning_points_solve_V(G):
    sm, sp = turning_points(G)
    assert sm < 0 < sp
    assert abs(V(sm) - G) <= 1e-12 * max(1.0, G)
    assert abs(V(sp) - G) <= 1e-12 * max(1.0, G)


def test_turning_points_invalid():
    for G in (0.0, -1.0, math.nan):
        with pytest.raises(ValueError):
            turning_points(G)


def test_V_nonnegative():
    s = np.linspace(-6, 4, 2001)
    v, _, _ = dy.potential_V(s)
    assert np.all(v >= 0) and np.count_nonzero(v == 0) == 1


# --- period function ------------------------------------------------------------------------------

def test_period_harmonic_limit():
    assert abs(period_quadrature(1e-8).T - TWO_PI) < 1e-4


@pytest.mark.parametrize("G", [0.01, 0.1, 1.0, 4.0])
def test_period_quadrature_vs_ode(G):
    q = period_quadrature(G)
    o = period_ode_oracle(G)
    assert q.method == "quadrature" and o.method == "ode_oracle"
    assert abs(q.T - o.T) < 1e-8 * o.T


def test_period_increases():
    assert period_quadrature(4).T > period_quadrature(1).T > period_quadrature(0.01).T


def test_period_matches_trajectory():
    # independent of both period routines: integrate one loop of the averaged system in (tau, alpha)
    G = 0.5
    _, sp = turning_points(G)
    T = period_quadrature(G).T
    n = 20_000
    y = integrate(dy.nh_averaged_flow(), (math.exp(sp), 0.0), IntegratorSpec(T / n, n), keep=False).final_state
    assert np.allclose(y, (math.exp(sp), 0.0), atol=1e-9)


def test_period_invalid():
    with pytest.raises(ValueError):
        period_quadrature(0.0)


# --- twist and Chicone ------------------------------------------------------------------------------

def test_twist_grid():
    ok, margin = twist_check([0.01, 0.1, 0.5, 1, 2, 5])
    assert ok and margin > 0


def test_twist_log_grid():
    ok, _ = twist_check(np.geomspace(1e-3, 10, 50))
    assert ok


def test_twist_degenerate_and_negative():
    assert twist_check([1.0]) == (True, math.inf)
    ok, margin = twist_check([0.1, 0.2, 0.3], periods=[6.3, 6.5, 6.4])
    assert not ok and margin < 0
    with pytest.raises(ValueError):
        twist_check([0.2, 0.1])


def test_chicone_values():
    assert chicone_criterion(0.0) == 0.0
    e = math.e
    expected = 6 * (e - 2) * e**2 - 3 * (e - 1) ** 2 * e - 2 * (e - 2) * (e - 1) * e
    assert chicone_criterion(1.0) == pytest.approx(expected, rel=1e-14)
    assert chicone_criterion(1.0) == pytest.approx(1.058, abs=1e-3)


def test_chicone_positive_on_grid():
    s = np.linspace(-3, 3, 60_001)
    s = s[np.abs(s) >= 1e-3]
    assert np.all(chicone_criterion(s) > 0)
    # V''' = V'' = e^sigma for this potential, so both readings agree
    assert np.allclose(chicone_criterion_third(s), chicone_criterion(s), rtol=1e-12, atol=0)


# --- confinement --------------------------------------------------------------------------------------

def test_confinement_constant_trajectory():
    obs = ConfinementObserver()
    obs.update(np.arange(5.0), np.tile([1.0, 2.0, 0.0], (5, 1)))
    rep = confinement(obs)
    assert rep.tau_min == rep.tau_max == 2.5
    assert rep.qp_min == 2 * rep.tau_min and rep.qp_max == 2 * rep.tau_max
    assert rep.horizon == 4.0


def test_confinement_merge_and_tau_layout():
    a, b = ConfinementObserver(0), ConfinementObserver(0)
    a.update(np.array([0.0, 1.0]), np.array([[0.7, 0, 0], [0.3, 0, 0]]))
    b.update(np.array([2.0]), np.array([[1.9, 0, 0]]))
    rep = a.merge(b).report()
    assert (rep.tau_min, rep.tau_max, rep.n_samples, rep.horizon) == (0.3, 1.9, 3, 2.0)
    with pytest.raises(ValueError):
        ConfinementObserver().report()
    with pytest.raises(ValueError):
        ConfinementObserver("polar")


def test_confinement_averaged_chain():
    obs = ConfinementObserver(0)
    integrate(dy.nhc_averaged_flow(), (0.605, 0.0, 0.0), IntegratorSpec(1e-2, 1_000_000, 1), [obs], keep=False)
    assert obs.report().tau_min == pytest.approx(0.188, abs=0.01)


def test_confinement_full_chain():
    obs = ConfinementObserver()
    spec = IntegratorSpec(2.5e-3, 1_000_000, 1, "splitting")
    integrate(dy.nhc_flow(1 / math.sqrt(10)), (1.1, 0.0, 0.0, 0.0), spec, [obs], keep=False)
    assert obs.report().tau_min == pytest.approx(0.194, abs=0.01)
