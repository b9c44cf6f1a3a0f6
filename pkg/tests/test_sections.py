import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numba import njit

from thermolab import dynamics as dy
from thermolab.analysis import period_quadrature
from thermolab.integrators import IntegratorSpec
from thermolab.sections import (
    FixedPointError,
    SectionSpec,
    diophantine_check,
    fixed_point,
    island_clusters,
    return_map,
    rotation_number,
    section_crossings,
)

TWO_PI = 2 * math.pi
THETA0 = SectionSpec.angle(0)
MAP_SPEC = IntegratorSpec(TWO_PI / 1000, 20_000)


@njit(cache=True)
def _rotation_rhs(y, par, dy_):
    dy_[0] = 1.0
    dy_[1] = 0.0


def rotation_flow():
    return dy.Flow("rotation", _rotation_rhs, 2)


# --- crossings -----------------------------------------------------------------------------

def test_pure_rotation_crossing_times():
    orb = section_crossings(rotation_flow(), (0.0, 0.5), THETA0, IntegratorSpec(0.01, 5000), 5)
    assert np.max(np.abs(orb.times - TWO_PI * np.arange(1, 6))) < 1e-10
    assert np.all(orb.directions == 1) and orb.complete and orb.n_skipped == 0


def test_crossings_satisfy_section_and_direction():
    orb = section_crossings(dy.nh_aa_flow(1.0), (0.0, 2.42, 0.0), THETA0, IntegratorSpec(1e-3, 200_000), 20)
    off = np.abs((orb.states[:, 0] + math.pi) % TWO_PI - math.pi)
    assert np.all(off < 1e-10)
    assert np.all(np.diff(orb.times) > 0) and np.all(orb.directions == 1)

    orb = section_crossings(dy.nhc_averaged_flow(), (0.605, 0, 0), SectionSpec.hyperplane(2, 0.0, "negative"),
                            IntegratorSpec(1e-2, 100_000), 10)
    assert np.all(np.abs(orb.states[:, 2]) < 1e-10) and np.all(orb.directions == -1)


def test_partial_orbit_warns():
    with pytest.warns(RuntimeWarning):
        orb = section_crossings(rotation_flow(), (0.0, 0.5), THETA0, IntegratorSpec(0.01, 1000), 5)
    assert not orb.complete and len(orb) == 1


def test_section_validation():
    with pytest.raises(ValueError):
        SectionSpec.angle(0, "sideways")
    with pytest.raises(ValueError):
        section_crossings(rotation_flow(), (0, 0), SectionSpec.hyperplane(3), IntegratorSpec(0.1, 10), 1)
    with pytest.raises(ValueError):
        section_crossings(rotation_flow(), (0, 0), THETA0, IntegratorSpec(0.1, 10, scheme="splitting"), 1)


def test_nh_weak_coupling_stays_near_level_curve():
    orb = section_crossings(dy.nh_aa_flow(0.1), (0.0, 1.5, 0.0), THETA0, IntegratorSpec(TWO_PI / 800, 800 * 600), 500)
    G = dy.integral_G(orb.points[:, 0], orb.points[:, 1])
    assert orb.complete and np.max(np.abs(G - dy.integral_G(1.5, 0.0))) <= 0.05
    assert island_clusters(orb) == (1, 0)


def test_nhc_averaged_section_is_closed_curve_like():
    orb = section_crossings(dy.nhc_averaged_flow(), (1.1**2 / 2, 0.0, 0.0), SectionSpec.hyperplane(2, 0.0),
                            IntegratorSpec(1e-2, 1_000_000), 600)
    assert set(np.unique(orb.directions)) == {-1, 1}
    for sign in (1, -1):
        pts = orb.points[orb.directions == sign]
        assert np.all(pts[:, 0] > 0.1)
        assert island_clusters(pts) == (1, 0)
        assert rotation_number(pts, pts.mean(axis=0)).omega > 0  # winds around the centroid


# --- return map ------------------------------------------------------------------------------

def test_return_time_near_two_pi():
    P = return_map(dy.nh_aa_flow(0.01), THETA0, MAP_SPEC)
    assert abs(P.return_time((1.3, 0.2)) - TWO_PI) < 0.1


def test_return_map_matches_crossings():
    flow = dy.nh_aa_flow(0.3)
    spec = IntegratorSpec(TWO_PI / 500, 200_000)
    x0 = np.array([1.7, -0.4])
    orb = section_crossings(flow, THETA0.embed(x0), THETA0, spec, 10)
    it = return_map(flow, THETA0, spec).iterate(x0, 10)
    assert np.max(np.abs(it - orb.points)) < 1e-8


def test_return_map_small_eps_limit():
    # the return map approaches the time-2*pi*eps advance of the averaged system
    x0 = np.array([1.6, 0.3])
    errs = []
    for eps in (0.02, 0.01):
        x = return_map(dy.nh_aa_flow(eps), THETA0, MAP_SPEC)(x0)
        n = 200
        avg = integrate_averaged(x0, TWO_PI * eps, n)
        errs.append(np.linalg.norm(x - avg))
    assert errs[0] < 0.06 * 0.02**2 and errs[1] < 0.06 * 0.01**2
    assert errs[0] / errs[1] > 3.6  # at least second order in eps


def integrate_averaged(x0, T, n):
    from thermolab.integrators import integrate

    return integrate(dy.nh_averaged_flow(), x0, IntegratorSpec(T / n, n), keep=False).final_state


def test_fixed_point_residual_bound():
    C = 3.2e-3  # max over the reference runs of |P(1,0) - (1,0)| / eps
    res = []
    for eps in (0.01, 0.02, 0.04):
        x = return_map(dy.nh_aa_flow(eps), THETA0, MAP_SPEC)((1.0, 0.0))
        res.append(np.linalg.norm(x - [1.0, 0.0]))
        assert res[-1] <= C * eps
    assert res[1] / res[0] > 4 and res[2] / res[1] > 4  # in fact third order


# --- fixed points ------------------------------------------------------------------------------

def test_fixed_point_weak_coupling():
    P = return_map(dy.nh_aa_flow(0.05), THETA0, MAP_SPEC)
    fp = fixed_point(P, (1.0, 0.0))
    assert np.linalg.norm(fp.location - [1.0, 0.0]) < 0.1
    assert fp.residual < 1e-9
    assert fp.jacobian.shape == (2, 2)
    assert np.linalg.det(fp.jacobian) == pytest.approx(1.0, abs=1e-2)  # near area preserving


def test_fixed_point_moves_smoothly():
    d = []
    for eps in (0.1, 0.05):
        fp = fixed_point(return_map(dy.nh_aa_flow(eps), THETA0, MAP_SPEC), (1.0, 0.0))
        d.append(fp.location - [1.0, 0.0])
    # the offset is along tau and shrinks like eps^2 (the first-order term vanishes)
    assert d[0][0] < 0 and d[1][0] < 0
    assert d[0][0] / d[1][0] == pytest.approx(4.0, rel=0.05)


def test_fixed_point_identity_map_raises():
    with pytest.raises(FixedPointError):
        fixed_point(lambda x: np.asarray(x, dtype=float), (1.0, 0.0))


def test_fixed_point_linear_map():
    A = np.array([[0.5, 0.2], [-0.1, 0.3]])
    b = np.array([1.0, -2.0])
    fp = fixed_point(lambda x: A @ x + b, (0.0, 0.0))
    assert np.allclose(fp.location, np.linalg.solve(np.eye(2) - A, b), atol=1e-12)
    assert np.allclose(fp.jacobian, A, atol=1e-8)


# --- rotation numbers --------------------------------------------------------------------------

def rigid_rotation(omega, n=400, radius=0.5, center=(1.0, 0.0), phase=0.3):
    phi = phase + TWO_PI * omega * np.arange(n)
    return np.column_stack([center[0] + radius * np.cos(phi), center[1] + radius * np.sin(phi)])


def test_rotation_synthetic():
    r = rotation_number(rigid_rotation(0.381966), (1.0, 0.0))
    assert abs(r.omega - 0.381966) < 1e-6 and r.stderr < 1e-10


def test_rotation_unperturbed_map():
    # phi -> phi + gamma*y with gamma = 2*pi*eps and y the angular frequency on the level curve
    eps = 0.05
    for G in (0.1, 1.0):
        y = TWO_PI / period_quadrature(G).T
        pts = rigid_rotation(eps * y, n=300)
        assert rotation_number(pts, (1.0, 0.0)).omega == pytest.approx(eps * y, abs=1e-12)


def test_rotation_weak_coupling_orbit():
    eps = 0.1
    fp = fixed_point(return_map(dy.nh_aa_flow(eps), THETA0, MAP_SPEC), (1.0, 0.0))
    orb = section_crossings(dy.nh_aa_flow(eps), (0.0, 1.2, 0.0), THETA0, IntegratorSpec(TWO_PI / 800, 800 * 600), 500)
    omega = rotation_number(orb, fp.location).omega
    expected = TWO_PI * eps / period_quadrature(dy.integral_G(1.2, 0.0)).T
    assert omega == pytest.approx(expected, rel=0.05)


def test_rotation_recentering_invariance():
    pts = rigid_rotation(0.2137, n=200, center=(2.0, -1.0))
    base = rotation_number(pts, (2.0, -1.0)).omega
    shift = np.array([5.0, 7.0])
    assert rotation_number(pts + shift, np.array([2.0, -1.0]) + shift).omega == pytest.approx(base, abs=1e-12)
    assert rotation_number(3.0 * pts, (6.0, -3.0)).omega == pytest.approx(base, abs=1e-12)


def test_rotation_errors():
    with pytest.raises(ValueError):
        rotation_number(rigid_rotation(0.1, n=49), (1.0, 0.0))
    with pytest.raises(ValueError):
        rotation_number(rigid_rotation(0.001, n=100), (1.0, 0.0))


# --- Diophantine ---------------------------------------------------------------------------------

GOLDEN = (math.sqrt(5) - 1) / 2


def test_diophantine_examples():
    assert not diophantine_check(0.5, 1e-9)
    assert diophantine_check(GOLDEN, 0.2, 2, 10_000)
    # independent brute force: scan a window of k around every l*omega
    worst = min(min(abs(l * GOLDEN - k) for k in range(int(l * GOLDEN) - 2, int(l * GOLDEN) + 3)) * l**2
                for l in range(1, 10_001))
    assert worst >= 0.2


def test_diophantine_monotone_in_c0():
    omegas = np.random.default_rng(0).uniform(0, 1, 200)
    prev = 0
    for c0 in (0.5, 0.2, 0.1, 0.05, 0.01):
        n = sum(diophantine_check(w, c0, 2, 500) for w in omegas)
        assert n >= prev
        prev = n


@given(st.floats(0.0, 1.0), st.sampled_from([0.3, 0.1, 0.01]))
@settings(max_examples=60, deadline=None)
def test_diophantine_symmetries(omega, c0):
    base = diophantine_check(omega, c0, 2, 300)
    assert diophantine_check(omega + 1, c0, 2, 300) == base
    assert diophantine_check(1 - omega, c0, 2, 300) == base


def test_diophantine_validation():
    with pytest.raises(ValueError):
        diophantine_check(0.3, 0.0)
    with pytest.raises(ValueError):
        diophantine_check(0.3, 0.1, mu=1.5)


# --- islands ---------------------------------------------------------------------------------------

def test_island_synthetic_chain():
    rng = np.random.default_rng(0)
    n = 700
    k = np.arange(n)
    blob = (3 * k) % 7
    ang = TWO_PI * blob / 7
    pts = np.column_stack([np.cos(ang), np.sin(ang)]) * 2.0 + rng.normal(scale=0.05, size=(n, 2))
    assert island_clusters(pts) == (7, 3)


def test_island_single_curve():
    assert island_clusters(rigid_rotation(GOLDEN, n=500)) == (1, 0)


def test_island_needs_points():
    with pytest.raises(ValueError):
        island_clusters(rigid_rotation(GOLDEN, n=50), k_max=12)


def test_island_chain_strong_coupling():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        orb = section_crossings(dy.nh_aa_flow(1.0), (0.0, 2.42, 0.0), THETA0, IntegratorSpec(TWO_PI / 1000, 1_000_000), 700)
    assert island_clusters(orb)[0] == 7


def test_hyperplane_observer_matches_refined_crossings():
    from thermolab.integrators import integrate
    from thermolab.sections import HyperplaneObserver

    flow = dy.nhc_averaged_flow()
    spec = IntegratorSpec(1e-3, 200_000)
    obs = HyperplaneObserver(2, 0.0)
    integrate(flow, (0.605, 0.0, 0.0), spec, [obs], keep=False)
    got = obs.orbit()
    ref = section_crossings(flow, (0.605, 0.0, 0.0), SectionSpec.hyperplane(2, 0.0), spec, len(got))
    assert len(got) > 50 and np.array_equal(got.directions, ref.directions)
    assert np.max(np.abs(got.points - ref.points)) < 1e-5
    assert np.max(np.abs(got.times - ref.times)) < 1e-5
