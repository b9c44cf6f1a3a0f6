import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermolab.ergodicity import (
    DiscrepancyCurve,
    DiscrepancyObserver,
    DistributionObserver,
    Histogram,
    KineticAverage,
    StarDiscrepancy,
    angle_radius,
    discrepancy_curve,
    distribution_error,
    histogram,
    kinetic_average,
    lms_fit,
    mean_curve,
    star_discrepancy,
    star_discrepancy_bruteforce,
    theo_amplitude_pdf,
    theo_angular_pdf,
    theo_cdf,
)

TWO_PI = 2 * math.pi


def rayleigh_quantile(u):
    return np.sqrt(-2.0 * np.log1p(-np.asarray(u)))


# --- reference distributions ------------------------------------------------------------------

def test_reference_pdfs():
    assert theo_angular_pdf(1.0) == pytest.approx(0.159155, abs=1e-6)
    assert theo_amplitude_pdf(0.0) == 0.0
    assert theo_amplitude_pdf(1.0) == pytest.approx(math.exp(-0.5))
    assert theo_amplitude_pdf(1.0) == pytest.approx(0.6065, abs=1e-4)


def test_theo_cdf_values():
    assert theo_cdf(TWO_PI, math.inf) == 1.0
    for r in (0.3, 1.0, 2.5):
        assert theo_cdf(math.pi, r) == pytest.approx(0.5 * (1 - math.exp(-r * r / 2)), rel=1e-15)
    assert theo_cdf(TWO_PI, 4.0) == pytest.approx(1 - math.exp(-8), rel=1e-15)
    assert theo_cdf(TWO_PI, 4.0) == pytest.approx(0.999665, abs=1e-6)


@given(st.floats(0, TWO_PI), st.floats(0, TWO_PI), st.floats(0, 6), st.floats(0, 6))
def test_theo_cdf_monotone(t1, t2, r1, r2):
    lo_t, hi_t = sorted((t1, t2))
    lo_r, hi_r = sorted((r1, r2))
    assert theo_cdf(lo_t, lo_r) <= theo_cdf(hi_t, lo_r) <= theo_cdf(hi_t, hi_r)
    assert theo_cdf(0.0, r1) == 0.0 and theo_cdf(t1, 0.0) == 0.0


def test_angle_radius_convention():
    theta, r = angle_radius(np.array([2.2, 0.0, -1.0]), np.array([0.0, -1.0, 0.0]))
    assert np.allclose(theta, [0.0, math.pi / 2, math.pi]) and np.allclose(r, [2.2, 1.0, 1.0])


# --- histograms ------------------------------------------------------------------------------------

def test_histogram_quantile_oracle():
    N, lo, hi, n_bins = 100_000, 0.0, 4.0, 100
    x = rayleigh_quantile((np.arange(1, N + 1) - 0.5) / N)
    h = histogram(x, lo, hi, n_bins)
    bw = (hi - lo) / n_bins
    r = np.linspace(0, 4, 40_001)
    f2 = np.max(np.abs((r**3 - 3 * r) * np.exp(-r * r / 2)))
    assert distribution_error(h, theo_amplitude_pdf) <= 1 / (N * bw) + bw**2 * f2 / 24


def test_histogram_empty():
    h = Histogram(0.0, TWO_PI, 100)
    assert distribution_error(h, theo_angular_pdf) == pytest.approx(1 / TWO_PI, rel=1e-15)
    h = Histogram(0.0, 4.0, 100)
    assert distribution_error(h, theo_amplitude_pdf) == pytest.approx(np.max(theo_amplitude_pdf(h.midpoints)))


def test_histogram_uniform():
    x = np.random.default_rng(0).uniform(0, TWO_PI, 1_000_000)
    assert distribution_error(histogram(x, 0.0, TWO_PI, 100), theo_angular_pdf) < 5e-3


def test_histogram_bookkeeping():
    h = histogram([-1.0, 0.0, 0.5, 1.0, 1.0, 2.0], 0.0, 1.0, 4)
    assert h.counts.tolist() == [1, 0, 1, 2]
    assert (h.total, h.below, h.above, h.in_range) == (6, 1, 1, 4)
    assert h.width * h.density().sum() == pytest.approx(4 / 6, rel=1e-15)
    assert h.width * h.density(renormalize=True).sum() == pytest.approx(1.0, rel=1e-15)
    for bad in [(1.0, 1.0, 4), (0.0, 1.0, 0)]:
        with pytest.raises(ValueError):
            Histogram(*bad)


@given(st.lists(st.floats(-1, 5, allow_nan=False), max_size=200), st.integers(1, 30))
@settings(max_examples=50)
def test_histogram_integrates_to_in_range_fraction(xs, n_bins):
    h = histogram(xs, 0.0, 4.0, n_bins)
    assert h.counts.sum() <= h.total
    if h.total:
        assert h.width * h.density().sum() == pytest.approx(h.in_range / h.total, rel=1e-12, abs=1e-15)


def test_histogram_merge_associative():
    rng = np.random.default_rng(1)
    parts = [histogram(rng.normal(size=50), -2, 2, 10) for _ in range(3)]
    a = parts[0].merge(parts[1]).merge(parts[2])
    b = parts[0].merge(parts[1].merge(parts[2]))
    assert np.array_equal(a.counts, b.counts) and (a.total, a.below, a.above) == (b.total, b.below, b.above)
    with pytest.raises(ValueError):
        parts[0].merge(Histogram(-2, 2, 11))


# --- star discrepancy -------------------------------------------------------------------------------

def test_single_sample_discrepancy():
    expected = 1.0 - theo_cdf(TWO_PI / 100, 4.0 / 100)
    assert star_discrepancy(np.array([[0.0, 0.0]])) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(1 - 7.9968e-6, abs=1e-9)


@given(st.lists(st.tuples(st.floats(0, TWO_PI, exclude_max=True), st.floats(0, 4)), min_size=1, max_size=60))
@settings(max_examples=60, deadline=None)
def test_discrepancy_bounds_and_permutation(samples):
    s = np.array(samples)
    d = star_discrepancy(s)
    assert 0.0 <= d <= 1.0
    assert star_discrepancy(s[::-1]) == d


@given(st.lists(st.tuples(st.floats(0, TWO_PI, exclude_max=True), st.floats(0, 4)), min_size=1, max_size=60),
       st.tuples(st.floats(0, TWO_PI, exclude_max=True), st.floats(0, 4)))
@settings(max_examples=60, deadline=None)
def test_adding_a_sample_moves_discrepancy_little(samples, extra):
    s = np.array(samples)
    d0 = star_discrepancy(s)
    d1 = star_discrepancy(np.vstack([s, extra]))
    assert abs(d1 - d0) <= 1.0 / (len(s) + 1) + 1e-15


def test_stratified_sample_has_low_discrepancy():
    m = 100
    u, v = np.meshgrid((np.arange(m) + 0.5) / m, (np.arange(m) + 0.5) / m)
    assert star_discrepancy((TWO_PI * u.ravel(), rayleigh_quantile(v.ravel()))) < 0.01


def test_discrepancy_matches_bruteforce():
    rng = np.random.default_rng(2)
    tg = TWO_PI * np.arange(1, 101) / 100
    rg = 4.0 * np.arange(1, 101) / 100
    for trial in range(10):
        n = int(rng.integers(1, 300))
        theta = rng.uniform(0, TWO_PI, n)
        r = rng.rayleigh(size=n) * 1.3
        # put some samples exactly on grid lines and beyond the cutoff
        k = rng.integers(0, n, size=max(1, n // 5))
        theta[k] = tg[rng.integers(0, 100, size=k.size)]
        r[k[::2]] = rg[rng.integers(0, 100, size=k[::2].size)]
        if rng.uniform() < 0.5:
            r[0] = 4.5
        s = (theta, r)
        assert star_discrepancy(s) == star_discrepancy_bruteforce(s)


def test_discrepancy_cutoff_and_merge():
    acc = StarDiscrepancy()
    acc.add([0.1, 0.2], [0.5, 4.5])
    assert acc.n == 1 and acc.n_excluded == 1
    other = StarDiscrepancy()
    other.add([1.0], [1.0])
    both = acc.merge(other)
    assert both.n == 2 and both.value() == star_discrepancy(([0.1, 1.0], [0.5, 1.0]))
    with pytest.raises(ValueError):
        StarDiscrepancy().value()
    with pytest.raises(ValueError):
        star_discrepancy(([0.3], [5.0]))


# --- power-law fits -------------------------------------------------------------------------------------

def test_lms_fit_exact_power_law():
    N = np.geomspace(1e3, 1e9, 13)
    fit = lms_fit(np.column_stack([N, 11.1 / N**0.483]))
    assert abs(fit.C - 11.1) < 1e-6 and abs(fit.a - 0.483) < 1e-6
    assert fit.a_err < 1e-10


def test_lms_fit_constant_and_errors():
    fit = lms_fit(DiscrepancyCurve([(10, 0.2), (100, 0.2), (1000, 0.2)]))
    assert fit.a == pytest.approx(0.0, abs=1e-12) and fit.C == pytest.approx(0.2)
    with pytest.raises(ValueError):
        lms_fit([(10, 0.2), (100, 0.1)])


def test_iid_discrepancy_decays_like_sqrt():
    rng = np.random.default_rng(3)

    def stream():
        for _ in range(16):
            yield (rng.uniform(0, TWO_PI, 62_500), rng.rayleigh(size=62_500))

    curve = discrepancy_curve(stream(), [10_000, 30_000, 100_000, 300_000, 1_000_000])
    assert curve.N.tolist() == [1e4, 3e4, 1e5, 3e5, 1e6]
    assert 0.4 <= curve.fit.a <= 0.6


def test_discrepancy_observer_checkpoints_span_chunks():
    rng = np.random.default_rng(4)
    theta, r = rng.uniform(0, TWO_PI, 1000), rng.rayleigh(size=1000)
    obs = DiscrepancyObserver([7, 250, 999])
    for a in range(0, 1000, 128):
        obs.add(theta[a:a + 128], r[a:a + 128])
    for n, d in obs.curve.entries:
        assert d == star_discrepancy((theta[:n], r[:n]))


def test_mean_curve():
    a = DiscrepancyCurve([(10, 0.4), (100, 0.2), (1000, 0.1)])
    b = DiscrepancyCurve([(10, 0.2), (100, 0.1), (1000, 0.05)])
    m = mean_curve([a, b])
    assert np.allclose(m.D, [0.3, 0.15, 0.075]) and m.fit.a == pytest.approx(math.log10(2), abs=1e-12)
    with pytest.raises(ValueError):
        mean_curve([a, DiscrepancyCurve([(10, 0.4), (100, 0.2), (999, 0.1)])])


# --- run observers ----------------------------------------------------------------------------------------

def test_kinetic_average_constant():
    obs = KineticAverage()
    obs.update(np.arange(10.0), np.tile([0.3, 1.0, 0.0], (10, 1)))
    assert kinetic_average(obs) == 1.0


def test_kinetic_average_harmonic():
    # exact oscillator from (sqrt 2, 0): p^2 = 2 sin^2 t averages to tau = 1 over whole periods
    n = 3 * 1000
    t = np.linspace(0, 3 * TWO_PI, n + 1)
    states = np.column_stack([math.sqrt(2) * np.cos(t), -math.sqrt(2) * np.sin(t)])
    obs = KineticAverage()
    for a in range(0, n + 1, 777):
        obs.update(t[a:a + 777], states[a:a + 777])
    assert kinetic_average(obs) == pytest.approx(1.0, abs=1e-12)


def test_distribution_observer():
    obs = DistributionObserver()
    obs.update(None, np.array([[1.0, 0.0, 0.0], [2 * math.cos(1.0), -2 * math.sin(1.0), 0.0], [5.0, 0.0, 0.0]]))
    assert obs.angular.total == 3 and obs.amplitude.above == 1
    assert obs.angular.counts[0] == 2 and obs.angular.counts[15] == 1
    assert obs.amplitude.counts[25] == 1 and obs.amplitude.counts[50] == 1
