"""Statistical diagnostics against the canonical distribution of the oscillator.

At beta = 1 the Gibbs measure of the harmonic oscillator gives a uniform
phase ``theta`` on ``[0, 2*pi)`` and a Rayleigh amplitude
``r = sqrt(q^2 + p^2)`` with density ``r exp(-r^2/2)``. All accumulators here
are streaming observers with O(1) memory in the run length; histogram and
discrepancy accumulators merge by adding counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .dynamics import TWO_PI

R_CUTOFF = 4.0


def theo_angular_pdf(theta):
    theta = np.asarray(theta, dtype=float)
    out = np.where((theta >= 0) & (theta <= TWO_PI), 1.0 / TWO_PI, 0.0)
    return float(out) if out.ndim == 0 else out


def theo_amplitude_pdf(r):
    r = np.asarray(r, dtype=float)
    out = np.where(r >= 0, r * np.exp(-0.5 * r * r), 0.0)
    return float(out) if out.ndim == 0 else out


def theo_cdf(theta, r):
    """``P(Theta <= theta, R <= r) = (theta / 2 pi) (1 - exp(-r^2/2))``."""
    th = np.clip(np.asarray(theta, dtype=float), 0.0, TWO_PI)
    r = np.maximum(np.asarray(r, dtype=float), 0.0)
    out = (th / TWO_PI) * -np.expm1(-0.5 * r * r)
    return float(out) if out.ndim == 0 else out


def angle_radius(q, p):
    """Oscillator phase in ``[0, 2*pi)`` (same convention as the action-angle map) and amplitude."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    theta = np.mod(np.arctan2(-p, q), TWO_PI)
    theta = np.where(theta >= TWO_PI, 0.0, theta)
    return theta, np.hypot(q, p)


# ---------------------------------------------------------------------------
# histograms

@dataclass
class Histogram:
    """Equal-width bins on ``[lo, hi]``; out-of-range samples are tallied separately."""

    lo: float
    hi: float
    n_bins: int
    counts: np.ndarray = None
    total: int = 0
    below: int = 0
    above: int = 0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"need hi > lo, got [{self.lo}, {self.hi}]")
        if int(self.n_bins) < 1:
            raise ValueError("need at least one bin")
        self.n_bins = int(self.n_bins)
        if self.counts is None:
            self.counts = np.zeros(self.n_bins, dtype=np.int64)

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.n_bins

    @property
    def edges(self) -> np.ndarray:
        return self.lo + self.width * np.arange(self.n_bins + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.lo + self.width * (np.arange(self.n_bins) + 0.5)

    @property
    def in_range(self) -> int:
        return int(self.counts.sum())

    def add(self, samples) -> None:
        x = np.asarray(samples, dtype=float).ravel()
        self.total += x.size
        lo_mask = x < self.lo
        hi_mask = x > self.hi
        self.below += int(lo_mask.sum())
        self.above += int(hi_mask.sum())
        x = x[~(lo_mask | hi_mask)]
        idx = np.floor((x - self.lo) / self.width).astype(np.int64)
        np.minimum(idx, self.n_bins - 1, out=idx)
        self.counts += np.bincount(idx, minlength=self.n_bins)

    def merge(self, other: "Histogram") -> "Histogram":
        if (self.lo, self.hi, self.n_bins) != (other.lo, other.hi, other.n_bins):
            raise ValueError("cannot merge histograms with different binning")
        return Histogram(self.lo, self.hi, self.n_bins, self.counts + other.counts,
                         self.total + other.total, self.below + other.below, self.above + other.above)

    def density(self, renormalize: bool = False) -> np.ndarray:
        """``count / (N * width)`` with ``N`` the total sample count, or the in-range count."""
        n = self.in_range if renormalize else self.total
        if n == 0:
            return np.zeros(self.n_bins)
        return self.counts / (n * self.width)


def histogram(samples, lo: float, hi: float, n_bins: int) -> Histogram:
    h = Histogram(lo, hi, n_bins)
    h.add(samples)
    return h


def distribution_error(h: Histogram, pdf: Callable, renormalize: bool = False) -> float:
    """Sup over bins of ``|density - pdf(midpoint)|``."""
    return float(np.max(np.abs(h.density(renormalize) - np.asarray(pdf(h.midpoints), dtype=float))))


# ---------------------------------------------------------------------------
# star discrepancy

def discrepancy_grid(grid_n: int = 100, r_c: float = R_CUTOFF) -> tuple[np.ndarray, np.ndarray]:
    """Anchor corners ``theta_k = 2 k pi / n`` and ``r_l = l r_c / n`` for ``1 <= k, l <= n``."""
    k = np.arange(1, grid_n + 1, dtype=float)
    return TWO_PI * k / grid_n, r_c * k / grid_n


class StarDiscrepancy:
    """Accumulates ``(theta, r)`` samples on the anchored-box grid.

    ``counts[i, j]`` holds samples whose smallest enclosing grid corner is
    ``(theta_i, r_j)``; index ``n`` means beyond the last corner. Samples with
    ``r > r_c`` are excluded (and counted in ``n_excluded``). Box ``[0,y]`` is
    closed, so ties on grid lines count as inside.
    """

    def __init__(self, grid_n: int = 100, r_c: float = R_CUTOFF):
        if grid_n < 1 or not r_c > 0:
            raise ValueError("grid_n must be >= 1 and r_c > 0")
        self.grid_n = int(grid_n)
        self.r_c = float(r_c)
        self.theta_grid, self.r_grid = discrepancy_grid(self.grid_n, self.r_c)
        self.counts = np.zeros((self.grid_n + 1, self.grid_n + 1), dtype=np.int64)
        self.n_excluded = 0

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def add(self, theta, r) -> None:
        theta = np.asarray(theta, dtype=float).ravel()
        r = np.asarray(r, dtype=float).ravel()
        keep = r <= self.r_c
        self.n_excluded += int(keep.size - keep.sum())
        i = np.searchsorted(self.theta_grid, theta[keep], side="left")
        j = np.searchsorted(self.r_grid, r[keep], side="left")
        m = self.grid_n + 1
        self.counts += np.bincount(i * m + j, minlength=m * m).reshape(m, m)

    def merge(self, other: "StarDiscrepancy") -> "StarDiscrepancy":
        if (self.grid_n, self.r_c) != (other.grid_n, other.r_c):
            raise ValueError("cannot merge discrepancy accumulators with different grids")
        out = StarDiscrepancy(self.grid_n, self.r_c)
        out.counts = self.counts + other.counts
        out.n_excluded = self.n_excluded + other.n_excluded
        return out

    def value(self) -> float:
        n = self.n
        if n == 0:
            raise ValueError("star discrepancy of an empty sample")
        n_grid = self.grid_n
        empirical = self.counts.cumsum(axis=0).cumsum(axis=1)[:n_grid, :n_grid] / n
        theo = theo_cdf(self.theta_grid[:, None], self.r_grid[None, :])
        return float(np.max(np.abs(empirical - theo)))


def _theta_r(samples) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(samples, tuple) and len(samples) == 2:
        theta, r = samples
    else:
        arr = np.asarray(samples, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("samples must be an (N, 2) array of (theta, r) or a (theta, r) tuple")
        theta, r = arr[:, 0], arr[:, 1]
    return np.asarray(theta, dtype=float).ravel(), np.asarray(r, dtype=float).ravel()


def star_discrepancy(samples, grid_n: int = 100, r_c: float = R_CUTOFF) -> float:
    """Grid-restricted star discrepancy of ``(theta, r)`` samples against the Gibbs CDF."""
    theta, r = _theta_r(samples)
    acc = StarDiscrepancy(grid_n, r_c)
    acc.add(theta, r)
    return acc.value()


def star_discrepancy_bruteforce(samples, grid_n: int = 100, r_c: float = R_CUTOFF) -> float:
    """Reference implementation: count every sample against every grid box, O(N grid_n^2)."""
    theta, r = _theta_r(samples)
    keep = r <= r_c
    theta, r = theta[keep], r[keep]
    if theta.size == 0:
        raise ValueError("star discrepancy of an empty sample")
    tg, rg = discrepancy_grid(grid_n, r_c)
    worst = 0.0
    for k in range(grid_n):
        in_theta = theta <= tg[k]
        for l in range(grid_n):
            frac = np.count_nonzero(in_theta & (r <= rg[l])) / theta.size
            worst = max(worst, abs(frac - theo_cdf(tg[k], rg[l])))
    return float(worst)


# ---------------------------------------------------------------------------
# discrepancy decay

@dataclass
class PowerLawFit:
    """``D ~ C / N**a`` from least squares on ``log D = log C - a log N``."""

    C: float
    a: float
    C_err: float
    a_err: float


@dataclass
class DiscrepancyCurve:
    entries: list[tuple[int, float]] = field(default_factory=list)
    fit: PowerLawFit | None = None

    @property
    def N(self) -> np.ndarray:
        return np.array([e[0] for e in self.entries], dtype=float)

    @property
    def D(self) -> np.ndarray:
        return np.array([e[1] for e in self.entries], dtype=float)


def lms_fit(curve) -> PowerLawFit:
    """Least-squares power law through ``(N, D)`` pairs in log-log coordinates."""
    if isinstance(curve, DiscrepancyCurve):
        N, D = curve.N, curve.D
    else:
        arr = np.asarray(curve, dtype=float)
        N, D = arr[:, 0], arr[:, 1]
    if N.size < 3:
        raise ValueError("need at least 3 checkpoints for a power-law fit")
    x = np.log(N)
    y = np.log(D)
    A = np.vstack([np.ones_like(x), -x]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(N.size - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    logC, a = coef
    C = math.exp(logC)
    return PowerLawFit(C, float(a), C * math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1]))


class DiscrepancyObserver:
    """Star discrepancy of the ``(theta, r)`` stream of a Cartesian run at sample-count checkpoints."""

    def __init__(self, checkpoints: Iterable[int], grid_n: int = 100, r_c: float = R_CUTOFF):
        self.checkpoints = sorted(int(c) for c in checkpoints)
        if not self.checkpoints or self.checkpoints[0] < 1:
            raise ValueError("checkpoints must be positive sample counts")
        self.acc = StarDiscrepancy(grid_n, r_c)
        self.seen = 0
        self.curve = DiscrepancyCurve()
        self._next = 0

    def add(self, theta: np.ndarray, r: np.ndarray) -> None:
        start = 0
        n = theta.size
        while start < n:
            if self._next < len(self.checkpoints):
                stop = min(n, start + self.checkpoints[self._next] - self.seen)
            else:
                stop = n
            self.acc.add(theta[start:stop], r[start:stop])
            self.seen += stop - start
            start = stop
            if self._next < len(self.checkpoints) and self.seen == self.checkpoints[self._next]:
                self.curve.entries.append((self.seen, self.acc.value()))
                self._next += 1

    def update(self, times: np.ndarray, states: np.ndarray) -> None:
        theta, r = angle_radius(states[:, 0], states[:, 1])
        self.add(theta, r)


def discrepancy_curve(sample_stream, N_checkpoints, grid_n: int = 100, r_c: float = R_CUTOFF) -> DiscrepancyCurve:
    """Discrepancy of each prefix of a stream of ``(theta, r)`` chunks at the given sample counts.

    The fit is attached when at least three checkpoints are reached.
    """
    obs = DiscrepancyObserver(N_checkpoints, grid_n, r_c)
    for chunk in sample_stream:
        theta, r = _theta_r(chunk)
        obs.add(theta, r)
        if obs._next == len(obs.checkpoints):
            break
    curve = obs.curve
    if len(curve.entries) >= 3:
        curve.fit = lms_fit(curve)
    return curve


def mean_curve(curves: list[DiscrepancyCurve]) -> DiscrepancyCurve:
    """Pointwise mean over runs sharing the same checkpoints."""
    if not curves:
        raise ValueError("no curves to average")
    Ns = curves[0].N
    for c in curves[1:]:
        if not np.array_equal(c.N, Ns):
            raise ValueError("curves have different checkpoints")
    D = np.mean([c.D for c in curves], axis=0)
    out = DiscrepancyCurve([(int(n), float(d)) for n, d in zip(Ns, D)])
    if len(out.entries) >= 3:
        out.fit = lms_fit(out)
    return out


# ---------------------------------------------------------------------------
# observers for Cartesian runs

class DistributionObserver:
    """Phase and amplitude histograms of a Cartesian ``(q, p, ...)`` run."""

    def __init__(self, n_bins: int = 100, r_c: float = R_CUTOFF):
        self.angular = Histogram(0.0, TWO_PI, n_bins)
        self.amplitude = Histogram(0.0, r_c, n_bins)

    def update(self, times: np.ndarray, states: np.ndarray) -> None:
        theta, r = angle_radius(states[:, 0], states[:, 1])
        self.angular.add(theta)
        self.amplitude.add(r)


class KineticAverage:
    """Running time average of ``p**2`` (trapezoid rule on uniformly spaced samples)."""

    def __init__(self, index: int = 1):
        self.index = index
        self.sum = 0.0
        self.first = None
        self.last = None
        self.n = 0

    def update(self, times: np.ndarray, states: np.ndarray) -> None:
        if len(times) == 0:
            return
        k = states[:, self.index] ** 2
        if self.first is None:
            self.first = float(k[0])
        self.last = float(k[-1])
        self.sum += float(k.sum())
        self.n += k.size

    @property
    def value(self) -> float:
        if self.n == 0:
            raise ValueError("no samples observed")
        if self.n == 1:
            return self.first
        return (self.sum - 0.5 * (self.first + self.last)) / (self.n - 1)


def kinetic_average(observer: KineticAverage) -> float:
    return observer.value
