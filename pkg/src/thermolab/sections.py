"""Poincare sections, return maps, fixed points, rotation numbers and island chains."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

from .dynamics import TWO_PI, Flow
from .integrators import IntegrationError, IntegratorSpec, _rk4_inplace

ANGLE = 0
HYPERPLANE = 1
_DIRECTIONS = {"positive": 1, "negative": -1, "both": 0}

TRANSVERSAL_MIN = 1e-8
MAX_BISECTIONS = 60


@dataclass(frozen=True)
class SectionSpec:
    """Either ``y[index] = 0 mod 2*pi`` (angle) or ``y[index] = level`` (hyperplane)."""

    kind: str
    index: int
    level: float = 0.0
    direction: str = "positive"

    def __post_init__(self):
        if self.kind not in ("angle", "hyperplane"):
            raise ValueError(f"unknown section kind {self.kind!r}")
        if self.direction not in _DIRECTIONS:
            raise ValueError(f"direction must be one of {tuple(_DIRECTIONS)}, got {self.direction!r}")
        if self.index < 0:
            raise ValueError("section coordinate index must be non-negative")

    @classmethod
    def angle(cls, index: int = 0, direction: str = "positive") -> "SectionSpec":
        return cls("angle", index, 0.0, direction)

    @classmethod
    def hyperplane(cls, index: int, level: float = 0.0, direction: str = "both") -> "SectionSpec":
        return cls("hyperplane", index, level, direction)

    def check(self, dim: int) -> None:
        if self.index >= dim:
            raise ValueError(f"section index {self.index} out of range for a {dim}-dimensional flow")

    def embed(self, x) -> np.ndarray:
        """Full state on the section from its reduced coordinates."""
        x = np.asarray(x, dtype=float)
        return np.insert(x, self.index, 0.0 if self.kind == "angle" else self.level)


@dataclass
class PoincareOrbit:
    points: np.ndarray  # section coordinates (section variable removed)
    times: np.ndarray
    directions: np.ndarray  # +1 / -1
    states: np.ndarray  # full states at the crossings
    n_skipped: int = 0  # wrong-direction or tangential crossings
    n_tangential: int = 0
    complete: bool = True

    def __len__(self) -> int:
        return len(self.times)


@njit(cache=True, nogil=True)
def _crossings_kernel(rhs, y0, par, dt, max_steps, kind, idx, level, direction, tol, t0,
                      out_states, out_times, out_dirs):
    n = y0.size
    n_cross = out_times.size
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    dy = np.empty(n)
    ya = y0.copy()
    yb = y0.copy()
    ym = np.empty(n)
    best = np.empty(n)
    count = 0
    skipped = 0
    tangential = 0
    two_pi = 2.0 * math.pi
    for step in range(max_steps):
        yb[:] = ya
        _rk4_inplace(rhs, yb, par, dt, k1, k2, k3, k4, tmp)
        for v in yb:
            if not math.isfinite(v):
                return count, skipped, tangential, step + 1
        sgn = 0
        lev = level
        if kind == 0:
            ma = math.floor(ya[idx] / two_pi)
            mb = math.floor(yb[idx] / two_pi)
            if mb > ma:
                sgn = 1
                lev = two_pi * mb
            elif mb < ma:
                sgn = -1
                lev = two_pi * ma
        else:
            ga = ya[idx] - level
            gb = yb[idx] - level
            if ga < 0.0 and gb >= 0.0:
                sgn = 1
            elif ga > 0.0 and gb <= 0.0:
                sgn = -1
        if sgn != 0:
            ga = ya[idx] - lev
            lo = 0.0
            hi = dt
            best[:] = yb
            best_g = yb[idx] - lev
            best_s = dt
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                ym[:] = ya
                _rk4_inplace(rhs, ym, par, mid, k1, k2, k3, k4, tmp)
                gm = ym[idx] - lev
                if abs(gm) < abs(best_g):
                    best[:] = ym
                    best_g = gm
                    best_s = mid
                if abs(gm) < tol:
                    break
                if (gm < 0.0) == (ga < 0.0):
                    lo = mid
                else:
                    hi = mid
            rhs(best, par, dy)
            if abs(dy[idx]) < 1e-8:
                tangential += 1
                skipped += 1
            elif direction != 0 and sgn != direction:
                skipped += 1
            else:
                out_states[count, :] = best
                out_times[count] = t0 + step * dt + best_s
                out_dirs[count] = sgn
                count += 1
                if count == n_cross:
                    return count, skipped, tangential, -1
        ya[:] = yb
    return count, skipped, tangential, -1


def section_crossings(
    flow: Flow,
    state0,
    section: SectionSpec,
    spec: IntegratorSpec,
    n_crossings: int,
    tol: float = 1e-10,
    t0: float = 0.0,
) -> PoincareOrbit:
    """Integrate ``flow`` with RK4 and record up to ``n_crossings`` section crossings.

    Each crossing is refined by bisection of the bracketing step (re-integrated
    from the step start) until the section function is below ``tol``.
    ``spec.n_steps`` is the step budget; an orbit that runs out of budget is
    returned with ``complete=False`` and a warning.
    """
    if spec.scheme != "rk4":
        raise ValueError("section_crossings integrates with rk4")
    section.check(flow.dim)
    y0 = np.array(state0, dtype=np.float64).ravel()
    if y0.size != flow.dim:
        raise ValueError(f"{flow.name} expects a state of length {flow.dim}, got {y0.size}")
    states = np.empty((n_crossings, flow.dim))
    times = np.empty(n_crossings)
    dirs = np.empty(n_crossings, dtype=np.int64)
    count, skipped, tangential, bad = _crossings_kernel(
        flow.rhs, y0, flow.params, spec.dt, spec.n_steps,
        ANGLE if section.kind == "angle" else HYPERPLANE,
        section.index, float(section.level), _DIRECTIONS[section.direction],
        float(tol), float(t0), states, times, dirs,
    )
    if bad >= 0:
        raise IntegrationError(f"non-finite state at step {bad} of {flow.name}", step=bad)
    states, times, dirs = states[:count], times[:count], dirs[:count]
    complete = count == n_crossings
    if not complete:
        warnings.warn(
            f"{flow.name}: only {count} of {n_crossings} crossings within {spec.n_steps} steps",
            RuntimeWarning,
            stacklevel=2,
        )
    return PoincareOrbit(
        points=np.delete(states, section.index, axis=1),
        times=times,
        directions=dirs,
        states=states,
        n_skipped=int(skipped),
        n_tangential=int(tangential),
        complete=complete,
    )


class ReturnMap:
    """First-return map of a section; ``P(x)`` maps reduced coordinates to the next crossing.

    ``spec.n_steps`` bounds the integration budget of a single return.
    """

    def __init__(self, flow: Flow, section: SectionSpec, spec: IntegratorSpec, tol: float = 1e-10):
        section.check(flow.dim)
        self.flow = flow
        self.section = section
        self.spec = spec
        self.tol = tol

    def evaluate(self, x) -> tuple[np.ndarray, float]:
        """Next crossing and the return time."""
        y0 = self.section.embed(x)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            orb = section_crossings(self.flow, y0, self.section, self.spec, 1, tol=self.tol)
        if len(orb) == 0:
            raise IntegrationError(f"no return to the section from {np.asarray(x)} within {self.spec.n_steps} steps")
        return orb.points[0], float(orb.times[0])

    def return_time(self, x) -> float:
        return self.evaluate(x)[1]

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)[0]

    def iterate(self, x, n: int) -> np.ndarray:
        out = np.empty((n, len(np.atleast_1d(x))))
        for i in range(n):
            x = self(x)
            out[i] = x
        return out


def return_map(flow: Flow, section: SectionSpec, spec: IntegratorSpec, tol: float = 1e-10) -> ReturnMap:
    return ReturnMap(flow, section, spec, tol)


class HyperplaneObserver:
    """Hyperplane crossings of a sampled run, located by linear interpolation between samples.

    For streamed runs (e.g. splitting integrations) where re-integrating a
    bracketing step is not available. Accuracy is O(h^2) in the sample spacing.
    """

    def __init__(self, index: int, level: float = 0.0, direction: str = "both"):
        if direction not in _DIRECTIONS:
            raise ValueError(f"direction must be one of {tuple(_DIRECTIONS)}, got {direction!r}")
        self.index = index
        self.level = float(level)
        self.direction = _DIRECTIONS[direction]
        self._t = None
        self._y = None
        self._times: list[np.ndarray] = []
        self._states: list[np.ndarray] = []
        self._dirs: list[np.ndarray] = []

    def update(self, times: np.ndarray, states: np.ndarray) -> None:
        if len(times) == 0:
            return
        if self._y is not None:
            times = np.concatenate([[self._t], times])
            states = np.vstack([self._y, states])
        g = states[:, self.index] - self.level
        a, b = g[:-1], g[1:]
        up = (a < 0) & (b >= 0)
        down = (a > 0) & (b <= 0)
        mask = up | down if self.direction == 0 else (up if self.direction > 0 else down)
        i = np.nonzero(mask)[0]
        if i.size:
            w = a[i] / (a[i] - b[i])
            self._times.append(times[i] + w * (times[i + 1] - times[i]))
            self._states.append(states[i] + w[:, None] * (states[i + 1] - states[i]))
            self._dirs.append(np.where(up[i], 1, -1))
        self._t = float(times[-1])
        self._y = states[-1].copy()

    def orbit(self) -> PoincareOrbit:
        dim = 0 if self._y is None else self._y.size
        states = np.concatenate(self._states) if self._states else np.empty((0, dim))
        states[:, self.index] = self.level
        return PoincareOrbit(
            points=np.delete(states, self.index, axis=1),
            times=np.concatenate(self._times) if self._times else np.empty(0),
            directions=np.concatenate(self._dirs) if self._dirs else np.empty(0, dtype=np.int64),
            states=states,
        )


# ---------------------------------------------------------------------------
# fixed points

@dataclass
class FixedPointResult:
    location: np.ndarray
    residual: float
    jacobian: np.ndarray  # derivative of the map itself at the fixed point
    iterations: int


class FixedPointError(RuntimeError):
    pass


def _fd_jacobian(F: Callable, x: np.ndarray, h: float) -> np.ndarray:
    n = x.size
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (np.asarray(F(x + e)) - np.asarray(F(x - e))) / (2 * h)
    return J


def fixed_point(map_: Callable, guess, tol: float = 1e-9, h: float = 1e-6, max_iter: int = 50) -> FixedPointResult:
    """Newton iteration on ``P(x) - x`` with a central-difference Jacobian.

    Raises :class:`FixedPointError` if ``DP - I`` is numerically singular or
    the iteration does not reach ``|P(x) - x| < tol`` within ``max_iter`` steps.
    """
    x = np.array(guess, dtype=float)

    def F(z):
        return np.asarray(map_(z), dtype=float) - z

    for it in range(max_iter + 1):
        r = F(x)
        J = _fd_jacobian(F, x, h)
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e12:
            raise FixedPointError(f"Jacobian of P - I is singular at {x}")
        res = float(np.linalg.norm(r))
        if res < tol:
            return FixedPointResult(x, res, J + np.eye(x.size), it)
        x = x - np.linalg.solve(J, r)
    raise FixedPointError(f"Newton did not converge in {max_iter} iterations (residual {res:.3e})")


# ---------------------------------------------------------------------------
# rotation numbers

@dataclass
class RotationResult:
    omega: float
    stderr: float


def _points(orbit) -> np.ndarray:
    pts = orbit.points if isinstance(orbit, PoincareOrbit) else orbit
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2 or pts.shape[1] < 2:
        raise ValueError("expected an (n, 2) array of section points")
    return pts[:, :2]


def rotation_number(orbit, center) -> RotationResult:
    """Mean angular advance per iterate about ``center``, in turns.

    Polar angles are unwrapped (per-iterate advance must stay below half a
    turn) and the rotation number is the least-squares slope over ``2*pi``.
    """
    pts = _points(orbit)
    n = len(pts)
    if n < 50:
        raise ValueError(f"need at least 50 points for a rotation number, got {n}")
    d = pts - np.asarray(center, dtype=float)
    phi = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
    if abs(phi[-1] - phi[0]) < TWO_PI:
        raise ValueError("orbit does not wind around the center")
    k = np.arange(n, dtype=float)
    A = np.vstack([k, np.ones(n)]).T
    coef, *_ = np.linalg.lstsq(A, phi, rcond=None)
    resid = phi - A @ coef
    s2 = float(resid @ resid) / max(n - 2, 1)
    se = math.sqrt(s2 / float(((k - k.mean()) ** 2).sum()))
    return RotationResult(float(coef[0]) / TWO_PI, se / TWO_PI)


def diophantine_check(omega: float, c0: float, mu: float = 2.0, l_max: int = 10_000) -> bool:
    """``|l*omega - k| >= c0 / l**mu`` for all ``1 <= l <= l_max`` (nearest integer ``k``)."""
    if not c0 > 0:
        raise ValueError("c0 must be positive")
    if mu < 2:
        raise ValueError("mu must be at least 2")
    if l_max < 1:
        raise ValueError("l_max must be at least 1")
    ls = np.arange(1, int(l_max) + 1, dtype=float)
    lw = ls * omega
    dist = np.abs(lw - np.rint(lw))
    return bool(np.all(dist >= c0 / ls**mu))


# ---------------------------------------------------------------------------
# island chains

def _cluster_labels(angles: np.ndarray, k: int):
    """Cut the circle at the ``k`` widest gaps; returns labels and the gap separation ratio."""
    order = np.argsort(angles)
    a = angles[order]
    gaps = np.diff(np.concatenate([a, [a[0] + TWO_PI]]))
    cuts = np.sort(np.argsort(gaps)[-k:])  # gap i lies between a[i] and a[i+1]
    gsorted = np.sort(gaps)
    ratio = gsorted[-k] / max(gsorted[-k - 1], 1e-300) if len(gaps) > k else np.inf
    # sorted point j sits after (number of cuts below j) cuts
    sorted_labels = np.searchsorted(cuts, np.arange(len(a)), side="left") % k
    labels = np.empty(len(a), dtype=int)
    labels[order] = sorted_labels
    return labels, ratio


def island_clusters(orbit, k_max: int = 12, min_separation: float = 3.0) -> tuple[int, int]:
    """Smallest ``k`` for which the orbit splits into ``k`` angular clusters visited with a fixed stride.

    Points are clustered by polar angle about the orbit centroid, cutting at
    the ``k`` widest gaps; a split is accepted when those gaps exceed every
    other gap by ``min_separation`` and successive iterates always advance by
    the same number of clusters. Returns ``(1, 0)`` for a single curve.
    """
    pts = _points(orbit)
    if len(pts) < 10 * k_max:
        raise ValueError(f"need at least {10 * k_max} points for k_max={k_max}")
    d = pts - pts.mean(axis=0)
    angles = np.mod(np.arctan2(d[:, 1], d[:, 0]), TWO_PI)
    for k in range(2, k_max + 1):
        labels, ratio = _cluster_labels(angles, k)
        if ratio < min_separation:
            continue
        steps = np.mod(np.diff(labels), k)
        if np.all(steps == steps[0]) and math.gcd(int(steps[0]), k) == 1:
            return k, int(steps[0])
    return 1, 0
