"""Period function, twist and confinement for the averaged Nose-Hoover system.

In ``sigma = ln(tau)`` the averaged system is the planar Hamiltonian
``G = alpha^2/2 + V(sigma)`` with ``V(sigma) = e^sigma - 1 - sigma``, so the
period of the level curve ``G = g`` is

    T(g) = 2 * integral_{sigma-}^{sigma+} dsigma / sqrt(2 (g - V(sigma)))

between the two turning points ``V(sigma+-) = g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import hamiltonian_form_flow, potential_V
from .integrators import IntegratorSpec
from .sections import SectionSpec, section_crossings


@dataclass(frozen=True)
class PeriodSample:
    G: float
    T: float
    method: str


def _V(s: float) -> float:
    return math.expm1(s) - s


def _newton_root(G: float, a: float, b: float, start: float) -> float:
    """Root of ``V(s) = G`` in the sign-changing bracket ``[a, b]``.

    Newton from ``start``; any step leaving the current bracket is replaced by
    bisection.
    """
    fa = _V(a) - G
    s = start
    for _ in range(200):
        f = _V(s) - G
        if f == 0.0:
            return s
        if (f < 0) == (fa < 0):
            a, fa = s, f
        else:
            b = s
        d = math.expm1(s)
        nxt = s - f / d if d != 0.0 else math.nan
        if not (min(a, b) < nxt < max(a, b)):
            nxt = 0.5 * (a + b)
        if abs(nxt - s) <= 2.0 * math.ulp(s):
            return nxt
        s = nxt
    return s


def turning_points(G: float) -> tuple[float, float]:
    """``(sigma_minus, sigma_plus)`` with ``V(sigma_+-) = G``; requires ``G > 0``."""
    G = float(G)
    if not G > 0 or not math.isfinite(G):
        raise ValueError(f"turning points need G > 0, got {G!r}")
    left = -G - 1.0
    right = math.log(G + 2.0) + 1.0
    for _ in range(10):
        if _V(left) >= G:
            break
        left *= 2.0
    for _ in range(10):
        if _V(right) >= G:
            break
        right *= 2.0
    if _V(left) < G or _V(right) < G:
        raise ValueError(f"could not bracket the turning points for G={G}")
    return _newton_root(G, left, 0.0, left), _newton_root(G, 0.0, right, right)


def _gap(sigma: np.ndarray, d: np.ndarray) -> np.ndarray:
    """``V(sigma + d) - V(sigma)`` without cancellation for small ``d``."""
    return np.exp(sigma) * np.expm1(d) - d


def _period_integral(sm: float, sp: float, n: int) -> float:
    u, w = np.polynomial.legendre.leggauss(n)
    u = 0.5 * math.pi * u
    w = 0.5 * math.pi * w
    c = 0.5 * (sp + sm)
    h = 0.5 * (sp - sm)
    su = np.sin(u)
    sigma = c + h * su
    # measure the energy gap from the nearer turning point
    one_minus = 2.0 * np.sin(0.25 * math.pi - 0.5 * u) ** 2  # 1 - sin u
    one_plus = 2.0 * np.sin(0.25 * math.pi + 0.5 * u) ** 2  # 1 + sin u
    gap = np.where(su >= 0, _gap(sigma, h * one_minus), _gap(sigma, -h * one_plus))
    integrand = h * np.cos(u) / np.sqrt(2.0 * gap)
    return 2.0 * float(np.dot(w, integrand))


def period_quadrature(G: float, rtol: float = 1e-10, n0: int = 16, n_max: int = 4096) -> PeriodSample:
    """Period of the level curve ``G`` by Gauss-Legendre after ``sigma = c + h sin(u)``."""
    sm, sp = turning_points(G)
    n = n0
    T = _period_integral(sm, sp, n)
    while n < n_max:
        n *= 2
        T_new = _period_integral(sm, sp, n)
        if abs(T_new - T) <= rtol * abs(T_new):
            return PeriodSample(float(G), T_new, "quadrature")
        T = T_new
    raise ArithmeticError(f"period quadrature did not converge for G={G}")


def period_ode_oracle(G: float, rtol: float = 1e-9, dt0: float = 2 * math.pi / 500) -> PeriodSample:
    """Period from first-return time of the Hamiltonian form, started at ``(sigma+, 0)``.

    Independent of the quadrature: RK4 integration with the step halved
    until two successive periods agree to ``rtol``.
    """
    _, sp = turning_points(G)
    flow = hamiltonian_form_flow()
    section = SectionSpec.hyperplane(1, 0.0, "positive")
    prev = None
    dt = dt0
    for _ in range(12):
        budget = int(200.0 * (10.0 + G) / dt) + 10
        orb = section_crossings(flow, (sp, 0.0), section, IntegratorSpec(dt, budget), 1, tol=1e-14)
        T = float(orb.times[0])
        if prev is not None and abs(T - prev) <= rtol * T:
            return PeriodSample(float(G), T, "ode_oracle")
        prev = T
        dt *= 0.5
    raise ArithmeticError(f"ODE period oracle did not converge for G={G}")


def twist_check(G_grid, periods=None) -> tuple[bool, float]:
    """Strict monotonicity of ``T(G)`` on an increasing grid; margin is the smallest increment.

    ``periods`` may be supplied directly; otherwise they are computed by
    quadrature. A single point is vacuously monotone (margin ``inf``).
    """
    G = np.asarray(G_grid, dtype=float)
    if np.any(np.diff(G) <= 0):
        raise ValueError("G grid must be strictly increasing")
    if periods is None:
        periods = [period_quadrature(g).T for g in G]
    T = np.asarray(periods, dtype=float)
    if T.size < 2:
        return True, math.inf
    margin = float(np.min(np.diff(T)))
    return margin > 0, margin


def chicone_criterion(sigma):
    """``6 V V''^2 - 3 V'^2 V'' - 2 V V' V''`` (as printed, last factor V'')."""
    V, V1, V2 = potential_V(sigma)
    return 6 * V * V2**2 - 3 * V1**2 * V2 - 2 * V * V1 * V2


def chicone_criterion_third(sigma):
    """The same expression with ``V'''`` in the last term."""
    V, V1, V2 = potential_V(sigma)
    V3 = np.exp(sigma)
    return 6 * V * V2**2 - 3 * V1**2 * V2 - 2 * V * V1 * V3


# ---------------------------------------------------------------------------
# confinement

@dataclass
class ConfinementReport:
    tau_min: float
    tau_max: float
    qp_min: float
    qp_max: float
    n_samples: int
    horizon: float


class ConfinementObserver:
    """Running extrema of the oscillator action along a run.

    ``layout`` says where the action lives: ``"cartesian"`` for states
    starting with ``(q, p)``, or an integer index of ``tau`` in the state.
    """

    def __init__(self, layout: str | int = "cartesian"):
        if layout != "cartesian" and not isinstance(layout, int):
            raise ValueError("layout must be 'cartesian' or the index of tau")
        self.layout = layout
        self.qp_min = math.inf
        self.qp_max = -math.inf
        self.n = 0
        self.t_first = None
        self.t_last = None

    def update(self, times: np.ndarray, states: np.ndarray) -> None:
        if len(times) == 0:
            return
        if self.layout == "cartesian":
            qp = states[:, 0] ** 2 + states[:, 1] ** 2
        else:
            qp = 2.0 * states[:, self.layout]
        self.qp_min = min(self.qp_min, float(qp.min()))
        self.qp_max = max(self.qp_max, float(qp.max()))
        self.n += len(times)
        if self.t_first is None:
            self.t_first = float(times[0])
        self.t_last = float(times[-1])

    def merge(self, other: "ConfinementObserver") -> "ConfinementObserver":
        out = ConfinementObserver(self.layout)
        out.qp_min = min(self.qp_min, other.qp_min)
        out.qp_max = max(self.qp_max, other.qp_max)
        out.n = self.n + other.n
        firsts = [t for t in (self.t_first, other.t_first) if t is not None]
        lasts = [t for t in (self.t_last, other.t_last) if t is not None]
        out.t_first = min(firsts) if firsts else None
        out.t_last = max(lasts) if lasts else None
        return out

    def report(self) -> ConfinementReport:
        if self.n == 0:
            raise ValueError("no samples observed")
        return ConfinementReport(
            tau_min=0.5 * self.qp_min,
            tau_max=0.5 * self.qp_max,
            qp_min=self.qp_min,
            qp_max=self.qp_max,
            n_samples=self.n,
            horizon=self.t_last - self.t_first,
        )


def confinement(observer: ConfinementObserver) -> ConfinementReport:
    return observer.report()
