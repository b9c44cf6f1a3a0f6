"""Vector fields, coordinate changes, invariant densities and first integrals.

Every field exists in two forms: a numba kernel ``_xxx_rhs(y, par, dy)`` that
writes the derivative of the flat state ``y`` into ``dy`` (used by the
integrators and section locators), and a public function taking the typed
state tuple. The public functions call the kernels, so both paths are
bitwise identical.

The harmonic-oscillator fields use m = 1 and beta = 1 and are parametrised by
the coupling ``eps = 1/sqrt(Q)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


class PhysState(NamedTuple):
    q: float
    p: float
    xi: float


class ChainState(NamedTuple):
    q: float
    p: float
    xi1: float
    xi2: float


class AAState(NamedTuple):
    theta: float
    tau: float
    alpha: float


class AAChainState(NamedTuple):
    theta: float
    tau: float
    alpha1: float
    alpha2: float


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not eps > 0.0 or not math.isfinite(eps):
        raise ValueError(f"coupling eps must be positive and finite, got {eps!r}")
    return eps


def eps_from_Q(Q: float) -> float:
    """Coupling constant for a thermostat mass ``Q``."""
    if not Q > 0:
        raise ValueError(f"thermostat mass must be positive, got {Q!r}")
    return 1.0 / math.sqrt(Q)


# ---------------------------------------------------------------------------
# numba kernels: rhs(y, par, dy)

@njit(cache=True, nogil=True)
def _nh_rhs(y, par, dy):
    e2 = par[0] * par[0]
    q, p, xi = y[0], y[1], y[2]
    dy[0] = p
    dy[1] = -q - e2 * xi * p
    dy[2] = p * p - 1.0


@njit(cache=True, nogil=True)
def _nhc_rhs(y, par, dy):
    e2 = par[0] * par[0]
    q, p, x1, x2 = y[0], y[1], y[2], y[3]
    dy[0] = p
    dy[1] = -q - e2 * p * x1
    dy[2] = p * p - 1.0 - e2 * x1 * x2
    dy[3] = e2 * x1 * x1 - 1.0


@njit(cache=True, nogil=True)
def _nh_aa_rhs(y, par, dy):
    e = par[0]
    s = math.sin(y[0])
    c = math.cos(y[0])
    tau, a = y[1], y[2]
    dy[0] = 1.0 - e * a * s * c
    dy[1] = -2.0 * e * tau * a * s * s
    dy[2] = e * (2.0 * tau * s * s - 1.0)


@njit(cache=True, nogil=True)
def _nhc_aa_rhs(y, par, dy):
    e = par[0]
    s = math.sin(y[0])
    c = math.cos(y[0])
    tau, a1, a2 = y[1], y[2], y[3]
    dy[0] = 1.0 - e * a1 * s * c
    dy[1] = -2.0 * e * tau * a1 * s * s
    dy[2] = e * (2.0 * tau * s * s - 1.0 - a1 * a2)
    dy[3] = e * (a1 * a1 - 1.0)


@njit(cache=True, nogil=True)
def _nh_avg1_rhs(y, par, dy):
    e = par[0]
    s = math.sin(y[0])
    c = math.cos(y[0])
    tau, a = y[1], y[2]
    dy[0] = 1.0 - e * a * s * c
    dy[1] = -e * tau * a
    dy[2] = e * (tau - 1.0)


@njit(cache=True, nogil=True)
def _nh_averaged_rhs(y, par, dy):
    dy[0] = -y[0] * y[1]
    dy[1] = y[0] - 1.0


@njit(cache=True, nogil=True)
def _nhc_averaged_rhs(y, par, dy):
    tau, a1, a2 = y[0], y[1], y[2]
    dy[0] = -tau * a1
    dy[1] = tau - 1.0 - a1 * a2
    dy[2] = a1 * a1 - 1.0


@njit(cache=True, nogil=True)
def _hamiltonian_form_rhs(y, par, dy):
    dy[0] = -y[1]
    dy[1] = math.expm1(y[0])


@dataclass(eq=False)
class Flow:
    """An autonomous vector field packaged for the compiled integrators.

    ``rhs`` is a numba kernel with signature ``rhs(y, par, dy)``; ``splitting``
    (optional) advances ``y`` in place by one reversible splitting step,
    ``splitting(y, par, dt)``.
    """

    name: str
    rhs: Callable
    dim: int
    params: np.ndarray = field(default_factory=lambda: np.zeros(1))
    splitting: Callable | None = None

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.ndim != 1 or self.params.size == 0:
            self.params = np.zeros(1)

    def __call__(self, y) -> np.ndarray:
        y = np.ascontiguousarray(y, dtype=np.float64)
        if y.shape != (self.dim,):
            raise ValueError(f"{self.name}: expected state of length {self.dim}, got shape {y.shape}")
        dy = np.empty(self.dim)
        self.rhs(y, self.params, dy)
        return dy


def _eval(rhs, y, par, dim) -> np.ndarray:
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.shape != (dim,):
        raise ValueError(f"expected a state of length {dim}, got shape {y.shape}")
    dy = np.empty(dim)
    rhs(y, np.array([par], dtype=np.float64), dy)
    return dy


# ---------------------------------------------------------------------------
# public field evaluators

def nh_field(s: Sequence[float], eps: float) -> PhysState:
    """Nose-Hoover harmonic oscillator, ``(q', p', xi') = (p, -q - eps^2 xi p, p^2 - 1)``."""
    return PhysState(*_eval(_nh_rhs, s, _check_eps(eps), 3).tolist())


def nhc_field(s: Sequence[float], eps: float) -> ChainState:
    """Two-thermostat chain on the harmonic oscillator with ``Q1 = Q2 = 1/eps^2``."""
    return ChainState(*_eval(_nhc_rhs, s, _check_eps(eps), 4).tolist())


def nh_aa_field(s: Sequence[float], eps: float) -> AAState:
    """Nose-Hoover field in action-angle variables ``(theta, tau, alpha = eps*xi)``."""
    return AAState(*_eval(_nh_aa_rhs, s, _check_eps(eps), 3).tolist())


def nhc_aa_field(s: Sequence[float], eps: float) -> AAChainState:
    return AAChainState(*_eval(_nhc_aa_rhs, s, _check_eps(eps), 4).tolist())


def nh_avg_firstorder_field(s: Sequence[float], eps: float) -> AAState:
    """First-order averaged field in the hatted variables, O(eps^2) remainder dropped."""
    return AAState(*_eval(_nh_avg1_rhs, s, _check_eps(eps), 3).tolist())


def nh_averaged_field(tau: float, alpha: float) -> tuple[float, float]:
    """Averaged Nose-Hoover system in slow time: ``tau' = -tau*alpha``, ``alpha' = tau - 1``."""
    d = _eval(_nh_averaged_rhs, (tau, alpha), 0.0, 2)
    return float(d[0]), float(d[1])


def nhc_averaged_field(tau: float, alpha1: float, alpha2: float) -> tuple[float, float, float]:
    d = _eval(_nhc_averaged_rhs, (tau, alpha1, alpha2), 0.0, 3)
    return float(d[0]), float(d[1]), float(d[2])


def hamiltonian_form_field(sigma: float, alpha: float) -> tuple[float, float]:
    """Averaged system in ``sigma = ln(tau)``: ``sigma' = -alpha``, ``alpha' = e^sigma - 1``."""
    d = _eval(_hamiltonian_form_rhs, (sigma, alpha), 0.0, 2)
    return float(d[0]), float(d[1])


# ---------------------------------------------------------------------------
# flows for the compiled integrators

def nh_flow(eps: float) -> Flow:
    from .integrators import _nh_split

    return Flow("nh", _nh_rhs, 3, np.array([_check_eps(eps)]), _nh_split)


def nhc_flow(eps: float) -> Flow:
    from .integrators import _nhc_split

    return Flow("nhc", _nhc_rhs, 4, np.array([_check_eps(eps)]), _nhc_split)


def nh_aa_flow(eps: float) -> Flow:
    return Flow("nh_aa", _nh_aa_rhs, 3, np.array([_check_eps(eps)]))


def nhc_aa_flow(eps: float) -> Flow:
    return Flow("nhc_aa", _nhc_aa_rhs, 4, np.array([_check_eps(eps)]))


def nh_avg_firstorder_flow(eps: float) -> Flow:
    return Flow("nh_avg1", _nh_avg1_rhs, 3, np.array([_check_eps(eps)]))


def nh_averaged_flow() -> Flow:
    return Flow("nh_averaged", _nh_averaged_rhs, 2)


def nhc_averaged_flow() -> Flow:
    return Flow("nhc_averaged", _nhc_averaged_rhs, 3)


def hamiltonian_form_flow() -> Flow:
    return Flow("hamiltonian_form", _hamiltonian_form_rhs, 2)


# ---------------------------------------------------------------------------
# general N-dimensional thermostats

@dataclass
class GeneralSystem:
    """Particles in a potential coupled to a Nose-Hoover thermostat or chain.

    ``nM`` counts all degrees of freedom; ``masses`` is broadcast to that
    length. ``thermostat_masses`` has one entry for plain Nose-Hoover and
    ``M_ext`` entries for a chain.
    """

    nM: int
    potential: Callable[[np.ndarray], float]
    potential_gradient: Callable[[np.ndarray], np.ndarray]
    masses: Sequence[float] | float = 1.0
    beta: float = 1.0
    thermostat_masses: Sequence[float] = (1.0,)

    def __post_init__(self):
        if int(self.nM) < 1:
            raise ValueError("nM must be at least 1")
        self.nM = int(self.nM)
        self.masses = np.broadcast_to(np.asarray(self.masses, dtype=float), (self.nM,)).copy()
        self.thermostat_masses = np.atleast_1d(np.asarray(self.thermostat_masses, dtype=float))
        if np.any(self.masses <= 0):
            raise ValueError("particle masses must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.thermostat_masses.size < 1 or np.any(self.thermostat_masses <= 0):
            raise ValueError("thermostat masses must be positive (at least one)")
        self.check_gradient(np.full(self.nM, 0.3))

    @property
    def M_ext(self) -> int:
        return int(self.thermostat_masses.size)

    def check_gradient(self, q: np.ndarray, h: float = 1e-6, rtol: float = 1e-5) -> None:
        """Compare ``potential_gradient`` with central differences of ``potential``."""
        q = np.asarray(q, dtype=float)
        g = np.asarray(self.potential_gradient(q), dtype=float)
        fd = np.empty(self.nM)
        for i in range(self.nM):
            e = np.zeros(self.nM)
            e[i] = h
            fd[i] = (self.potential(q + e) - self.potential(q - e)) / (2 * h)
        if g.shape != (self.nM,) or not np.allclose(g, fd, rtol=rtol, atol=rtol):
            raise ValueError(f"potential_gradient inconsistent with potential at q={q}: {g} vs {fd}")

    def hamiltonian(self, q, p) -> float:
        p = np.asarray(p, dtype=float)
        return float(np.sum(p * p / self.masses) / 2 + self.potential(np.asarray(q, dtype=float)))


def harmonic_system(nM: int = 1, **kw) -> GeneralSystem:
    return GeneralSystem(
        nM,
        potential=lambda q: 0.5 * float(np.dot(q, q)),
        potential_gradient=lambda q: np.array(q, dtype=float),
        **kw,
    )


def _split_qp(q, p, sys: GeneralSystem):
    q = np.atleast_1d(np.asarray(q, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if q.shape != (sys.nM,) or p.shape != (sys.nM,):
        raise ValueError(f"q and p must have length nM={sys.nM}, got {q.shape} and {p.shape}")
    return q, p


def nh_field_general(q, p, xi: float, sys: GeneralSystem):
    """Nose-Hoover field for a general system; uses ``sys.thermostat_masses[0]``."""
    q, p = _split_qp(q, p, sys)
    Q = sys.thermostat_masses[0]
    qdot = p / sys.masses
    pdot = -np.asarray(sys.potential_gradient(q), dtype=float) - (xi / Q) * p
    xidot = float(np.sum(p * p / sys.masses) - sys.nM / sys.beta)
    return qdot, pdot, xidot


def nhc_field_general(q, p, xis, sys: GeneralSystem):
    """Nose-Hoover chain field; the chain length is ``len(xis)``."""
    q, p = _split_qp(q, p, sys)
    xis = np.atleast_1d(np.asarray(xis, dtype=float))
    M = xis.size
    if M < 1:
        raise ValueError("a thermostat chain needs at least one thermostat")
    if sys.M_ext != M:
        raise ValueError(f"system has {sys.M_ext} thermostat masses but {M} thermostat momenta given")
    Qs = sys.thermostat_masses
    kT = 1.0 / sys.beta
    qdot = p / sys.masses
    pdot = -np.asarray(sys.potential_gradient(q), dtype=float) - (xis[0] / Qs[0]) * p
    xidot = np.empty(M)
    for j in range(M):
        drive = np.sum(p * p / sys.masses) - sys.nM * kT if j == 0 else xis[j - 1] ** 2 / Qs[j - 1] - kT
        friction = (xis[j + 1] / Qs[j + 1]) * xis[j] if j + 1 < M else 0.0
        xidot[j] = drive - friction
    return qdot, pdot, xidot


# ---------------------------------------------------------------------------
# action-angle variables

def to_action_angle(q, p):
    """``(q, p) -> (theta, tau)`` with ``theta`` in ``[0, 2*pi)``; undefined at the origin."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any((q == 0.0) & (p == 0.0)):
        raise ValueError("the angle is undefined at (q, p) = (0, 0)")
    tau = 0.5 * (q * q + p * p)
    theta = np.mod(np.arctan2(-p, q), TWO_PI)
    theta = np.where(theta >= TWO_PI, 0.0, theta)
    if theta.ndim == 0:
        return float(theta), float(tau)
    return theta, tau


def from_action_angle(theta, tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("action tau must be non-negative")
    r = np.sqrt(2.0 * tau)
    q = r * np.cos(theta)
    p = -r * np.sin(theta)
    if np.ndim(q) == 0:
        return float(q), float(p)
    return q, p


def phys_to_aa(s: Sequence[float], eps: float) -> AAState:
    theta, tau = to_action_angle(s[0], s[1])
    return AAState(theta, tau, _check_eps(eps) * s[2])


def aa_to_phys(s: Sequence[float], eps: float) -> PhysState:
    q, p = from_action_angle(s[0], s[1])
    return PhysState(q, p, s[2] / _check_eps(eps))


def chain_to_aa(s: Sequence[float], eps: float) -> AAChainState:
    theta, tau = to_action_angle(s[0], s[1])
    eps = _check_eps(eps)
    return AAChainState(theta, tau, eps * s[2], eps * s[3])


def aa_to_chain(s: Sequence[float], eps: float) -> ChainState:
    q, p = from_action_angle(s[0], s[1])
    eps = _check_eps(eps)
    return ChainState(q, p, s[2] / eps, s[3] / eps)


# ---------------------------------------------------------------------------
# first integral and potential of the averaged system

def potential_V(sigma):
    """``V(sigma) = e^sigma - 1 - sigma`` and its first two derivatives."""
    em1 = np.expm1(sigma)
    V = em1 - sigma
    if np.ndim(V) == 0:
        return float(V), float(em1), float(em1 + 1.0)
    return V, em1, em1 + 1.0


def integral_G(tau, alpha):
    """``G = tau - ln(tau) + alpha^2/2 - 1``, conserved by the averaged system."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("G is only defined for tau > 0")
    g = (tau - 1.0) - np.log(tau) + 0.5 * np.asarray(alpha, dtype=float) ** 2
    return float(g) if g.ndim == 0 else g


def integral_G_ham(sigma, alpha):
    g = np.expm1(sigma) - np.asarray(sigma, dtype=float) + 0.5 * np.asarray(alpha, dtype=float) ** 2
    return float(g) if np.ndim(g) == 0 else g


def grad_G(tau, alpha):
    tau = np.asarray(tau, dtype=float)
    return 1.0 - 1.0 / tau, np.asarray(alpha, dtype=float)


# ---------------------------------------------------------------------------
# invariant densities

def gibbs_density_nh(s: Sequence[float], Q: float, beta: float = 1.0) -> float:
    """Unnormalised ``exp(-beta (H + xi^2/2Q))`` for the harmonic oscillator."""
    q, p, xi = s
    return math.exp(-beta * (0.5 * (q * q + p * p) + xi * xi / (2.0 * Q)))


def gibbs_density_nhc(s: Sequence[float], Qs: Sequence[float], beta: float = 1.0) -> float:
    """Unnormalised chain density for the harmonic oscillator, ``s = (q, p, xi_1, ..., xi_M)``."""
    q, p, *xis = s
    if len(xis) != len(Qs):
        raise ValueError(f"{len(xis)} thermostat momenta but {len(Qs)} thermostat masses")
    return math.exp(-beta * (0.5 * (q * q + p * p) + sum(x * x / (2.0 * Qj) for x, Qj in zip(xis, Qs))))


def gibbs_density_general(q, p, xis, sys: GeneralSystem) -> float:
    xis = np.atleast_1d(np.asarray(xis, dtype=float))
    return math.exp(-sys.beta * (sys.hamiltonian(q, p) + float(np.sum(xis**2 / (2 * sys.thermostat_masses)))))


def measure_divergence(field: Callable, density: Callable, point, h: float = 1e-4) -> float:
    """Central-difference estimate of ``div(rho * f)`` at ``point``.

    ``field`` maps a flat state to its derivative and ``density`` maps a flat
    state to a scalar. The truncation error is O(h^2).
    """
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    z = np.asarray(point, dtype=float)
    total = 0.0
    for i in range(z.size):
        zp = z.copy()
        zm = z.copy()
        zp[i] += h
        zm[i] -= h
        fp = np.asarray(field(zp), dtype=float).ravel()[i]
        fm = np.asarray(field(zm), dtype=float).ravel()[i]
        total += (density(zp) * fp - density(zm) * fm) / (2.0 * h)
    return float(total)


# ---------------------------------------------------------------------------
# near-identity averaging transform

def near_identity_transform(theta, tau_hat, alpha_hat, eps):
    """Map hatted averaging variables back to ``(tau, alpha)``."""
    sc = np.sin(theta) * np.cos(theta)
    tau = tau_hat + eps * tau_hat * alpha_hat * sc
    alpha = alpha_hat - eps * tau_hat * sc
    return tau, alpha


def transformed_density(theta, tau_hat, alpha_hat, eps):
    """Invariant density in the hatted variables (all three factors, untruncated)."""
    s = np.sin(theta)
    c = np.cos(theta)
    s2 = np.sin(2.0 * theta)
    return (
        np.exp(-tau_hat - 0.5 * alpha_hat**2)
        * np.exp(-0.5 * eps**2 * tau_hat**2 * s**2 * c**2)
        * (1.0 + 0.5 * eps * alpha_hat * s2 + 0.25 * eps**2 * tau_hat * s2**2)
    )
