"""Fixed-step integrators: classical RK4 and reversible splitting schemes.

The splitting schemes integrate the Cartesian Nose-Hoover (chain) equations
by composing exactly solvable sub-flows symmetrically; see ``_nh_split``.
``integrate`` drives either scheme in compiled chunks and streams the sampled
states to observers, so memory stays bounded for arbitrarily long runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np
from numba import njit

from .dynamics import ChainState, Flow, PhysState

CHUNK = 1 << 16


class IntegrationError(RuntimeError):
    """Raised when a state stops being finite; ``step`` is the offending step index."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class Observer(Protocol):
    def update(self, times: np.ndarray, states: np.ndarray) -> None: ...


SCHEMES = ("rk4", "splitting")


@dataclass(frozen=True)
class IntegratorSpec:
    dt: float
    n_steps: int
    sample_stride: int = 1
    scheme: str = "rk4"

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ValueError(f"n_steps must be a non-negative integer, got {self.n_steps!r}")
        if int(self.sample_stride) != self.sample_stride or self.sample_stride < 1:
            raise ValueError(f"sample_stride must be a positive integer, got {self.sample_stride!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "sample_stride", int(self.sample_stride))

    @property
    def n_samples(self) -> int:
        return self.n_steps // self.sample_stride + 1


@dataclass
class Trajectory:
    """Sampled run. ``times``/``states`` are empty unless the caller asked to keep them."""

    times: np.ndarray
    states: np.ndarray
    final_time: float
    final_state: np.ndarray
    n_samples: int
    metadata: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# splitting kernels

@njit(cache=True, nogil=True)
def _nh_split(y, par, dt):
    # C1(h) C2(h) B(h) A(dt) B(h) C2(h) C1(h), every sub-flow exact
    e2 = par[0] * par[0]
    h = 0.5 * dt
    q, p, xi = y[0], y[1], y[2]
    xi += (p * p - 1.0) * h
    p *= math.exp(-e2 * xi * h)
    p -= q * h
    q += p * dt
    p -= q * h
    p *= math.exp(-e2 * xi * h)
    xi += (p * p - 1.0) * h
    y[0], y[1], y[2] = q, p, xi


@njit(cache=True, nogil=True)
def _nhc_split(y, par, dt):
    # E D1b D1 C B A B C D1 D1b E with
    #   E:   xi2' = eps^2 xi1^2 - 1    D1b: xi1' = -eps^2 xi1 xi2
    #   D1:  xi1' = p^2 - 1            C:   p' = -eps^2 xi1 p
    e2 = par[0] * par[0]
    h = 0.5 * dt
    q, p, x1, x2 = y[0], y[1], y[2], y[3]
    x2 += (e2 * x1 * x1 - 1.0) * h
    x1 *= math.exp(-e2 * x2 * h)
    x1 += (p * p - 1.0) * h
    p *= math.exp(-e2 * x1 * h)
    p -= q * h
    q += p * dt
    p -= q * h
    p *= math.exp(-e2 * x1 * h)
    x1 += (p * p - 1.0) * h
    x1 *= math.exp(-e2 * x2 * h)
    x2 += (e2 * x1 * x1 - 1.0) * h
    y[0], y[1], y[2], y[3] = q, p, x1, x2


@njit(cache=True, nogil=True)
def _all_finite(y):
    for v in y:
        if not math.isfinite(v):
            return False
    return True


@njit(cache=True, nogil=True)
def _split_chunk(step, y, par, dt, n_out, stride, out):
    """Take ``n_out * stride`` steps, storing every ``stride``-th state.

    Returns -1, or the 0-based index (within this call) of the first step
    that produced a non-finite state.
    """
    k = 0
    for i in range(n_out):
        for _ in range(stride):
            step(y, par, dt)
            if not _all_finite(y):
                return k
            k += 1
        out[i, :] = y
    return -1


@njit(cache=True, nogil=True)
def _rk4_inplace(rhs, y, par, dt, k1, k2, k3, k4, tmp):
    n = y.size
    rhs(y, par, k1)
    for i in range(n):
        tmp[i] = y[i] + 0.5 * dt * k1[i]
    rhs(tmp, par, k2)
    for i in range(n):
        tmp[i] = y[i] + 0.5 * dt * k2[i]
    rhs(tmp, par, k3)
    for i in range(n):
        tmp[i] = y[i] + dt * k3[i]
    rhs(tmp, par, k4)
    for i in range(n):
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True, nogil=True)
def _rk4_chunk(rhs, y, par, dt, n_out, stride, out):
    n = y.size
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    k = 0
    for i in range(n_out):
        for _ in range(stride):
            _rk4_inplace(rhs, y, par, dt, k1, k2, k3, k4, tmp)
            if not _all_finite(y):
                return k
            k += 1
        out[i, :] = y
    return -1


# ---------------------------------------------------------------------------
# single steps

def rk4_step(field: Callable, state, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step for an autonomous field ``field(y) -> dy``."""
    y = np.asarray(state, dtype=float)
    k1 = np.asarray(field(y), dtype=float)
    k2 = np.asarray(field(y + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(field(y + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(field(y + dt * k3), dtype=float)
    out = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError("rk4 step produced a non-finite state", step=0)
    return out


def _split_once(kernel, s, eps: float, dt: float, dim: int) -> np.ndarray:
    if not eps >= 0:
        raise ValueError(f"eps must be non-negative, got {eps!r}")
    y = np.array(s, dtype=np.float64)
    if y.shape != (dim,):
        raise ValueError(f"expected a state of length {dim}, got shape {y.shape}")
    kernel(y, np.array([float(eps)]), float(dt))
    if not np.all(np.isfinite(y)):
        raise IntegrationError("splitting step produced a non-finite state", step=0)
    return y


def nh_splitting_step(s: Sequence[float], eps: float, dt: float) -> PhysState:
    """Reversible second-order step for the Nose-Hoover oscillator (eps = 0 allowed)."""
    return PhysState(*_split_once(_nh_split, s, eps, dt, 3).tolist())


def nhc_splitting_step(s: Sequence[float], eps: float, dt: float) -> ChainState:
    return ChainState(*_split_once(_nhc_split, s, eps, dt, 4).tolist())


def reflect(state) -> np.ndarray:
    """Momentum reversal ``(q, p, xi...) -> (q, -p, -xi...)``."""
    y = np.array(state, dtype=float)
    y[1:] = -y[1:]
    return y


# ---------------------------------------------------------------------------
# streaming driver

def integrate(
    system: Flow | Callable,
    state0,
    spec: IntegratorSpec,
    observers: Iterable[Observer] = (),
    keep: bool = True,
    t0: float = 0.0,
) -> Trajectory:
    """Integrate ``system`` from ``state0`` and feed samples to ``observers``.

    ``system`` is a :class:`Flow`; for ``scheme="rk4"`` any autonomous
    callable ``f(y) -> dy`` also works (pure Python, slow). Samples are taken
    at ``t0 + k * stride * dt`` including the initial state. Raises
    :class:`IntegrationError` with the global step index on NaN/Inf.
    """
    observers = list(observers)
    y = np.array(state0, dtype=np.float64).ravel()
    if not np.all(np.isfinite(y)):
        raise IntegrationError("initial state is not finite", step=0)
    dim = y.size
    if isinstance(system, Flow):
        if system.dim != dim:
            raise ValueError(f"{system.name} expects a state of length {system.dim}, got {dim}")
        name = system.name
    else:
        name = getattr(system, "__name__", type(system).__name__)

    if spec.scheme == "splitting":
        if not isinstance(system, Flow) or system.splitting is None:
            raise ValueError(f"no splitting scheme is available for {name!r}")
        step_fn = system.splitting

        def advance(y, n_out, stride, out):
            return _split_chunk(step_fn, y, system.params, spec.dt, n_out, stride, out)

    elif isinstance(system, Flow):

        def advance(y, n_out, stride, out):
            return _rk4_chunk(system.rhs, y, system.params, spec.dt, n_out, stride, out)

    else:

        def advance(y, n_out, stride, out):
            k = 0
            for i in range(n_out):
                for _ in range(stride):
                    try:
                        y[:] = rk4_step(system, y, spec.dt)
                    except IntegrationError:
                        return k
                    k += 1
                out[i, :] = y
            return -1

    stride = spec.sample_stride
    n_rows = spec.n_steps // stride
    kept_t: list[np.ndarray] = []
    kept_y: list[np.ndarray] = []

    def emit(idx0: int, rows: np.ndarray) -> None:
        t = t0 + (np.arange(idx0, idx0 + rows.shape[0]) * stride) * spec.dt
        for obs in observers:
            obs.update(t, rows)
        if keep:
            kept_t.append(t)
            kept_y.append(rows.copy())

    emit(0, y[None, :].copy())
    done_rows = 0
    buf = np.empty((min(CHUNK, max(n_rows, 1)), dim))
    while done_rows < n_rows:
        m = min(CHUNK, n_rows - done_rows)
        bad = advance(y, m, stride, buf)
        if bad >= 0:
            step = done_rows * stride + bad + 1
            raise IntegrationError(f"non-finite state at step {step} of {name}", step=step)
        emit(done_rows + 1, buf[:m])
        done_rows += m
    rem = spec.n_steps - n_rows * stride
    if rem:
        scratch = np.empty((1, dim))
        bad = advance(y, 1, rem, scratch)
        if bad >= 0:
            step = n_rows * stride + bad + 1
            raise IntegrationError(f"non-finite state at step {step} of {name}", step=step)

    if keep:
        times = np.concatenate(kept_t)
        states = np.concatenate(kept_y)
    else:
        times = np.empty(0)
        states = np.empty((0, dim))
    return Trajectory(
        times=times,
        states=states,
        final_time=t0 + spec.n_steps * spec.dt,
        final_state=y.copy(),
        n_samples=n_rows + 1,
        metadata={"system": name, "spec": spec},
    )
