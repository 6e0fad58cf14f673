"""Reach dynamics used as ground truth in closed-loop runs.

Two plants share the same driving interface (:meth:`advance` over one
controller period with time functions for the inflows and the outflow):

* :class:`SaintVenantReach` integrates the 1-D Saint-Venant equations for a
  prismatic rectangular channel with an explicit Lax-Friedrichs
  (Rusanov-type) finite-volume scheme.  Discharge is imposed at both ends:
  the upstream plant releases ``q_in``, the downstream plant turbines
  ``q_out``.
* :class:`SurrogatePlant` is an integrator with pure delays, cheap and
  deterministic, for unit tests.

Levels are water depths in metres.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

__all__ = [
    "G",
    "ChannelGeometry",
    "ReachState",
    "SurrogateReach",
    "SaintVenantReach",
    "SurrogatePlant",
    "CFLError",
    "DryBedError",
    "SimulationError",
    "normal_depth",
    "uniform_state",
    "lake_at_rest",
    "backwater_profile",
    "cfl_time_step",
    "sv_step",
    "read_levels",
    "surrogate_step",
]

G = 9.81
CFL = 0.9


class SimulationError(RuntimeError):
    """The plant could not be advanced."""


class CFLError(SimulationError):
    pass


class DryBedError(SimulationError):
    pass


@dataclass(frozen=True)
class ChannelGeometry:
    length: float = 15_000.0
    width: float = 110.0
    bed_slope: float = 1e-4
    manning_n: float = 0.033
    n_cells: int = 150
    lateral_inflow_x: float = 5_000.0
    sensor_x: float = 7_500.0

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError("length and width must be positive")
        if self.n_cells < 10:
            raise ValueError("at least 10 cells are required")
        if not 0 <= self.sensor_x <= self.length:
            raise ValueError("sensor_x outside the reach")
        if not 0 <= self.lateral_inflow_x <= self.length:
            raise ValueError("lateral_inflow_x outside the reach")
        if self.manning_n < 0:
            raise ValueError("manning_n must be non-negative")

    @property
    def dx(self) -> float:
        return self.length / self.n_cells

    @property
    def x(self) -> np.ndarray:
        """Cell centres, x = 0 at the upstream plant."""
        return (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def bed(self) -> np.ndarray:
        """Bed elevation at cell centres, zero at the downstream end."""
        return self.bed_slope * (self.length - self.x)

    @property
    def surface_area(self) -> float:
        return self.length * self.width

    @property
    def lateral_cell(self) -> int:
        return min(int(self.lateral_inflow_x // self.dx), self.n_cells - 1)


@dataclass
class ReachState:
    t: float
    A: np.ndarray
    Q: np.ndarray

    def copy(self) -> "ReachState":
        return ReachState(self.t, self.A.copy(), self.Q.copy())

    def depth(self, geom: ChannelGeometry) -> np.ndarray:
        return self.A / geom.width

    def volume(self, geom: ChannelGeometry) -> float:
        return float(self.A.sum() * geom.dx)


# -- steady-flow helpers ---------------------------------------------------

def _friction_slope(geom: ChannelGeometry, A, Q):
    R = A / (geom.width + 2.0 * A / geom.width)
    return geom.manning_n**2 * Q * np.abs(Q) / (A * A * R ** (4.0 / 3.0))


def normal_depth(geom: ChannelGeometry, q: float) -> float:
    """Depth at which friction slope equals bed slope for discharge ``q``."""
    if q <= 0 or geom.bed_slope <= 0:
        raise ValueError("normal depth needs positive discharge and bed slope")

    def residual(h):
        return float(_friction_slope(geom, geom.width * h, q)) - geom.bed_slope

    return brentq(residual, 1e-3, 1e3, xtol=1e-14, rtol=1e-14)


def uniform_state(geom: ChannelGeometry, q: float, h: float | None = None) -> ReachState:
    h = normal_depth(geom, q) if h is None else h
    n = geom.n_cells
    return ReachState(0.0, np.full(n, geom.width * h), np.full(n, float(q)))


def lake_at_rest(geom: ChannelGeometry, z_down: float) -> ReachState:
    """Still water with a horizontal surface and depth ``z_down`` at the downstream end."""
    h = z_down + geom.bed[-1] - geom.bed
    if np.any(h <= 0):
        raise ValueError("free surface below the bed")
    return ReachState(0.0, geom.width * h, np.zeros(geom.n_cells))


def backwater_profile(geom: ChannelGeometry, q: float, x_ref: float,
                      h_ref: float) -> np.ndarray:
    """Gradually-varied-flow depth at cell centres through ``(x_ref, h_ref)``.

    Integrates ``dh/dx = (S0 - Sf)/(1 - Fr^2)`` both ways from the reference
    point; subcritical flow is assumed.
    """
    B = geom.width

    def rhs(_x, h):
        A = B * h
        fr2 = q * q / (G * A * A * h)
        return (geom.bed_slope - _friction_slope(geom, A, q)) / (1.0 - fr2)

    x = geom.x
    h = np.empty_like(x)
    down = x >= x_ref
    up = ~down
    kw = dict(rtol=1e-10, atol=1e-12, method="LSODA")
    if down.any():
        sol = solve_ivp(rhs, (x_ref, x[down][-1]), [h_ref], t_eval=x[down], **kw)
        h[down] = sol.y[0]
    if up.any():
        xs = x[up][::-1]
        sol = solve_ivp(rhs, (x_ref, xs[-1]), [h_ref], t_eval=xs, **kw)
        h[up] = sol.y[0][::-1]
    return h


# -- Saint-Venant scheme ---------------------------------------------------

def cfl_time_step(geom: ChannelGeometry, state: ReachState) -> float:
    """Largest explicit step allowed by ``CFL = 0.9``."""
    h = state.A / geom.width
    if np.any(h <= 0):
        raise DryBedError("non-positive depth in state")
    speed = np.max(np.abs(state.Q / state.A) + np.sqrt(G * h))
    return CFL * geom.dx / speed


def sv_step(geom: ChannelGeometry, state: ReachState, q_in: float, q_lat: float,
            q_out: float, dt: float, *, check_cfl: bool = True) -> ReachState:
    """Advance the reach by ``dt`` seconds.

    Mass:      dA/dt + dQ/dx = q_lat (in the cell holding lateral_inflow_x)
    Momentum:  dQ/dt + d(Q^2/A)/dx + g*A*d(eta)/dx = -g*A*Sf,  eta = h + bed

    Interface fluxes are central plus Lax-Friedrichs dissipation with one
    global speed.  The dissipation on the mass equation acts on ``B*eta``
    rather than ``A`` so that still water over a sloping bed is an exact
    equilibrium.  The boundary mass fluxes are exactly ``q_in``/``q_out``,
    hence the volume changes by exactly the net inflow.
    """
    A, Q = state.A, state.Q
    B, dx = geom.width, geom.dx
    h = A / B
    vel = Q / A
    a = float(np.max(np.abs(vel) + np.sqrt(G * h)))
    if check_cfl and dt > CFL * dx / a * (1 + 1e-12):
        raise CFLError(f"dt={dt:.3f} s exceeds CFL limit {CFL * dx / a:.3f} s")
    eta = h + geom.bed
    adv = Q * vel

    n = A.size
    fa = np.empty(n + 1)
    fq = np.empty(n + 1)
    fa[1:-1] = 0.5 * (Q[:-1] + Q[1:]) - 0.5 * a * B * (eta[1:] - eta[:-1])
    fa[0] = q_in
    fa[-1] = q_out
    fq[1:-1] = 0.5 * (adv[:-1] + adv[1:]) - 0.5 * a * (Q[1:] - Q[:-1])
    # ghost cells mirror the boundary cell depth and carry the imposed discharge
    fq[0] = 0.5 * (q_in * q_in / A[0] + adv[0]) - 0.5 * a * (Q[0] - q_in)
    fq[-1] = 0.5 * (adv[-1] + q_out * q_out / A[-1]) - 0.5 * a * (q_out - Q[-1])

    grad = np.empty(n)
    grad[1:-1] = (eta[2:] - eta[:-2]) / (2.0 * dx)
    grad[0] = (eta[1] - eta[0]) / dx
    grad[-1] = (eta[-1] - eta[-2]) / dx

    r = dt / dx
    A_new = A - r * (fa[1:] - fa[:-1])
    A_new[geom.lateral_cell] += r * q_lat
    Q_new = (Q - r * (fq[1:] - fq[:-1])
             - dt * G * A * (grad + _friction_slope(geom, A, Q)))
    if not np.all(A_new > 0):
        raise DryBedError(f"dry bed at t={state.t + dt:.1f} s")
    if not (np.all(np.isfinite(A_new)) and np.all(np.isfinite(Q_new))):
        raise SimulationError(f"non-finite state at t={state.t + dt:.1f} s")
    return ReachState(state.t + dt, A_new, Q_new)


def read_levels(geom: ChannelGeometry, state: ReachState) -> tuple[float, float]:
    """Depth in the actuator-adjacent cell and depth interpolated at ``sensor_x``."""
    h = state.A / geom.width
    z = float(h[-1])
    z_r = float(np.interp(geom.sensor_x, geom.x, h))
    return z, z_r


_MAX_REFINE = 6


class SaintVenantReach:
    """Stateful wrapper stepping :func:`sv_step` over controller periods.

    Inputs are callables of time; the outflow is typically a constant held
    over the period.  Substeps are equal and divide the period exactly, so the
    sampling instants fall on the simulation grid.
    """

    def __init__(self, geom: ChannelGeometry, state: ReachState):
        self.geom = geom
        self.state = state.copy()
        self.inflow_volume = 0.0      # integral of q_in + q_lat - q_out
        self.abs_inflow_volume = 0.0  # integral of |q_in|
        self.steps = 0

    @property
    def t(self) -> float:
        return self.state.t

    @property
    def volume(self) -> float:
        return self.state.volume(self.geom)

    def levels(self) -> tuple[float, float]:
        return read_levels(self.geom, self.state)

    def advance(self, duration: float, q_in, q_lat, q_out) -> None:
        """Advance by ``duration`` seconds in equal substeps below the CFL limit.

        ``q_in``, ``q_lat`` and ``q_out`` are evaluated at the start of every
        substep.  The substep comes from the state at the start of the
        period; if the wave speed grows past it during the period, the period
        is recomputed with twice as many substeps.
        """
        n_sub = max(1, math.ceil(duration / cfl_time_step(self.geom, self.state) - 1e-9))
        t0 = self.state.t
        g = self.geom
        for _ in range(_MAX_REFINE):
            dt = duration / n_sub
            tk = t0 + dt * np.arange(n_sub)
            qi = np.array([float(q_in(t)) for t in tk])
            ql = np.array([float(q_lat(t)) for t in tk])
            qo = np.array([float(q_out(t)) for t in tk])
            A, Q = self.state.A.copy(), self.state.Q.copy()
            status = _sv_kernel(A, Q, g.bed, g.width, g.dx, g.manning_n, g.lateral_cell,
                                qi, ql, qo, dt)
            if status >= 0:
                break
            n_sub *= 2
        if status != 0:
            k = abs(status) - 1
            if status < 0:
                raise CFLError(f"CFL limit exceeded during substep at t={tk[k]:.1f} s")
            raise DryBedError(f"dry bed or non-finite state at t={tk[k] + dt:.1f} s")
        self.inflow_volume += float(np.sum(qi + ql - qo) * dt)
        self.abs_inflow_volume += float(np.sum(np.abs(qi)) * dt)
        self.steps += n_sub
        # pin the clock to the sampling grid (no drift from summing dt)
        self.state = ReachState(t0 + duration, A, Q)


def _sv_kernel_py(A, Q, bed, B, dx, n_manning, lat, q_in, q_lat, q_out, dt):
    """In-place substep loop; same arithmetic as :func:`sv_step`.

    Returns 0, ``-(k+1)`` on a CFL violation at substep ``k`` or ``k+1`` on
    a dry or non-finite state after substep ``k``.
    """
    n = A.size
    fa = np.empty(n + 1)
    fq = np.empty(n + 1)
    eta = np.empty(n)
    adv = np.empty(n)
    sf = np.empty(n)
    r = dt / dx
    n2 = n_manning * n_manning
    for k in range(q_in.size):
        a = 0.0
        for i in range(n):
            h = A[i] / B
            v = Q[i] / A[i]
            s = abs(v) + math.sqrt(G * h)
            if s > a:
                a = s
            eta[i] = h + bed[i]
            adv[i] = Q[i] * v
            R = A[i] / (B + 2.0 * A[i] / B)
            sf[i] = n2 * Q[i] * abs(Q[i]) / (A[i] * A[i] * R ** (4.0 / 3.0))
        if dt > CFL * dx / a * (1 + 1e-12):
            return -(k + 1)
        qi = q_in[k]
        qo = q_out[k]
        for i in range(1, n):
            fa[i] = 0.5 * (Q[i - 1] + Q[i]) - 0.5 * a * B * (eta[i] - eta[i - 1])
            fq[i] = 0.5 * (adv[i - 1] + adv[i]) - 0.5 * a * (Q[i] - Q[i - 1])
        fa[0] = qi
        fa[n] = qo
        fq[0] = 0.5 * (qi * qi / A[0] + adv[0]) - 0.5 * a * (Q[0] - qi)
        fq[n] = 0.5 * (adv[n - 1] + qo * qo / A[n - 1]) - 0.5 * a * (qo - Q[n - 1])
        ok = True
        for i in range(n):
            if i == 0:
                grad = (eta[1] - eta[0]) / dx
            elif i == n - 1:
                grad = (eta[n - 1] - eta[n - 2]) / dx
            else:
                grad = (eta[i + 1] - eta[i - 1]) / (2.0 * dx)
            a_old = A[i]
            A[i] = a_old - r * (fa[i + 1] - fa[i])
            Q[i] = Q[i] - r * (fq[i + 1] - fq[i]) - dt * G * a_old * (grad + sf[i])
            if not (A[i] > 0.0) or not math.isfinite(Q[i]):
                ok = False
        A[lat] += r * q_lat[k]
        if not ok or not (A[lat] > 0.0):
            return k + 1
    return 0


try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is optional
    _sv_kernel = _sv_kernel_py
else:
    _sv_kernel = njit(cache=True)(_sv_kernel_py)


# -- surrogate -------------------------------------------------------------

@dataclass(frozen=True)
class SurrogateReach:
    """Integrator-with-delay reach.

    ``surface_area * dz_r/dt = q_in(t - delay_in) + w(t - delay_w) - q_out(t)``
    and ``z = z_r + z_offset - z_slope * q_out``.
    """

    surface_area: float = 1.65e6
    delay_in: float = 0.0
    delay_w: float = 0.0
    z_offset: float = 0.0
    z_slope: float = 0.0

    def __post_init__(self):
        if not self.surface_area > 0:
            raise ValueError("surface_area must be positive")
        if self.delay_in < 0 or self.delay_w < 0:
            raise ValueError("delays must be non-negative")

    @property
    def z_near_gain(self) -> tuple[float, float]:
        return self.z_offset, self.z_slope


def _delayed(history, t: float, delay: float) -> float:
    """Value of a sampled history ``[(t_k, v_k), ...]`` at ``t - delay`` (zero-order hold)."""
    target = t - delay
    if not history or history[0][0] > target + 1e-9:
        raise ValueError(f"history does not reach back to t={target:.1f} s")
    value = history[0][1]
    for tk, vk in history:
        if tk > target + 1e-9:
            break
        value = vk
    return value


def surrogate_step(sur: SurrogateReach, z_r: float, t: float, q_in_history,
                   w_history, q_out: float, dt: float) -> tuple[float, float]:
    """One explicit Euler step of the surrogate; returns ``(z, z_r)`` at ``t + dt``.

    The histories are ``(time, value)`` pairs in increasing time order and
    must cover ``t - delay``.
    """
    qi = _delayed(q_in_history, t, sur.delay_in)
    w = _delayed(w_history, t, sur.delay_w)
    z_r_new = z_r + dt * (qi + w - q_out) / sur.surface_area
    return z_r_new + sur.z_offset - sur.z_slope * q_out, z_r_new


class SurrogatePlant:
    """Stateful surrogate with the same driving interface as :class:`SaintVenantReach`."""

    def __init__(self, sur: SurrogateReach, z_r0: float, t0: float = 0.0,
                 q_in0: float = 0.0, w0: float = 0.0, q_out0: float = 0.0,
                 substep: float = 10.0):
        self.sur = sur
        self.z_r = float(z_r0)
        self.q_out = float(q_out0)
        self._t = float(t0)
        self.substep = substep
        horizon = max(sur.delay_in, sur.delay_w)
        # the reach was in the initial condition forever
        self.q_in_hist: deque = deque([(t0 - horizon - 1.0, float(q_in0))])
        self.w_hist: deque = deque([(t0 - horizon - 1.0, float(w0))])

    @property
    def t(self) -> float:
        return self._t

    @property
    def volume(self) -> float:
        return self.z_r * self.sur.surface_area

    def levels(self) -> tuple[float, float]:
        return self.z_r + self.sur.z_offset - self.sur.z_slope * self.q_out, self.z_r

    def advance(self, duration: float, q_in, q_lat, q_out) -> None:
        n_sub = max(1, math.ceil(duration / self.substep - 1e-9))
        dt = duration / n_sub
        t0 = self._t
        for k in range(n_sub):
            tk = t0 + k * dt
            self.q_in_hist.append((tk, float(q_in(tk))))
            self.w_hist.append((tk, float(q_lat(tk))))
            self.q_out = float(q_out(tk))
            _, self.z_r = surrogate_step(self.sur, self.z_r, tk, self.q_in_hist,
                                         self.w_hist, self.q_out, dt)
            self._trim(tk)
        self._t = t0 + duration

    def _trim(self, t: float) -> None:
        for hist, delay in ((self.q_in_hist, self.sur.delay_in),
                            (self.w_hist, self.sur.delay_w)):
            while len(hist) > 1 and hist[1][0] <= t - delay - 1e-9:
                hist.popleft()
