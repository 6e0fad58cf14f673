"""Two-loop level regulation of a reach.

The remote level ``z_r`` reacts to the upstream release with a long and
variable delay, so it is not regulated directly.  Instead:

1. a reconstruction law maps the known upstream discharge to the level
   ``z_a`` that the actuator-side level must have for ``z_r`` to sit on its
   setpoint in steady flow;
2. a smooth quintic reference ``z_a*`` moves between successive
   reconstructed targets;
3. an outer PI driven by the ``z_r`` tracking error corrects that reference
   on line (replanning), giving the inner setpoint ``z*``;
4. an inner model-free loop (intelligent PI) makes the actuator-side level
   ``z`` track ``z*`` by acting on the turbined discharge.

The reconstruction law is calibrated on the Saint-Venant plant, which stands
in for the empirical laws an operator would derive from site measurements.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .mfc import ControllerGains, IntelligentPI, Saturator, UltraLocalModel
from .plant import (
    ChannelGeometry,
    ReachState,
    backwater_profile,
    cfl_time_step,
    read_levels,
    sv_step,
)
from .signals import quantize_level

__all__ = [
    "CalibrationError",
    "ReconstructionLaw",
    "QuinticSegment",
    "ReferenceTrajectory",
    "OuterLoop",
    "CascadeController",
    "steady_state",
    "calibrate_reconstruction",
    "plan_trajectory",
    "outer_correct",
]

log = logging.getLogger(__name__)


class CalibrationError(RuntimeError):
    pass


# -- reconstruction --------------------------------------------------------

@dataclass(frozen=True)
class ReconstructionLaw:
    """Piecewise-linear table ``key -> z_a`` at a fixed remote setpoint.

    ``key`` is the upstream discharge for the discharge-based law; a
    level-keyed law uses the same structure with ``key_name = "level"``.
    Queries outside the grid are clamped to the end values.
    """

    grid: np.ndarray
    z_a: np.ndarray
    z_r_target: float
    key_name: str = "discharge"
    dropped: tuple = ()

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        z_a = np.asarray(self.z_a, dtype=float)
        if grid.ndim != 1 or grid.shape != z_a.shape or grid.size < 1:
            raise ValueError("grid and z_a must be 1-D arrays of equal length")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("reconstruction grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "z_a", z_a)

    def __call__(self, key, z_r_setpoint: float | None = None):
        """Target actuator-side level; a different remote setpoint shifts the table."""
        z = np.interp(key, self.grid, self.z_a)
        if z_r_setpoint is not None:
            z = z + (z_r_setpoint - self.z_r_target)
        return float(z) if np.ndim(z) == 0 else z

    @property
    def monotonicity(self) -> int:
        """+1 if z_a strictly increases with the key, -1 if strictly decreasing, else 0."""
        d = np.diff(self.z_a)
        if d.size and np.all(d > 0):
            return 1
        if d.size and np.all(d < 0):
            return -1
        return 0

    def rows(self):
        return [(float(q), self.z_r_target, float(z)) for q, z in zip(self.grid, self.z_a)]


def _relax(geom: ChannelGeometry, state: ReachState, q: float, tol: float,
           max_steps: int) -> tuple[ReachState, bool]:
    for _ in range(max_steps):
        new = sv_step(geom, state, q, 0.0, q, cfl_time_step(geom, state))
        change = np.max(np.abs(new.A - state.A) / state.A)
        state = new
        if change < tol:
            return state, True
    return state, False


def steady_state(geom: ChannelGeometry, q: float, z_r_target: float, *,
                 tol: float = 1e-11, level_tol: float = 1e-6,
                 max_steps: int = 20_000, max_corrections: int = 8) -> ReachState:
    """Discrete steady state of the reach for discharge ``q`` with ``z_r = z_r_target``.

    Starts from the gradually-varied-flow profile, relaxes the Saint-Venant
    scheme with balanced boundary discharges, then acts as a downstream level
    servo: the stored volume is corrected until the remote level matches.
    """
    h = backwater_profile(geom, q, geom.sensor_x, z_r_target)
    if not np.all(np.isfinite(h)) or np.any(h <= 0):
        raise CalibrationError(f"no subcritical backwater profile for q={q}")
    state = ReachState(0.0, geom.width * h, np.full(geom.n_cells, float(q)))
    for _ in range(max_corrections):
        state, converged = _relax(geom, state, q, tol, max_steps)
        if not converged:
            raise CalibrationError(f"no steady state for q={q} within {max_steps} steps")
        _, z_r = read_levels(geom, state)
        miss = z_r_target - z_r
        if abs(miss) < level_tol:
            state.t = 0.0
            return state
        state = ReachState(state.t, state.A + geom.width * miss, state.Q)
    raise CalibrationError(f"level servo did not settle for q={q}")


def calibrate_reconstruction(geom: ChannelGeometry, q_grid, z_r_target: float,
                             **kwargs) -> ReconstructionLaw:
    """Tabulate the actuator-side level that holds ``z_r`` at ``z_r_target``.

    Grid nodes without a steady state are dropped with a warning; the
    remaining ones must keep the grid usable (at least one node).
    """
    qs, zs, dropped = [], [], []
    for q in q_grid:
        try:
            state = steady_state(geom, float(q), z_r_target, **kwargs)
        except CalibrationError as exc:
            log.warning("calibration node dropped: %s", exc)
            dropped.append(float(q))
            continue
        qs.append(float(q))
        zs.append(read_levels(geom, state)[0])
    if not qs:
        raise CalibrationError("no grid node could be calibrated")
    law = ReconstructionLaw(np.array(qs), np.array(zs), z_r_target, dropped=tuple(dropped))
    if law.monotonicity == 0:
        log.warning("reconstruction table is not monotone in %s", law.key_name)
    return law


# -- reference trajectory --------------------------------------------------

_END_CONDITIONS = np.array([[1.0, 1.0, 1.0], [3.0, 4.0, 5.0], [6.0, 12.0, 20.0]])


@dataclass(frozen=True)
class QuinticSegment:
    """Quintic from ``(z0, v0, a0)`` at ``t0`` to ``(z1, 0, 0)`` at ``t0 + duration``."""

    t0: float
    duration: float
    coeffs: np.ndarray  # in the normalized time s = (t - t0)/duration, lowest first

    @property
    def t1(self) -> float:
        return self.t0 + self.duration

    @property
    def target(self) -> float:
        return float(np.sum(self.coeffs))

    def evaluate(self, t) -> tuple[np.ndarray | float, np.ndarray | float, np.ndarray | float]:
        """Value, first and second time derivatives; held at the target after the end."""
        s = np.clip((np.asarray(t, dtype=float) - self.t0) / self.duration, 0.0, 1.0)
        c = self.coeffs
        p = np.polynomial.polynomial
        z = p.polyval(s, c)
        dc = p.polyder(c)
        v = p.polyval(s, dc) / self.duration
        acc = p.polyval(s, p.polyder(dc)) / self.duration**2
        if np.ndim(z) == 0:
            return float(z), float(v), float(acc)
        return z, v, acc


def plan_trajectory(current, target: float, duration: float, t0: float = 0.0,
                    min_duration: float = 0.0) -> QuinticSegment:
    """Quintic transition from ``current`` to ``target`` over ``duration``.

    ``current`` is ``(z, dz/dt)`` or ``(z, dz/dt, d2z/dt2)``; the target end
    has zero first and second derivatives.  ``min_duration`` is the shortest
    transition accepted (four controller periods for the cascade).
    """
    if not duration > 0 or duration < min_duration:
        raise ValueError(f"transition duration {duration} s is shorter than {min_duration} s")
    z0, v0, a0 = (tuple(current) + (0.0,))[:3]
    D = duration
    # boundary data in normalized time
    b0, b1, b2 = z0, v0 * D, a0 * D * D
    # c3, c4, c5 from z(1) = target, z'(1) = 0, z''(1) = 0
    rhs = np.array([target - b0 - b1 - b2 / 2.0, -b1 - b2, -b2])
    c3, c4, c5 = np.linalg.solve(_END_CONDITIONS, rhs)
    coeffs = np.array([b0, b1, b2 / 2.0, c3, c4, c5])
    return QuinticSegment(float(t0), float(D), coeffs)


class ReferenceTrajectory:
    """Chain of quintic segments; a new target replans from the current point."""

    def __init__(self, z0: float, duration: float, t0: float = 0.0,
                 min_duration: float = 0.0, tolerance: float = 1e-3):
        self.duration = float(duration)
        self.min_duration = float(min_duration)
        self.tolerance = tolerance
        self.segment = plan_trajectory((z0, 0.0), z0, self.duration, t0, min_duration)
        self.knots: list[tuple[float, float, float]] = [(float(t0), float(z0), 0.0)]

    def update(self, t: float, target: float) -> bool:
        """Replan toward ``target`` if it moved by more than the tolerance."""
        if abs(target - self.segment.target) <= self.tolerance:
            return False
        z, v, a = self.segment.evaluate(t)
        self.segment = plan_trajectory((z, v, a), target, self.duration, t, self.min_duration)
        self.knots.append((float(t), float(z), float(v)))
        return True

    def __call__(self, t: float) -> tuple[float, float]:
        z, v, _ = self.segment.evaluate(t)
        return z, v


# -- outer loop ------------------------------------------------------------

@dataclass
class OuterLoop:
    """PI on the remote error ``e_r = z_r - z_r*``; returns the setpoint correction.

    The inner setpoint is ``z* = z_a* - correction``: a remote level above
    its setpoint lowers the actuator-side target.  The integral part of the
    correction is clamped to ``max_correction`` so that a frozen remote
    sensor cannot drag the setpoint away indefinitely.
    """

    kp: float = 0.3
    ki: float = 0.3 / 3600.0
    integral: float = 0.0
    aw_active: bool = False
    anti_windup: bool = True
    max_correction: float = 1.0

    def __post_init__(self):
        if self.kp < 0 or self.ki < 0:
            raise ValueError("outer gains must be non-negative")
        if not self.max_correction > 0:
            raise ValueError("max_correction must be positive")

    @property
    def integral_limit(self) -> float:
        return self.max_correction / self.ki if self.ki > 0 else math.inf

    def correction(self, e_r: float) -> float:
        return self.kp * e_r + self.ki * self.integral


def outer_correct(loop: OuterLoop, e_r: float, dt_out: float,
                  inner_saturation: int = 0) -> float:
    """Correction ``kp*e_r + ki*int(e_r)`` computed with the current integral, then integrate.

    ``inner_saturation`` is the side (+1 high, -1 low, 0 none) on which the
    inner command was clipped during this period.  A positive ``e_r`` raises
    the inner command, so integration is frozen when ``sign(e_r)`` equals
    that side.
    """
    if not math.isfinite(e_r):
        raise ValueError("remote error must be finite")
    dz = loop.correction(e_r)
    frozen = (loop.anti_windup and inner_saturation != 0
              and np.sign(e_r) == inner_saturation)
    if not frozen:
        lim = loop.integral_limit
        loop.integral = min(max(loop.integral + e_r * dt_out, -lim), lim)
    loop.aw_active = bool(frozen)
    return dz


# -- full controller -------------------------------------------------------

@dataclass
class CascadeController:
    """Sampled-and-held two-loop controller; call :meth:`step` every ``period`` seconds."""

    law: ReconstructionLaw
    model: UltraLocalModel
    gains: ControllerGains
    saturator: Saturator
    period: float
    outer: OuterLoop = field(default_factory=OuterLoop)
    transition: float = 3600.0
    u0: float = 0.0
    z_star0: float | None = None
    anti_windup: bool = True
    rate_feedforward: bool = False
    t0: float = 0.0

    def __post_init__(self):
        self.outer.anti_windup = self.anti_windup
        self.inner = IntelligentPI(self.model, self.gains, self.saturator, self.period,
                                   u0=self.u0, anti_windup=self.anti_windup)
        self.reference: ReferenceTrajectory | None = None
        self._prev_correction = 0.0
        self._last_side = 0

    def step(self, t: float, z: float, z_r: float, q_e: float, z_r_star: float) -> dict:
        """Run the control pipeline for one sample and return the held command and internals."""
        zq = quantize_level(z)
        zrq = quantize_level(z_r)

        target = self.law(q_e, z_r_star)
        if self.reference is None:
            start = target if self.z_star0 is None else self.z_star0
            self.reference = ReferenceTrajectory(start, self.transition, t,
                                                 min_duration=4 * self.period)
        self.reference.update(t, target)
        za_star, za_star_dot = self.reference(t)

        e_r = zrq - z_r_star
        dz = outer_correct(self.outer, e_r, self.period, self._last_side)
        z_star = za_star - dz
        z_star_dot = za_star_dot
        if self.rate_feedforward:
            z_star_dot -= (dz - self._prev_correction) / self.period
        self._prev_correction = dz

        out = self.inner.step(zq, z_star, z_star_dot)
        self._last_side = out["side"]
        out.update(z_quant=zq, z_r_quant=zrq, z_a_star=za_star, z_star=z_star,
                   z_star_dot=z_star_dot, correction=dz, e_r=e_r)
        return out
