"""Model-free control: ultra-local model, intelligent PI/PID, actuator limits.

The hydro loop uses the first-order ultra-local model written in discharge
form,

    alpha * dy/dt = F - u

where ``y`` is a water level (m), ``u`` the outflow (m3/s) and ``alpha`` a
surface-like scale (m2).  ``F`` lumps everything the controller does not
model and reads as an inflow.  Against the generic form
``y^(nu) = F' + beta*u`` this is ``beta = -1/alpha`` and ``F' = F/alpha``.

With ``F`` estimated from the measured slope and the held command, the
intelligent PI

    u = F_hat - alpha * dy*/dt + alpha * (kp*e + ki*int(e)),   e = y - y*

turns the loop into ``de/dt = -kp*e - ki*int(e)``, whatever the plant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .signals import SlopeEstimator

__all__ = [
    "UltraLocalModel",
    "ControllerGains",
    "ControllerState",
    "Saturator",
    "IntelligentPI",
    "estimate_F",
    "ipi_command",
    "ipid_command_nu2",
    "saturate",
    "saturation_side",
    "update_integral",
]


def _check_finite(**values):
    for name, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class UltraLocalModel:
    """Parameters of ``y^(nu) = F + beta*u``.

    ``alpha`` is the scale of the discharge form used for ``nu = 1``;
    ``beta`` defaults to ``-1/alpha``.  It can be given explicitly for the
    second-order generic form, where the sign convention of the plant is up
    to the user.
    """

    nu: int = 1
    alpha: float = 1.65e6
    estimator_window: int = 10
    beta: float | None = None

    def __post_init__(self):
        if self.nu not in (1, 2):
            raise ValueError(f"derivation order must be 1 or 2, got {self.nu}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.estimator_window < 2:
            raise ValueError("estimator window needs at least 2 samples")
        if self.beta is None:
            object.__setattr__(self, "beta", -1.0 / self.alpha)
        elif self.beta == 0 or not math.isfinite(self.beta):
            raise ValueError(f"beta must be finite and non-zero, got {self.beta}")


@dataclass(frozen=True)
class ControllerGains:
    kp: float
    ki: float = 0.0
    kd: float = 0.0

    def __post_init__(self):
        if not self.kp > 0:
            raise ValueError(f"kp must be positive, got {self.kp}")
        if self.ki < 0 or self.kd < 0:
            raise ValueError("ki and kd must be non-negative")

    @classmethod
    def critically_damped(cls, period: float, ratio: float = 10.0) -> "ControllerGains":
        """``kp = 1/(ratio*period)`` and ``ki = kp**2/4``: double pole at ``-kp/2``."""
        kp = 1.0 / (ratio * period)
        return cls(kp=kp, ki=kp * kp / 4.0)


@dataclass
class ControllerState:
    integral: float = 0.0
    last_command: float = 0.0
    filter_buffer: np.ndarray = field(default_factory=lambda: np.empty(0))
    aw_active: bool = False


@dataclass(frozen=True)
class Saturator:
    """Position and per-sample rate limits of the actuator (m3/s)."""

    u_min: float = 0.0
    u_max: float = 1400.0
    rate_max: float = 50.0

    def __post_init__(self):
        if not self.u_min < self.u_max:
            raise ValueError("u_min must be below u_max")
        if not self.rate_max > 0:
            raise ValueError("rate_max must be positive")


def estimate_F(model: UltraLocalModel, ydot_hat: float, u_prev: float) -> float:
    """Estimated lumped inflow ``alpha*ydot_hat + u_prev`` (m3/s)."""
    _check_finite(ydot_hat=ydot_hat, u_prev=u_prev)
    return model.alpha * ydot_hat + u_prev


def ipi_command(model: UltraLocalModel, gains: ControllerGains, F_hat: float,
                ystar_dot: float, e: float, state: ControllerState) -> float:
    """Raw (unsaturated) intelligent-PI command for the ``nu = 1`` discharge form."""
    _check_finite(F_hat=F_hat, ystar_dot=ystar_dot, e=e, integral=state.integral)
    pi = gains.kp * e + gains.ki * state.integral
    return F_hat - model.alpha * ystar_dot + model.alpha * pi


def ipid_command_nu2(model: UltraLocalModel, gains: ControllerGains, F_hat: float,
                     ystar_ddot: float, e: float, edot: float,
                     state: ControllerState) -> float:
    """Raw intelligent-PID command for ``d2y/dt2 = F + beta*u``.

    ``u = (-F + d2y*/dt2)/beta + kp*e + ki*int(e) + kd*de/dt``.  With an exact
    ``F`` the loop becomes the double integrator
    ``d2e/dt2 = beta*(kp*e + ki*int(e) + kd*de/dt)``, so positive gains call
    for ``beta < 0`` (the sign used by the discharge form).
    """
    if model.nu != 2:
        raise RuntimeError("ipid_command_nu2 needs a second-order ultra-local model")
    _check_finite(F_hat=F_hat, ystar_ddot=ystar_ddot, e=e, edot=edot)
    beta = model.beta
    return ((-F_hat + ystar_ddot) / beta + gains.kp * e
            + gains.ki * state.integral + gains.kd * edot)


def saturate(s: Saturator, u_raw: float, u_prev: float) -> tuple[float, bool]:
    """Clamp to the position limits, then to ``u_prev +/- rate_max``."""
    u = min(max(u_raw, s.u_min), s.u_max)
    u = min(max(u, u_prev - s.rate_max), u_prev + s.rate_max)
    return u, u != u_raw


def saturation_side(u_raw: float, u_applied: float) -> int:
    """+1 when the command was clipped from above, -1 from below, 0 otherwise."""
    if u_raw > u_applied:
        return 1
    if u_raw < u_applied:
        return -1
    return 0


def update_integral(state: ControllerState, e: float, dt: float, saturated: bool,
                    direction_consistent: bool) -> ControllerState:
    """Conditional integration: freeze the integral while it would deepen saturation.

    ``direction_consistent`` is true when adding ``e*dt`` moves the raw
    command further past the active limit.  Integration that pulls the
    command back inside the limits is always allowed.
    """
    frozen = bool(saturated and direction_consistent)
    if not frozen:
        state.integral += e * dt
    state.aw_active = frozen
    return state


class IntelligentPI:
    """Sampled-and-held intelligent PI for the discharge form, with its own state.

    Call :meth:`step` once per controller period with the (already quantized)
    level measurement.  ``anti_windup=False`` integrates unconditionally,
    which is only meant for comparison runs.
    """

    def __init__(self, model: UltraLocalModel, gains: ControllerGains,
                 saturator: Saturator, period: float, u0: float = 0.0,
                 anti_windup: bool = True):
        if model.nu != 1:
            raise ValueError("IntelligentPI implements the first-order discharge form")
        self.model = model
        self.gains = gains
        self.saturator = saturator
        self.period = float(period)
        self.anti_windup = anti_windup
        self.estimator = SlopeEstimator(model.estimator_window, period)
        self.state = ControllerState(last_command=float(u0))

    def step(self, y: float, ystar: float, ystar_dot: float,
             F_hat: float | None = None) -> dict:
        """One control period; returns the applied command and its by-products.

        Passing ``F_hat`` bypasses the estimator (used to check the loop with
        a perfectly known ``F``).
        """
        state = self.state
        ydot_hat = self.estimator.push(y)
        state.filter_buffer = self.estimator.buffer
        if F_hat is None:
            F_hat = estimate_F(self.model, ydot_hat, state.last_command)
        e = y - ystar
        u_raw = ipi_command(self.model, self.gains, F_hat, ystar_dot, e, state)
        u, saturated = saturate(self.saturator, u_raw, state.last_command)
        side = saturation_side(u_raw, u)
        # the integral enters u with the sign of alpha*ki (> 0)
        pushes_further = self.anti_windup and saturated and np.sign(e) == side
        update_integral(state, e, self.period, saturated, pushes_further)
        state.last_command = u
        return {"u": u, "u_raw": u_raw, "saturated": saturated, "side": side,
                "F_hat": F_hat, "ydot_hat": ydot_hat, "e": e}
