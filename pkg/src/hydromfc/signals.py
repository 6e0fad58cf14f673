"""Sampled signals, level-sensor quantization and algebraic slope filters.

The slope filter is the causal, sliding-window form of the algebraic
estimator of the first derivative of a locally affine signal
``x(t) = a0 + a1*t``.  Eliminating ``a0`` in the operational domain and
returning to the time domain gives, for a window of length ``T`` whose
origin is the oldest sample,

    a1 = 6/T**3 * integral_0^T (2*tau - T) * x(tau) dtau

which is a finite-impulse-response filter once the integral is replaced by
a quadrature rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TimeSeries",
    "SlopeFilter",
    "SlopeEstimator",
    "make_slope_filter",
    "apply_filter",
    "quantize_level",
    "SENSOR_RESOLUTION",
]

#: Resolution of the level sensor, in metres.
SENSOR_RESOLUTION = 0.01

_UNITS = ("m", "m3/s", "m/s", "m2", "-")


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled signal.

    ``values[k]`` is the sample at time ``t0 + k*dt``.
    """

    t0: float
    dt: float
    values: np.ndarray
    unit: str = "-"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("TimeSeries needs a non-empty 1-D array of samples")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"sampling period must be positive, got {self.dt}")
        if self.unit not in _UNITS:
            raise ValueError(f"unknown unit {self.unit!r}; expected one of {_UNITS}")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.values.size - 1)

    def at(self, t) -> np.ndarray | float:
        """Piecewise-linear value at time(s) ``t``, held constant outside the record."""
        return np.interp(t, self.times, self.values)


@dataclass(frozen=True)
class SlopeFilter:
    """FIR weights of the first-order algebraic derivative estimator.

    ``weights[k]`` multiplies the sample taken ``(M-1-k)*dt`` seconds ago,
    i.e. the window is ordered oldest first.
    """

    window_samples: int
    dt: float
    weights: np.ndarray = field(repr=False)

    @property
    def window_length(self) -> float:
        return (self.window_samples - 1) * self.dt


def make_slope_filter(M: int, dt: float) -> SlopeFilter:
    """Discretize the algebraic slope estimator on an ``M``-sample window.

    The kernel ``6/T**3 * (2*tau - T)`` is integrated with the trapezoidal
    rule over ``tau = 0, dt, ..., T``.  The trapezoidal rule leaves an
    ``O(1/M**2)`` error on the quadratic moment, so the weights are rescaled
    to make the filter exact on affine signals (for ``M = 2`` this is the
    two-point difference).  The kernel is odd about the window centre, so the
    weights still sum to zero.
    """
    if isinstance(M, bool) or int(M) != M or M < 2:
        raise ValueError(f"window must hold at least 2 samples, got {M!r}")
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError(f"sampling period must be positive, got {dt!r}")
    M = int(M)
    T = (M - 1) * dt
    tau = dt * np.arange(M)
    quad = np.full(M, dt)
    quad[0] = quad[-1] = 0.5 * dt
    w = quad * 6.0 / T**3 * (2.0 * tau - T)
    # symmetric grid: exact antisymmetry, so sum(w) is zero up to rounding
    w = 0.5 * (w - w[::-1])
    w /= np.dot(w, tau)
    w.setflags(write=False)
    return SlopeFilter(M, float(dt), w)


def apply_filter(f: SlopeFilter, window) -> float:
    """Slope of the last ``M`` samples (oldest first), in signal units per second."""
    x = np.asarray(window, dtype=float)
    if x.shape != (f.window_samples,):
        raise ValueError(
            f"window must hold exactly {f.window_samples} samples, got shape {x.shape}"
        )
    return float(np.dot(f.weights, x))


def quantize_level(z):
    """Round a level to the 1 cm sensor resolution, ties to the even centimetre.

    Accepts scalars or arrays.
    """
    arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("level must be finite")
    # divide (not multiply by 0.01) so that the result is the nearest double
    q = np.rint(arr / SENSOR_RESOLUTION) / round(1 / SENSOR_RESOLUTION)
    return float(q) if q.ndim == 0 else q


class SlopeEstimator:
    """Online wrapper around :class:`SlopeFilter` with its sample buffer.

    Until ``M`` samples have been pushed the buffer is padded with the first
    sample, so the early estimates are biased toward zero rather than noisy.
    """

    def __init__(self, M: int, dt: float):
        self.filter = make_slope_filter(M, dt)
        self.buffer = np.empty(0)

    def reset(self) -> None:
        self.buffer = np.empty(0)

    def push(self, x: float) -> float:
        M = self.filter.window_samples
        if self.buffer.size == 0:
            self.buffer = np.full(M, float(x))
        else:
            self.buffer = np.append(self.buffer[1:], float(x))
        return apply_filter(self.filter, self.buffer)
