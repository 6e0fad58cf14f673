"""Test scenarios for the reach, their perturbations, and band-compliance metrics.

Three scenarios are shipped as profile files in ``hydromfc/data``:

1. the tail of a flood, with large discharge variations (4 days);
2. ordinary operation with gentle daily variations (4 days);
3. an academic case that drives the actuator into saturation (1 day).

Each run adds two perturbations on top of the upstream discharge:

* a flow-measurement bias ``0.03*Q_e + 10`` (m3/s), realized as an outflow
  shortfall: the turbines pass ``u - bias`` when asked for ``u``;
* lock flushes, rectangular pulses of 100 m3/s lasting 15 minutes, injected
  as lateral inflow at seeded random times.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .signals import TimeSeries
from .units import parse_quantity

__all__ = [
    "LockFlush",
    "Scenario",
    "BandReport",
    "bias",
    "lock_flush_signal",
    "affected_samples",
    "load_profile",
    "build_scenario",
    "evaluate_band",
    "transport_delay",
    "SCENARIO_FILES",
]

DAY = 86_400.0
SCENARIO_FILES = {1: "scenario1.cfg", 2: "scenario2.cfg", 3: "scenario3.cfg"}


@dataclass(frozen=True)
class LockFlush:
    start: float
    amplitude: float = 100.0
    duration: float = 900.0

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass
class Scenario:
    name: str
    duration: float
    T_s: float
    q_e_profile: TimeSeries
    setpoint_profile: TimeSeries
    bias_enabled: bool = True
    lock_flushes: list[LockFlush] = field(default_factory=list)
    seed: int = 0
    description: str = ""

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.T_s))

    def q_e(self, t) -> float:
        return self.q_e_profile.at(t)

    def z_r_star(self, t) -> float:
        return self.setpoint_profile.at(t)

    def w(self, t) -> float:
        return lock_flush_signal(self.lock_flushes, t)

    def bias(self, t) -> float:
        return bias(self.q_e(t)) if self.bias_enabled else 0.0


@dataclass(frozen=True)
class BandReport:
    max_over: float
    max_under: float
    violation_time: float
    within_band: bool
    band_halfwidth: float
    measured_transport_delay: float = math.nan

    @property
    def max_excursion(self) -> float:
        return max(self.max_over, self.max_under)

    def as_dict(self) -> dict:
        return {
            "max_over": self.max_over,
            "max_under": self.max_under,
            "violation_time": self.violation_time,
            "within_band": self.within_band,
            "band_halfwidth": self.band_halfwidth,
            "measured_transport_delay": self.measured_transport_delay,
        }


def bias(q_e: float) -> float:
    """Discharge-measurement bias ``0.03*q_e + 10`` in m3/s."""
    if q_e < 0:
        raise ValueError("upstream discharge must be non-negative")
    return 0.03 * q_e + 10.0


def lock_flush_signal(schedule, t: float) -> float:
    """Sum of the pulses active at ``t``; each pulse covers ``[start, start + duration)``.

    Overlapping pulses add up.
    """
    return float(sum(p.amplitude for p in schedule if p.start <= t < p.end))


def affected_samples(pulse: LockFlush, T_s: float) -> int:
    """Number of sampling instants ``k*T_s`` in ``(start, end]``.

    These are the samples whose preceding hold interval saw the pulse.
    """
    first = math.floor(pulse.start / T_s) + 1
    last = math.floor(pulse.end / T_s + 1e-9)
    return max(0, last - first + 1)


def load_profile(name: str) -> tuple[configparser.SectionProxy, np.ndarray, np.ndarray]:
    """Read a shipped scenario file; returns its ``[scenario]`` section and inflow knots (SI)."""
    text = resources.files("hydromfc.data").joinpath(name).read_text(encoding="utf-8")
    return parse_profile(text)


def parse_profile(text: str):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.read_string(text)
    times, flows = [], []
    for line in cp["inflow"]["knots"].strip().splitlines():
        line = line.split("#")[0].strip()
        if not line:
            continue
        t_txt, q_txt = (part.strip() for part in line.split(","))
        times.append(parse_quantity(t_txt, "time"))
        flows.append(parse_quantity(q_txt, "discharge"))
    times, flows = np.array(times), np.array(flows)
    if np.any(np.diff(times) <= 0):
        raise ValueError("inflow knots must have strictly increasing times")
    return cp["scenario"], times, flows


def _random_flushes(rng: np.random.Generator, duration: float, count: int,
                    amplitude: float, length: float, grid: float,
                    spacing: float = 3600.0) -> list[LockFlush]:
    # start times on a coarse grid (a multiple of every controller period
    # used), away from the run ends; one lock, so successive flushes are at
    # least `spacing` apart
    margin = 3 * 3600.0
    slots = np.arange(margin, duration - margin - length, grid)
    starts: list[float] = []
    while len(starts) < count:
        free = [s for s in slots if all(abs(s - o) >= spacing for o in starts)]
        if not free:
            raise ValueError("too many lock flushes for the run length")
        starts.append(float(free[rng.integers(len(free))]))
    return [LockFlush(s, amplitude, length) for s in sorted(starts)]


def build_scenario(n: int, T_s: float = 120.0, seed: int = 42, *,
                   n_flushes: int | None = None, bias_enabled: bool | None = None,
                   profile_step: float = 60.0) -> Scenario:
    """Assemble scenario ``n`` (1, 2 or 3) for controller period ``T_s``.

    The result depends only on its arguments.
    """
    if n not in SCENARIO_FILES:
        raise ValueError(f"unknown scenario {n!r}; expected one of {sorted(SCENARIO_FILES)}")
    if not T_s > 0:
        raise ValueError("controller period must be positive")
    section, knots_t, knots_q = load_profile(SCENARIO_FILES[n])
    duration = parse_quantity(section["duration"], "time")
    setpoint = parse_quantity(section["setpoint"], "length")
    if n_flushes is None:
        n_flushes = int(section.get("lock_flushes", "8"))
    if bias_enabled is None:
        bias_enabled = section.getboolean("bias", True)
    amplitude = parse_quantity(section.get("flush_amplitude", "100 m3/s"), "discharge")
    length = parse_quantity(section.get("flush_duration", "15 min"), "time")

    step = min(profile_step, T_s)
    t = np.arange(0.0, duration + step / 2, step)
    q = np.interp(t, knots_t, knots_q)
    rng = np.random.default_rng(seed)
    flushes = _random_flushes(rng, duration, n_flushes, amplitude, length, grid=600.0)
    return Scenario(
        name=section.get("name", f"scenario{n}"),
        duration=duration,
        T_s=float(T_s),
        q_e_profile=TimeSeries(0.0, step, q, "m3/s"),
        setpoint_profile=TimeSeries(0.0, duration, np.full(2, setpoint), "m"),
        bias_enabled=bias_enabled,
        lock_flushes=flushes,
        seed=seed,
        description=section.get("description", ""),
    )


def transport_delay(t, q_e, z_r, *, threshold: float = 20.0, window: float = 4 * 3600.0,
                    max_lag: float = 3 * 3600.0) -> float:
    """Lag (s) maximizing the cross-correlation between the first inflow change and ``z_r``.

    Uses the increments of both signals over ``window`` seconds following
    the first sample where ``q_e`` has moved by more than ``threshold``
    from its initial value.  Returns NaN when no such change exists.
    """
    t = np.asarray(t, dtype=float)
    q_e = np.asarray(q_e, dtype=float)
    z_r = np.asarray(z_r, dtype=float)
    moved = np.nonzero(np.abs(q_e - q_e[0]) > threshold)[0]
    if moved.size == 0:
        return math.nan
    dt = t[1] - t[0]
    k0 = max(moved[0] - int(round(window / 4 / dt)), 1)
    k1 = min(moved[0] + int(round(window / dt)), t.size)
    dq = np.diff(q_e[k0 - 1:k1])
    dz = np.diff(z_r[k0 - 1:k1])
    sign = np.sign(q_e[moved[0]] - q_e[0])  # a rising inflow first raises z_r
    dq = dq - dq.mean()
    dz = dz - dz.mean()
    n_lag = min(int(max_lag / dt), dq.size - 1)
    corr = [np.dot(dq[: dq.size - k], dz[k:]) for k in range(n_lag + 1)]
    return float(np.argmax(sign * np.array(corr)) * dt)


def evaluate_band(z_r, z_r_star, halfwidth: float = 0.10, *, dt: float | None = None,
                  t=None, q_e=None) -> BandReport:
    """Compare a remote-level trace to its setpoint.

    ``violation_time`` counts the samples with ``|z_r - z_r*| >= halfwidth``
    (the band is open) times the sampling period.  The transport delay is
    measured when the inflow trace ``q_e`` and times ``t`` are given.
    """
    z_r = np.asarray(z_r, dtype=float)
    z_r_star = np.asarray(z_r_star, dtype=float)
    if z_r.shape != z_r_star.shape or z_r.ndim != 1:
        raise ValueError("z_r and z_r_star traces must be aligned 1-D arrays")
    if t is not None:
        t = np.asarray(t, dtype=float)
        if t.shape != z_r.shape:
            raise ValueError("time trace misaligned with z_r")
        if dt is None and t.size > 1:
            dt = float(t[1] - t[0])
    if dt is None:
        dt = 1.0
    d = z_r - z_r_star
    max_over = float(max(0.0, d.max()))
    max_under = float(max(0.0, -d.min()))
    violation = float(np.count_nonzero(np.abs(d) >= halfwidth) * dt)
    delay = math.nan
    if q_e is not None and t is not None:
        delay = transport_delay(t, q_e, z_r)
    return BandReport(max_over, max_under, violation, violation == 0.0, halfwidth, delay)
