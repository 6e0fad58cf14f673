"""Run configuration: INI sections whose physical entries carry units.

Example::

    [geometry]
    length = 15 km
    sensor_x = 7.5 km

    [controller]
    period = 2 min

Every physical key has a declared dimension and is rejected without a unit;
values are normalized to SI on load.  Missing keys take the shipped defaults
(``hydromfc/data/default.cfg``).
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .cascade import OuterLoop
from .mfc import ControllerGains, Saturator, UltraLocalModel
from .plant import ChannelGeometry
from .units import UnitError, parse_quantity

__all__ = ["ConfigError", "RunConfig", "ControllerConfig", "CascadeConfig",
           "load_config", "default_config", "SCHEMA"]


class ConfigError(ValueError):
    pass


# section -> key -> dimension ("int" / "bool" / "str" for non-physical entries)
SCHEMA: dict[str, dict[str, str]] = {
    "geometry": {
        "length": "length",
        "width": "length",
        "bed_slope": "slope",
        "manning_n": "manning",
        "n_cells": "int",
        "lateral_inflow_x": "length",
        "sensor_x": "length",
    },
    "controller": {
        "alpha": "area",
        "window": "int",
        "period": "time",
        "kp_ratio": "dimensionless",
        "u_min": "discharge",
        "u_max": "discharge",
        "rate_max": "discharge_rate",
        "anti_windup": "bool",
    },
    "cascade": {
        "kp_out": "dimensionless",
        "outer_integral_time": "time",
        "max_correction": "length",
        "transition": "time",
        "rate_feedforward": "bool",
        "z_r_target": "length",
        "q_min": "discharge",
        "q_max": "discharge",
        "q_step": "discharge",
        "reconstruction_file": "str",
    },
    "run": {
        "scenario": "int",
        "plant": "str",
        "seed": "int",
        "halfwidth": "length",
        "lock_flushes": "int",
        "output": "str",
    },
}


@dataclass(frozen=True)
class ControllerConfig:
    alpha: float = 1.65e5
    window: int = 30
    period: float = 120.0
    kp_ratio: float = 10.0
    u_min: float = 0.0
    u_max: float = 1400.0
    rate_max: float = 25.0 / 60.0   # m3/s per second
    anti_windup: bool = True

    def __post_init__(self):
        if not self.period > 0:
            raise ConfigError("controller period must be positive")
        if not (self.alpha > 0 and self.kp_ratio > 0 and self.rate_max > 0):
            raise ConfigError("alpha, kp_ratio and rate_max must be positive")
        if self.window < 2:
            raise ConfigError("slope window needs at least 2 samples")
        if not self.u_min < self.u_max:
            raise ConfigError("u_min must be below u_max")

    @property
    def model(self) -> UltraLocalModel:
        return UltraLocalModel(nu=1, alpha=self.alpha, estimator_window=self.window)

    @property
    def gains(self) -> ControllerGains:
        return ControllerGains.critically_damped(self.period, self.kp_ratio)

    @property
    def saturator(self) -> Saturator:
        return Saturator(self.u_min, self.u_max, self.rate_max * self.period)


@dataclass(frozen=True)
class CascadeConfig:
    kp_out: float = 0.3
    outer_integral_time: float = 3600.0
    max_correction: float = 1.0
    transition: float = 3600.0
    rate_feedforward: bool = False
    z_r_target: float = 10.0
    q_min: float = 400.0
    q_max: float = 1400.0
    q_step: float = 100.0
    reconstruction_file: str = ""

    @property
    def ki_out(self) -> float:
        return self.kp_out / self.outer_integral_time

    def outer_loop(self, anti_windup: bool = True) -> OuterLoop:
        return OuterLoop(self.kp_out, self.ki_out, anti_windup=anti_windup,
                         max_correction=self.max_correction)

    @property
    def q_grid(self) -> list[float]:
        n = int(round((self.q_max - self.q_min) / self.q_step))
        return [self.q_min + k * self.q_step for k in range(n + 1)]


@dataclass(frozen=True)
class RunConfig:
    geometry: ChannelGeometry = field(default_factory=ChannelGeometry)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    cascade: CascadeConfig = field(default_factory=CascadeConfig)
    scenario: int = 1
    plant: str = "pde"
    seed: int = 42
    halfwidth: float = 0.10
    lock_flushes: int = 8
    output: str = "out"
    source: str = ""

    def __post_init__(self):
        if self.plant not in ("pde", "surrogate"):
            raise ConfigError(f"plant must be 'pde' or 'surrogate', got {self.plant!r}")
        # the outer loop must be slower than the inner one
        if not self.cascade.ki_out < self.controller.gains.kp:
            raise ConfigError(
                "outer integral rate must stay below the inner proportional gain "
                f"({self.cascade.ki_out:.3g} >= {self.controller.gains.kp:.3g} 1/s)")

    def with_period(self, period: float) -> "RunConfig":
        return replace(self, controller=replace(self.controller, period=float(period)))

    def with_(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)


def _convert(section: str, key: str, raw: str, kind: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "str":
            return raw
        return parse_quantity(raw, kind)
    except (UnitError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def _parse(text: str, source: str) -> dict[str, dict[str, object]]:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    values: dict[str, dict[str, object]] = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}] in {source}")
        values[section] = {}
        for key, raw in cp[section].items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}] of {source}")
            values[section][key] = _convert(section, key, raw, SCHEMA[section][key])
    return values


def _build(values: dict[str, dict[str, object]], source: str) -> RunConfig:
    try:
        return RunConfig(
            geometry=ChannelGeometry(**values.get("geometry", {})),
            controller=ControllerConfig(**values.get("controller", {})),
            cascade=CascadeConfig(**values.get("cascade", {})),
            source=source,
            **values.get("run", {}),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def default_config() -> RunConfig:
    text = resources.files("hydromfc.data").joinpath("default.cfg").read_text(encoding="utf-8")
    return _build(_parse(text, "default.cfg"), "default.cfg")


def load_config(path: str | Path | None = None) -> RunConfig:
    """Shipped defaults, overridden by the entries of ``path`` if given."""
    text = resources.files("hydromfc.data").joinpath("default.cfg").read_text(encoding="utf-8")
    values = _parse(text, "default.cfg")
    source = "default.cfg"
    if path is not None:
        path = Path(path)
        try:
            user_text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        for section, entries in _parse(user_text, str(path)).items():
            values.setdefault(section, {}).update(entries)
        source = str(path)
    return _build(values, source)
