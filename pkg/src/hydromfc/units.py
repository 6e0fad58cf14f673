"""Unit-tagged quantities for configuration files ("15 km", "2 min", "700 m3/s")."""
from __future__ import annotations

import math
import re

__all__ = ["UnitError", "UNITS", "parse_quantity"]


class UnitError(ValueError):
    pass


# unit symbol -> (dimension, factor to SI)
UNITS: dict[str, tuple[str, float]] = {
    "m": ("length", 1.0),
    "km": ("length", 1000.0),
    "cm": ("length", 0.01),
    "mm": ("length", 0.001),
    "s": ("time", 1.0),
    "min": ("time", 60.0),
    "h": ("time", 3600.0),
    "day": ("time", 86400.0),
    "days": ("time", 86400.0),
    "m3/s": ("discharge", 1.0),
    "m3/s/min": ("discharge_rate", 1.0 / 60.0),
    "m3/s/s": ("discharge_rate", 1.0),
    "m2": ("area", 1.0),
    "km2": ("area", 1e6),
    "m/s": ("velocity", 1.0),
    "cm/min": ("velocity", 0.01 / 60.0),
    "1/s": ("frequency", 1.0),
    "1/min": ("frequency", 1.0 / 60.0),
    "1/h": ("frequency", 1.0 / 3600.0),
    "1/s2": ("frequency2", 1.0),
    "s/m^(1/3)": ("manning", 1.0),
    "m/m": ("slope", 1.0),
    "m/km": ("slope", 1e-3),
    "-": ("dimensionless", 1.0),
}

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S+)?\s*$")


def parse_quantity(text: str, dimension: str) -> float:
    """Parse ``"<number> <unit>"`` and return the value in SI units.

    A missing unit is an error unless ``dimension`` is ``"dimensionless"``.
    """
    m = _QUANTITY.match(str(text))
    if not m:
        raise UnitError(f"cannot parse quantity {text!r}")
    value, unit = float(m.group(1)), m.group(2)
    if unit is None:
        if dimension == "dimensionless":
            return value
        raise UnitError(f"{text!r} needs a unit of {dimension}")
    if unit not in UNITS:
        raise UnitError(f"unknown unit {unit!r} in {text!r}")
    dim, factor = UNITS[unit]
    if dim != dimension:
        raise UnitError(f"{text!r} is a {dim}, expected a {dimension}")
    out = value * factor
    if not math.isfinite(out):
        raise UnitError(f"non-finite quantity {text!r}")
    return out
