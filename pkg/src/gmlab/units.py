"""Frequency unit handling.

Everything inside the package runs in angular frequency (rad/us) and time in us.
Configuration files and user-facing inputs may quote cyclic frequencies in kHz or
MHz; conversion happens once, at the boundary, through :func:`to_angular`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi

# multiplicative factor taking <value in unit> to <value in 1/us>
_UNIT_SCALE = {
    "kHz": 1e-3,
    "MHz": 1.0,
    "rad_per_us": 1.0,
}


@dataclass(frozen=True)
class FrequencySpec:
    """A frequency as it appears in a config file.

    ``angular=False`` means the number is a cyclic frequency and picks up a
    factor 2*pi on conversion; ``angular=True`` means the number is already an
    angular frequency expressed in the stated unit's rad-equivalent (e.g.
    ``unit="MHz", angular=True`` reads as rad/us).
    """

    value: float
    unit: str = "rad_per_us"
    angular: bool = True

    def __post_init__(self) -> None:
        if self.unit not in _UNIT_SCALE:
            raise ValueError(f"unknown frequency unit {self.unit!r}; expected one of {sorted(_UNIT_SCALE)}")

    def to_angular(self) -> float:
        """Return the value in rad/us."""
        scaled = self.value * _UNIT_SCALE[self.unit]
        if self.unit == "rad_per_us" or self.angular:
            return scaled
        return TWO_PI * scaled


def to_angular(value: float, unit: str = "rad_per_us", angular: bool = True) -> float:
    """Convert a frequency quoted in ``unit`` to angular rad/us."""
    return FrequencySpec(value, unit, angular).to_angular()


def frequency_from_json(obj: object) -> float:
    """Parse a config-file frequency field into rad/us.

    Accepts a plain number (taken as rad/us) or a mapping with keys
    ``value``, ``unit``, ``angular``.
    """
    if isinstance(obj, (int, float)):
        return float(obj)
    if isinstance(obj, dict):
        return FrequencySpec(
            value=float(obj["value"]),
            unit=str(obj.get("unit", "rad_per_us")),
            angular=bool(obj.get("angular", False)),
        ).to_angular()
    raise ValueError(f"cannot parse frequency from {obj!r}")
