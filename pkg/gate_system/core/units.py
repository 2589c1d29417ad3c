"""
Unit conventions.

Files and the command line speak cyclic frequency (Hz); everything in memory is
angular frequency (rad/s). Conversions happen only at serializers.
"""
import math
from typing import Iterable, List

import numpy as np

TWO_PI = 2.0 * math.pi

# XX(pi/4) is the maximally entangling target
TARGET_ANGLE = math.pi / 4.0
HALF_ANGLE = math.pi / 8.0


def hz_to_rad(value_hz: float) -> float:
    return TWO_PI * float(value_hz)


def rad_to_hz(value_rad: float) -> float:
    return float(value_rad) / TWO_PI


def hz_list_to_rad(values_hz: Iterable[float]) -> np.ndarray:
    return TWO_PI * np.asarray(list(values_hz), dtype=float)


def rad_list_to_hz(values_rad: Iterable[float]) -> List[float]:
    return [float(v) / TWO_PI for v in values_rad]


def complex_pair(value: complex) -> List[float]:
    """JSON representation of a complex number as [re, im]."""
    value = complex(value)
    return [value.real, value.imag]
