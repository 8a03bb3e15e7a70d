"""Canonical angle wrapping, shared by the model and aggregation layers."""

from __future__ import annotations

import math

import numpy as np

from .errors import ParameterError

TAU = 2.0 * math.pi


def wrap_angle(x: float) -> float:
    """Map x to the unique congruent value in (-pi, pi].

    Values already inside the interval are returned untouched so that
    wrapping is bit-exact on canonical inputs.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ParameterError("angle must be finite")
    if -math.pi < x <= math.pi:
        return x
    y = math.remainder(x, TAU)
    if y <= -math.pi:
        y += TAU
    return y


def wrap_angles(angles: np.ndarray) -> np.ndarray:
    """Vectorized wrap_angle; in-range entries pass through bit-identical."""
    a = np.asarray(angles, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ParameterError("angles must be finite")
    in_range = (a > -np.pi) & (a <= np.pi)
    if np.all(in_range):
        return a.copy()
    y = a - TAU * np.round(a / TAU)
    y = np.where(y <= -np.pi, y + TAU, y)
    return np.where(in_range, a, y)
