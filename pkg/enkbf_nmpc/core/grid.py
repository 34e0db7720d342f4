"""Uniform time grids."""
from __future__ import annotations

import numpy as np

from .errors import DimensionError

# relative tolerance when checking that an interval is a multiple of dt
GRID_RTOL = 1e-9


def steps_in(length: float, dt: float) -> int:
    """Number of dt steps in an interval, which must be an integer multiple of dt."""
    if dt <= 0:
        raise DimensionError(f"dt must be positive, got {dt}")
    if length < 0:
        raise DimensionError(f"interval length must be non-negative, got {length}")
    n = int(round(length / dt))
    if abs(n * dt - length) > GRID_RTOL * max(abs(length), dt):
        raise DimensionError(f"interval {length} is not a multiple of dt={dt}")
    return n


def time_grid(t0: float, length: float, dt: float) -> np.ndarray:
    """Nodes t0, t0+dt, ..., t0+length computed from integer indices."""
    n = steps_in(length, dt)
    return t0 + dt * np.arange(n + 1, dtype=float)
