"""Exception hierarchy shared by the numerical core and the harness."""
from __future__ import annotations

from typing import Any, Optional


class EnkbfNmpcError(Exception):
    """Root of all errors raised by the package."""


class DimensionError(EnkbfNmpcError, ValueError):
    """Array shapes are mutually inconsistent."""


class ConfigError(EnkbfNmpcError, ValueError):
    """An experiment configuration is invalid or unreadable."""


class DivergenceError(EnkbfNmpcError, RuntimeError):
    """A state, ensemble or gain became non-finite."""

    def __init__(
        self, message: str, t: Optional[float] = None, iteration: Optional[int] = None
    ):
        super().__init__(message)
        self.t = t
        self.iteration = iteration


class SingularMatrixError(EnkbfNmpcError, RuntimeError):
    """A matrix that has to be inverted is numerically singular."""

    def __init__(self, message: str, smallest_eigenvalue: float):
        super().__init__(f"{message} (smallest eigenvalue {smallest_eigenvalue:.3e})")
        self.smallest_eigenvalue = smallest_eigenvalue


class RiccatiBlowUpError(DivergenceError):
    """The backward Riccati integration escaped to infinity."""


class RecedingHorizonError(DivergenceError):
    """Failure inside the receding-horizon loop; carries the partial log."""

    def __init__(self, message: str, t: Optional[float], log: Any):
        super().__init__(message, t=t)
        self.log = log


__all__ = [
    "EnkbfNmpcError",
    "DimensionError",
    "ConfigError",
    "DivergenceError",
    "SingularMatrixError",
    "RiccatiBlowUpError",
    "RecedingHorizonError",
]
