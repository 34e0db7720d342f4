"""
EnKBF-NMPC

Receding-horizon stochastic optimal control for partially observed
dynamical systems, combining an ensemble Kalman-Bucy filter with an
ensemble forward-backward SDE solver, plus the linear-quadratic reference
solutions used to validate it.
"""

__version__ = "0.1.0"
__author__ = "EnKBF-NMPC Team"
__license__ = "MIT"

# Package metadata
__all__ = ["core", "control", "experiments", "commands", "utils"]
