"""
Utilities Package

Contains logging, experiment configuration, seeded random streams and path
helpers.
"""

__all__ = ["logging", "config", "rng", "path_helpers"]
