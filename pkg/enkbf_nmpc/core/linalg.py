"""Symmetric matrix helpers built on eigendecompositions."""
from __future__ import annotations

import numpy as np
from scipy import linalg

from .errors import DimensionError, SingularMatrixError

# eigenvalue floor below which a "PSD" matrix is rejected
PSD_TOLERANCE = 1e-10


def symmetrize(a: np.ndarray) -> np.ndarray:
    """(A + A^T) / 2 over the last two axes."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def check_square(a: np.ndarray, name: str, size: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be a square matrix, got shape {a.shape}")
    if size is not None and a.shape[0] != size:
        raise DimensionError(f"{name} must be {size}x{size}, got {a.shape}")
    return a


def check_psd(a: np.ndarray, name: str, strict: bool = False) -> None:
    """Raise if ``a`` is not symmetric positive (semi-)definite."""
    if not np.allclose(a, a.T, atol=1e-12, rtol=1e-10):
        raise DimensionError(f"{name} must be symmetric")
    lowest = float(linalg.eigvalsh(a)[0]) if a.size else 0.0
    if strict and lowest <= 0.0:
        raise DimensionError(f"{name} must be positive definite (min eigenvalue {lowest:.3e})")
    if lowest < -PSD_TOLERANCE:
        raise DimensionError(f"{name} must be positive semidefinite (min eigenvalue {lowest:.3e})")


def sqrtm_psd(c: np.ndarray) -> np.ndarray:
    """Symmetric square root; negative eigenvalues are clipped at zero."""
    w, v = linalg.eigh(symmetrize(np.asarray(c, dtype=float)))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def inv_sqrtm_spd(c: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Symmetric inverse square root of an SPD matrix."""
    w, v = linalg.eigh(symmetrize(np.asarray(c, dtype=float)))
    if w[0] <= floor:
        raise SingularMatrixError("matrix is not positive definite", float(w[0]))
    return (v / np.sqrt(w)) @ v.T
