"""
Linear-Gaussian reference solutions.

Backward Riccati/affine ODEs for the gains (Λ_t, λ_t) of the LQ problem and
the Kalman-Bucy moment ODEs, both integrated with classical RK4 so their
discretization error is negligible next to the Euler-based ensemble solvers
they are compared against.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from ..core.errors import DimensionError, RiccatiBlowUpError
from ..core.grid import time_grid
from ..core.linalg import check_psd, check_square, symmetrize
from ..core.model import InitialLaw, ModelSpec, QuadraticCost, linear_model
from ..utils.logging import get_logger
from .fbsde import GainSchedule

logger = get_logger("control.riccati_oracle")

# |Λ| beyond this is treated as finite escape
BLOW_UP_NORM = 1e12

ControlPath = Union[None, Callable[[float], np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class LtiSpec:
    """dx = (A x + b + G u) dt observed through dY = H x dt + R^{1/2} dW."""

    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    H: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        A = check_square(self.A, "A")
        d_x = A.shape[0]
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        if b.shape != (d_x,):
            raise DimensionError(f"b must have length {d_x}, got {b.shape}")
        if G.shape[0] != d_x:
            raise DimensionError(f"G must have {d_x} rows, got {G.shape}")
        if H.shape[1] != d_x:
            raise DimensionError(f"H must have {d_x} columns, got {H.shape}")
        R = check_square(np.atleast_2d(self.R), "R", H.shape[0])
        check_psd(R, "R", strict=True)
        for name, value in (("A", A), ("b", b), ("G", G), ("H", H), ("R", R)):
            object.__setattr__(self, name, value)

    @property
    def d_x(self) -> int:
        return self.A.shape[0]

    @property
    def d_u(self) -> int:
        return self.G.shape[1]

    @property
    def d_y(self) -> int:
        return self.H.shape[0]

    def to_model(self, twin_noise_scale: float = 0.0) -> ModelSpec:
        return linear_model(self.A, self.b, self.G, self.H, self.R, twin_noise_scale)


def _rk4(rhs, y, s: float, h: float):
    k1 = rhs(s, y)
    k2 = rhs(s + 0.5 * h, tuple(a + 0.5 * h * k for a, k in zip(y, k1)))
    k3 = rhs(s + 0.5 * h, tuple(a + 0.5 * h * k for a, k in zip(y, k2)))
    k4 = rhs(s + h, tuple(a + h * k for a, k in zip(y, k3)))
    return tuple(
        a + h / 6.0 * (p + 2.0 * q + 2.0 * r + w)
        for a, p, q, r, w in zip(y, k1, k2, k3, k4)
    )


def integrate_riccati(
    lti: LtiSpec, cost: QuadraticCost, T: float, dt: float, t0: float = 0.0
) -> GainSchedule:
    """
    Integrate the gain equations backward from Λ_T = V_T, λ_T = -V_T c_T:

        -dΛ/dt = Λ A + A^T Λ - Λ G G^T Λ + V
        -dλ/dt = A^T λ - V c + Λ (b - G G^T λ)

    Λ is symmetrized after every step.

    Raises:
        RiccatiBlowUpError: if Λ leaves the finite range (finite escape)
    """
    if cost.d_x != lti.d_x:
        raise DimensionError(f"cost dimension {cost.d_x} does not match d_x={lti.d_x}")
    grid = time_grid(t0, T, dt)
    n_steps = grid.size - 1
    A, b = lti.A, lti.b
    gg = lti.G @ lti.G.T
    V, Vc = cost.V, cost.V @ cost.c

    def rhs(_s, y):
        Lam, lam = y
        dLam = Lam @ A + A.T @ Lam - Lam @ gg @ Lam + V
        dlam = A.T @ lam - Vc + Lam @ (b - gg @ lam)
        return dLam, dlam

    Lambda = np.empty((n_steps + 1, lti.d_x, lti.d_x))
    lam = np.empty((n_steps + 1, lti.d_x))
    Lambda[-1] = cost.V_T
    lam[-1] = -cost.V_T @ cost.c_T

    state = (Lambda[-1], lam[-1])
    for n in range(n_steps - 1, -1, -1):
        h = grid[n + 1] - grid[n]
        Lam_n, lam_n = _rk4(rhs, state, T - grid[n + 1], h)
        Lam_n = symmetrize(Lam_n)
        if not (np.all(np.isfinite(Lam_n)) and np.all(np.isfinite(lam_n))) or (
            np.max(np.abs(Lam_n)) > BLOW_UP_NORM
        ):
            logger.error("Riccati solution escaped at t=%.6g", grid[n])
            raise RiccatiBlowUpError(f"Riccati solution blew up at t={grid[n]:.6g}", t=grid[n])
        Lambda[n], lam[n] = Lam_n, lam_n
        state = (Lam_n, lam_n)

    logger.debug("Riccati oracle integrated over %d steps", n_steps)
    return GainSchedule(grid, Lambda, lam)


class MomentPath(NamedTuple):
    mean: np.ndarray  # (N+1, d_x)
    cov: np.ndarray  # (N+1, d_x, d_x)


def _control_signal(u_path: ControlPath, grid: np.ndarray, d_u: int) -> Callable[[float], np.ndarray]:
    if u_path is None:
        zero = np.zeros(d_u)
        return lambda _t: zero
    if callable(u_path):
        return lambda t: np.atleast_1d(np.asarray(u_path(t), dtype=float))
    values = np.asarray(u_path, dtype=float).reshape(grid.size, -1)
    if values.shape[1] != d_u:
        raise DimensionError(f"u_path must be ({grid.size}, {d_u}), got {values.shape}")

    def signal(t: float) -> np.ndarray:
        return np.array([np.interp(t, grid, values[:, j]) for j in range(d_u)])

    return signal


def kalman_bucy_moments(
    lti: LtiSpec,
    law: InitialLaw,
    u_path: ControlPath,
    T: float,
    dt: float,
    t0: float = 0.0,
) -> MomentPath:
    """
    Noise-free Kalman-Bucy moments by forward RK4:

        dm/dt = A m + b + G u(t)
        dC/dt = A C + C A^T - C H^T R^{-1} H C

    ``u_path`` is None (u = 0), a callable t -> u or an array on the grid.
    """
    if law.d_x != lti.d_x:
        raise DimensionError(f"initial law dimension {law.d_x} does not match d_x={lti.d_x}")
    grid = time_grid(t0, T, dt)
    u = _control_signal(u_path, grid, lti.d_u)
    A, b, G = lti.A, lti.b, lti.G
    hrh = lti.H.T @ np.linalg.solve(lti.R, lti.H)

    def rhs(t, y):
        m, C = y
        return A @ m + b + G @ u(t), A @ C + C @ A.T - C @ hrh @ C

    means = np.empty((grid.size, lti.d_x))
    covs = np.empty((grid.size, lti.d_x, lti.d_x))
    means[0], covs[0] = law.mean, law.cov
    state = (law.mean, law.cov)
    for n in range(grid.size - 1):
        m_n, C_n = _rk4(rhs, state, grid[n], grid[n + 1] - grid[n])
        C_n = symmetrize(C_n)
        means[n + 1], covs[n + 1] = m_n, C_n
        state = (m_n, C_n)
    return MomentPath(means, covs)


__all__ = [
    "LtiSpec",
    "MomentPath",
    "integrate_riccati",
    "kalman_bucy_moments",
]
