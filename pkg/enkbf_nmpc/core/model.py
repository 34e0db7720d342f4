"""
Control-affine models, observation models and quadratic costs.

Every evaluation map is vectorized: it takes an array whose last axis is the
state dimension and keeps all leading axes, so the same callable evaluates a
single state, an ensemble ``(M, d_x)`` or a batch of ensembles
``(K, M, d_x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import ConfigError, DimensionError
from .linalg import check_psd, check_square, inv_sqrtm_spd, sqrtm_psd

StateMap = Callable[[np.ndarray], np.ndarray]


def _vector(value, name: str, size: Optional[int] = None) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be a vector, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise DimensionError(f"{name} must have length {size}, got {arr.shape[0]}")
    return arr


def _last_axis(x: np.ndarray, size: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != size:
        raise DimensionError(f"{name} must have trailing dimension {size}, got {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Controlled ODE dx = (f(x) + G u) dt observed through dY = h(x) dt + R^{1/2} dW."""

    d_x: int
    d_u: int
    d_y: int
    drift: StateMap
    control_matrix: np.ndarray
    obs_map: StateMap
    obs_cov: np.ndarray
    twin_noise_scale: float = 0.0
    name: str = "model"

    def __post_init__(self):
        if min(self.d_x, self.d_u, self.d_y) < 1:
            raise DimensionError("model dimensions must be positive")
        g = np.atleast_2d(np.asarray(self.control_matrix, dtype=float))
        if g.shape != (self.d_x, self.d_u):
            raise DimensionError(
                f"control matrix must be {self.d_x}x{self.d_u}, got {g.shape}"
            )
        r = check_square(np.atleast_2d(self.obs_cov), "obs_cov", self.d_y)
        check_psd(r, "obs_cov", strict=True)
        if self.twin_noise_scale < 0:
            raise DimensionError("twin_noise_scale must be non-negative")
        object.__setattr__(self, "control_matrix", g)
        object.__setattr__(self, "obs_cov", r)

    @cached_property
    def obs_precision(self) -> np.ndarray:
        """R^{-1}."""
        return linalg.inv(self.obs_cov)

    @cached_property
    def obs_noise_sqrt(self) -> np.ndarray:
        """R^{1/2}."""
        return sqrtm_psd(self.obs_cov)

    @cached_property
    def obs_noise_isqrt(self) -> np.ndarray:
        """R^{-1/2}."""
        return inv_sqrtm_spd(self.obs_cov)

    @cached_property
    def control_gram(self) -> np.ndarray:
        """G G^T."""
        return self.control_matrix @ self.control_matrix.T

    def f(self, x: np.ndarray) -> np.ndarray:
        return self.drift(_last_axis(x, self.d_x, "state"))

    def h(self, x: np.ndarray) -> np.ndarray:
        return self.obs_map(_last_axis(x, self.d_x, "state"))

    def control_drift(self, u: np.ndarray) -> np.ndarray:
        """G u, vectorized over leading axes of ``u``."""
        return _last_axis(u, self.d_u, "control") @ self.control_matrix.T


@dataclass(frozen=True, eq=False)
class QuadraticCost:
    """Running cost ½(x-c)^T V (x-c) and terminal cost ½(x-c_T)^T V_T (x-c_T)."""

    V: np.ndarray
    c: np.ndarray
    V_T: np.ndarray
    c_T: np.ndarray

    def __post_init__(self):
        v = check_square(self.V, "V")
        d_x = v.shape[0]
        v_t = check_square(self.V_T, "V_T", d_x)
        check_psd(v, "V")
        check_psd(v_t, "V_T")
        object.__setattr__(self, "V", v)
        object.__setattr__(self, "V_T", v_t)
        object.__setattr__(self, "c", _vector(self.c, "c", d_x))
        object.__setattr__(self, "c_T", _vector(self.c_T, "c_T", d_x))

    @property
    def d_x(self) -> int:
        return self.V.shape[0]

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.V) or np.any(self.V_T))


@dataclass(frozen=True, eq=False)
class InitialLaw:
    """Gaussian initial law N(m_0, C_0); C_0 may be singular."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = _vector(self.mean, "mean")
        c = check_square(np.atleast_2d(self.cov), "cov", m.shape[0])
        check_psd(c, "cov")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", c)

    @property
    def d_x(self) -> int:
        return self.mean.shape[0]


# ---- cost evaluation -----------------------------------------------------------


def running_cost(cost: QuadraticCost, x: np.ndarray) -> np.ndarray:
    d = _last_axis(x, cost.d_x, "state") - cost.c
    return 0.5 * np.einsum("...i,ij,...j->...", d, cost.V, d)


def terminal_cost(cost: QuadraticCost, x: np.ndarray) -> np.ndarray:
    d = _last_axis(x, cost.d_x, "state") - cost.c_T
    return 0.5 * np.einsum("...i,ij,...j->...", d, cost.V_T, d)


def running_cost_grad(cost: QuadraticCost, x: np.ndarray) -> np.ndarray:
    """∇c(x) = V (x - c)."""
    return (_last_axis(x, cost.d_x, "state") - cost.c) @ cost.V.T


def terminal_cost_grad(cost: QuadraticCost, x: np.ndarray) -> np.ndarray:
    """∇ψ(x) = V_T (x - c_T)."""
    return (_last_axis(x, cost.d_x, "state") - cost.c_T) @ cost.V_T.T


def control_law(
    Lambda: np.ndarray, lam: np.ndarray, xbar: np.ndarray, G: np.ndarray
) -> np.ndarray:
    """u = -G^T (Λ x̄ + λ); ``xbar`` may carry leading batch axes."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    d_x = G.shape[0]
    Lambda = check_square(Lambda, "Lambda", d_x)
    lam = _vector(lam, "lambda", d_x)
    xbar = _last_axis(xbar, d_x, "xbar")
    return -(xbar @ Lambda.T + lam) @ G


# ---- shipped systems -------------------------------------------------------------


def pendulum_model(
    gamma: float = 5.0, obs_variance: float = 1.0, twin_noise_scale: float = 0.0
) -> ModelSpec:
    """Damped pendulum φ'' = sin φ - γ φ' + u, observing the angle."""
    if gamma < 0:
        raise ConfigError(f"damping must be non-negative, got {gamma}")

    def drift(x: np.ndarray) -> np.ndarray:
        phi, omega = x[..., 0], x[..., 1]
        return np.stack([omega, np.sin(phi) - gamma * omega], axis=-1)

    def obs_map(x: np.ndarray) -> np.ndarray:
        return x[..., :1]

    return ModelSpec(
        d_x=2,
        d_u=1,
        d_y=1,
        drift=drift,
        control_matrix=np.array([[0.0], [1.0]]),
        obs_map=obs_map,
        obs_cov=np.array([[obs_variance]]),
        twin_noise_scale=twin_noise_scale,
        name="pendulum",
    )


def linear_model(
    A: np.ndarray,
    b: np.ndarray,
    G: np.ndarray,
    H: np.ndarray,
    R: np.ndarray,
    twin_noise_scale: float = 0.0,
) -> ModelSpec:
    """dx = (A x + b + G u) dt, dY = H x dt + R^{1/2} dW."""
    A = check_square(A, "A")
    d_x = A.shape[0]
    b = _vector(b, "b", d_x)
    G = np.atleast_2d(np.asarray(G, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.shape[1] != d_x:
        raise DimensionError(f"H must have {d_x} columns, got {H.shape}")

    def drift(x: np.ndarray) -> np.ndarray:
        return x @ A.T + b

    def obs_map(x: np.ndarray) -> np.ndarray:
        return x @ H.T

    return ModelSpec(
        d_x=d_x,
        d_u=G.shape[1],
        d_y=H.shape[0],
        drift=drift,
        control_matrix=G,
        obs_map=obs_map,
        obs_cov=np.atleast_2d(R),
        twin_noise_scale=twin_noise_scale,
        name="linear",
    )


def quadratic_cost(
    d_x: int,
    weight: float,
    terminal_weight: float,
    target: Optional[Sequence[float]] = None,
    terminal_target: Optional[Sequence[float]] = None,
) -> QuadraticCost:
    """Isotropic cost weight/2 |x - c|^2 with terminal terminal_weight/2 |x - c_T|^2."""
    zeros = np.zeros(d_x)
    return QuadraticCost(
        V=weight * np.eye(d_x),
        c=zeros if target is None else target,
        V_T=terminal_weight * np.eye(d_x),
        c_T=zeros if terminal_target is None else terminal_target,
    )


def pendulum_initial_law(
    mean: Sequence[float] = (math.pi / 2, 0.0), variance: float = 0.1
) -> InitialLaw:
    return InitialLaw(mean=np.asarray(mean, dtype=float), cov=variance * np.eye(2))


__all__ = [
    "ModelSpec",
    "QuadraticCost",
    "InitialLaw",
    "running_cost",
    "terminal_cost",
    "running_cost_grad",
    "terminal_cost_grad",
    "control_law",
    "pendulum_model",
    "linear_model",
    "quadratic_cost",
    "pendulum_initial_law",
]
