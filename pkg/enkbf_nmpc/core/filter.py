"""
Ensemble Kalman-Bucy filter time stepping.

Two explicit Euler forms share the deterministic-transport structure:

* assimilation against actual observation increments (digital twin)::

    dX_i = (f(X_i) + G u - ½ C^{xh} R^{-1} (h(X_i) + h̄)) dt + C^{xh} R^{-1} dY

* simulated-innovation prediction (inside the FBSDE forward sweep)::

    dX_i = (f(X_i) + G u - ½ C^{xh} R^{-1} (h(X_i) - h̄)) dt + C^{xh} R^{-1/2} dW

The gain is recomputed from the current ensemble at every step. The noise
term is common to all members of an ensemble, so it moves only the mean.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ensemble import Ensemble, EnsembleMoments, ensemble_moments
from .errors import DimensionError, DivergenceError
from .model import ModelSpec


@dataclass(frozen=True, eq=False)
class FilterState:
    ensemble: Ensemble
    t: float = 0.0


def _control_term(model: ModelSpec, u: np.ndarray, batch_shape: tuple) -> np.ndarray:
    """G u broadcast against members; ``u`` is (d_u,) or (*batch, d_u)."""
    gu = model.control_drift(np.asarray(u, dtype=float))
    if gu.ndim == 1:
        return gu
    if gu.shape[:-1] != batch_shape:
        raise DimensionError(f"control batch {gu.shape[:-1]} does not match {batch_shape}")
    return gu[..., None, :]


def _check_finite(members: np.ndarray, t: Optional[float], what: str) -> np.ndarray:
    if not np.all(np.isfinite(members)):
        raise DivergenceError(f"{what} produced a non-finite ensemble member", t=t)
    return members


def assimilate_members(
    members: np.ndarray,
    model: ModelSpec,
    u: np.ndarray,
    dY_obs: np.ndarray,
    dt: float,
    moments: Optional[EnsembleMoments] = None,
    t: Optional[float] = None,
) -> np.ndarray:
    """One assimilation step on a ``(..., M, d_x)`` array."""
    if dt <= 0:
        raise DimensionError(f"dt must be positive, got {dt}")
    mo = moments if moments is not None else ensemble_moments(members, model)
    gain = mo.cov_xh @ model.obs_precision  # C^{xh} R^{-1}
    batch = members.shape[:-2]
    dY_obs = np.asarray(dY_obs, dtype=float)
    if dY_obs.shape[-1] != model.d_y:
        raise DimensionError(f"observation increment must have length {model.d_y}")
    innov = mo.h + mo.h_mean[..., None, :]
    drift = mo.f + _control_term(model, u, batch) - 0.5 * innov @ np.swapaxes(gain, -1, -2)
    data = np.swapaxes(gain @ dY_obs[..., None], -1, -2)
    return _check_finite(members + drift * dt + data, t, "assimilation step")


def simulate_members(
    members: np.ndarray,
    model: ModelSpec,
    u: np.ndarray,
    dW: np.ndarray,
    dt: float,
    moments: Optional[EnsembleMoments] = None,
    t: Optional[float] = None,
) -> np.ndarray:
    """One simulated-innovation step on a ``(..., M, d_x)`` array."""
    if dt <= 0:
        raise DimensionError(f"dt must be positive, got {dt}")
    mo = moments if moments is not None else ensemble_moments(members, model)
    gain = mo.cov_xh @ model.obs_precision
    batch = members.shape[:-2]
    dW = np.asarray(dW, dtype=float)
    if dW.shape[-1] != model.d_y:
        raise DimensionError(f"noise increment must have length {model.d_y}")
    spread = mo.h - mo.h_mean[..., None, :]
    drift = mo.f + _control_term(model, u, batch) - 0.5 * spread @ np.swapaxes(gain, -1, -2)
    noise_gain = mo.cov_xh @ model.obs_noise_isqrt  # C^{xh} R^{-1/2}
    noise = np.swapaxes(noise_gain @ dW[..., None], -1, -2)
    return _check_finite(members + drift * dt + noise, t, "simulated step")


def assimilate_step(
    state: FilterState, model: ModelSpec, u: np.ndarray, dY_obs: np.ndarray, dt: float
) -> FilterState:
    members = assimilate_members(
        state.ensemble.members, model, u, dY_obs, dt, t=state.t
    )
    return FilterState(Ensemble(members), state.t + dt)


def simulated_step(
    state: FilterState, model: ModelSpec, u: np.ndarray, dW: np.ndarray, dt: float
) -> FilterState:
    members = simulate_members(state.ensemble.members, model, u, dW, dt, t=state.t)
    return FilterState(Ensemble(members), state.t + dt)


__all__ = [
    "FilterState",
    "assimilate_members",
    "simulate_members",
    "assimilate_step",
    "simulated_step",
]
