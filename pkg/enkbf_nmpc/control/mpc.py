"""
Receding-horizon controller.

At every replan instant τ_n = n Δτ the finite-horizon problem on
[τ_n, τ_n + T] is solved from the current filter ensemble. Over
[τ_n, τ_{n+1}) the physical twin is advanced with the control computed from
the interpolated gains and the running digital-twin mean, and the
observations it produces are assimilated into the digital twin.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..core.ensemble import min_eigenvalue, moment_matched_initial, tile_or_resample
from ..core.errors import (
    ConfigError,
    DimensionError,
    DivergenceError,
    RecedingHorizonError,
    SingularMatrixError,
)
from ..core.filter import FilterState, assimilate_step
from ..core.grid import steps_in
from ..core.linalg import sqrtm_psd
from ..core.model import InitialLaw, ModelSpec, QuadraticCost, control_law, running_cost
from ..utils.logging import get_logger
from .fbsde import ControlMode, GainSchedule, picard_solve

logger = get_logger("control.mpc")


@dataclass(frozen=True, eq=False)
class TwinState:
    """Physical twin X_t† and digital twin on a shared clock."""

    x_true: np.ndarray
    filter: FilterState
    t: float


@dataclass
class MpcConfig:
    horizon: float = 0.5
    replan_interval: float = 0.05
    dt: float = 1e-3
    duration: float = 2.0
    M: int = 50
    K: int = 50
    n_iter: int = 3
    ridge: Optional[float] = None
    control_mode: ControlMode = ControlMode.CLOSED_LOOP
    warm_start: bool = True
    symmetrize: bool = False

    def validate(self) -> "MpcConfig":
        if self.M < 2 or self.K < 2:
            raise ConfigError(f"M and K must be at least 2 (got M={self.M}, K={self.K})")
        if self.n_iter < 1:
            raise ConfigError(f"n_iter must be at least 1, got {self.n_iter}")
        if self.ridge is not None and self.ridge < 0:
            raise ConfigError(f"ridge must be non-negative, got {self.ridge}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.duration > 0:
            raise ConfigError(f"duration must be positive, got {self.duration}")
        if not 0 < self.replan_interval <= self.horizon:
            raise ConfigError(
                f"replan interval must lie in (0, horizon]: {self.replan_interval} vs {self.horizon}"
            )
        for name in ("horizon", "replan_interval", "duration"):
            try:
                steps_in(getattr(self, name), self.dt)
            except DimensionError as exc:
                raise ConfigError(f"{name}: {exc}") from exc
        return self


def physical_twin_step(
    x: np.ndarray, model: ModelSpec, u: np.ndarray, dB: np.ndarray, dt: float
) -> np.ndarray:
    """Euler-Maruyama step of dX = (f(X) + G u) dt + σ dB."""
    if dt <= 0:
        raise DimensionError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    x_next = x + (model.f(x) + model.control_drift(u)) * dt
    if model.twin_noise_scale:
        x_next = x_next + model.twin_noise_scale * np.asarray(dB, dtype=float)
    if not np.all(np.isfinite(x_next)):
        raise DivergenceError("physical twin state became non-finite")
    return x_next


def observe_increment(
    x: np.ndarray, model: ModelSpec, dW: np.ndarray, dt: float
) -> np.ndarray:
    """dY = h(x) dt + R^{1/2} dW."""
    return model.h(x) * dt + model.obs_noise_sqrt @ np.asarray(dW, dtype=float)


def interpolate_gain(
    schedule: GainSchedule, t: float, mode: ControlMode = ControlMode.CLOSED_LOOP
) -> Tuple[np.ndarray, np.ndarray]:
    """Entrywise linear interpolation of the gains, clamped outside the grid."""
    return schedule.gains_at(t, mode)


def shift_schedule(schedule: GainSchedule, grid: np.ndarray) -> GainSchedule:
    """Previous schedule on a new window; nodes past its end get zero gains."""
    grid = np.asarray(grid, dtype=float)
    Lambda, lam, mu = schedule.interpolate(grid)
    tail = grid > schedule.grid[-1]
    Lambda[tail] = 0.0
    lam[tail] = 0.0
    if mu is not None:
        mu[tail] = 0.0
    return GainSchedule(grid, Lambda, lam, mu)


@dataclass
class TrajectoryLog:
    """
    One row per dt node. Row k holds the state at t_k, the control applied on
    [t_k, t_{k+1}) and the observation increment of that interval; the last
    row carries the control the final schedule would apply and no increment.
    """

    d_x: int
    d_u: int
    d_y: int
    times: List[float] = field(default_factory=list)
    x_true: List[np.ndarray] = field(default_factory=list)
    means: List[np.ndarray] = field(default_factory=list)
    covs: List[np.ndarray] = field(default_factory=list)
    controls: List[np.ndarray] = field(default_factory=list)
    costs: List[float] = field(default_factory=list)
    increments: List[np.ndarray] = field(default_factory=list)
    replan_times: List[float] = field(default_factory=list)
    final_state: Optional[TwinState] = None

    def append(self, t, x_true, mean, cov, u, cost, dY=None) -> None:
        self.times.append(float(t))
        self.x_true.append(np.array(x_true, dtype=float))
        self.means.append(np.array(mean, dtype=float))
        self.covs.append(np.array(cov, dtype=float))
        self.controls.append(np.array(u, dtype=float))
        self.costs.append(float(cost))
        self.increments.append(
            np.full(self.d_y, np.nan) if dY is None else np.array(dY, dtype=float)
        )

    def __len__(self) -> int:
        return len(self.times)

    def to_frame(self) -> pd.DataFrame:
        data = {"t": np.asarray(self.times)}
        x_true = np.reshape(self.x_true, (-1, self.d_x))
        means = np.reshape(self.means, (-1, self.d_x))
        covs = np.reshape(self.covs, (-1, self.d_x, self.d_x))
        controls = np.reshape(self.controls, (-1, self.d_u))
        increments = np.reshape(self.increments, (-1, self.d_y))
        for i in range(self.d_x):
            data[f"x_true_{i}"] = x_true[:, i]
        for i in range(self.d_x):
            data[f"mean_{i}"] = means[:, i]
        for i in range(self.d_x):
            data[f"var_{i}"] = covs[:, i, i]
        data["cov_min_eig"] = np.array([min_eigenvalue(c) for c in covs])
        for j in range(self.d_u):
            data[f"u_{j}"] = controls[:, j]
        data["running_cost"] = np.asarray(self.costs)
        for j in range(self.d_y):
            data[f"dY_{j}"] = increments[:, j]
        return pd.DataFrame(data)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path

    def total_cost(self) -> float:
        """Left Riemann sum of the running cost over the logged intervals."""
        if len(self.times) < 2:
            return 0.0
        dt = np.diff(self.times)
        return float(np.dot(dt, self.costs[:-1]))


def ensemble_running_cost(
    u: np.ndarray, mean: np.ndarray, cov: np.ndarray, cost: QuadraticCost
) -> float:
    """½|u|^2 + mean_j c(X^(j)) evaluated exactly from the ensemble moments."""
    return float(
        0.5 * np.dot(u, u) + running_cost(cost, mean) + 0.5 * np.trace(cost.V @ cov)
    )


def _draw_twin_state(law: InitialLaw, rng: np.random.Generator) -> np.ndarray:
    return law.mean + sqrtm_psd(law.cov) @ rng.standard_normal(law.d_x)


def run_receding_horizon(
    model: ModelSpec,
    cost: QuadraticCost,
    law: InitialLaw,
    cfg: MpcConfig,
    rng: np.random.Generator,
    twin_rng: np.random.Generator,
    x_true0: Optional[np.ndarray] = None,
) -> TrajectoryLog:
    """
    Run the closed loop over ``cfg.duration``.

    ``rng`` drives the digital twin's initial ensemble and every FBSDE solve;
    ``twin_rng`` drives the physical twin's initial state, its model noise and
    the observation noise.

    Raises:
        RecedingHorizonError: wrapping the first numerical failure; its ``log``
            holds every row recorded before the failure
    """
    cfg.validate()
    dt = cfg.dt
    n_total = steps_in(cfg.duration, dt)
    n_replan = steps_in(cfg.replan_interval, dt)
    n_horizon = steps_in(cfg.horizon, dt)
    G = model.control_matrix
    sqrt_dt = math.sqrt(dt)

    filter_rng, solver_rng = rng.spawn(2)
    x_true = (
        _draw_twin_state(law, twin_rng)
        if x_true0 is None
        else np.asarray(x_true0, dtype=float).copy()
    )
    state = FilterState(moment_matched_initial(law, cfg.M, filter_rng), t=0.0)
    log = TrajectoryLog(model.d_x, model.d_u, model.d_y)
    schedule: Optional[GainSchedule] = None

    logger.info(
        "Receding horizon: duration %.3f, T=%.3f, replan every %.3f, M=%d, K=%d",
        cfg.duration,
        cfg.horizon,
        cfg.replan_interval,
        cfg.M,
        cfg.K,
    )
    t_k = 0.0
    try:
        for k in range(n_total + 1):
            t_k = k * dt
            ensemble = state.ensemble
            if k % n_replan == 0 and k < n_total:
                (child,) = solver_rng.spawn(1)
                init_rng, solve_rng = child.spawn(2)
                window = t_k + dt * np.arange(n_horizon + 1, dtype=float)
                warm = (
                    shift_schedule(schedule, window)
                    if cfg.warm_start and schedule is not None
                    else None
                )
                schedule = picard_solve(
                    model,
                    cost,
                    None,
                    cfg.horizon,
                    dt,
                    cfg.M,
                    cfg.K,
                    cfg.n_iter,
                    cfg.ridge,
                    solve_rng,
                    t0=t_k,
                    init_members=tile_or_resample(ensemble, cfg.K, cfg.M, init_rng),
                    initial_schedule=warm,
                    symmetrize=cfg.symmetrize,
                    control_mode=cfg.control_mode,
                )
                log.replan_times.append(t_k)
                logger.debug("replanned at t=%.4f", t_k)

            Lambda, lam = interpolate_gain(schedule, t_k, cfg.control_mode)
            mean, cov = ensemble.mean(), ensemble.covariance()
            u = control_law(Lambda, lam, mean, G)
            row_cost = ensemble_running_cost(u, mean, cov, cost)

            if k == n_total:
                log.append(t_k, x_true, mean, cov, u, row_cost)
                break

            dB = twin_rng.standard_normal(model.d_x) * sqrt_dt
            dW = twin_rng.standard_normal(model.d_y) * sqrt_dt
            dY = observe_increment(x_true, model, dW, dt)
            log.append(t_k, x_true, mean, cov, u, row_cost, dY)

            x_true = physical_twin_step(x_true, model, u, dB, dt)
            state = dataclasses.replace(
                assimilate_step(state, model, u, dY, dt), t=(k + 1) * dt
            )
    except (DivergenceError, SingularMatrixError) as exc:
        logger.error("Receding-horizon loop failed at t=%.4f: %s", t_k, exc)
        raise RecedingHorizonError(
            f"receding-horizon loop failed at t={t_k:.6g}: {exc}", t=t_k, log=log
        ) from exc

    log.final_state = TwinState(x_true, state, n_total * dt)
    logger.info(
        "Receding horizon finished: final mean %s, total cost %.6g",
        np.array2string(log.means[-1], precision=4),
        log.total_cost(),
    )
    return log


__all__ = [
    "TwinState",
    "MpcConfig",
    "TrajectoryLog",
    "physical_twin_step",
    "observe_increment",
    "interpolate_gain",
    "shift_schedule",
    "ensemble_running_cost",
    "run_receding_horizon",
]
