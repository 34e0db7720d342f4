"""
Ensemble FBSDE solver.

The forward sweep propagates K ensembles with the simulated-innovation EnKBF,
each driven by its own noise path. The backward sweep regresses the costate
means on the realization means (affine ansatz Ȳ ≈ Λ X̄ + λ) node by node,
starting from the terminal condition Ȳ_T = ∇ψ(X̄_T). Picard iteration
alternates the two, feeding each forward sweep the gains of the previous
backward sweep; the first sweep runs uncontrolled.

The costate martingale part Z̄ is never formed: the regression targets are
built from a back-integration of the mean dynamics, which removes the noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg

from ..core.ensemble import ensemble_moments, moment_matched_initial
from ..core.errors import DimensionError, DivergenceError, SingularMatrixError
from ..core.filter import simulate_members
from ..core.grid import time_grid
from ..core.linalg import symmetrize as _symmetrize
from ..core.model import (
    InitialLaw,
    ModelSpec,
    QuadraticCost,
    control_law,
    running_cost,
    running_cost_grad,
    terminal_cost,
    terminal_cost_grad,
)
from ..utils.logging import get_logger

logger = get_logger("control.fbsde")

# covariance ridge: eps_C = RIDGE_SCALE * trace(C) / d
RIDGE_SCALE = 1e-8
# gain regression with a linearized prior: eps = SHRINKAGE_SCALE * trace(C^xx) / d
SHRINKAGE_SCALE = 1e-2


class ControlMode(Enum):
    """How a gain schedule is turned into a control."""

    CLOSED_LOOP = "closed_loop"  # u = -G^T (Λ x̄ + λ)
    OPEN_LOOP = "open_loop"  # u = -G^T μ


@dataclass(frozen=True, eq=False)
class GainSchedule:
    """Gains (Λ*_n, λ*_n) and mean costates μ*_n on a strictly increasing grid."""

    grid: np.ndarray
    Lambda: np.ndarray
    lam: np.ndarray
    mu: Optional[np.ndarray] = None

    def __post_init__(self):
        grid = np.atleast_1d(np.asarray(self.grid, dtype=float))
        if grid.size == 0:
            raise DimensionError("gain schedule is empty")
        if np.any(np.diff(grid) <= 0):
            raise DimensionError("gain schedule grid must be strictly increasing")
        Lambda = np.asarray(self.Lambda, dtype=float)
        lam = np.asarray(self.lam, dtype=float)
        n = grid.size
        if Lambda.ndim != 3 or Lambda.shape[0] != n or Lambda.shape[1] != Lambda.shape[2]:
            raise DimensionError(f"Lambda must be ({n}, d, d), got {Lambda.shape}")
        if lam.shape != (n, Lambda.shape[1]):
            raise DimensionError(f"lambda must be ({n}, {Lambda.shape[1]}), got {lam.shape}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "Lambda", Lambda)
        object.__setattr__(self, "lam", lam)
        if self.mu is not None:
            mu = np.asarray(self.mu, dtype=float)
            if mu.shape != lam.shape:
                raise DimensionError(f"mu must be {lam.shape}, got {mu.shape}")
            object.__setattr__(self, "mu", mu)

    @classmethod
    def zeros(cls, grid: np.ndarray, d_x: int) -> "GainSchedule":
        n = np.asarray(grid).size
        return cls(grid, np.zeros((n, d_x, d_x)), np.zeros((n, d_x)), np.zeros((n, d_x)))

    @property
    def d_x(self) -> int:
        return self.Lambda.shape[1]

    @property
    def N(self) -> int:
        return self.grid.size - 1

    def is_finite(self) -> bool:
        finite = np.all(np.isfinite(self.Lambda)) and np.all(np.isfinite(self.lam))
        return bool(finite and (self.mu is None or np.all(np.isfinite(self.mu))))

    def _bracket(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        g = self.grid
        if g.size == 1:
            zero = np.zeros(np.shape(t), dtype=int)
            return zero, np.zeros(np.shape(t))
        i = np.clip(np.searchsorted(g, t, side="right") - 1, 0, g.size - 2)
        w = np.clip((t - g[i]) / (g[i + 1] - g[i]), 0.0, 1.0)
        return i, w

    def _lerp(self, values: np.ndarray, t) -> np.ndarray:
        t_arr = np.asarray(t, dtype=float)
        i, w = self._bracket(t_arr)
        if self.grid.size == 1:
            return values[i]
        w = w.reshape(w.shape + (1,) * (values.ndim - 1))
        return values[i] * (1.0 - w) + values[i + 1] * w

    def interpolate(self, t) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        """Entrywise linear interpolation; times outside the grid clamp to the ends."""
        mu = None if self.mu is None else self._lerp(self.mu, t)
        return self._lerp(self.Lambda, t), self._lerp(self.lam, t), mu

    def gains_at(self, t, mode: ControlMode = ControlMode.CLOSED_LOOP):
        """(Λ, λ) to feed into the control law under ``mode``."""
        Lambda, lam, mu = self.interpolate(t)
        if mode is ControlMode.OPEN_LOOP:
            if mu is None:
                raise DimensionError("open-loop control needs a schedule with mean costates")
            return np.zeros_like(Lambda), mu
        return Lambda, lam

    def resampled(self, grid: np.ndarray) -> "GainSchedule":
        grid = np.asarray(grid, dtype=float)
        if grid.shape == self.grid.shape and np.array_equal(grid, self.grid):
            return self
        Lambda, lam, mu = self.interpolate(grid)
        return GainSchedule(grid, Lambda, lam, mu)

    def feedback_gains(self, G: np.ndarray) -> np.ndarray:
        """Entries of G^T Λ*_n, shape (N+1, d_u, d_x)."""
        return np.einsum("iu,nij->nuj", np.atleast_2d(G), self.Lambda)

    def to_frame(self) -> pd.DataFrame:
        """Columns: t, Lambda_i_j (row-major), lambda_i, then mu_i when stored."""
        d = self.d_x
        data = {"t": self.grid}
        for i in range(d):
            for j in range(d):
                data[f"Lambda_{i}_{j}"] = self.Lambda[:, i, j]
        for i in range(d):
            data[f"lambda_{i}"] = self.lam[:, i]
        if self.mu is not None:
            for i in range(d):
                data[f"mu_{i}"] = self.mu[:, i]
        return pd.DataFrame(data)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "GainSchedule":
        frame = pd.read_csv(path, float_precision="round_trip")
        d = sum(1 for col in frame.columns if col.startswith("lambda_"))
        Lambda = np.stack(
            [
                np.stack([frame[f"Lambda_{i}_{j}"].to_numpy() for j in range(d)], axis=-1)
                for i in range(d)
            ],
            axis=-2,
        )
        lam = np.stack([frame[f"lambda_{i}"].to_numpy() for i in range(d)], axis=-1)
        mu = None
        if "mu_0" in frame.columns:
            mu = np.stack([frame[f"mu_{i}"].to_numpy() for i in range(d)], axis=-1)
        return cls(frame["t"].to_numpy(), Lambda, lam, mu)


@dataclass(eq=False)
class RealizationBundle:
    """Per-node statistics of K forward realizations on a shared grid."""

    grid: np.ndarray
    means: np.ndarray  # (N+1, K, d_x)
    covs: np.ndarray  # (N+1, K, d_x, d_x)
    cross_h: np.ndarray  # (N+1, K, d_x, d_y)
    cross_f: np.ndarray  # (N+1, K, d_x, d_x)
    controls: np.ndarray  # (N+1, K, d_u)
    costate: np.ndarray = field(default=None)  # (N+1, K, d_x), filled backwards

    def __post_init__(self):
        if self.costate is None:
            self.costate = np.full(self.means.shape, np.nan)

    @property
    def N(self) -> int:
        return self.grid.size - 1

    @property
    def K(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True, eq=False)
class RegressionStep:
    Lambda: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    costate: np.ndarray  # Ȳ_{t_n,k}, (K, d_x)
    x_tilde: Optional[np.ndarray] = None  # back-integrated means, (K, d_x)
    gamma: Optional[np.ndarray] = None  # regression targets, (K, d_x)

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.Lambda))
            and np.all(np.isfinite(self.lam))
            and np.all(np.isfinite(self.costate))
        )


@dataclass(frozen=True, eq=False)
class PicardIteration:
    index: int
    bundle: RealizationBundle
    schedule: GainSchedule
    # cost of this iteration's forward sweep (driven by the previous schedule)
    expected_cost: float


def _relative_ridge(trace: np.ndarray, d: int, scale: float = RIDGE_SCALE) -> np.ndarray:
    trace = np.asarray(trace, dtype=float)
    return np.where(trace > 0, scale * trace / d, scale)


def least_squares_fit(
    x: np.ndarray,
    gamma: np.ndarray,
    ridge: float = 0.0,
    prior: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Minimize (1/K) Σ_k |Λ (x_k - x̄) + μ - γ_k|^2 (+ ridge |Λ - prior|^2).

    Returns μ* = mean(γ) and Λ* = (C^{γx} + ridge·prior)(C^{xx} + ridge·I)^{-1}
    with 1/K-normalized covariances about the sample means.
    """
    x = np.asarray(x, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if x.ndim != 2 or gamma.ndim != 2 or x.shape[0] != gamma.shape[0]:
        raise DimensionError(f"points disagree: x {x.shape}, gamma {gamma.shape}")
    k, d = x.shape
    if k < 2:
        raise DimensionError(f"regression needs at least 2 points, got {k}")
    if ridge < 0:
        raise DimensionError(f"ridge must be non-negative, got {ridge}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(gamma))):
        raise DivergenceError("regression points are not finite")

    mu = gamma.mean(axis=0)
    dx = x - x.mean(axis=0)
    dg = gamma - mu
    cxx = _symmetrize(dx.T @ dx / k)
    cgx = dg.T @ dx / k

    a = cxx + ridge * np.eye(d)
    rhs = cgx if prior is None else cgx + ridge * np.asarray(prior, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(rhs))):
        raise DivergenceError("regression moments overflowed")
    w = linalg.eigvalsh(a, check_finite=False)
    if w[0] <= np.finfo(float).eps * d * max(w[-1], np.finfo(float).tiny):
        raise SingularMatrixError("regression covariance C^xx + ridge*I is singular", float(w[0]))
    logger.debug("regression condition number %.3e", w[-1] / w[0])
    Lambda = linalg.solve(a, rhs.T, assume_a="pos", check_finite=False).T
    return Lambda, mu


def statistical_linearization(
    cov: np.ndarray, cross_f: np.ndarray, cov_ridge: Optional[float] = None
) -> np.ndarray:
    """C^{-1} C^{xf} per realization; equals Df^T for linear f."""
    cov = np.asarray(cov, dtype=float)
    d = cov.shape[-1]
    eps = (
        _relative_ridge(np.trace(cov, axis1=-2, axis2=-1), d)
        if cov_ridge is None
        else np.full(cov.shape[:-2], float(cov_ridge))
    )
    a = cov + eps[..., None, None] * np.eye(d)
    lowest = np.linalg.eigvalsh(a)[..., 0]
    scale = np.maximum(np.abs(np.trace(a, axis1=-2, axis2=-1)), np.finfo(float).tiny)
    if np.any(lowest <= np.finfo(float).eps * scale):
        raise SingularMatrixError(
            "ensemble covariance stays singular after regularization", float(lowest.min())
        )
    return np.linalg.solve(a, cross_f)


def forward_sweep(
    init_members: np.ndarray,
    schedule: Optional[GainSchedule],
    model: ModelSpec,
    grid: np.ndarray,
    noise: np.ndarray,
    control_mode: ControlMode = ControlMode.CLOSED_LOOP,
) -> RealizationBundle:
    """
    Propagate K ensembles with the simulated-innovation EnKBF.

    Args:
        init_members: (K, M, d_x) initial ensembles
        schedule: gains applied to each realization's own mean; None means u ≡ 0
        grid: time nodes t_0..t_N
        noise: (N, K, d_y) Brownian increments, one path per realization
    """
    X = np.array(init_members, dtype=float)
    if X.ndim != 3 or X.shape[-1] != model.d_x:
        raise DimensionError(f"initial ensembles must be (K, M, {model.d_x}), got {X.shape}")
    grid = np.asarray(grid, dtype=float)
    n_steps = grid.size - 1
    K = X.shape[0]
    if noise.shape != (n_steps, K, model.d_y):
        raise DimensionError(f"noise must be {(n_steps, K, model.d_y)}, got {noise.shape}")

    if schedule is None:
        schedule = GainSchedule.zeros(grid, model.d_x)
    Lams, lams = schedule.resampled(grid).gains_at(grid, control_mode)

    d_x, d_y = model.d_x, model.d_y
    means = np.empty((n_steps + 1, K, d_x))
    covs = np.empty((n_steps + 1, K, d_x, d_x))
    cross_h = np.empty((n_steps + 1, K, d_x, d_y))
    cross_f = np.empty((n_steps + 1, K, d_x, d_x))
    controls = np.empty((n_steps + 1, K, model.d_u))

    for n in range(n_steps + 1):
        mo = ensemble_moments(X, model)
        means[n], covs[n], cross_h[n], cross_f[n] = mo.mean, mo.cov, mo.cov_xh, mo.cov_xf
        u = control_law(Lams[n], lams[n], mo.mean, model.control_matrix)
        controls[n] = u
        if n < n_steps:
            X = simulate_members(
                X, model, u, noise[n], grid[n + 1] - grid[n], moments=mo, t=grid[n]
            )

    return RealizationBundle(grid, means, covs, cross_h, cross_f, controls)


def terminal_costate(bundle: RealizationBundle, cost: QuadraticCost) -> None:
    """Ȳ_{T,k} = ∇ψ(X̄_{T,k}), written into the bundle."""
    bundle.costate[-1] = terminal_cost_grad(cost, bundle.means[-1])


def linearized_gain_step(
    Lambda_next: np.ndarray,
    jac_t: np.ndarray,
    model: ModelSpec,
    cost: QuadraticCost,
    dt: float,
) -> np.ndarray:
    """
    Slope of the regression targets against the back-integrated means when the
    drift is linear with Df^T = ``jac_t``.

    With Ȳ = Λ_{n+1} x + λ_{n+1} the targets move like (I + dt J) Λ_{n+1} + dt V
    and the back-integrated means like I - dt (J^T - G G^T Λ_{n+1}); the
    returned slope is the first times the inverse of the second. For linear
    models this is exactly the slope the regression recovers.
    """
    eye = np.eye(model.d_x)
    Lambda_next = np.asarray(Lambda_next, dtype=float)
    jac_t = np.asarray(jac_t, dtype=float)
    target = (eye + dt * jac_t) @ Lambda_next + dt * cost.V
    back = eye - dt * (jac_t.T - model.control_gram @ Lambda_next)
    return linalg.solve(back.T, target.T, check_finite=False).T


def backward_regression_step(
    x_next: np.ndarray,
    y_next: np.ndarray,
    cov_next: np.ndarray,
    cross_f_next: np.ndarray,
    x_now: np.ndarray,
    model: ModelSpec,
    cost: QuadraticCost,
    dt: float,
    ridge: Optional[float] = None,
    cov_ridge: Optional[float] = None,
    prior: Optional[np.ndarray] = None,
    symmetrize: bool = False,
    *,
    Lambda_next: Optional[np.ndarray] = None,
    jac_t: Optional[np.ndarray] = None,
) -> RegressionStep:
    """
    One regression step from t_{n+1} back to t_n.

    1. back-integrate the means: X̃_k = X̄_{n+1,k} - dt (f(X̄_{n+1,k}) - G G^T Ȳ_{n+1,k})
    2. targets γ_k = (I + dt C_k^{-1} C_k^{xf}) Ȳ_{n+1,k} + dt ∇c(X̄_{n+1,k})
    3. fit (Λ*, μ*) of γ on X̃ centered at its mean X̃
    4. λ* = μ* - Λ* X̃
    5. Ȳ_{n,k} = Λ* X̄_{n,k} + λ*

    The slope is shrunk towards ``prior``. Given ``Lambda_next`` and no
    explicit prior, the prior is linearized_gain_step with the realization
    average of C_k^{-1} C_k^{xf}, and the default ridge becomes
    SHRINKAGE_SCALE relative to the spread of X̃; without a prior it is the
    RIDGE_SCALE numerical ridge towards zero. ``jac_t`` passes precomputed
    C_k^{-1} C_k^{xf}.
    """
    x_next = np.asarray(x_next, dtype=float)
    y_next = np.asarray(y_next, dtype=float)
    d_x = model.d_x
    x_tilde = x_next - dt * (model.f(x_next) - y_next @ model.control_gram.T)
    if jac_t is None:
        jac_t = statistical_linearization(cov_next, cross_f_next, cov_ridge)
    gamma = (
        y_next
        + dt * np.einsum("kij,kj->ki", jac_t, y_next)
        + dt * running_cost_grad(cost, x_next)
    )
    if not np.all(np.isfinite(gamma)):
        raise DivergenceError("regression targets are not finite")

    if prior is None and Lambda_next is not None:
        prior = linearized_gain_step(Lambda_next, jac_t.mean(axis=0), model, cost, dt)
    center = x_tilde.mean(axis=0)
    dev = x_tilde - center
    if ridge is None:
        scale = RIDGE_SCALE if prior is None else SHRINKAGE_SCALE
        ridge = float(_relative_ridge(np.sum(dev * dev) / dev.shape[0], d_x, scale))
    logger.debug("regression ridge %.3e", ridge)
    Lambda, mu = least_squares_fit(dev, gamma, ridge=ridge, prior=prior)
    if symmetrize:
        Lambda = _symmetrize(Lambda)
    lam = mu - Lambda @ center
    costate = np.asarray(x_now, dtype=float) @ Lambda.T + lam
    return RegressionStep(Lambda, lam, mu, costate, x_tilde, gamma)


def backward_sweep(
    bundle: RealizationBundle,
    model: ModelSpec,
    cost: QuadraticCost,
    ridge: Optional[float] = None,
    symmetrize: bool = False,
    cov_ridge: Optional[float] = None,
) -> GainSchedule:
    """
    Regress n = N-1, ..., 0; the bundle must carry the terminal costate.

    Raises:
        DivergenceError: a regression step produced non-finite gains or
            costates; ``t`` is the node being fitted
    """
    n_steps, d_x = bundle.N, model.d_x
    terminal = bundle.costate[-1]
    if np.all(np.isnan(terminal)):
        raise DimensionError("terminal costate missing; call terminal_costate first")
    if not np.all(np.isfinite(terminal)):
        raise DivergenceError("terminal costate is not finite", t=float(bundle.grid[-1]))
    if cost.is_zero:
        bundle.costate[:] = 0.0
        return GainSchedule.zeros(bundle.grid, d_x)
    Lambda = np.empty((n_steps + 1, d_x, d_x))
    lam = np.empty((n_steps + 1, d_x))
    mu = np.empty((n_steps + 1, d_x))
    Lambda[-1] = cost.V_T
    lam[-1] = -cost.V_T @ cost.c_T
    mu[-1] = bundle.costate[-1].mean(axis=0)

    grid = bundle.grid
    # depends on the forward sweep only, so all nodes at once
    jac_t = statistical_linearization(bundle.covs[1:], bundle.cross_f[1:], cov_ridge)
    for n in range(n_steps - 1, -1, -1):
        t_n = float(grid[n])
        try:
            step = backward_regression_step(
                bundle.means[n + 1],
                bundle.costate[n + 1],
                bundle.covs[n + 1],
                bundle.cross_f[n + 1],
                bundle.means[n],
                model,
                cost,
                grid[n + 1] - grid[n],
                ridge=ridge,
                symmetrize=symmetrize,
                Lambda_next=Lambda[n + 1],
                jac_t=jac_t[n],
            )
        except DivergenceError as exc:
            logger.error("backward sweep failed at t=%.6g: %s", t_n, exc)
            raise DivergenceError(f"backward sweep at t={t_n:.6g}: {exc}", t=t_n) from exc
        if not step.is_finite():
            logger.error("backward sweep produced non-finite gains at t=%.6g", t_n)
            raise DivergenceError(f"non-finite gains at t={t_n:.6g}", t=t_n)
        Lambda[n], lam[n], mu[n] = step.Lambda, step.lam, step.mu
        bundle.costate[n] = step.costate

    return GainSchedule(grid, Lambda, lam, mu)


def expected_cost(bundle: RealizationBundle, cost: QuadraticCost) -> float:
    """
    Realization average of ∫ (½|u|^2 + mean_j c(X^(j))) dt + mean_j ψ(X_T^(j)).

    Member averages of the quadratic costs are exact from the moments:
    mean_j c(X^(j)) = c(X̄) + ½ tr(V C).
    """
    run = running_cost(cost, bundle.means) + 0.5 * np.einsum(
        "ij,...ji->...", cost.V, bundle.covs
    )
    integrand = run + 0.5 * np.sum(bundle.controls**2, axis=-1)
    dt = np.diff(bundle.grid)
    integral = np.einsum("n,nk->k", dt, integrand[:-1])
    final = terminal_cost(cost, bundle.means[-1]) + 0.5 * np.einsum(
        "ij,kji->k", cost.V_T, bundle.covs[-1]
    )
    return float(np.mean(integral + final))


def draw_initial_ensembles(
    law: InitialLaw, M: int, K: int, rng: np.random.Generator
) -> np.ndarray:
    """K moment-matched ensembles, each from its own sub-stream."""
    return np.stack([moment_matched_initial(law, M, g).members for g in rng.spawn(K)])


def draw_noise(grid: np.ndarray, K: int, d_y: int, rng: np.random.Generator) -> np.ndarray:
    """(N, K, d_y) Brownian increments, one sub-stream per realization."""
    sqrt_dt = np.sqrt(np.diff(grid))[:, None]
    paths = [g.standard_normal((grid.size - 1, d_y)) * sqrt_dt for g in rng.spawn(K)]
    return np.stack(paths, axis=1)


def picard_iterate(
    model: ModelSpec,
    cost: QuadraticCost,
    law: Optional[InitialLaw],
    T: float,
    dt: float,
    M: int,
    K: int,
    n_iter: int = 3,
    ridge: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    *,
    t0: float = 0.0,
    init_members: Optional[np.ndarray] = None,
    initial_schedule: Optional[GainSchedule] = None,
    symmetrize: bool = False,
    control_mode: ControlMode = ControlMode.CLOSED_LOOP,
) -> Iterator[PicardIteration]:
    """
    Yield one PicardIteration per forward/backward pass.

    Initial ensembles and noise paths are drawn once and reused in every
    iteration, so successive schedules differ only through the controls.
    """
    if n_iter < 1:
        raise DimensionError(f"n_iter must be at least 1, got {n_iter}")
    if K < 2:
        raise DimensionError(f"need at least 2 realizations, got K={K}")
    rng = rng if rng is not None else np.random.default_rng()
    grid = time_grid(t0, T, dt)
    init_rng, noise_rng = rng.spawn(2)

    if init_members is None:
        if law is None:
            raise DimensionError("either an initial law or initial ensembles is required")
        init_members = draw_initial_ensembles(law, M, K, init_rng)
    elif np.shape(init_members) != (K, M, model.d_x):
        raise DimensionError(
            f"initial ensembles must be {(K, M, model.d_x)}, got {np.shape(init_members)}"
        )
    noise = draw_noise(grid, K, model.d_y, noise_rng)

    schedule = None if initial_schedule is None else initial_schedule.resampled(grid)
    for index in range(1, n_iter + 1):
        try:
            bundle = forward_sweep(init_members, schedule, model, grid, noise, control_mode)
            terminal_costate(bundle, cost)
            schedule = backward_sweep(bundle, model, cost, ridge=ridge, symmetrize=symmetrize)
        except DivergenceError as exc:
            logger.error("Picard iteration %d diverged: %s", index, exc)
            raise DivergenceError(
                f"Picard iteration {index} diverged: {exc}", t=exc.t, iteration=index
            ) from exc
        if not schedule.is_finite():
            logger.error("Picard iteration %d produced non-finite gains", index)
            raise DivergenceError(
                f"non-finite gains in Picard iteration {index}", iteration=index
            )
        stiffness = dt * float(np.max(np.abs(schedule.feedback_gains(model.control_matrix))))
        if stiffness > 1.0:
            logger.warning(
                "Picard iteration %d: |G^T Lambda| dt reaches %.3g, the next forward sweep may be unstable",
                index,
                stiffness,
            )
        cost_estimate = expected_cost(bundle, cost)
        logger.info(
            "Picard iteration %d/%d on [%.3f, %.3f]: expected cost %.6g",
            index,
            n_iter,
            grid[0],
            grid[-1],
            cost_estimate,
        )
        yield PicardIteration(index, bundle, schedule, cost_estimate)


def picard_solve(
    model: ModelSpec,
    cost: QuadraticCost,
    law: Optional[InitialLaw],
    T: float,
    dt: float,
    M: int,
    K: int,
    n_iter: int = 3,
    ridge: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    **kwargs,
) -> GainSchedule:
    """Gain schedule after ``n_iter`` Picard iterations (see picard_iterate)."""
    last = None
    for last in picard_iterate(model, cost, law, T, dt, M, K, n_iter, ridge, rng, **kwargs):
        pass
    return last.schedule


def sup_norm_change(previous: GainSchedule, current: GainSchedule, G: np.ndarray) -> float:
    """sup |G^T Λ_prev - G^T Λ_cur| relative to sup |G^T Λ_cur|."""
    a = previous.feedback_gains(G)
    b = current.feedback_gains(G)
    scale = float(np.max(np.abs(b)))
    diff = float(np.max(np.abs(a - b)))
    if scale == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / scale


__all__ = [
    "ControlMode",
    "GainSchedule",
    "RealizationBundle",
    "RegressionStep",
    "PicardIteration",
    "least_squares_fit",
    "statistical_linearization",
    "forward_sweep",
    "terminal_costate",
    "linearized_gain_step",
    "backward_regression_step",
    "backward_sweep",
    "expected_cost",
    "draw_initial_ensembles",
    "draw_noise",
    "picard_iterate",
    "picard_solve",
    "sup_norm_change",
]
