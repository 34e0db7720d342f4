"""
Experiment runners.

Each runner takes a validated ExperimentConfig, writes its CSV artifacts and
``summary.json`` into an output directory and returns the summary. Pass/fail
is decided against the manifest's tolerances.
"""
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..control.fbsde import ControlMode, picard_iterate, picard_solve, sup_norm_change
from ..control.mpc import MpcConfig, TrajectoryLog, run_receding_horizon
from ..control.riccati_oracle import LtiSpec, integrate_riccati, kalman_bucy_moments
from ..core.ensemble import moment_matched_initial
from ..core.errors import ConfigError, DivergenceError, RecedingHorizonError
from ..core.filter import FilterState, assimilate_step, simulated_step
from ..core.model import (
    InitialLaw,
    ModelSpec,
    QuadraticCost,
    pendulum_model,
    quadratic_cost,
)
from ..utils.config import ExperimentConfig, ExperimentKind
from ..utils.logging import get_logger
from ..utils.path_helpers import ensure_dir
from ..utils.rng import RngStreams, StreamRole
from .artifacts import (
    ExperimentSummary,
    aggregate_frame,
    fan_chart_frame,
    feedback_gain_frame,
    write_frame,
    write_summary,
)

logger = get_logger("experiments.runners")


@dataclass(frozen=True, eq=False)
class Problem:
    model: ModelSpec
    cost: QuadraticCost
    law: InitialLaw
    lti: Optional[LtiSpec] = None


def build_problem(cfg: ExperimentConfig) -> Problem:
    """Model, cost and initial law described by the manifest."""
    m = cfg.model
    if m.name == "linear":
        d_x = len(m.A)
        lti = LtiSpec(
            A=np.array(m.A, dtype=float),
            b=np.zeros(d_x) if m.b is None else np.array(m.b, dtype=float),
            G=np.array(m.G, dtype=float),
            H=np.array(m.H, dtype=float),
            R=np.array(m.R, dtype=float),
        )
        model = lti.to_model(m.twin_noise_scale)
    else:
        lti = None
        model = pendulum_model(m.gamma, m.obs_variance, m.twin_noise_scale)
    cov = (
        m.initial_variance * np.eye(model.d_x)
        if m.initial_cov is None
        else np.array(m.initial_cov, dtype=float)
    )
    law = InitialLaw(np.array(m.initial_mean, dtype=float), cov)
    c = cfg.cost
    cost = quadratic_cost(model.d_x, c.weight, c.terminal_weight, c.target, c.terminal_target)
    return Problem(model, cost, law, lti)


def mpc_config(cfg: ExperimentConfig) -> MpcConfig:
    s, m = cfg.solver, cfg.mpc
    return MpcConfig(
        horizon=m.horizon,
        replan_interval=m.replan_interval,
        dt=s.dt,
        duration=m.duration,
        M=s.M,
        K=s.K,
        n_iter=s.n_iter,
        ridge=s.ridge,
        control_mode=ControlMode(s.control_mode),
        warm_start=m.warm_start,
        symmetrize=s.symmetrize,
    )


def run_fixed_horizon_experiment(
    cfg: ExperimentConfig, out_dir: Union[str, Path]
) -> ExperimentSummary:
    """Picard iterations on [0, T] from the initial law; fan charts and gain curves per iteration."""
    start = time.perf_counter()
    out_dir = ensure_dir(out_dir)
    problem = build_problem(cfg)
    s = cfg.solver
    rng = RngStreams(cfg.run.seed).generator(role=StreamRole.SOLVER)

    fans, gains, costs, schedules = [], [], [], []
    failure: Optional[DivergenceError] = None
    iterations = picard_iterate(
        problem.model,
        problem.cost,
        problem.law,
        s.T,
        s.dt,
        s.M,
        s.K,
        s.n_iter,
        s.ridge,
        rng,
        symmetrize=s.symmetrize,
        control_mode=ControlMode(s.control_mode),
    )
    try:
        for it in iterations:
            fans.append(fan_chart_frame(it.bundle, it.index))
            gains.append(feedback_gain_frame(it.schedule, problem.model.control_matrix, it.index))
            costs.append(it.expected_cost)
            schedules.append(it.schedule)
    except DivergenceError as exc:
        logger.error("Fixed-horizon run stopped: %s", exc)
        failure = exc

    artifacts = []
    if schedules:
        artifacts = [
            write_frame(pd.concat(fans, ignore_index=True), out_dir, "fixed_horizon_fan.csv"),
            write_frame(pd.concat(gains, ignore_index=True), out_dir, "fixed_horizon_gains.csv"),
            schedules[-1].to_csv(out_dir / "fixed_horizon_schedule.csv"),
        ]

    change = (
        sup_norm_change(schedules[-2], schedules[-1], problem.model.control_matrix)
        if len(schedules) > 1
        else 0.0
    )
    finite = failure is None and schedules[-1].is_finite()
    passed = bool(finite and change < cfg.tolerances.picard_change)
    metrics = {
        "gains_finite": bool(finite),
        "last_iteration_change": change,
        "expected_cost": costs,
    }
    if failure is not None:
        metrics["diverged_iteration"] = failure.iteration
        metrics["diverged_at"] = failure.t
        metrics["error"] = str(failure)
    summary = ExperimentSummary(
        kind=cfg.kind.value,
        passed=passed,
        metrics=metrics,
        wall_time=time.perf_counter() - start,
        artifacts=[str(p) for p in artifacts],
    )
    write_summary(summary, out_dir)
    logger.info("Fixed-horizon experiment %s (change %.4f)", "passed" if passed else "failed", change)
    return summary


def _run_repetition(
    cfg: ExperimentConfig, index: int
) -> Tuple[int, pd.DataFrame, float, Optional[str]]:
    problem = build_problem(cfg)
    rng, twin_rng = RngStreams(cfg.run.seed).repetition(index)
    try:
        log = run_receding_horizon(
            problem.model, problem.cost, problem.law, mpc_config(cfg), rng, twin_rng
        )
        return index, log.to_frame(), log.total_cost(), None
    except RecedingHorizonError as exc:
        partial: TrajectoryLog = exc.log
        return index, partial.to_frame(), partial.total_cost(), str(exc)


def run_mpc_experiment(
    cfg: ExperimentConfig, out_dir: Union[str, Path], jobs: Optional[int] = None
) -> ExperimentSummary:
    """Independent receding-horizon repetitions fanned out with joblib."""
    start = time.perf_counter()
    out_dir = ensure_dir(out_dir)
    n_jobs = cfg.run.jobs if jobs is None else jobs
    mpc_config(cfg).validate()
    results = Parallel(n_jobs=n_jobs)(
        delayed(_run_repetition)(cfg, r) for r in range(cfg.run.repetitions)
    )

    # single collector, ordered by repetition index
    artifacts: List[Path] = []
    completed, totals, failures = [], [], {}
    for index, frame, total, error in sorted(results, key=lambda item: item[0]):
        artifacts.append(write_frame(frame, out_dir, f"mpc_rep{index:04d}.csv"))
        if error is None:
            completed.append(frame)
            totals.append(total)
        else:
            failures[index] = error
            logger.warning("Repetition %d failed: %s", index, error)

    metrics = {"repetitions": cfg.run.repetitions, "failed": len(failures)}
    passed = not failures
    if completed:
        aggregate = aggregate_frame(completed)
        artifacts.append(write_frame(aggregate, out_dir, "mpc_aggregate.csv"))
        final = aggregate.iloc[-1]
        threshold = cfg.tolerances.final_angle_fraction * abs(cfg.model.initial_mean[0])
        metrics.update(
            {
                "final_abs_angle_mean": float(final["abs_angle_mean"]),
                "final_angle_var": float(final["angle_var"]),
                "final_true_angle_var": float(final["true_angle_var"]),
                "angle_threshold": threshold,
                "mean_total_cost": float(np.mean(totals)),
                "min_cov_eigenvalue": float(
                    min(frame["cov_min_eig"].min() for frame in completed)
                ),
            }
        )
        passed = passed and metrics["final_abs_angle_mean"] <= threshold
    else:
        passed = False
    if failures:
        metrics["failures"] = {str(k): v for k, v in failures.items()}

    summary = ExperimentSummary(
        kind=cfg.kind.value,
        passed=bool(passed),
        metrics=metrics,
        wall_time=time.perf_counter() - start,
        artifacts=[str(p) for p in artifacts],
    )
    write_summary(summary, out_dir)
    logger.info("MPC experiment %s", "passed" if passed else "failed")
    return summary


def _riccati_check(cfg: ExperimentConfig, problem: Problem, out_dir: Path):
    s = cfg.solver
    rng = RngStreams(cfg.run.seed).generator(role=StreamRole.CHECK)
    schedule = picard_solve(
        problem.model,
        problem.cost,
        problem.law,
        s.T,
        s.dt,
        s.M,
        s.K,
        s.n_iter,
        s.ridge,
        rng,
        symmetrize=s.symmetrize,
    )
    oracle = integrate_riccati(problem.lti, problem.cost, s.T, s.dt)
    gain_error = np.linalg.norm(schedule.Lambda - oracle.Lambda, axis=(1, 2))
    affine_error = np.linalg.norm(schedule.lam - oracle.lam, axis=1)
    artifacts = [
        schedule.to_csv(Path(out_dir) / "fbsde_schedule.csv"),
        oracle.to_csv(Path(out_dir) / "riccati_schedule.csv"),
        write_frame(
            pd.DataFrame(
                {"t": oracle.grid, "gain_error": gain_error, "affine_error": affine_error}
            ),
            out_dir,
            "riccati_check.csv",
        ),
    ]
    metrics = {
        "max_gain_error": float(gain_error.max()),
        "max_affine_error": float(affine_error.max()),
    }
    tol = cfg.tolerances
    passed = metrics["max_gain_error"] <= tol.gain and metrics["max_affine_error"] <= tol.affine
    return passed, metrics, artifacts


def _filter_errors(
    problem: Problem, cfg: ExperimentConfig, dt: float, rng: np.random.Generator
) -> pd.DataFrame:
    """Node-wise deviation of both EnKBF forms from the Kalman-Bucy moments."""
    model, lti, law = problem.model, problem.lti, problem.law
    T, M = cfg.solver.T, cfg.solver.M
    oracle = kalman_bucy_moments(lti, law, None, T, dt)
    n_steps = oracle.mean.shape[0] - 1
    assimilated = FilterState(moment_matched_initial(law, M, rng), 0.0)
    simulated = assimilated
    u = np.zeros(model.d_u)
    no_noise = np.zeros(model.d_y)

    rows = []
    for k in range(n_steps + 1):
        m_k, c_k = oracle.mean[k], oracle.cov[k]
        ens_a, ens_s = assimilated.ensemble, simulated.ensemble
        rows.append(
            (
                k * dt,
                float(np.linalg.norm(ens_a.mean() - m_k)),
                float(np.linalg.norm(ens_a.covariance() - c_k)),
                float(np.linalg.norm(ens_s.mean() - m_k)),
                float(np.linalg.norm(ens_s.covariance() - c_k)),
            )
        )
        if k < n_steps:
            dY = lti.H @ m_k * dt
            assimilated = assimilate_step(assimilated, model, u, dY, dt)
            simulated = simulated_step(simulated, model, u, no_noise, dt)
    return pd.DataFrame(
        rows,
        columns=["t", "mean_error", "cov_error", "sim_mean_error", "sim_cov_error"],
    )


def _total_error(frame: pd.DataFrame, prefix: str = "") -> float:
    return float((frame[f"{prefix}mean_error"] + frame[f"{prefix}cov_error"]).max())


def _filter_check(cfg: ExperimentConfig, problem: Problem, out_dir: Path):
    dt = cfg.solver.dt
    streams = RngStreams(cfg.run.seed)
    coarse = _filter_errors(problem, cfg, dt, streams.generator(0, role=StreamRole.CHECK))
    fine = _filter_errors(problem, cfg, dt / 2, streams.generator(1, role=StreamRole.CHECK))
    artifacts = [
        write_frame(coarse, out_dir, "filter_check_dt.csv"),
        write_frame(fine, out_dir, "filter_check_half_dt.csv"),
    ]
    band = cfg.tolerances.ratio_band
    metrics = {}
    passed = True
    for label, prefix in (("assimilation", ""), ("simulated", "sim_")):
        e_coarse, e_fine = _total_error(coarse, prefix), _total_error(fine, prefix)
        if e_coarse == 0.0 and e_fine == 0.0:
            ratio = 2.0
        else:
            ratio = e_coarse / e_fine if e_fine > 0 else math.inf
        metrics[f"{label}_error"] = e_coarse
        metrics[f"{label}_error_half_dt"] = e_fine
        metrics[f"{label}_ratio"] = ratio
        metrics[f"{label}_error_constant"] = e_coarse / dt
        passed = passed and abs(ratio - 2.0) <= 2.0 * band
    return passed, metrics, artifacts


def run_linear_consistency_check(
    cfg: ExperimentConfig, out_dir: Union[str, Path]
) -> ExperimentSummary:
    """Compare the ensemble solvers with the linear-Gaussian oracles."""
    start = time.perf_counter()
    out_dir = ensure_dir(out_dir)
    problem = build_problem(cfg)
    if problem.lti is None:
        raise ConfigError("consistency checks need a linear model")
    if cfg.kind is ExperimentKind.RICCATI_CHECK:
        passed, metrics, artifacts = _riccati_check(cfg, problem, out_dir)
    else:
        passed, metrics, artifacts = _filter_check(cfg, problem, out_dir)
    summary = ExperimentSummary(
        kind=cfg.kind.value,
        passed=bool(passed),
        metrics=metrics,
        wall_time=time.perf_counter() - start,
        artifacts=[str(p) for p in artifacts],
    )
    write_summary(summary, out_dir)
    logger.info("%s %s: %s", cfg.kind.value, "passed" if passed else "failed", metrics)
    return summary


def run_experiment(
    cfg: ExperimentConfig, out_dir: Union[str, Path], jobs: Optional[int] = None
) -> ExperimentSummary:
    if cfg.kind is ExperimentKind.FIXED_HORIZON:
        return run_fixed_horizon_experiment(cfg, out_dir)
    if cfg.kind is ExperimentKind.MPC:
        return run_mpc_experiment(cfg, out_dir, jobs)
    return run_linear_consistency_check(cfg, out_dir)


__all__ = [
    "Problem",
    "build_problem",
    "mpc_config",
    "run_fixed_horizon_experiment",
    "run_mpc_experiment",
    "run_linear_consistency_check",
    "run_experiment",
]
