"""
Acceptance-scale runs of the bundled experiments.

Deselected by default; run with ``pytest -m slow``.
"""

import numpy as np
import pandas as pd
import pytest

from enkbf_nmpc.experiments.runners import (
    run_fixed_horizon_experiment,
    run_linear_consistency_check,
    run_mpc_experiment,
)
from enkbf_nmpc.utils.config import CONFIG_FILES, ConfigManager, ExperimentKind
from enkbf_nmpc.utils.path_helpers import default_config_path

pytestmark = pytest.mark.slow


def _bundled(kind: ExperimentKind, **overrides):
    manager = ConfigManager(kind, default_config_path(CONFIG_FILES[kind]))
    for key, value in overrides.items():
        manager.set(key, value)
    return manager.to_experiment_config()


def test_riccati_equivalence(tmp_path):
    """Bundled double-integrator gains stay within the Riccati tolerances"""
    summary = run_linear_consistency_check(_bundled(ExperimentKind.RICCATI_CHECK), tmp_path)
    assert summary.passed, summary.metrics
    assert summary.wall_time < 60.0


def test_filter_first_order(tmp_path):
    """Halving dt halves the filter error of the bundled check"""
    summary = run_linear_consistency_check(_bundled(ExperimentKind.FILTER_CHECK), tmp_path)
    assert summary.passed, summary.metrics
    assert summary.metrics["assimilation_ratio"] == pytest.approx(2.0, abs=0.4)


@pytest.mark.parametrize("seed", [2024, 7])
def test_fixed_horizon_converges(tmp_path, seed):
    """Bundled fixed-horizon Picard iterations settle below the change tolerance"""
    cfg = _bundled(ExperimentKind.FIXED_HORIZON, **{"run.seed": seed})
    summary = run_fixed_horizon_experiment(cfg, tmp_path)
    assert "diverged_iteration" not in summary.metrics, summary.metrics
    assert summary.metrics["gains_finite"]
    assert summary.metrics["last_iteration_change"] < 0.05
    assert summary.passed


def test_concentrated_initial_law_stays_finite(tmp_path):
    """A nearly collapsed initial law still gives finite gains over half a second"""
    cfg = _bundled(
        ExperimentKind.FIXED_HORIZON, **{"model.initial_variance": 1e-6, "solver.T": 0.5}
    )
    summary = run_fixed_horizon_experiment(cfg, tmp_path)
    assert summary.metrics["gains_finite"], summary.metrics


def test_mpc_stabilizes_and_observation_precision_helps(tmp_path):
    """Closed loop reaches the angle threshold and sharper observations shrink the spread"""
    coarse = run_mpc_experiment(_bundled(ExperimentKind.MPC), tmp_path / "R1")
    assert coarse.passed, coarse.metrics
    assert coarse.metrics["final_abs_angle_mean"] <= 0.2 * np.pi / 2
    assert coarse.metrics["min_cov_eigenvalue"] >= -1e-10

    precise = run_mpc_experiment(
        _bundled(ExperimentKind.MPC, **{"model.obs_variance": 0.1}), tmp_path / "R01"
    )
    assert precise.metrics["failed"] == 0
    assert precise.metrics["final_true_angle_var"] < coarse.metrics["final_true_angle_var"]

    for name in ("mpc_rep0000.csv", "mpc_rep0042.csv"):
        eigenvalues = pd.read_csv(tmp_path / "R1" / name)["cov_min_eig"].to_numpy()
        assert np.all(eigenvalues >= -1e-10)


def test_rerun_is_bit_identical(tmp_path):
    """Same manifest and seed reproduce the artifacts byte for byte"""
    cfg = _bundled(ExperimentKind.RICCATI_CHECK)
    run_linear_consistency_check(cfg, tmp_path / "a")
    run_linear_consistency_check(cfg, tmp_path / "b")
    for name in ("fbsde_schedule.csv", "riccati_check.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
