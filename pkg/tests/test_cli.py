"""
Tests for the command-line interface and the experiment runners behind it
"""

import json
from pathlib import Path

import numpy as np
import pytest

from enkbf_nmpc.commands import cli
from enkbf_nmpc.commands.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, build_parser, load_config, main
from enkbf_nmpc.core.errors import DivergenceError
from enkbf_nmpc.utils.config import ExperimentKind


def _manifest(tmp_path: Path, kind: str, **sections) -> Path:
    data = {"experiment": {"kind": kind}}
    data.update(sections)
    path = tmp_path / f"{kind}.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def _summary(out: Path) -> dict:
    return json.loads((out / "summary.json").read_text(encoding="utf-8"))


_SMALL_RICCATI = {"solver": {"M": 16, "K": 16, "n_iter": 3, "T": 0.5, "dt": 0.005}}

_TINY_PENDULUM = {
    "solver": {"M": 4, "K": 4, "n_iter": 1, "T": 0.1, "dt": 0.01},
    "mpc": {"horizon": 0.1, "replan_interval": 0.05, "duration": 0.2},
    "cost": {"weight": 1.0, "terminal_weight": 1.0},
}


class TestParser:
    def test_subcommands(self):
        """Every experiment kind is a subcommand"""
        parser = build_parser()
        for kind in ExperimentKind:
            assert parser.parse_args([kind.value]).command == kind.value

    def test_flags_override_manifest(self, tmp_path):
        """Command-line flags win over manifest values"""
        args = build_parser().parse_args(
            ["mpc", "--seed", "11", "--reps", "3", "--jobs", "2", "--out", str(tmp_path)]
        )
        cfg = load_config(args)
        assert cfg.run.seed == 11
        assert cfg.run.repetitions == 3
        assert cfg.run.jobs == 2
        assert cfg.run.out_dir == str(tmp_path)

    def test_bundled_manifest_used_by_default(self):
        """Without --config the bundled manifest is loaded"""
        cfg = load_config(build_parser().parse_args(["riccati-check"]))
        assert cfg.name == "double-integrator-riccati"

    def test_unknown_subcommand(self):
        """Unknown subcommands exit through argparse"""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["optimize"])


class TestExitCodes:
    def test_riccati_check_passes(self, tmp_path):
        """Small Riccati check passes and writes its artifacts"""
        out = tmp_path / "out"
        config = _manifest(tmp_path, "riccati-check", **_SMALL_RICCATI)
        assert main(["riccati-check", "--config", str(config), "--out", str(out), "--quiet"]) == EXIT_PASS
        summary = _summary(out)
        assert summary["passed"] is True
        assert summary["metrics"]["max_gain_error"] <= 0.05
        for name in ("fbsde_schedule.csv", "riccati_schedule.csv", "riccati_check.csv"):
            assert (out / name).exists()

    def test_zero_tolerance_fails(self, tmp_path):
        """A zero gain tolerance turns the check into a failure"""
        out = tmp_path / "out"
        config = _manifest(tmp_path, "riccati-check", tolerances={"gain": 0.0}, **_SMALL_RICCATI)
        assert main(["riccati-check", "--config", str(config), "--out", str(out), "--quiet"]) == EXIT_FAIL
        assert _summary(out)["passed"] is False

    def test_malformed_manifest(self, tmp_path):
        """Unparseable JSON is a configuration error"""
        config = tmp_path / "broken.json"
        config.write_text("{", encoding="utf-8")
        assert main(["mpc", "--config", str(config), "--out", str(tmp_path), "--quiet"]) == EXIT_CONFIG

    def test_invalid_value(self, tmp_path):
        """Out-of-range ensemble size is a configuration error"""
        config = _manifest(tmp_path, "mpc", solver={"M": 1})
        assert main(["mpc", "--config", str(config), "--out", str(tmp_path), "--quiet"]) == EXIT_CONFIG

    def test_negative_seed(self, tmp_path):
        """Negative seeds are rejected"""
        assert main(["filter-check", "--seed", "-1", "--out", str(tmp_path), "--quiet"]) == EXIT_CONFIG

    def test_overflowing_terminal_cost_fails(self, tmp_path):
        """A terminal cost that overflows ends the run with a failing summary"""
        out = tmp_path / "out"
        config = _manifest(
            tmp_path,
            "fixed-horizon",
            solver={"M": 4, "K": 3, "n_iter": 2, "T": 0.05, "dt": 0.01},
            cost={"weight": 0.0, "terminal_weight": 1e300, "terminal_target": [-1e10, 0.0]},
        )
        argv = ["fixed-horizon", "--config", str(config), "--out", str(out), "--quiet"]
        with np.errstate(over="ignore"):
            assert main(argv) == EXIT_FAIL
        summary = _summary(out)
        assert summary["passed"] is False
        assert summary["metrics"]["diverged_iteration"] == 1
        assert summary["metrics"]["diverged_at"] == pytest.approx(0.05)

    def test_solver_error_is_a_failure(self, tmp_path, monkeypatch, capsys):
        """Solver errors escaping a runner map to the failure exit code"""

        def diverge(cfg, out_dir, jobs=None):
            raise DivergenceError("gains are not finite", t=0.25, iteration=3)

        monkeypatch.setattr(cli, "run_experiment", diverge)
        code = main(["riccati-check", "--out", str(tmp_path), "--quiet"])
        assert code == EXIT_FAIL
        assert "Picard iteration 3" in capsys.readouterr().err


class TestExperiments:
    def test_filter_check_first_order(self, tmp_path):
        """Filter check reports first-order ratios for both forms"""
        out = tmp_path / "out"
        config = _manifest(tmp_path, "filter-check", solver={"M": 8, "K": 2, "T": 0.5, "dt": 0.01})
        assert main(["filter-check", "--config", str(config), "--out", str(out), "--quiet"]) == EXIT_PASS
        metrics = _summary(out)["metrics"]
        assert metrics["assimilation_ratio"] == pytest.approx(2.0, abs=0.4)
        assert metrics["simulated_ratio"] == pytest.approx(2.0, abs=0.4)
        assert (out / "filter_check_half_dt.csv").exists()

    def test_fixed_horizon_zero_cost(self, tmp_path):
        """Zero cost gives identical schedules across iterations"""
        out = tmp_path / "out"
        config = _manifest(
            tmp_path,
            "fixed-horizon",
            solver={"M": 4, "K": 4, "n_iter": 2, "T": 0.05, "dt": 0.01},
            cost={"weight": 0.0, "terminal_weight": 0.0},
        )
        assert main(["fixed-horizon", "--config", str(config), "--out", str(out), "--quiet"]) == EXIT_PASS
        summary = _summary(out)
        assert summary["metrics"]["last_iteration_change"] == 0.0
        assert len(summary["metrics"]["expected_cost"]) == 2
        for name in ("fixed_horizon_fan.csv", "fixed_horizon_gains.csv", "fixed_horizon_schedule.csv"):
            assert (out / name).exists()

    def test_mpc_reproducible(self, tmp_path):
        """Seeded MPC runs are byte-identical and repetitions differ"""
        config = _manifest(tmp_path, "mpc", **_TINY_PENDULUM)
        runs = []
        for label in ("a", "b"):
            out = tmp_path / label
            argv = ["mpc", "--config", str(config), "--out", str(out), "--quiet"]
            code = main(argv + ["--reps", "2", "--jobs", "1", "--seed", "5"])
            assert code in (EXIT_PASS, EXIT_FAIL)
            runs.append(out)
        for name in ("mpc_rep0000.csv", "mpc_rep0001.csv", "mpc_aggregate.csv"):
            assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes()
        assert (runs[0] / "mpc_rep0000.csv").read_bytes() != (runs[0] / "mpc_rep0001.csv").read_bytes()
        assert _summary(runs[0])["metrics"]["repetitions"] == 2
