"""
Command-line interface.

    python -m enkbf_nmpc <fixed-horizon|mpc|riccati-check|filter-check> [options]

Exit codes: 0 when the experiment passes its tolerances, 1 when it does not or
the solver diverges, 2 when the configuration is invalid.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..core.errors import ConfigError, DivergenceError, SingularMatrixError
from ..experiments.runners import run_experiment
from ..utils.config import CONFIG_FILES, ConfigManager, ExperimentConfig, ExperimentKind
from ..utils.logging import get_logger, setup_logging
from ..utils.path_helpers import default_config_path

logger = get_logger("cli")

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2

_HELP = {
    ExperimentKind.FIXED_HORIZON: "Picard iterations of the fixed-horizon pendulum problem",
    ExperimentKind.MPC: "receding-horizon repetitions of the pendulum twin experiment",
    ExperimentKind.RICCATI_CHECK: "compare FBSDE gains with the Riccati solution",
    ExperimentKind.FILTER_CHECK: "compare EnKBF moments with the Kalman-Bucy moments",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="JSON experiment manifest")
    common.add_argument("--seed", type=int, default=None, help="Master seed (u64)")
    common.add_argument("--out", type=Path, default=None, help="Output directory")
    common.add_argument("--reps", type=int, default=None, help="Number of repetitions")
    common.add_argument("--jobs", type=int, default=None, help="Parallel workers for repetitions")
    common.add_argument("--quiet", action="store_true", help="Only log warnings and errors")

    parser = argparse.ArgumentParser(
        prog="enkbf_nmpc",
        description="Ensemble Kalman-Bucy filter based nonlinear model predictive control",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in ExperimentKind:
        sub.add_parser(kind.value, parents=[common], help=_HELP[kind])
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then the manifest (bundled one if --config is omitted), then CLI flags."""
    kind = ExperimentKind(args.command)
    config_file = args.config
    if config_file is None:
        bundled = default_config_path(CONFIG_FILES[kind])
        config_file = bundled if bundled.exists() else None
    manager = ConfigManager(kind, config_file)
    for key, value in (
        ("run.seed", args.seed),
        ("run.out_dir", None if args.out is None else str(args.out)),
        ("run.repetitions", args.reps),
        ("run.jobs", args.jobs),
    ):
        if value is not None:
            manager.set(key, value)
    return manager.to_experiment_config()


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.quiet else logging.INFO
    setup_logging(level)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        logger.error("Invalid configuration: %s", exc)
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    setup_logging(level, log_dir=cfg.run.out_dir)
    try:
        summary = run_experiment(cfg, cfg.run.out_dir)
    except ConfigError as exc:
        logger.error("Invalid configuration: %s", exc)
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, SingularMatrixError) as exc:
        iteration = getattr(exc, "iteration", None)
        where = "" if iteration is None else f" (Picard iteration {iteration})"
        logger.error("%s failed%s: %s", cfg.kind.value, where, exc)
        print(f"{cfg.kind.value}: FAIL{where}: {exc}", file=sys.stderr)
        return EXIT_FAIL

    status = "PASS" if summary.passed else "FAIL"
    print(f"{cfg.kind.value}: {status} ({summary.wall_time:.1f} s)")
    for key, value in summary.metrics.items():
        if not isinstance(value, (dict, list)):
            print(f"  {key}: {value}")
    return EXIT_PASS if summary.passed else EXIT_FAIL


__all__ = ["build_parser", "load_config", "main"]
