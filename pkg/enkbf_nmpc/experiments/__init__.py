"""Experiment runners and artifact writers."""
from .artifacts import ExperimentSummary  # noqa: F401
from .runners import (  # noqa: F401
    build_problem,
    run_experiment,
    run_fixed_horizon_experiment,
    run_linear_consistency_check,
    run_mpc_experiment,
)
