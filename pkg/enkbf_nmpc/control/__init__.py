"""Control layer: ensemble FBSDE solver, linear-Gaussian oracles, receding horizon."""
from .fbsde import (  # noqa: F401
    ControlMode,
    GainSchedule,
    PicardIteration,
    RealizationBundle,
    backward_regression_step,
    backward_sweep,
    expected_cost,
    forward_sweep,
    least_squares_fit,
    linearized_gain_step,
    picard_iterate,
    picard_solve,
)
from .riccati_oracle import LtiSpec, integrate_riccati, kalman_bucy_moments  # noqa: F401
from .mpc import (  # noqa: F401
    MpcConfig,
    TrajectoryLog,
    TwinState,
    interpolate_gain,
    observe_increment,
    physical_twin_step,
    run_receding_horizon,
    shift_schedule,
)
