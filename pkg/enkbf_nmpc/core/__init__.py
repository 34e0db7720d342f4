"""Numerical core: models, ensembles and the ensemble Kalman-Bucy filter.

Submodules:
 - model: control-affine models, quadratic costs, initial laws
 - ensemble: 1/M-normalized empirical moments, moment-matched sampling
 - filter: assimilation and simulated-innovation time steps
 - grid: uniform time grids
 - errors: exception hierarchy
"""
from .errors import (  # noqa: F401
    ConfigError,
    DimensionError,
    DivergenceError,
    EnkbfNmpcError,
    RecedingHorizonError,
    RiccatiBlowUpError,
    SingularMatrixError,
)
from .model import (  # noqa: F401
    InitialLaw,
    ModelSpec,
    QuadraticCost,
    control_law,
    linear_model,
    pendulum_initial_law,
    pendulum_model,
    quadratic_cost,
    running_cost,
    running_cost_grad,
    terminal_cost,
    terminal_cost_grad,
)
from .ensemble import (  # noqa: F401
    Ensemble,
    cross_cov,
    empirical_mean,
    ensemble_moments,
    moment_matched_initial,
    tile_or_resample,
)
from .filter import (  # noqa: F401
    FilterState,
    assimilate_members,
    assimilate_step,
    simulate_members,
    simulated_step,
)
from .grid import steps_in, time_grid  # noqa: F401
