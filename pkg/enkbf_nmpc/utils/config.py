"""
Configuration Management for EnKBF-NMPC

Experiment manifests are JSON files with flat sections (experiment, model,
cost, solver, mpc, run, tolerances). Keys starting with an underscore are
notes (for instance full-scale repetition counts) and are ignored when parsing.
"""

import copy
import json
import math
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from ..core.errors import ConfigError, DimensionError
from ..core.grid import steps_in
from .logging import get_logger

logger = get_logger("config")


class ExperimentKind(Enum):
    FIXED_HORIZON = "fixed-horizon"
    MPC = "mpc"
    RICCATI_CHECK = "riccati-check"
    FILTER_CHECK = "filter-check"


CONFIG_FILES = {
    ExperimentKind.FIXED_HORIZON: "fixed_horizon.json",
    ExperimentKind.MPC: "mpc.json",
    ExperimentKind.RICCATI_CHECK: "riccati_check.json",
    ExperimentKind.FILTER_CHECK: "filter_check.json",
}

Matrix = Optional[List[List[float]]]


@dataclass
class ModelSection:
    """``name`` is "pendulum" or "linear"; the matrices are read for "linear" only."""

    name: str = "pendulum"
    gamma: float = 5.0
    obs_variance: float = 1.0
    twin_noise_scale: float = 0.0
    initial_mean: List[float] = field(default_factory=lambda: [math.pi / 2, 0.0])
    initial_variance: float = 0.1
    initial_cov: Matrix = None
    A: Matrix = None
    b: Optional[List[float]] = None
    G: Matrix = None
    H: Matrix = None
    R: Matrix = None


@dataclass
class CostSection:
    weight: float = 50.0
    terminal_weight: float = 50.0
    target: Optional[List[float]] = None
    terminal_target: Optional[List[float]] = None


@dataclass
class SolverSection:
    M: int = 50
    K: int = 50
    n_iter: int = 3
    T: float = 2.0
    dt: float = 1e-3
    ridge: Optional[float] = None
    symmetrize: bool = False
    control_mode: str = "closed_loop"


@dataclass
class MpcSection:
    horizon: float = 0.5
    replan_interval: float = 0.05
    duration: float = 2.0
    warm_start: bool = True


@dataclass
class RunSection:
    seed: int = 0
    repetitions: int = 1
    out_dir: str = "results"
    jobs: int = 1


@dataclass
class ToleranceSection:
    gain: float = 0.05
    affine: float = 0.05
    ratio_band: float = 0.2
    picard_change: float = 0.05
    final_angle_fraction: float = 0.2


def _section(cls, data: Optional[Dict[str, Any]], name: str):
    data = {k: v for k, v in (data or {}).items() if not k.startswith("_")}
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in section '{name}': {', '.join(unknown)}")
    return cls(**data)


@dataclass
class ExperimentConfig:
    """Typed view of an experiment manifest."""

    kind: ExperimentKind
    name: str = "experiment"
    model: ModelSection = field(default_factory=ModelSection)
    cost: CostSection = field(default_factory=CostSection)
    solver: SolverSection = field(default_factory=SolverSection)
    mpc: MpcSection = field(default_factory=MpcSection)
    run: RunSection = field(default_factory=RunSection)
    tolerances: ToleranceSection = field(default_factory=ToleranceSection)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "experiment": {"kind": self.kind.value, "name": self.name},
            "model": asdict(self.model),
            "cost": asdict(self.cost),
            "solver": asdict(self.solver),
            "mpc": asdict(self.mpc),
            "run": asdict(self.run),
            "tolerances": asdict(self.tolerances),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        sections = {k: v for k, v in data.items() if not k.startswith("_")}
        allowed = {"experiment", "model", "cost", "solver", "mpc", "run", "tolerances"}
        unknown = sorted(set(sections) - allowed)
        if unknown:
            raise ConfigError(f"unknown sections: {', '.join(unknown)}")
        experiment = sections.get("experiment") or {}
        try:
            kind = ExperimentKind(experiment.get("kind"))
        except ValueError as exc:
            raise ConfigError(f"unknown experiment kind {experiment.get('kind')!r}") from exc
        try:
            return cls(
                kind=kind,
                name=experiment.get("name", "experiment"),
                model=_section(ModelSection, sections.get("model"), "model"),
                cost=_section(CostSection, sections.get("cost"), "cost"),
                solver=_section(SolverSection, sections.get("solver"), "solver"),
                mpc=_section(MpcSection, sections.get("mpc"), "mpc"),
                run=_section(RunSection, sections.get("run"), "run"),
                tolerances=_section(ToleranceSection, sections.get("tolerances"), "tolerances"),
            )
        except TypeError as exc:
            raise ConfigError(f"malformed configuration: {exc}") from exc

    def validate(self) -> "ExperimentConfig":
        """Raise ConfigError unless counts are positive and dt divides the intervals."""
        s, m, r = self.solver, self.mpc, self.run
        for name, value, low in (
            ("solver.M", s.M, 2),
            ("solver.K", s.K, 2),
            ("solver.n_iter", s.n_iter, 1),
            ("run.repetitions", r.repetitions, 1),
        ):
            if not isinstance(value, int) or value < low:
                raise ConfigError(f"{name} must be an integer >= {low}, got {value!r}")
        # joblib convention: -1 is every core, -2 all but one
        if not isinstance(r.jobs, int) or r.jobs == 0:
            raise ConfigError(f"run.jobs must be a non-zero integer, got {r.jobs!r}")
        if not isinstance(r.seed, int) or r.seed < 0:
            raise ConfigError(f"run.seed must be a non-negative integer, got {r.seed!r}")
        if s.ridge is not None and s.ridge < 0:
            raise ConfigError(f"solver.ridge must be non-negative, got {s.ridge}")
        if s.control_mode not in ("closed_loop", "open_loop"):
            raise ConfigError("solver.control_mode must be closed_loop or open_loop")
        if not s.dt > 0:
            raise ConfigError(f"solver.dt must be positive, got {s.dt}")
        intervals = [("solver.T", s.T)]
        if self.kind is ExperimentKind.MPC:
            intervals += [
                ("mpc.horizon", m.horizon),
                ("mpc.replan_interval", m.replan_interval),
                ("mpc.duration", m.duration),
            ]
            if not 0 < m.replan_interval <= m.horizon:
                raise ConfigError("mpc.replan_interval must lie in (0, mpc.horizon]")
        for name, value in intervals:
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
            try:
                steps_in(value, s.dt)
            except DimensionError as exc:
                raise ConfigError(f"{name}: {exc}") from exc
        if self.model.name not in ("pendulum", "linear"):
            raise ConfigError(f"unknown model {self.model.name!r}")
        if self.model.name == "linear" and any(
            getattr(self.model, k) is None for k in ("A", "G", "H", "R")
        ):
            raise ConfigError("a linear model needs A, G, H and R")
        if self.kind in (ExperimentKind.RICCATI_CHECK, ExperimentKind.FILTER_CHECK) and (
            self.model.name != "linear"
        ):
            raise ConfigError(f"{self.kind.value} needs a linear model")
        return self


def _deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


_DOUBLE_INTEGRATOR = {
    "name": "linear",
    "A": [[0.0, 1.0], [0.0, 0.0]],
    "b": [0.0, 0.0],
    "G": [[0.0], [1.0]],
    "H": [[1.0, 0.0]],
    "R": [[1.0]],
    "initial_mean": [1.0, 0.0],
    "initial_cov": [[0.1, 0.0], [0.0, 0.1]],
}


def default_config(kind: ExperimentKind) -> Dict[str, Any]:
    """Built-in defaults for an experiment kind (desk scale)."""
    config = ExperimentConfig(kind=kind, name=kind.value).to_dict()
    if kind is ExperimentKind.FIXED_HORIZON:
        config["solver"].update({"T": 2.0})
    elif kind is ExperimentKind.MPC:
        config["solver"].update({"T": 0.5})
        config["run"].update({"repetitions": 100})
    elif kind is ExperimentKind.RICCATI_CHECK:
        config["model"].update(_DOUBLE_INTEGRATOR)
        config["cost"].update({"weight": 1.0, "terminal_weight": 1.0})
        config["solver"].update({"M": 64, "K": 64, "T": 1.0})
    elif kind is ExperimentKind.FILTER_CHECK:
        config["model"].update(_DOUBLE_INTEGRATOR)
        config["cost"].update({"weight": 0.0, "terminal_weight": 0.0})
        config["solver"].update({"M": 8, "K": 2, "T": 1.0, "dt": 2e-3})
    return config


class ConfigManager:
    """Manages the configuration of one experiment"""

    def __init__(
        self, kind: ExperimentKind, config_file: Optional[Union[str, Path]] = None
    ):
        """
        Initialize the configuration manager.

        Args:
            kind: Experiment kind selecting the built-in defaults
            config_file: Optional JSON manifest merged over the defaults
        """
        self.kind = kind
        self.config_file = Path(config_file) if config_file is not None else None
        self._config = default_config(kind)
        if self.config_file is not None:
            self.import_config(self.config_file)

    @staticmethod
    def _read(file_path: Union[str, Path]) -> Dict[str, Any]:
        try:
            with open(file_path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.error("Failed to load configuration: %s", str(e))
            raise ConfigError(f"cannot read configuration {file_path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"configuration {file_path} must hold a JSON object")
        return data

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get a configuration value using dot notation.

        Args:
            key: Configuration key (e.g., 'solver.M')
            default: Default value if key not found

        Returns:
            Configuration value or default
        """
        value = self._config
        try:
            for k in key.split("."):
                value = value[k]
            return value
        except (KeyError, TypeError):
            return default

    def set(self, key: str, value: Any) -> None:
        """Set a configuration value using dot notation (e.g. 'run.seed')."""
        keys = key.split(".")
        config = self._config
        for k in keys[:-1]:
            config = config.setdefault(k, {})
        config[keys[-1]] = value

    def import_config(self, file_path: Union[str, Path]) -> None:
        """Merge a JSON manifest over the current values."""
        imported = self._read(file_path)
        declared = (imported.get("experiment") or {}).get("kind")
        if declared is not None and declared != self.kind.value:
            raise ConfigError(
                f"{file_path} describes a '{declared}' experiment, not '{self.kind.value}'"
            )
        self._config = _deep_merge(self._config, imported)
        logger.info("Configuration loaded from %s", file_path)

    def export_config(self, file_path: Union[str, Path]) -> Path:
        """Write the parsed configuration (notes dropped) as JSON."""
        path = Path(file_path)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_experiment_config().to_dict(), f, indent=2)
        logger.info("Configuration exported to %s", path)
        return path

    def to_experiment_config(self) -> ExperimentConfig:
        return ExperimentConfig.from_dict(self._config).validate()


__all__ = [
    "ExperimentKind",
    "ExperimentConfig",
    "ModelSection",
    "CostSection",
    "SolverSection",
    "MpcSection",
    "RunSection",
    "ToleranceSection",
    "ConfigManager",
    "CONFIG_FILES",
    "default_config",
]
