"""
Experiment artifacts: CSV time series and the JSON summary.

All CSVs carry a header line and are written with ``%.17g`` so a rerun with
the same seed reproduces them byte for byte.
"""
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np
import pandas as pd

from ..control.fbsde import GainSchedule, RealizationBundle
from ..utils.logging import get_logger
from ..utils.path_helpers import ensure_dir

logger = get_logger("experiments.artifacts")

FLOAT_FORMAT = "%.17g"
FAN_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
SUMMARY_FILE = "summary.json"


@dataclass
class ExperimentSummary:
    kind: str
    passed: bool
    metrics: Dict[str, Any] = field(default_factory=dict)
    wall_time: float = 0.0
    artifacts: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def write_frame(frame: pd.DataFrame, out_dir: Path, name: str) -> Path:
    path = ensure_dir(out_dir) / name
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info("Wrote %s", path)
    return path


def write_summary(summary: ExperimentSummary, out_dir: Path) -> Path:
    path = ensure_dir(out_dir) / SUMMARY_FILE
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary.to_dict(), f, indent=2, default=float)
    logger.info("Wrote %s", path)
    return path


def fan_chart_frame(bundle: RealizationBundle, iteration: int) -> pd.DataFrame:
    """Quantiles over realizations of each mean component, one row per node."""
    data = {"iteration": np.full(bundle.grid.size, iteration), "t": bundle.grid}
    for i in range(bundle.means.shape[-1]):
        component = bundle.means[..., i]
        data[f"mean_{i}_avg"] = component.mean(axis=1)
        for q in FAN_QUANTILES:
            data[f"mean_{i}_q{int(round(q * 100)):02d}"] = np.quantile(component, q, axis=1)
    return pd.DataFrame(data)


def feedback_gain_frame(schedule: GainSchedule, G: np.ndarray, iteration: int) -> pd.DataFrame:
    """Entries of G^T Λ*_t per node."""
    gains = schedule.feedback_gains(G)
    data = {"iteration": np.full(schedule.grid.size, iteration), "t": schedule.grid}
    for u in range(gains.shape[1]):
        for j in range(gains.shape[2]):
            data[f"GtLambda_{u}_{j}"] = gains[:, u, j]
    return pd.DataFrame(data)


def aggregate_frame(frames: Sequence[pd.DataFrame]) -> pd.DataFrame:
    """Across-repetition mean and variance of the angle trajectories."""
    t = frames[0]["t"].to_numpy()
    angles = np.stack([f["mean_0"].to_numpy() for f in frames])
    true_angles = np.stack([f["x_true_0"].to_numpy() for f in frames])
    costs = np.stack([f["running_cost"].to_numpy() for f in frames])
    return pd.DataFrame(
        {
            "t": t,
            "angle_mean": angles.mean(axis=0),
            "angle_var": angles.var(axis=0),
            "abs_angle_mean": np.abs(angles).mean(axis=0),
            "true_angle_mean": true_angles.mean(axis=0),
            "true_angle_var": true_angles.var(axis=0),
            "running_cost_mean": costs.mean(axis=0),
        }
    )


__all__ = [
    "ExperimentSummary",
    "write_frame",
    "write_summary",
    "fan_chart_frame",
    "feedback_gain_frame",
    "aggregate_frame",
]
