"""Trial traces and aggregate errors shared by simulated and live runs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def rmse(actual, target) -> float:
    """Root mean square error between two equal-length traces."""
    actual = np.asarray(actual, dtype=float)
    target = np.asarray(target, dtype=float)
    if actual.shape != target.shape:
        raise ValueError(f"trace length mismatch: {actual.shape} vs {target.shape}")
    if actual.size == 0:
        raise ValueError("rmse needs at least one sample")
    return float(np.sqrt(np.mean((actual - target) ** 2)))


@dataclass(frozen=True)
class TrialResult:
    """Reference vs. achieved traces for one trial, with RMSE aggregates."""

    label: str
    controller: str                      # "ikk" | "direct"
    times: np.ndarray
    reference: np.ndarray                # target signal, 0-100
    actual: np.ndarray                   # achieved signal, 0-100
    signal_rmse: float
    success: bool = True
    positions: np.ndarray | None = None          # (N, 3) hand positions
    position_targets: np.ndarray | None = None   # (N, 3) commanded centers
    position_rmse: float | None = None           # m, alignment excluded
    radius_reference: np.ndarray | None = None   # m (sphere experiment)
    radius_actual: np.ndarray | None = None      # m
    radius_rmse: float | None = None             # m
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) != len(self.reference) or len(self.times) != len(self.actual):
            raise ValueError("trial traces must be time-aligned and equal length")

    def to_csv(self, path) -> None:
        cols = ["t", "reference", "actual"]
        arrays = [self.times, self.reference, self.actual]
        if self.positions is not None:
            cols += ["px", "py", "pz"]
            arrays += [self.positions[:, 0], self.positions[:, 1], self.positions[:, 2]]
        if self.radius_reference is not None:
            cols += ["radius_ref", "radius"]
            arrays += [self.radius_reference, self.radius_actual]
        lines = [",".join(cols)]
        for row in zip(*arrays):
            lines.append(",".join(repr(float(v)) for v in row))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def summary_dict(self) -> dict:
        out = {
            "label": self.label,
            "controller": self.controller,
            "signal_rmse": self.signal_rmse,
            "success": self.success,
        }
        if self.position_rmse is not None:
            out["position_rmse_m"] = self.position_rmse
        if self.radius_rmse is not None:
            out["radius_rmse_m"] = self.radius_rmse
        out.update(self.metadata)
        return out


def save_summary(results: list[TrialResult], path) -> None:
    Path(path).write_text(
        json.dumps([r.summary_dict() for r in results], indent=2), encoding="utf-8"
    )
