"""Virtual experiment harness: reference profiles, tracking and sphere
tasks, RMSE aggregation, learning-curve fitting, report rendering.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize

from . import simuser
from .arm import ArmModel
from .interp import InterpolationVolume
from .results import TrialResult, rmse, save_summary

CANONICAL_SEEDS = (1, 2, 3)
LEAD_IN_S = 2.0
FAST_SLOPE = 20.0          # units/s, the "rapid change" regime
RADIUS_MIN_M = 0.05        # signal 0 maps here
RADIUS_MAX_M = 0.80        # signal 100 maps here
SPHERE_INITIAL_RADIUS_M = 0.50
SPHERE_STEP_INTERVAL_S = 5.0
SPHERE_STEP_COUNT = 6
SPHERE_ALIGNMENT_S = 5.0


@dataclass(frozen=True)
class ReferenceProfile:
    """Signal reference on the 0-100 scale with a flat lead-in segment."""

    times: np.ndarray
    values: np.ndarray
    duration: float
    seed: int
    label: str = ""

    def __post_init__(self):
        if np.any(self.values < 0.0) or np.any(self.values > 100.0):
            raise ValueError("profile values must stay in [0, 100]")

    def value_at(self, t: float) -> float:
        if t <= self.times[0]:
            return float(self.values[0])
        if t >= self.times[-1]:
            return float(self.values[-1])
        return float(np.interp(t, self.times, self.values))

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.times)


def generate_profile(seed: int, duration: float = 25.0, rate: float = 100.0) -> ReferenceProfile:
    """Pseudo-random C1 reference: 2 s flat lead-in, then a shape-preserving
    cubic through seed-chosen knots in [5, 95] with at least one fast
    segment (slope >= 20 units/s, a drop like 90 -> 30 within 3 s).
    """
    if duration <= LEAD_IN_S:
        raise ValueError(f"duration must exceed the {LEAD_IN_S}s lead-in")
    rng = np.random.default_rng(seed)
    level = float(rng.uniform(20.0, 80.0))
    n_knots = int(rng.integers(6, 11))
    # knot times strictly inside (lead_in, duration); the gap shrinks when
    # a short duration cannot hold the seeded knot count 1 s apart
    window = duration - 0.5 - (LEAD_IN_S + 1.0)
    n_knots = max(2, min(n_knots, int(window / 0.6)))
    gap = min(1.0, 0.5 * window / n_knots)
    spread = np.sort(rng.uniform(0.0, 1.0, size=n_knots))
    slots = np.arange(n_knots) * gap
    t_knots = LEAD_IN_S + 1.0 + slots + spread * (window - (n_knots - 1) * gap)
    v_knots = rng.uniform(5.0, 95.0, size=n_knots)
    # guarantee one rapid drop: pick the tightest adjacent gap and set a
    # 90-to-30-style transition across it
    gaps = np.diff(t_knots)
    k = int(np.argmin(gaps))
    span_t = min(gaps[k], 3.0)
    if abs(v_knots[k] - v_knots[k + 1]) / gaps[k] < FAST_SLOPE:
        v_knots[k] = 90.0
        v_knots[k + 1] = max(30.0, 90.0 - FAST_SLOPE * 1.25 * span_t)

    knot_t = np.concatenate([[0.0, LEAD_IN_S], t_knots, [duration]])
    knot_v = np.concatenate([[level, level], v_knots, [v_knots[-1]]])
    spline = PchipInterpolator(knot_t, knot_v)
    times = np.arange(0.0, duration + 0.5 / rate, 1.0 / rate)
    values = np.clip(spline(times), 0.0, 100.0)
    return ReferenceProfile(
        times=times, values=values, duration=duration, seed=seed, label=f"trajectory-{seed}"
    )


# ---------------------------------------------------------------------------
# Experiment 1: trajectory tracking
# ---------------------------------------------------------------------------

def run_experiment1(
    model: ArmModel,
    volume: InterpolationVolume,
    gains: simuser.SimUserGains = simuser.SimUserGains(),
    profile_seeds=CANONICAL_SEEDS,
    repetitions: int = 3,
    duration: float = 25.0,
    rate: float = 100.0,
    controller: str = "simuser",
    out_dir=None,
) -> tuple[list[TrialResult], dict]:
    """Nine tracking trials: each profile repeated `repetitions` times.

    controller "simuser" runs the closed-loop arm simulation; "oracle"
    short-circuits the loop (direct mode reading the reference), a lower
    bound used to validate the harness.
    """
    results = []
    for p_seed in profile_seeds:
        profile = generate_profile(p_seed, duration=duration, rate=rate)
        for rep in range(repetitions):
            sim_seed = p_seed * 1000 + rep
            if controller == "oracle":
                times = np.arange(0.0, duration, 1.0 / rate)
                reference = np.array([profile.value_at(t) for t in times])
                raw = {
                    "label": f"{profile.label}-rep{rep}",
                    "times": times,
                    "reference": reference,
                    "actual": reference.copy(),
                    "positions": np.zeros((len(times), 3)),
                    "success": True,
                }
                kind = "direct"
            elif controller == "simuser":
                raw = simuser.run_tracking(
                    model, volume, gains, profile, seed=sim_seed, rate=rate,
                    label=f"{profile.label}-rep{rep}",
                )
                kind = "ikk"
            else:
                raise ValueError(f"unknown controller {controller!r}")
            results.append(
                TrialResult(
                    label=raw["label"],
                    controller=kind,
                    times=raw["times"],
                    reference=raw["reference"],
                    actual=raw["actual"],
                    signal_rmse=rmse(raw["actual"], raw["reference"]),
                    success=raw["success"],
                    positions=raw["positions"],
                    metadata={"profile_seed": p_seed, "repetition": rep, "sim_seed": sim_seed},
                )
            )
    summary = summarize_experiment1(results)
    if out_dir is not None:
        _write_results(results, summary, Path(out_dir) / "exp1")
    return results, summary


def summarize_experiment1(results: list[TrialResult]) -> dict:
    by_profile: dict = {}
    for r in results:
        by_profile.setdefault(r.metadata["profile_seed"], []).append(r)
    table = {}
    for seed in sorted(by_profile):
        ok = [r.signal_rmse for r in by_profile[seed] if r.success]
        entry = {
            "trials": len(by_profile[seed]),
            "failed": sum(not r.success for r in by_profile[seed]),
        }
        if ok:
            entry["mean_rmse"] = float(np.mean(ok))
            entry["std_rmse"] = float(np.std(ok))
        table[f"trajectory-{seed}"] = entry
    return table


# ---------------------------------------------------------------------------
# Experiment 2: sphere overlap
# ---------------------------------------------------------------------------

def radius_from_value(value, lo: float = RADIUS_MIN_M, hi: float = RADIUS_MAX_M) -> np.ndarray:
    return lo + np.asarray(value, dtype=float) / 100.0 * (hi - lo)


def value_from_radius(radius, lo: float = RADIUS_MIN_M, hi: float = RADIUS_MAX_M) -> np.ndarray:
    r = np.clip(np.asarray(radius, dtype=float), lo, hi)
    return (r - lo) / (hi - lo) * 100.0


@dataclass(frozen=True)
class SphereSchedule:
    """Target radius steps and per-trial sphere centers."""

    radius_steps: tuple[float, ...]
    target_centers: tuple
    initial_radius: float = SPHERE_INITIAL_RADIUS_M
    step_interval: float = SPHERE_STEP_INTERVAL_S
    alignment: float = SPHERE_ALIGNMENT_S
    seed: int = 0

    def __post_init__(self):
        if len(self.radius_steps) != SPHERE_STEP_COUNT:
            raise ValueError(f"schedule needs {SPHERE_STEP_COUNT} radius steps")

    @property
    def duration(self) -> float:
        return self.alignment + self.step_interval * len(self.radius_steps)

    def radius_at(self, t: float) -> float:
        if t < self.alignment:
            return self.initial_radius
        k = min(int((t - self.alignment) / self.step_interval), len(self.radius_steps) - 1)
        return self.radius_steps[k]


def make_sphere_schedule(seed: int, volume: InterpolationVolume) -> SphereSchedule:
    rng = np.random.default_rng(seed)
    steps = tuple(float(r) for r in rng.uniform(0.15, 0.70, size=SPHERE_STEP_COUNT))
    center = volume.points.mean(axis=0)
    extent = volume.points.max(axis=0) - volume.points.min(axis=0)
    centers = tuple(center + rng.uniform(-0.15, 0.15, size=3) * extent for _ in range(3))
    return SphereSchedule(radius_steps=steps, target_centers=centers, seed=seed)


class _ScheduleProfile:
    """Adapts a radius schedule to the signal-reference interface."""

    def __init__(self, schedule: SphereSchedule):
        self.schedule = schedule
        self.duration = schedule.duration

    def value_at(self, t: float) -> float:
        return float(value_from_radius(self.schedule.radius_at(t)))


def run_experiment2(
    model: ArmModel,
    volume: InterpolationVolume,
    schedule: SphereSchedule,
    gains: simuser.SimUserGains = simuser.SimUserGains(),
    mode: str = "parallel",
    rate: float = 100.0,
    out_dir=None,
) -> list[TrialResult]:
    """Sphere-overlap trials: radius tracked through the kernel signal;
    in parallel mode the hand simultaneously aligns to the target center.

    The alignment phase is excluded from the position RMSE.
    """
    if mode not in ("single", "parallel"):
        raise ValueError(f"unknown mode {mode!r}")
    profile = _ScheduleProfile(schedule)
    results = []
    for trial_idx, center in enumerate(schedule.target_centers):
        sim_seed = schedule.seed * 1000 + trial_idx

        if mode == "parallel":
            start = volume.points.mean(axis=0)
            center = np.asarray(center, dtype=float)

            def pose_targets(t, start=start, center=center):
                a = min(max(t / schedule.alignment, 0.0), 1.0)
                s = a * a * (3 - 2 * a)  # smoothstep reach during alignment
                return start + s * (center - start)
        else:
            pose_targets = None

        raw = simuser.run_tracking(
            model, volume, gains, profile,
            pose_targets=pose_targets, seed=sim_seed, rate=rate,
            label=f"sphere-{mode}-{trial_idx}",
        )
        radius_ref = radius_from_value(raw["reference"])
        radius_act = radius_from_value(raw["actual"])
        after_alignment = raw["times"] >= schedule.alignment
        position_rmse = None
        if mode == "parallel":
            err = np.linalg.norm(
                raw["positions"][after_alignment] - raw["target_positions"][after_alignment],
                axis=1,
            )
            position_rmse = float(np.sqrt(np.mean(err ** 2)))
        results.append(
            TrialResult(
                label=raw["label"],
                controller="ikk",
                times=raw["times"],
                reference=raw["reference"],
                actual=raw["actual"],
                signal_rmse=rmse(raw["actual"][after_alignment], raw["reference"][after_alignment]),
                success=raw["success"],
                positions=raw["positions"],
                position_targets=raw["target_positions"],
                position_rmse=position_rmse,
                radius_reference=radius_ref,
                radius_actual=radius_act,
                radius_rmse=rmse(radius_act[after_alignment], radius_ref[after_alignment]),
                metadata={"mode": mode, "trial": trial_idx, "sim_seed": sim_seed},
            )
        )
    if out_dir is not None:
        _write_results(results, {r.label: r.summary_dict() for r in results}, Path(out_dir) / f"exp2-{mode}")
    return results


# ---------------------------------------------------------------------------
# Learning curve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LearningCurveFit:
    theta: tuple[float, float, float, float]
    x_min: float
    residual: float
    plateau: float
    restarts: int
    best_trace: tuple[float, ...] = ()

    def predict(self, x) -> np.ndarray:
        t1, t2, t3, t4 = self.theta
        x = np.asarray(x, dtype=float)
        return t4 / (t3 + np.exp(x * t1 + t2)) + self.x_min


def _sigmoid_residual(theta, x, y_scaled):
    t1, t2, t3, t4 = theta
    if t3 <= 0:
        return 1e18
    pred = t4 / (t3 + np.exp(np.clip(x * t1 + t2, -500, 500)))
    return float(np.sum((y_scaled - pred) ** 2))


class FitError(RuntimeError):
    pass


def fit_learning_curve(y, restarts: int = 200, seed: int = 0) -> LearningCurveFit:
    """Least-squares sigmoid fit with randomized multi-start local search.

    Counts y are per-trial performance (trial numbers are 1..T); the best
    of `restarts` Nelder-Mead runs from seeded random initial guesses wins.
    The fit runs on spread-normalized counts so the four parameters share
    a scale, and the incumbent is polished with a second local search.
    """
    y = np.asarray(y, dtype=float)
    if len(y) < 5:
        raise FitError(f"need at least 5 trials, got {len(y)}")
    x = np.arange(1, len(y) + 1, dtype=float)
    x_min = float(y.min())
    spread = max(float(y.max() - x_min), 1e-9)
    y_scaled = (y - x_min) / spread
    rng = np.random.default_rng(seed)
    options = {"maxiter": 4000, "xatol": 1e-12, "fatol": 1e-14}

    best = None
    trace = []
    for _ in range(restarts):
        theta0 = np.array([
            rng.uniform(-3.0, 0.5),
            rng.uniform(-4.0, 6.0),
            rng.uniform(0.05, 4.0),
            rng.uniform(0.05, 4.0),
        ])
        res = minimize(
            _sigmoid_residual, theta0, args=(x, y_scaled),
            method="Nelder-Mead", options=options,
        )
        candidate = (float(res.fun), tuple(float(v) for v in res.x))
        if best is None or candidate[0] < best[0]:
            best = candidate
        trace.append(best[0])

    if best is None or not math.isfinite(best[0]):
        raise FitError(f"all {restarts} restarts diverged")
    polished = minimize(
        _sigmoid_residual, np.array(best[1]), args=(x, y_scaled),
        method="Nelder-Mead", options=options,
    )
    if float(polished.fun) < best[0]:
        best = (float(polished.fun), tuple(float(v) for v in polished.x))
        trace.append(best[0])

    residual_scaled, theta_scaled = best
    t1, t2, t3, t4s = theta_scaled
    theta = (t1, t2, t3, t4s * spread)
    residual = residual_scaled * spread * spread
    t1, t2, t3, t4 = theta
    if t3 <= 0:
        raise FitError(f"best fit has non-positive shape parameter t3={t3}")
    if t1 < 0:
        plateau = x_min + t4 / t3
    elif t1 > 0:
        plateau = x_min
    else:
        plateau = x_min + t4 / (t3 + math.exp(t2))
    return LearningCurveFit(
        theta=tuple(theta),
        x_min=x_min,
        residual=residual,
        plateau=plateau,
        restarts=restarts,
        best_trace=tuple(r * spread * spread for r in trace),
    )


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

def _result_rows(results: list[TrialResult]):
    rows = []
    for r in results:
        rows.append({
            "label": r.label,
            "controller": r.controller,
            "signal_rmse": None if not r.success else round(r.signal_rmse, 6),
            "radius_rmse_cm": None if (not r.success or r.radius_rmse is None) else round(r.radius_rmse * 100.0, 6),
            "position_rmse_cm": None if (not r.success or r.position_rmse is None) else round(r.position_rmse * 100.0, 6),
            "success": r.success,
        })
    return rows


def _mean_std(rows, key):
    vals = [row[key] for row in rows if row["success"] and row[key] is not None]
    if not vals:
        return None
    return float(np.mean(vals)), float(np.std(vals))


def report(results: list[TrialResult], format: str = "markdown") -> str:
    """Per-trial table plus mean +- std, failed trials rendered as FAIL."""
    if not results:
        raise ValueError("report needs at least one result")
    rows = _result_rows(results)
    keys = ["label", "controller", "signal_rmse", "radius_rmse_cm", "position_rmse_cm"]
    active = [k for k in keys if k in ("label", "controller") or any(row[k] is not None for row in rows)]

    def cell(row, key):
        if key in ("label", "controller"):
            return str(row[key])
        if not row["success"]:
            return "FAIL"
        v = row[key]
        return "" if v is None else repr(v)

    stats = {k: _mean_std(rows, k) for k in active if k not in ("label", "controller")}
    mean_row = ["mean", ""] + [
        "" if stats.get(k) is None else repr(round(stats[k][0], 6)) for k in active[2:]
    ]
    std_row = ["std", ""] + [
        "" if stats.get(k) is None else repr(round(stats[k][1], 6)) for k in active[2:]
    ]

    if format == "json":
        doc = {"trials": rows, "mean_std": {k: v for k, v in stats.items() if v is not None}}
        return json.dumps(doc, indent=2)
    if format == "csv":
        lines = [",".join(active)]
        for row in rows:
            lines.append(",".join(cell(row, k) for k in active))
        lines.append(",".join(mean_row))
        lines.append(",".join(std_row))
        return "\n".join(lines) + "\n"
    if format == "markdown":
        lines = ["| " + " | ".join(active) + " |", "|" + "---|" * len(active)]
        for row in rows:
            lines.append("| " + " | ".join(cell(row, k) for k in active) + " |")
        lines.append("| " + " | ".join(mean_row) + " |")
        lines.append("| " + " | ".join(std_row) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {format!r}")


def _write_results(results: list[TrialResult], summary: dict, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for r in results:
        r.to_csv(directory / f"{r.label}.csv")
    (directory / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    (directory / "summary.md").write_text(report(results, "markdown"), encoding="utf-8")
