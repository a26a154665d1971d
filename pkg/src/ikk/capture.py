"""Motion-data model and ingestion.

Recordings are timestamped joint-angle vectors plus a hand pose, stored as
CSV (one frame per row, header mandatory).  This module also estimates
hand speeds, extracts steady segments, and generates synthetic calibration
sessions in which the hand is held fixed while the arm sweeps its kernel.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import arm, simuser
from .arm import ArmModel, HandPose

DEFAULT_LINEAR_THRESHOLD = 0.05   # m/s, hand counts as steady below this
DEFAULT_ANGULAR_THRESHOLD = 0.10  # rad/s
DEFAULT_SMOOTH_WINDOW = 11        # frames (0.11 s at 100 Hz)
DEFAULT_MIN_SEGMENT = 50          # frames (0.5 s at 100 Hz)


class RecordingError(ValueError):
    """Malformed or inconsistent recording data."""


@dataclass(frozen=True)
class Frame:
    t: float
    q: np.ndarray
    hand: HandPose

    def __post_init__(self):
        if not math.isfinite(self.t) or self.t < 0:
            raise RecordingError(f"frame time must be finite and non-negative, got {self.t}")
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))


@dataclass(frozen=True)
class Recording:
    frames: tuple[Frame, ...]
    rate_hz: float
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.rate_hz <= 0:
            raise RecordingError("rate_hz must be positive")
        nominal = 1.0 / self.rate_hz
        for i in range(1, len(self.frames)):
            dt = self.frames[i].t - self.frames[i - 1].t
            if dt <= 0:
                raise RecordingError(
                    f"timestamps must be strictly increasing (frame {i}, t={self.frames[i].t!r})"
                )
            if abs(dt - nominal) > 0.2 * nominal:
                raise RecordingError(
                    f"frame interval {dt:.6g}s at frame {i} deviates more than 20% "
                    f"from nominal {nominal:.6g}s"
                )

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def times(self) -> np.ndarray:
        return np.array([f.t for f in self.frames])

    @property
    def joint_matrix(self) -> np.ndarray:
        return np.array([f.q for f in self.frames])

    @property
    def hand_positions(self) -> np.ndarray:
        return np.array([f.hand.position for f in self.frames])


@dataclass(frozen=True)
class SteadySegment:
    """Run of frames [begin, end) whose hand speed stays under threshold."""

    begin: int
    end: int
    mean_position: np.ndarray
    max_linear_speed: float
    max_angular_speed: float


@dataclass(frozen=True)
class CalibrationSession:
    recordings: tuple[Recording, ...]
    model: ArmModel
    provenance: str = "recorded"
    seed: int | None = None
    target_positions: tuple | None = None

    def __post_init__(self):
        if len(self.recordings) < 4:
            raise RecordingError(
                "a calibration session needs at least 4 points "
                f"(got {len(self.recordings)}); tetrahedralization needs 4 non-coplanar nodes"
            )
        object.__setattr__(self, "recordings", tuple(self.recordings))


# ---------------------------------------------------------------------------
# CSV / manifest I/O
# ---------------------------------------------------------------------------

def _header(n: int) -> list[str]:
    return ["t"] + [f"q{i}" for i in range(n)] + ["px", "py", "pz", "ow", "ox", "oy", "oz"]


def save_recording(rec: Recording, path) -> None:
    """Write the canonical CSV; floats use repr so reloads are bit-exact."""
    n = len(rec.frames[0].q) if rec.frames else 0
    lines = [",".join(_header(n))]
    for f in rec.frames:
        values = [f.t, *f.q, *f.hand.position, *f.hand.orientation]
        lines.append(",".join(repr(float(v)) for v in values))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_recording(path, rate_hz: float = 100.0, label: str | None = None) -> Recording:
    """Parse a recording CSV, validating schema and monotone timestamps."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"recording file not found: {path}")
    text = path.read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise RecordingError(f"{path}: empty file")
    header = [c.strip() for c in lines[0].split(",")]
    if header[0] != "t" or header[-7:] != ["px", "py", "pz", "ow", "ox", "oy", "oz"]:
        raise RecordingError(f"{path}: unexpected header {lines[0]!r}")
    n = len(header) - 8
    if n < 1 or header[1 : 1 + n] != [f"q{i}" for i in range(n)]:
        raise RecordingError(f"{path}: unexpected joint columns in header")
    frames = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise RecordingError(f"{path}:{lineno}: expected {len(header)} cells, got {len(cells)}")
        try:
            vals = [float(c) for c in cells]
        except ValueError as exc:
            raise RecordingError(f"{path}:{lineno}: {exc}") from exc
        t = vals[0]
        q = np.array(vals[1 : 1 + n])
        pos = np.array(vals[1 + n : 4 + n])
        quat = np.array(vals[4 + n : 8 + n])
        if frames and t <= frames[-1].t:
            raise RecordingError(
                f"{path}:{lineno}: non-monotone timestamp {t!r} (previous {frames[-1].t!r})"
            )
        frames.append(Frame(t=t, q=q, hand=HandPose(pos, quat)))
    return Recording(frames=tuple(frames), rate_hz=rate_hz, label=label or path.stem)


def load_recording_json(path, rate_hz: float = 100.0, label: str | None = None) -> Recording:
    """JSON alternative to the CSV: a list of objects with identical field names."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    frames = []
    for i, row in enumerate(doc):
        n = 0
        while f"q{n}" in row:
            n += 1
        q = np.array([row[f"q{k}"] for k in range(n)])
        pos = np.array([row["px"], row["py"], row["pz"]])
        quat = np.array([row["ow"], row["ox"], row["oy"], row["oz"]])
        if frames and row["t"] <= frames[-1].t:
            raise RecordingError(f"{path}: non-monotone timestamp at entry {i}")
        frames.append(Frame(t=row["t"], q=q, hand=HandPose(pos, quat)))
    return Recording(frames=tuple(frames), rate_hz=rate_hz, label=label or path.stem)


def save_session(session: CalibrationSession, directory) -> Path:
    """Write per-point CSVs plus the manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    points = []
    for rec in session.recordings:
        csv_name = f"{rec.label}.csv"
        save_recording(rec, directory / csv_name)
        points.append({"label": rec.label, "csv": csv_name})
    manifest = {
        "schema": "ikk-session/1",
        "provenance": session.provenance,
        "seed": session.seed,
        "rate_hz": session.recordings[0].rate_hz,
        "model": session.model.to_json_dict(),
        "points": points,
    }
    path = directory / "session.json"
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path


def load_session(manifest_path, task_dim: int = arm.TASK_DIM_FULL) -> CalibrationSession:
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    model = ArmModel.from_json_dict(doc["model"], task_dim=task_dim)
    rate = float(doc.get("rate_hz", 100.0))
    recordings = tuple(
        load_recording(manifest_path.parent / p["csv"], rate_hz=rate, label=p["label"])
        for p in doc["points"]
    )
    return CalibrationSession(
        recordings=recordings,
        model=model,
        provenance=doc.get("provenance", "recorded"),
        seed=doc.get("seed"),
    )


# ---------------------------------------------------------------------------
# Hand kinematics and steady segmentation
# ---------------------------------------------------------------------------

def _moving_average(x: np.ndarray, window: int) -> np.ndarray:
    half = window // 2
    out = np.empty_like(x)
    for i in range(len(x)):
        lo = max(0, i - half)
        hi = min(len(x), i + half + 1)
        out[i] = np.mean(x[lo:hi])
    return out


def estimate_hand_kinematics(rec: Recording, window: int = DEFAULT_SMOOTH_WINDOW):
    """Per-frame (linear speed m/s, angular speed rad/s).

    Central differences of hand position and orientation, one-sided at the
    endpoints, then smoothed with a centered moving average of the given
    (odd) window length.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    if len(rec) < window:
        raise RecordingError(f"recording has {len(rec)} frames, fewer than window {window}")
    t = rec.times
    pos = rec.hand_positions
    quat = np.array([f.hand.orientation for f in rec.frames])
    m = len(rec)
    lin = np.empty(m)
    ang = np.empty(m)
    for i in range(m):
        lo = max(0, i - 1)
        hi = min(m - 1, i + 1)
        dt = t[hi] - t[lo]
        lin[i] = np.linalg.norm(pos[hi] - pos[lo]) / dt
        dot = abs(float(np.dot(quat[hi], quat[lo])))
        ang[i] = 2.0 * np.arccos(min(dot, 1.0)) / dt
    return _moving_average(lin, window), _moving_average(ang, window)


def segment_steady(
    rec: Recording,
    v_lin_max: float = DEFAULT_LINEAR_THRESHOLD,
    v_ang_max: float = DEFAULT_ANGULAR_THRESHOLD,
    min_len: int = DEFAULT_MIN_SEGMENT,
    window: int = DEFAULT_SMOOTH_WINDOW,
) -> list[SteadySegment]:
    """Maximal runs of frames below both speed thresholds.

    Runs shorter than min_len frames are discarded; an empty list is a
    valid result.
    """
    if v_lin_max <= 0 or v_ang_max <= 0:
        raise ValueError("thresholds must be positive")
    lin, ang = estimate_hand_kinematics(rec, window=window)
    steady = (lin <= v_lin_max) & (ang <= v_ang_max)
    segments = []
    pos = rec.hand_positions
    i = 0
    m = len(rec)
    while i < m:
        if not steady[i]:
            i += 1
            continue
        j = i
        while j < m and steady[j]:
            j += 1
        if j - i >= min_len:
            segments.append(
                SteadySegment(
                    begin=i,
                    end=j,
                    mean_position=pos[i:j].mean(axis=0),
                    max_linear_speed=float(lin[i:j].max()),
                    max_angular_speed=float(ang[i:j].max()),
                )
            )
        i = j
    return segments


# ---------------------------------------------------------------------------
# Synthetic calibration
# ---------------------------------------------------------------------------

# Workspace box for the default arm, chosen inside the comfortably reachable
# region (boundary poses are singular and excluded on purpose).
DEFAULT_WORKSPACE_BOX = (np.array([0.28, -0.16, -0.12]), np.array([0.48, 0.16, 0.12]))


def calibration_targets(box=DEFAULT_WORKSPACE_BOX, n_points: int = 10) -> np.ndarray:
    """Target hand positions: 8 box corners, then upper/lower face centers."""
    lo, hi = box
    corners = np.array([
        [x, y, z]
        for x in (lo[0], hi[0])
        for y in (lo[1], hi[1])
        for z in (lo[2], hi[2])
    ])
    center = (lo + hi) / 2.0
    top = np.array([center[0], center[1], hi[2]])
    bottom = np.array([center[0], center[1], lo[2]])
    targets = np.vstack([corners, top, bottom])
    if n_points > len(targets):
        raise ValueError(f"at most {len(targets)} calibration targets are defined")
    return targets[:n_points]


class SynthesisError(RuntimeError):
    pass


def _dwell_recording(
    model: ArmModel,
    q_node: np.ndarray,
    label: str,
    dwell: float,
    rate: float,
    n_cycles: int,
    coverage: float,
    s_cap: float,
) -> Recording:
    """Frames of a hand-steady dwell sweeping the kernel coordinate.

    The sweep is a sinusoid in arc length covering `coverage` of the
    feasible range, starting at the node configuration; after each step the
    pose is corrected so the hand stays fixed to machine precision.
    """
    pose0 = arm.forward_kinematics(model, q_node)
    s_min, s_max = simuser.null_manifold_range(model, q_node, ds=0.01, s_cap=s_cap)
    span = s_max - s_min
    if span < 1e-3:
        raise SynthesisError(f"{label}: kernel range degenerate ({span:.2e} rad)")
    mid = coverage * (s_min + s_max) / 2.0
    amp = coverage * span / 2.0
    phase = math.acos(float(np.clip(-mid / amp, -1.0, 1.0)))
    omega = 2.0 * math.pi * n_cycles / dwell

    n_frames = int(round(dwell * rate))
    dt = 1.0 / rate
    frames = []
    q = q_node.copy()
    direction = simuser.oriented_null_direction(model, q, None)
    s_now = 0.0
    for k in range(n_frames):
        t = k * dt
        s_target = mid + amp * math.cos(omega * t + phase)
        q, direction = simuser.walk_null_manifold(model, q, pose0, s_target - s_now, direction)
        s_now = s_target
        frames.append(Frame(t=t, q=q.copy(), hand=arm.forward_kinematics(model, q)))
    return Recording(frames=tuple(frames), rate_hz=rate, label=label)


def synthesize_calibration(
    model: ArmModel,
    seed: int,
    n_points: int = 10,
    dwell: float = 5.0,
    rate: float = 100.0,
    box=DEFAULT_WORKSPACE_BOX,
    coverage: float = 0.9,
    s_cap: float = 1.0,
) -> CalibrationSession:
    """Synthetic calibration session: per-point dwells with the hand fixed.

    Deterministic per seed; the seed jitters the targets a few millimeters
    and varies the per-point sweep cycle count.
    """
    if n_points < 4:
        raise ValueError("a session needs at least 4 points")
    rng = np.random.default_rng(seed)
    targets = calibration_targets(box=box, n_points=n_points)
    targets = targets + rng.uniform(-0.005, 0.005, size=targets.shape)
    labels = [f"corner-{i}" for i in range(min(n_points, 8))]
    if n_points > 8:
        labels.append("face-top")
    if n_points > 9:
        labels.append("face-bottom")

    recordings = []
    reached = []
    for label, target in zip(labels, targets):
        n_cycles = int(rng.integers(2, 4))
        try:
            q_node = simuser.solve_position_ik(model, simuser.HOME_START, target)
        except simuser.IkError as exc:
            raise SynthesisError(f"calibration point {label} at {target} unreachable: {exc}") from exc
        rec = _dwell_recording(
            model, q_node, label, dwell=dwell, rate=rate,
            n_cycles=n_cycles, coverage=coverage, s_cap=s_cap,
        )
        recordings.append(rec)
        reached.append(arm.forward_kinematics(model, q_node).position)

    return CalibrationSession(
        recordings=tuple(recordings),
        model=model,
        provenance="synthetic",
        seed=seed,
        target_positions=tuple(np.array(p) for p in reached),
    )
