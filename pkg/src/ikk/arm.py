"""Serial-chain arm model: forward kinematics, Jacobian, null-space algebra.

The chain is a list of revolute joints.  Joint i rotates about a fixed axis
expressed in its parent frame; after the rotation the frame translates by
the joint's offset (the link to the next joint).  The hand sits at a final
fixed offset from the last joint frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

TASK_DIM_FULL = 6
TASK_DIM_POSITION = 3


class DimensionError(ValueError):
    """Raised when a joint vector does not match the model dimension."""


def _unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if abs(n - 1.0) > 1e-12:
        raise ValueError(f"axis must be a unit vector, got norm {n!r}")
    return v


def rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis and an angle in radians."""
    k = np.asarray(axis, dtype=float)
    khat = np.array([
        [0.0, -k[2], k[1]],
        [k[2], 0.0, -k[0]],
        [-k[1], k[0], 0.0],
    ])
    return np.eye(3) + np.sin(angle) * khat + (1.0 - np.cos(angle)) * (khat @ khat)


def matrix_to_quaternion(r: np.ndarray) -> np.ndarray:
    """Rotation matrix -> unit quaternion (w, x, y, z), w >= 0."""
    t = np.trace(r)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([
            0.25 * s,
            (r[2, 1] - r[1, 2]) / s,
            (r[0, 2] - r[2, 0]) / s,
            (r[1, 0] - r[0, 1]) / s,
        ])
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(r[i, i] - r[j, j] - r[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@dataclass(frozen=True)
class Joint:
    """Revolute joint: unit rotation axis, offset to the next joint, limits."""

    axis: np.ndarray
    offset: np.ndarray
    limits: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "axis", _unit(self.axis))
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float))
        lo, hi = self.limits
        if not lo < hi:
            raise ValueError(f"joint limits must satisfy min < max, got {self.limits}")
        k = self.axis
        khat = np.array([
            [0.0, -k[2], k[1]],
            [k[2], 0.0, -k[0]],
            [-k[1], k[0], 0.0],
        ])
        object.__setattr__(self, "_khat", khat)
        object.__setattr__(self, "_khat2", khat @ khat)

    def rotation(self, angle: float) -> np.ndarray:
        return np.eye(3) + np.sin(angle) * self._khat + (1.0 - np.cos(angle)) * self._khat2


@dataclass(frozen=True)
class HandPose:
    """End-effector state: position in meters, orientation as a unit quaternion (w first)."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        q = np.asarray(self.orientation, dtype=float)
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError("orientation quaternion must have unit norm")
        object.__setattr__(self, "orientation", q)


@dataclass(frozen=True)
class ArmModel:
    """Kinematic description of the task chain (shoulder, elbow, wrist)."""

    joints: tuple[Joint, ...]
    hand_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    task_dim: int = TASK_DIM_FULL

    def __post_init__(self):
        if len(self.joints) < 1:
            raise ValueError("model needs at least one joint")
        if self.task_dim not in (TASK_DIM_POSITION, TASK_DIM_FULL):
            raise ValueError("task_dim must be 3 (position) or 6 (full pose)")
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "hand_offset", np.asarray(self.hand_offset, dtype=float))

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def limits_low(self) -> np.ndarray:
        return np.array([j.limits[0] for j in self.joints])

    @property
    def limits_high(self) -> np.ndarray:
        return np.array([j.limits[1] for j in self.joints])

    def check_q(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n,):
            raise DimensionError(f"expected joint vector of length {self.n}, got shape {q.shape}")
        return q

    def in_limits(self, q: np.ndarray, margin: float = 0.0) -> bool:
        q = self.check_q(q)
        return bool(np.all(q >= self.limits_low + margin) and np.all(q <= self.limits_high - margin))

    def clip_to_limits(self, q: np.ndarray) -> np.ndarray:
        return np.clip(self.check_q(q), self.limits_low, self.limits_high)

    def to_json_dict(self) -> dict:
        return {
            "joints": [
                {
                    "axis": list(j.axis),
                    "offset": list(j.offset),
                    "limits": list(j.limits),
                }
                for j in self.joints
            ],
            "hand_offset": list(self.hand_offset),
        }

    @classmethod
    def from_json_dict(cls, doc: dict, task_dim: int = TASK_DIM_FULL) -> "ArmModel":
        joints = tuple(
            Joint(np.array(j["axis"]), np.array(j["offset"]), (float(j["limits"][0]), float(j["limits"][1])))
            for j in doc["joints"]
        )
        return cls(joints=joints, hand_offset=np.array(doc.get("hand_offset", [0, 0, 0])), task_dim=task_dim)

    @classmethod
    def load(cls, path, task_dim: int = TASK_DIM_FULL) -> "ArmModel":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json_dict(json.load(f), task_dim=task_dim)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json_dict(), f, indent=2)


def default_arm(task_dim: int = TASK_DIM_FULL) -> ArmModel:
    """7-DoF arm: spherical shoulder (z,y,x), elbow (y), spherical wrist (x,y,z).

    Upper arm 0.30 m, forearm 0.25 m, hand offset 0.08 m; at the zero
    configuration the arm is stretched along +x.  Shoulder and wrist limits
    are +-2.6 rad; the elbow flexes in [0, 2.5] rad so q=0 is the
    outstretched boundary singularity.
    """
    wide = (-2.6, 2.6)
    z, y, x = (0, 0, 1), (0, 1, 0), (1, 0, 0)
    joints = (
        Joint(np.array(z), np.zeros(3), wide),
        Joint(np.array(y), np.zeros(3), wide),
        Joint(np.array(x), np.array([0.30, 0.0, 0.0]), wide),
        Joint(np.array(y), np.array([0.25, 0.0, 0.0]), (0.0, 2.5)),
        Joint(np.array(x), np.zeros(3), wide),
        Joint(np.array(y), np.zeros(3), wide),
        Joint(np.array(z), np.zeros(3), wide),
    )
    return ArmModel(joints=joints, hand_offset=np.array([0.08, 0.0, 0.0]), task_dim=task_dim)


def _frames(model: ArmModel, q: np.ndarray):
    """Per-joint world origin and world axis, plus the final frame."""
    q = model.check_q(q)
    r = np.eye(3)
    p = np.zeros(3)
    origins = np.empty((model.n, 3))
    axes = np.empty((model.n, 3))
    for i, joint in enumerate(model.joints):
        origins[i] = p
        axes[i] = r @ joint.axis
        r = r @ joint.rotation(q[i])
        p = p + r @ joint.offset
    return origins, axes, r, p


def forward_kinematics(model: ArmModel, q: np.ndarray) -> HandPose:
    """Hand pose from joint angles by composing the per-joint transforms."""
    _, _, r, p = _frames(model, q)
    return HandPose(position=p + r @ model.hand_offset, orientation=matrix_to_quaternion(r))


def jacobian(model: ArmModel, q: np.ndarray) -> np.ndarray:
    """Geometric Jacobian, shape (task_dim, n).

    Row blocks are linear then angular velocity; column i is the standard
    revolute twist (axis x moment arm; axis) at the current configuration.
    With task_dim=3 only the linear block is returned.
    """
    return fk_and_jacobian(model, q)[1]


def fk_and_jacobian(model: ArmModel, q: np.ndarray) -> tuple[HandPose, np.ndarray]:
    """Hand pose and Jacobian from a single pass over the chain."""
    origins, axes, r, p = _frames(model, q)
    hand = p + r @ model.hand_offset
    pose = HandPose(position=hand, orientation=matrix_to_quaternion(r))
    cols_lin = np.cross(axes, hand[None, :] - origins)
    if model.task_dim == TASK_DIM_POSITION:
        return pose, cols_lin.T.copy()
    return pose, np.vstack([cols_lin.T, axes.T])


def null_space_basis(j: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis of the kernel of J, shape (n, dim).

    A singular value counts as zero when it is <= tol * sigma_max, so the
    rank decision stays meaningful near singular configurations.  An empty
    (n, 0) basis is a valid result.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    j = np.asarray(j, dtype=float)
    _, s, vt = np.linalg.svd(j)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * smax)) if smax > 0 else 0
    return vt[rank:].T.copy()


def range_null_dims(j: np.ndarray, tol: float = 1e-9) -> tuple[int, int]:
    """(dim of range, dim of kernel) from the singular spectrum; sums to n."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    j = np.asarray(j, dtype=float)
    n = j.shape[1]
    s = np.linalg.svd(j, compute_uv=False)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * smax)) if smax > 0 else 0
    return rank, n - rank
