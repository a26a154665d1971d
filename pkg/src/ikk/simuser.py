"""Simulated user: damped-least-squares resolved-rate control with a
null-space term.

Stands in for the human subject: reaches calibration targets, holds the
hand steady while sweeping the kernel coordinate, and tracks experiment
references in closed loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import arm
from .arm import ArmModel, HandPose


# generic elbow-bent start used to reach workspace targets
HOME_START = np.array([0.3, -0.5, 0.2, 1.2, 0.1, -0.3, 0.2])


@dataclass(frozen=True)
class SimUserGains:
    """Control gains of the simulated user.

    Defaults are tuned so simulated tracking error lands in a plausible
    human range; they are engineering values, not measurements.
    """

    k_task: float = 5.0          # 1/s, pose-error feedback
    k_null: float = 8.0          # 1/s, signal-error feedback
    damping: float = 0.05        # dimensionless DLS lambda
    joint_speed_limit: float = 2.0   # rad/s
    reaction_delay: float = 0.15     # s
    noise: float = 0.02              # proportional actuation noise

    def __post_init__(self):
        if self.k_task < 0 or self.k_null < 0:
            raise ValueError("gains must be non-negative")
        if self.damping <= 0:
            raise ValueError("damping must be positive")
        if self.joint_speed_limit <= 0:
            raise ValueError("joint speed limit must be positive")


def damped_pinv(j: np.ndarray, lam: float) -> np.ndarray:
    """Damped pseudo-inverse J^T (J J^T + lam^2 I)^-1, shape (n, r).

    The damping keeps the system solvable at singular configurations.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    j = np.asarray(j, dtype=float)
    r = j.shape[0]
    a = j @ j.T + (lam * lam) * np.eye(r)
    return np.linalg.solve(a, j).T


def rotation_vector_error(current: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Rotation vector taking quaternion `current` to `target` (world frame)."""
    rc = arm.quaternion_to_matrix(current)
    rt = arm.quaternion_to_matrix(target)
    r = rt @ rc.T
    cos_a = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos_a)
    if angle < 1e-12:
        return np.zeros(3)
    axis = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    s = np.linalg.norm(axis)
    if s < 1e-12:
        # angle ~ pi: extract axis from the symmetric part
        w, v = np.linalg.eigh(r)
        axis = v[:, np.argmax(w)]
        return axis * angle
    return axis / s * angle


def pose_error(model: ArmModel, pose: HandPose, target: HandPose) -> np.ndarray:
    """Task-space error vector, length model.task_dim."""
    e_lin = target.position - pose.position
    if model.task_dim == arm.TASK_DIM_POSITION:
        return e_lin
    return np.concatenate([e_lin, rotation_vector_error(pose.orientation, target.orientation)])


class IkError(RuntimeError):
    """Raised when the iterative reach fails to converge."""


def solve_position_ik(
    model: ArmModel,
    q0: np.ndarray,
    target_position: np.ndarray,
    lam: float = 0.05,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> np.ndarray:
    """Reach a hand position from q0 by damped-least-squares iteration.

    Orientation is left free; the result respects joint limits.
    """
    q = model.check_q(q0).copy()
    target_position = np.asarray(target_position, dtype=float)
    for _ in range(max_iter):
        pose = arm.forward_kinematics(model, q)
        err = target_position - pose.position
        if np.linalg.norm(err) < tol:
            return q
        j_lin = arm.jacobian(model, q)[:3]
        step = damped_pinv(j_lin, lam) @ err
        step_norm = np.linalg.norm(step)
        if step_norm > 0.5:
            step *= 0.5 / step_norm
        q = model.clip_to_limits(q + step)
    raise IkError(
        f"position IK did not converge to {target_position} "
        f"(residual {np.linalg.norm(err):.3e})"
    )


def correct_pose(
    model: ArmModel,
    q: np.ndarray,
    target: HandPose,
    lam: float = 1e-4,
    tol: float = 1e-12,
    max_iter: int = 25,
) -> np.ndarray:
    """Newton-style correction pulling q back onto the target pose.

    Used after a null-space step to cancel the second-order hand drift;
    converges in a couple of iterations for small perturbations.
    """
    q = q.copy()
    for _ in range(max_iter):
        pose, j = arm.fk_and_jacobian(model, q)
        err = pose_error(model, pose, target)
        if np.linalg.norm(err) < tol:
            break
        q = q + damped_pinv(j, lam) @ err
    return q


def oriented_null_direction(model: ArmModel, q: np.ndarray, prev: np.ndarray | None) -> np.ndarray:
    """Unit kernel direction at q, sign-aligned with the previous one.

    Requires a one-dimensional kernel; raises otherwise.
    """
    basis = arm.null_space_basis(arm.jacobian(model, q), tol=1e-9)
    if basis.shape[1] != 1:
        raise IkError(f"expected a 1-dimensional kernel, got {basis.shape[1]} at q={q}")
    direction = basis[:, 0]
    if prev is not None and float(direction @ prev) < 0:
        direction = -direction
    return direction


def null_manifold_range(
    model: ArmModel,
    q0: np.ndarray,
    ds: float = 0.01,
    s_cap: float = 1.0,
    limit_margin: float = 0.0,
) -> tuple[float, float]:
    """Signed arc-length range reachable along the kernel from q0.

    Marches in both directions with step ds, correcting the pose after
    every step, until a joint limit would be crossed or |s| reaches s_cap.
    The cap bounds excursions on self-motion manifolds that joint limits
    alone would leave very wide.
    """
    pose0 = arm.forward_kinematics(model, q0)
    base_dir = oriented_null_direction(model, q0, None)

    def march(sign: float) -> float:
        q = q0.copy()
        direction = base_dir * sign
        s = 0.0
        while s + ds <= s_cap + 1e-12:
            q_next = correct_pose(model, q + direction * ds, pose0)
            if not model.in_limits(q_next, margin=limit_margin):
                break
            try:
                direction = oriented_null_direction(model, q_next, direction)
            except IkError:
                break  # kernel dimension changed: stop at the singularity
            q = q_next
            s += ds
        return s

    return -march(-1.0), march(1.0)


def walk_null_manifold(
    model: ArmModel,
    q: np.ndarray,
    pose_target: HandPose,
    ds: float,
    direction: np.ndarray,
    max_step: float = 0.05,
) -> tuple[np.ndarray, np.ndarray]:
    """Advance arc length ds along the kernel while holding pose_target.

    Splits large increments so the pose correction stays in its contraction
    region.  Returns the new configuration and the (sign-continuous) kernel
    direction there.
    """
    remaining = ds
    while abs(remaining) > 1e-15:
        step = float(np.clip(remaining, -max_step, max_step))
        direction = oriented_null_direction(model, q, direction)
        q = correct_pose(model, q + direction * step, pose_target)
        remaining -= step
    return q, direction


# ---------------------------------------------------------------------------
# Closed-loop tracking
# ---------------------------------------------------------------------------

def resolved_rate_step(
    model: ArmModel,
    q: np.ndarray,
    pose_target: HandPose,
    null_vector: np.ndarray | None,
    gains: SimUserGains,
    dt: float,
    task_velocity: np.ndarray | None = None,
    noise: np.ndarray | None = None,
) -> tuple[np.ndarray, bool]:
    """One resolved-rate step: damped task correction plus a kernel move.

    null_vector is a joint-velocity request projected onto the exact
    kernel, so it produces no first-order hand velocity; task_velocity is
    an additional commanded end-effector velocity (linear part).  This is
    the single integration step shared by the simulated user and the live
    session host, which keeps offline and online trials comparable.
    Returns the next configuration and whether a joint limit clipped it.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    pose, jac = arm.fk_and_jacobian(model, q)
    err = pose_error(model, pose, target=pose_target)
    task = gains.k_task * err
    if task_velocity is not None:
        task = task.copy()
        task[:3] += task_velocity
    qdot = damped_pinv(jac, gains.damping) @ task

    if null_vector is not None:
        basis = arm.null_space_basis(jac, tol=1e-9)
        if basis.shape[1]:
            qdot = qdot + basis @ (basis.T @ null_vector)

    if noise is not None:
        qdot = qdot * (1.0 + noise)
    speed = float(np.linalg.norm(qdot))
    if speed > gains.joint_speed_limit:
        qdot = qdot * (gains.joint_speed_limit / speed)
    q_next = q + qdot * dt
    clipped = not model.in_limits(q_next)
    if clipped:
        q_next = model.clip_to_limits(q_next)
    return q_next, clipped


def track_step(
    model: ArmModel,
    q: np.ndarray,
    pose_target: HandPose,
    signal_error: float,
    signal_direction: np.ndarray,
    signal_span: float,
    gains: SimUserGains,
    dt: float,
    noise: np.ndarray | None = None,
) -> tuple[np.ndarray, bool]:
    """One tracking step toward the pose target and signal reference.

    signal_error is in 0-100 units; signal_span converts it back to the
    projection coordinate scale.  The kernel command is the interpolated
    direction scaled by the signal feedback.
    """
    null_vector = None
    if gains.k_null != 0.0 and signal_error != 0.0:
        err_raw = signal_error / 100.0 * signal_span
        null_vector = signal_direction * (gains.k_null * err_raw)
    return resolved_rate_step(
        model, q, pose_target, null_vector, gains, dt, noise=noise
    )


class DivergenceError(RuntimeError):
    pass


def run_tracking(
    model: ArmModel,
    volume,
    gains: SimUserGains,
    profile,
    pose_targets=None,
    q0: np.ndarray | None = None,
    seed: int = 0,
    rate: float = 100.0,
    label: str = "trial",
    smoothing_time_constant: float = 0.05,
):
    """Closed-loop simulation of a human tracking a signal reference.

    `profile` supplies value_at(t) on the 0-100 scale and a duration;
    `pose_targets`, when given, is a callable t -> target hand position
    (orientation is held at its initial value).  The simulated user reacts
    to the reference with the configured delay and actuation noise, and
    reads the same smoothed value a subject would see on screen.

    Returns (TrialResult-ready traces dict); experiment wrappers attach
    metric aggregation.
    """
    from . import control as control_mod
    from .interp import interpolate_basis

    rng = np.random.default_rng(seed)
    if q0 is None:
        start = volume.points.mean(axis=0)
        q0 = solve_position_ik(model, HOME_START, start)
    q = np.asarray(q0, dtype=float).copy()

    pose0 = arm.forward_kinematics(model, q)
    orientation0 = pose0.orientation
    duration = profile.duration
    n_steps = int(round(duration * rate))
    dt = 1.0 / rate

    stream = control_mod.SignalStream(
        volume, control_mod.ControlConfig(smoothing_time_constant=smoothing_time_constant)
    )
    from .capture import Frame

    times = np.empty(n_steps)
    reference = np.empty(n_steps)
    actual = np.empty(n_steps)
    positions = np.empty((n_steps, 3))
    target_positions = np.empty((n_steps, 3))
    null_commands = np.zeros(n_steps)
    limit_events = 0
    diverged_since: float | None = None
    success = True

    for k in range(n_steps):
        t = k * dt
        pose = arm.forward_kinematics(model, q)
        basis = interpolate_basis(volume, pose.position)
        sample = stream.process(Frame(t=t, q=q, hand=pose), basis=basis)
        ref_now = float(profile.value_at(t))
        ref_seen = float(profile.value_at(t - gains.reaction_delay))
        times[k] = t
        reference[k] = ref_now
        actual[k] = sample.value
        positions[k] = pose.position

        if pose_targets is None:
            target_pos = pose0.position
        else:
            target_pos = np.asarray(pose_targets(t), dtype=float)
        target_positions[k] = target_pos
        pose_target = HandPose(position=target_pos, orientation=orientation0)

        err = ref_seen - sample.value
        err_raw = err / 100.0 * (basis.proj_max - basis.proj_min)
        null_commands[k] = gains.k_null * err_raw
        noise = rng.normal(scale=gains.noise, size=model.n) if gains.noise > 0 else None
        q, clipped = track_step(
            model,
            q,
            pose_target,
            signal_error=err,
            signal_direction=basis.directions[0],
            signal_span=basis.proj_max - basis.proj_min,
            gains=gains,
            dt=dt,
            noise=noise,
        )
        limit_events += clipped

        if abs(err) > 100.0:
            if diverged_since is None:
                diverged_since = t
            elif t - diverged_since > 1.0:
                success = False
        else:
            diverged_since = None

    return {
        "label": label,
        "times": times,
        "reference": reference,
        "actual": actual,
        "positions": positions,
        "target_positions": target_positions,
        "null_commands": null_commands,
        "limit_events": limit_events,
        "success": success,
        "seed": seed,
        "q0": np.asarray(q0, dtype=float),
    }
