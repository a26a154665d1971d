"""Session host for live steering: WebSocket JSON protocol, fixed-rate
internal loop, experiment task logic, and on-disk trial recording.

One session per connection.  The client steers with `jog` (kernel
coefficient), `ik_move` (hand velocity), or `direct` (gamepad-equivalent
value bypassing the arm); the server streams authoritative state and emits
a TrialResult-compatible record when a trial ends.
"""

from __future__ import annotations

import asyncio
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import arm, capture, control, experiments, simuser
from .arm import ArmModel, HandPose
from .interp import InterpolationVolume, interpolate_basis
from .results import TrialResult, rmse

PROTOCOL_VERSION = 1
MODES = ("free", "exp1", "exp2-single", "exp2-parallel")
INTERNAL_RATE_HZ = 100.0
RENDER_DIVISOR = 2          # state messages at 50 Hz
STALL_TIMEOUT_S = 2.0
JOG_MAX_RAD_S = 5.0          # scale of the jog coefficient u in [-1, 1]
IK_MOVE_MAX_M_S = 0.5        # clamp on commanded hand speed


class ProtocolError(ValueError):
    pass


def encode(message: dict) -> str:
    """Canonical wire form: compact separators, schema field order."""
    return json.dumps(message, separators=(",", ":"))


@dataclass
class SessionHost:
    """Immutable configuration shared by all sessions."""

    model: ArmModel
    volume: InterpolationVolume
    out_dir: str | None = None
    gains: simuser.SimUserGains = field(
        default_factory=lambda: simuser.SimUserGains(noise=0.0, reaction_delay=0.0)
    )

    def home_configuration(self) -> np.ndarray:
        return simuser.solve_position_ik(
            self.model, simuser.HOME_START, self.volume.points.mean(axis=0)
        )


class Session:
    """State machine of one connection; all mutation happens on the loop."""

    def __init__(self, host: SessionHost, session_id: int = 0):
        self.host = host
        self.id = session_id
        self.seq = 0
        self.mode: str | None = None
        self.lockstep = False
        self.tick_count = 0
        self.trial_t = 0.0
        self.dt = 1.0 / INTERNAL_RATE_HZ
        self.q = host.home_configuration()
        pose = arm.forward_kinematics(host.model, self.q)
        self.pose_anchor = pose
        self.start_position = pose.position.copy()
        self.stream = control.SignalStream(host.volume)
        self.jog_u = 0.0
        self.ik_velocity = np.zeros(3)
        self.direct_value: float | None = None
        self.used_direct = False
        self.warn_clamped = False
        self.profile = None
        self.schedule: experiments.SphereSchedule | None = None
        self.trial_center: np.ndarray | None = None
        self.trial_active = False
        self.log: dict[str, list] = {}
        self.outbox: list[dict] = []
        self.last_client_time = time.monotonic()

    # -- message handling ---------------------------------------------------

    def _emit(self, message: dict) -> None:
        self.seq += 1
        self.outbox.append({"v": PROTOCOL_VERSION, "seq": self.seq, **message})

    def handle_message(self, text: str) -> None:
        self.last_client_time = time.monotonic()
        try:
            msg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed JSON: {exc}")
        if not isinstance(msg, dict) or msg.get("v") != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported protocol version {msg.get('v')!r}")
        kind = msg.get("type")
        if kind == "hello":
            points = self.host.volume.points
            self._emit({
                "type": "hello",
                "joints": self.host.model.n,
                "nodes": len(self.host.volume),
                "modes": list(MODES),
                "rate_hz": INTERNAL_RATE_HZ,
                "workspace": {
                    "lo": [float(v) for v in points.min(axis=0)],
                    "hi": [float(v) for v in points.max(axis=0)],
                },
                "node_positions": [[float(v) for v in p] for p in points],
            })
        elif kind == "start":
            self._start(msg)
        elif kind == "jog":
            u = float(msg.get("u", 0.0))
            self.warn_clamped = abs(u) > 1.0
            self.jog_u = float(np.clip(u, -1.0, 1.0))
            self.direct_value = None
        elif kind == "ik_move":
            dx = np.asarray(msg.get("dx", (0.0, 0.0, 0.0)), dtype=float)
            if dx.shape != (3,):
                raise ProtocolError("ik_move dx must be a 3-vector")
            speed = float(np.linalg.norm(dx))
            self.warn_clamped = speed > IK_MOVE_MAX_M_S
            if speed > IK_MOVE_MAX_M_S:
                dx = dx * (IK_MOVE_MAX_M_S / speed)
            self.ik_velocity = dx
            self.direct_value = None
        elif kind == "direct":
            value = float(msg.get("value", 0.0))
            self.warn_clamped = not 0.0 <= value <= 100.0
            self.direct_value = float(np.clip(value, 0.0, 100.0))
            self.used_direct = True
        else:
            raise ProtocolError(f"unknown message type {kind!r}")
        if self.lockstep and kind in ("jog", "ik_move", "direct"):
            self.tick()

    def _start(self, msg: dict) -> None:
        mode = msg.get("mode")
        if mode not in MODES:
            raise ProtocolError(f"unknown mode {mode!r}")
        seed = int(msg.get("seed", 1))
        self.mode = mode
        self.lockstep = bool(msg.get("lockstep", False))
        self.tick_count = 0
        self.trial_t = 0.0
        self.q = self.host.home_configuration()
        pose = arm.forward_kinematics(self.host.model, self.q)
        self.pose_anchor = pose
        self.start_position = pose.position.copy()
        self.stream = control.SignalStream(self.host.volume)
        self.jog_u = 0.0
        self.ik_velocity = np.zeros(3)
        self.direct_value = None
        self.used_direct = False
        self.log = {k: [] for k in ("t", "q", "hand", "value", "reference", "target")}
        started: dict = {"type": "started", "mode": mode, "seed": seed, "lockstep": self.lockstep}

        if mode == "exp1":
            self.profile = experiments.generate_profile(seed)
            self.trial_active = True
            started["duration"] = self.profile.duration
            started["profile"] = {
                "times": [round(float(t), 4) for t in self.profile.times[::10]],
                "values": [round(float(v), 4) for v in self.profile.values[::10]],
            }
        elif mode.startswith("exp2"):
            self.schedule = experiments.make_sphere_schedule(seed, self.host.volume)
            self.trial_center = np.asarray(self.schedule.target_centers[0], dtype=float)
            self.trial_active = True
            started["duration"] = self.schedule.duration
            started["schedule"] = {
                "initial_radius": self.schedule.initial_radius,
                "radius_steps": list(self.schedule.radius_steps),
                "step_interval": self.schedule.step_interval,
                "alignment": self.schedule.alignment,
                "center": [float(c) for c in self.trial_center],
            }
        else:
            self.profile = None
            self.schedule = None
            self.trial_active = False
        self._emit(started)

    # -- internal loop -------------------------------------------------------

    def _pose_target(self) -> HandPose:
        # the anchor integrates the client's commanded hand velocity; the
        # experiment task never drives the hand itself
        return self.pose_anchor

    def tick(self) -> None:
        """One 100 Hz internal step; queues a state message on render ticks."""
        model = self.host.model
        t = self.trial_t
        q_now = self.q.copy()
        pose = arm.forward_kinematics(model, q_now)
        basis = interpolate_basis(self.host.volume, pose.position)

        if self.direct_value is not None:
            value = self.direct_value
            inside = basis.inside_hull
        else:
            sample = self.stream.process(
                capture.Frame(t=self.tick_count * self.dt, q=self.q, hand=pose), basis=basis
            )
            value = sample.value
            inside = sample.inside_hull

            # integrate the commanded hand velocity into the pose anchor
            if float(np.linalg.norm(self.ik_velocity)) > 0.0:
                self.pose_anchor = HandPose(
                    position=self.pose_anchor.position + self.ik_velocity * self.dt,
                    orientation=self.pose_anchor.orientation,
                )
            null_vector = None
            if self.jog_u != 0.0:
                null_vector = basis.directions[0] * (self.jog_u * JOG_MAX_RAD_S)
            self.q, _ = simuser.resolved_rate_step(
                model, self.q, self._pose_target(), null_vector, self.host.gains, self.dt
            )

        reference = None
        task: dict = {}
        if self.mode == "exp1" and self.profile is not None:
            reference = float(self.profile.value_at(t))
            task = {"reference": reference, "progress": t / self.profile.duration}
        elif self.mode in ("exp2-single", "exp2-parallel") and self.schedule is not None:
            target_radius = float(self.schedule.radius_at(t))
            actual_radius = float(experiments.radius_from_value(value))
            reference = float(experiments.value_from_radius(target_radius))
            task = {
                "target_radius": target_radius,
                "radius": actual_radius,
                "center": [float(c) for c in self.trial_center],
                "hand": [float(c) for c in pose.position],
            }

        if self.trial_active:
            self.log["t"].append(t)
            self.log["q"].append(q_now)
            self.log["hand"].append(pose)
            self.log["value"].append(value)
            self.log["reference"].append(reference if reference is not None else value)
            self.log["target"].append(self._pose_target().position.copy())
            self.trial_t += self.dt

        self.tick_count += 1
        if self.lockstep or self.tick_count % RENDER_DIVISOR == 1:
            state_t = t if self.trial_active else (self.tick_count - 1) * self.dt
            state = {
                "type": "state",
                "t": round(state_t, 6),
                "q": [float(v) for v in q_now],
                "hand": [float(v) for v in pose.position],
                "value": float(value),
                "task": task,
                "inside_hull": bool(inside),
            }
            if self.warn_clamped:
                state["clamped"] = True
                self.warn_clamped = False
            self._emit(state)

        if self.trial_active and self._trial_duration() is not None and self.trial_t >= self._trial_duration() - 1e-9:
            self._finish_trial()

    def _trial_duration(self) -> float | None:
        if self.mode == "exp1" and self.profile is not None:
            return self.profile.duration
        if self.schedule is not None:
            return self.schedule.duration
        return None

    def _finish_trial(self) -> None:
        times = np.array(self.log["t"])
        actual = np.array(self.log["value"])
        reference = np.array(self.log["reference"])
        positions = np.array([p.position for p in self.log["hand"]])
        targets = np.array(self.log["target"])
        metadata = {"mode": self.mode, "session": self.id, "live": True}
        position_rmse = None
        radius_kw: dict = {}
        if self.mode == "exp1":
            signal_rmse = rmse(actual, reference)
        else:
            after = times >= self.schedule.alignment
            signal_rmse = rmse(actual[after], reference[after])
            radius_ref = experiments.radius_from_value(reference)
            radius_act = experiments.radius_from_value(actual)
            radius_kw = {
                "radius_reference": radius_ref,
                "radius_actual": radius_act,
                "radius_rmse": rmse(radius_act[after], radius_ref[after]),
            }
            if self.mode == "exp2-parallel":
                err = np.linalg.norm(positions[after] - targets[after], axis=1)
                position_rmse = float(np.sqrt(np.mean(err ** 2)))
        result = TrialResult(
            label=f"live-{self.mode}-{self.id}",
            controller="direct" if self.used_direct else "ikk",
            times=times,
            reference=reference,
            actual=actual,
            signal_rmse=signal_rmse,
            positions=positions,
            position_targets=targets,
            position_rmse=position_rmse,
            metadata=metadata,
            **radius_kw,
        )
        self.trial_active = False
        if self.host.out_dir:
            out = Path(self.host.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            result.to_csv(out / f"{result.label}.csv")
            frames = [
                capture.Frame(t=t, q=q, hand=hand)
                for t, q, hand in zip(self.log["t"], self.log["q"], self.log["hand"])
            ]
            rec = capture.Recording(frames=tuple(frames), rate_hz=INTERNAL_RATE_HZ, label=result.label)
            capture.save_recording(rec, out / f"{result.label}-recording.csv")
        payload = {
            "type": "result",
            "label": result.label,
            "signal_rmse": result.signal_rmse,
            "success": result.success,
        }
        if result.radius_rmse is not None:
            payload["radius_rmse"] = result.radius_rmse
        if result.position_rmse is not None:
            payload["position_rmse"] = result.position_rmse
        self._emit(payload)


async def _drive_session(websocket, session: Session) -> None:
    """Interleave client input with the paced internal loop."""
    next_tick = time.monotonic()
    while True:
        # flush queued messages
        while session.outbox:
            await websocket.send(encode(session.outbox.pop(0)))
        if session.lockstep:
            # ticks happen inside handle_message; just wait for input
            try:
                text = await websocket.recv()
            except Exception:
                return
            try:
                session.handle_message(text)
            except ProtocolError as exc:
                await websocket.send(encode({"v": 1, "seq": session.seq + 1, "type": "error", "message": str(exc)}))
                await websocket.close()
                return
            continue

        timeout = max(0.0, next_tick - time.monotonic())
        try:
            text = await asyncio.wait_for(websocket.recv(), timeout=timeout)
            try:
                session.handle_message(text)
            except ProtocolError as exc:
                await websocket.send(encode({"v": 1, "seq": session.seq + 1, "type": "error", "message": str(exc)}))
                await websocket.close()
                return
            continue
        except asyncio.TimeoutError:
            pass
        except Exception:
            return

        next_tick += session.dt
        if session.mode is None:
            continue
        stalled = time.monotonic() - session.last_client_time > STALL_TIMEOUT_S
        if stalled and session.trial_active:
            continue  # task clock pauses until the client speaks again
        session.tick()


async def serve(host: SessionHost, host_addr: str = "127.0.0.1", port: int = 8765):
    """Run the WebSocket host until cancelled."""
    from websockets.asyncio.server import serve as ws_serve

    counter = {"n": 0}

    async def handler(websocket):
        counter["n"] += 1
        session = Session(host, session_id=counter["n"])
        await _drive_session(websocket, session)

    async with ws_serve(handler, host_addr, port) as server:
        await server.serve_forever()
