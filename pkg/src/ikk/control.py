"""Real-time control signal: project joint values onto the interpolated
basis, normalize to the 0-100 scale, then smooth and rate-limit.

Value 0 maps to a fully open extra actuator and 100 to fully closed; the
direction can be inverted in the config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .capture import Frame
from .identify import ONE_PC
from .interp import InterpolationVolume, interpolate_basis


class ControlError(RuntimeError):
    pass


class StreamError(ControlError):
    pass


@dataclass(frozen=True)
class ControlConfig:
    smoothing_time_constant: float = 0.05  # s
    max_slew_rate: float = 400.0           # units/s on the 0-100 scale
    invert: bool = False                   # swap open/close direction

    def __post_init__(self):
        if self.smoothing_time_constant < 0:
            raise ValueError("smoothing time constant must be >= 0")
        if self.max_slew_rate <= 0:
            raise ValueError("slew rate must be positive")


@dataclass(frozen=True)
class ControlSample:
    t: float
    raw: float
    value: float
    inside_hull: bool
    basis_mode: str

    def __post_init__(self):
        if not 0.0 <= self.value <= 100.0:
            raise ValueError(f"control value {self.value} outside [0, 100]")


def control_signal(volume: InterpolationVolume, frame: Frame, basis=None) -> ControlSample:
    """Instantaneous (unfiltered) control sample for one frame.

    Values outside the recorded projection range clamp to the endpoints;
    calibration records the reachable extremes, so clamping is saturation,
    not extrapolation.  A caller that already interpolated the basis at
    this hand position may pass it to avoid recomputation.
    """
    if basis is None:
        basis = interpolate_basis(volume, frame.hand.position)
    raw = basis.coordinate(frame.q)
    span = basis.proj_max - basis.proj_min
    if span < 1e-9:
        raise ControlError(f"degenerate interpolated range [{basis.proj_min}, {basis.proj_max}]")
    fraction = (raw - basis.proj_min) / span
    fraction = min(max(fraction, 0.0), 1.0)
    return ControlSample(
        t=frame.t,
        raw=raw,
        value=100.0 * fraction,
        inside_hull=basis.inside_hull,
        basis_mode=basis.mode,
    )


class SignalStream:
    """Per-stream filter state: first-order low-pass then slew limiting.

    The filter initializes at the first sample so a constant input is a
    fixed point from the start.  One stream instance has a single owner;
    distinct streams over the same volume may run in parallel.
    """

    def __init__(self, volume: InterpolationVolume, config: ControlConfig = ControlConfig()):
        self.volume = volume
        self.config = config
        self._state: float | None = None
        self._last_t: float | None = None

    def process(self, frame: Frame, basis=None) -> ControlSample:
        if self._last_t is not None and frame.t <= self._last_t:
            raise StreamError(f"out-of-order timestamp {frame.t} after {self._last_t}")
        sample = control_signal(self.volume, frame, basis=basis)
        target = 100.0 - sample.value if self.config.invert else sample.value
        if self._state is None:
            value = target
        else:
            dt = frame.t - self._last_t
            tau = self.config.smoothing_time_constant
            alpha = 1.0 if tau == 0.0 else 1.0 - math.exp(-dt / tau)
            value = target if alpha == 1.0 else self._state + alpha * (target - self._state)
            max_step = self.config.max_slew_rate * dt
            step = value - self._state
            if step > max_step:
                value = self._state + max_step
            elif step < -max_step:
                value = self._state - max_step
        self._state = value
        self._last_t = frame.t
        return ControlSample(
            t=frame.t,
            raw=sample.raw,
            value=value,
            inside_hull=sample.inside_hull,
            basis_mode=sample.basis_mode,
        )


def stream(
    volume: InterpolationVolume,
    config: ControlConfig,
    frames: Iterable[Frame],
) -> Iterator[ControlSample]:
    """Filtered control samples over a time-ordered frame sequence."""
    engine = SignalStream(volume, config)
    for frame in frames:
        yield engine.process(frame)


def write_signal_csv(samples: Iterable[ControlSample], path) -> int:
    """Emit `t,raw,value,inside_hull` rows; returns the row count."""
    lines = ["t,raw,value,inside_hull"]
    count = 0
    for s in samples:
        lines.append(f"{s.t!r},{s.raw!r},{s.value!r},{str(s.inside_hull).lower()}")
        count += 1
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return count
