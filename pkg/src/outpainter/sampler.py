"""Rectified-flow schedule, noise injection, Euler stepping, and SDEdit entry."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .video import ShapeError, VideoTensor


class ScheduleError(ValueError):
    """Raised for invalid schedule parameters or step directions."""


@dataclass(frozen=True)
class SampleSchedule:
    """Linear time grid t_T=1 > ... > t_0=0 with an early swap-step budget."""

    total_steps: int
    swap_steps: int = 0
    times: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.total_steps < 1:
            raise ScheduleError("total_steps must be >= 1")
        if not 0 <= self.swap_steps <= self.total_steps:
            raise ScheduleError("swap_steps must be in [0, total_steps]")
        times = np.linspace(1.0, 0.0, self.total_steps + 1)
        times.flags.writeable = False
        object.__setattr__(self, "times", times)


def _check_shapes(a: VideoTensor, b: VideoTensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def add_noise(x0: VideoTensor, eps: VideoTensor, t: float) -> VideoTensor:
    """Rectified-flow interpolant z_t = (1-t)*x0 + t*eps."""
    _check_shapes(x0, eps)
    if not 0.0 <= t <= 1.0:
        raise ScheduleError(f"t={t} outside [0, 1]")
    return VideoTensor((1.0 - t) * x0.data + t * eps.data)


def velocity_target(x0: VideoTensor, eps: VideoTensor) -> VideoTensor:
    """Training target v* = eps - x0."""
    _check_shapes(x0, eps)
    return VideoTensor(eps.data - x0.data)


def step(z: VideoTensor, v_hat: VideoTensor, t_from: float, t_to: float) -> VideoTensor:
    """Euler update z + (t_to - t_from) * v_hat, computed in double precision
    so multi-step descents telescope without accumulating rounding error."""
    _check_shapes(z, v_hat)
    if t_to >= t_from:
        raise ScheduleError(f"t_to={t_to} must be < t_from={t_from}")
    return VideoTensor(z.data.astype(np.float64)
                       + (t_to - t_from) * v_hat.data.astype(np.float64))


def sdedit_start(x_init: VideoTensor, strength: float, schedule: SampleSchedule,
                 rng_seed: int, label: str = "sdedit") -> tuple[VideoTensor, int]:
    """Partially noise x_init; returns (z, start_step).

    start_step counts remaining denoising steps; the start time is
    start_step / total_steps.  A minimum of one step is always taken.
    """
    if not 0.0 < strength <= 1.0:
        raise ScheduleError(f"strength={strength} outside (0, 1]")
    start_step = max(1, int(round(strength * schedule.total_steps)))
    t_s = schedule.times[schedule.total_steps - start_step]
    eps = VideoTensor(rng.normals(rng_seed, label, x_init.shape))
    return add_noise(x_init, eps, float(t_s)), start_step


def weight(t: float) -> float:
    """Loss weighting of the training objective; constant by design."""
    if not 0.0 <= t <= 1.0:
        raise ScheduleError(f"t={t} outside [0, 1]")
    return 1.0
