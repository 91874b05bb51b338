"""Noise schedules for annealed data mollification.

A schedule maps training progress ``r`` in ``[0, 1]`` to a noise variance
``gamma(r)`` that falls from 1 to 0.  Under the variance-preserving
parameterisation the signal scale is ``alpha = sqrt(1 - gamma)`` and the
noise scale is ``sigma = sqrt(gamma)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "ScheduleKind",
    "MollificationSchedule",
    "gamma",
    "alpha_sigma",
    "snr",
    "blur_times",
]


class ScheduleKind(str, Enum):
    SIGMOID = "sigmoid"
    LINEAR = "linear"
    COSINE = "cosine"


@dataclass(frozen=True)
class MollificationSchedule:
    kind: ScheduleKind = ScheduleKind.SIGMOID
    tau: float = 0.7
    start: float = 0.0
    end: float = 3.0
    ns: float = 0.0002
    ds: float = 0.00025
    clip_min: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.clip_min <= 0:
            raise ValueError(f"clip_min must be positive, got {self.clip_min}")
        if self.kind is ScheduleKind.SIGMOID and self.end == self.start:
            raise ValueError("sigmoid schedule needs start != end")


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def _check_r(r: float) -> float:
    r = float(r)
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"schedule position must lie in [0, 1], got {r}")
    return r


def raw_gamma(schedule: MollificationSchedule, r: float) -> float:
    """Unclamped schedule formula, exactly as the reference pseudocode."""
    r = _check_r(r)
    s = schedule
    if s.kind is ScheduleKind.SIGMOID:
        v_start = _sigmoid(s.start / s.tau)
        v_end = _sigmoid(s.end / s.tau)
        return (v_end - _sigmoid((r * (s.end - s.start) + s.start) / s.tau)) / (v_end - v_start)
    if s.kind is ScheduleKind.LINEAR:
        return 1.0 - r
    return math.cos(((r + s.ns) / (1.0 + s.ds)) * math.pi / 2.0) ** 2


def gamma(schedule: MollificationSchedule, r: float) -> float:
    """Mollification variance at progress ``r``.

    The raw value is clamped into ``[0, 1]`` and anything below
    ``schedule.clip_min`` is treated as exactly zero (no mollification).
    """
    g = min(max(raw_gamma(schedule, r), 0.0), 1.0)
    return 0.0 if g < schedule.clip_min else g


def alpha_sigma(schedule: MollificationSchedule, r: float) -> tuple[float, float]:
    g = gamma(schedule, r)
    return math.sqrt(1.0 - g), math.sqrt(g)


def snr(schedule: MollificationSchedule, r: float) -> float:
    """Signal-to-noise ratio ``alpha^2 / sigma^2``; ``math.inf`` once the noise is gone."""
    g = gamma(schedule, r)
    if g == 0.0:
        return math.inf
    return (1.0 - g) / g


def blur_times(sigma_b_max: float, steps: int, sigma_b_min: float = 0.5) -> np.ndarray:
    """Log-spaced heat-equation times from ``sigma_b_max**2 / 2`` down to ``sigma_b_min**2 / 2``."""
    if sigma_b_max <= sigma_b_min:
        raise ValueError(f"sigma_b_max must exceed {sigma_b_min}, got {sigma_b_max}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    t0 = sigma_b_max**2 / 2.0
    t_end = sigma_b_min**2 / 2.0
    times = np.exp(np.linspace(math.log(t0), math.log(t_end), steps + 1))
    times[0], times[-1] = t0, t_end
    return times
