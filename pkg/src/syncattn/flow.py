"""Flow-matching primitives: linear interpolation path, velocity target,
training loss, and a deterministic Euler sampler."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["FlowState", "euler_sample", "fm_loss", "interpolate", "velocity_target"]


@dataclass(frozen=True)
class FlowState:
    """A point on the linear path from noise x0 to data x1 at time t in [0, 1]."""

    x0: np.ndarray
    x1: np.ndarray
    t: float

    def __post_init__(self) -> None:
        if np.shape(self.x0) != np.shape(self.x1):
            raise ValueError(f"x0 {np.shape(self.x0)} and x1 {np.shape(self.x1)} must match")
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {self.t}")


def interpolate(state: FlowState) -> np.ndarray:
    """(1 - t) * x0 + t * x1; exactly x0 at t=0 and x1 at t=1."""
    if state.t == 0.0:
        return np.array(state.x0, copy=True)
    if state.t == 1.0:
        return np.array(state.x1, copy=True)
    return (1.0 - state.t) * np.asarray(state.x0) + state.t * np.asarray(state.x1)


def velocity_target(x0: np.ndarray, x1: np.ndarray) -> np.ndarray:
    """x1 - x0: the time derivative of the linear path, constant in t."""
    x0, x1 = np.asarray(x0), np.asarray(x1)
    if x0.shape != x1.shape:
        raise ValueError(f"x0 {x0.shape} and x1 {x1.shape} must match")
    return x1 - x0


def fm_loss(pred: np.ndarray, x0: np.ndarray, x1: np.ndarray) -> float:
    """Mean squared error between a velocity prediction and x1 - x0."""
    pred = np.asarray(pred)
    target = velocity_target(x0, x1)
    if pred.shape != target.shape:
        raise ValueError(f"pred {pred.shape} must match target {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


def euler_sample(
    velocity_fn: Callable[[np.ndarray, float], np.ndarray],
    x0: np.ndarray,
    steps: int,
) -> np.ndarray:
    """Integrate dx/dt = velocity_fn(x, t) from t=0 to t=1 with fixed steps.

    x <- x + (1/steps) * velocity_fn(x, k/steps) for k = 0 .. steps-1.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    x = np.array(x0, copy=True)
    dt = 1.0 / steps
    for k in range(steps):
        vel = np.asarray(velocity_fn(x, k / steps))
        if vel.shape != x.shape:
            raise ValueError(f"velocity_fn returned {vel.shape}, expected {x.shape}")
        x = x + dt * vel
    return x
