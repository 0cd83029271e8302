"""3D Gauss-Markov mobility for UAVs and pairwise distance helpers.

Velocity follows a per-axis AR(1) process,

    v_t = alpha * v_{t-1} + (1 - alpha) * v_mean + sigma * sqrt(1 - alpha^2) * w_t

with w_t ~ N(0, 1), which keeps the stationary std at sigma regardless of
alpha. Positions integrate velocity and reflect off an axis-aligned box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Position3:
    """A point in 3D space, meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise ValueError("coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class Bounds3:
    """Axis-aligned flight box, meters."""

    lo: tuple[float, float, float] = (0.0, 0.0, 0.0)
    hi: tuple[float, float, float] = (500.0, 500.0, 100.0)

    def __post_init__(self):
        if any(l >= h for l, h in zip(self.lo, self.hi)):
            raise ValueError("bounds must have lo < hi on every axis")


@dataclass
class MobilityState:
    """One mobile node's kinematic state plus its Gauss-Markov parameters."""

    position: np.ndarray
    velocity: np.ndarray
    mean_velocity: np.ndarray
    memory_alpha: float = 0.85
    noise_sigma: float = 0.5
    bounds: Bounds3 = field(default_factory=Bounds3)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.mean_velocity = np.asarray(self.mean_velocity, dtype=float)
        if not 0.0 <= self.memory_alpha <= 1.0:
            raise ValueError("memory_alpha must lie in [0, 1]")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be >= 0")


def gm_step(state: MobilityState, dt: float, rng: np.random.Generator) -> MobilityState:
    """Advance one Gauss-Markov step of dt seconds, reflecting at the box."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    a = state.memory_alpha
    noise = state.noise_sigma * math.sqrt(1.0 - a * a) * rng.standard_normal(3)
    velocity = a * state.velocity + (1.0 - a) * state.mean_velocity + noise
    position = state.position + velocity * dt

    lo = np.asarray(state.bounds.lo, dtype=float)
    hi = np.asarray(state.bounds.hi, dtype=float)
    for axis in range(3):
        # One step can overshoot a face at most a handful of times.
        while position[axis] < lo[axis] or position[axis] > hi[axis]:
            if position[axis] < lo[axis]:
                position[axis] = 2.0 * lo[axis] - position[axis]
            else:
                position[axis] = 2.0 * hi[axis] - position[axis]
            velocity[axis] = -velocity[axis]

    return MobilityState(
        position=position,
        velocity=velocity,
        mean_velocity=state.mean_velocity.copy(),
        memory_alpha=state.memory_alpha,
        noise_sigma=state.noise_sigma,
        bounds=state.bounds,
    )


def euclidean_distance(a, b) -> float:
    """Straight-line distance between two 3D points."""
    pa = a.as_array() if isinstance(a, Position3) else np.asarray(a, dtype=float)
    pb = b.as_array() if isinstance(b, Position3) else np.asarray(b, dtype=float)
    return float(np.sqrt(np.sum((pb - pa) ** 2)))


def simulate_trajectories(
    initial_states: list[MobilityState],
    duration_s: float,
    dt: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Run every node forward and stack sampled positions.

    Returns (times, positions) with times of shape (T,) and positions of
    shape (T, n_nodes, 3); sample 0 is the initial state. A node whose
    noise_sigma is 0 and velocity/mean are zero stays put (ground station).
    """
    if dt <= 0.0 or duration_s <= 0.0:
        raise ValueError("duration and dt must be positive")
    n_steps = int(math.ceil(duration_s / dt))
    times = np.arange(n_steps + 1, dtype=float) * dt
    n_nodes = len(initial_states)
    positions = np.empty((n_steps + 1, n_nodes, 3), dtype=float)

    states = list(initial_states)
    for i, st in enumerate(states):
        positions[0, i] = st.position
    for k in range(1, n_steps + 1):
        for i, st in enumerate(states):
            st = gm_step(st, dt, rng)
            states[i] = st
            positions[k, i] = st.position
    return times, positions


def link_distance_series(
    times: np.ndarray, positions: np.ndarray, node_a: int, node_b: int
) -> tuple[np.ndarray, np.ndarray]:
    """Distance between two nodes at every sampled time."""
    diff = positions[:, node_a, :] - positions[:, node_b, :]
    return np.asarray(times, dtype=float), np.sqrt(np.sum(diff * diff, axis=1))


def distance_at(times: np.ndarray, values: np.ndarray, t: float) -> float:
    """Linearly interpolate a sampled distance series at time t."""
    return float(np.interp(t, times, values))
