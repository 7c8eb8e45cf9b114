"""4D Dubins-car state, bounded controls, and deterministic rollouts.

State is [px, py, theta, v]; input is [omega, accel]. The discrete-time
update advances position with the pre-update velocity, then integrates
heading and speed, wraps theta to (-pi, pi], and clamps v to [0, v_max].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    m = math.fmod(theta + math.pi, TWO_PI)
    if m <= 0.0:
        m += TWO_PI
    return m - math.pi


@dataclass(frozen=True)
class RobotState:
    px: float
    py: float
    theta: float
    v: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.px, self.py, self.theta, self.v)


@dataclass(frozen=True)
class Control:
    omega: float
    accel: float

    def as_tuple(self) -> tuple[float, float]:
        return (self.omega, self.accel)


@dataclass(frozen=True)
class DynamicsParams:
    dt: float = 0.05
    v_max: float = 1.5
    omega_max: float = 1.0
    accel_max: float = 3.0

    def __post_init__(self) -> None:
        if min(self.dt, self.v_max, self.omega_max, self.accel_max) <= 0.0:
            raise ValueError("dynamics parameters must be strictly positive")


def clamp_control(u: Control, p: DynamicsParams) -> Control:
    """Saturate each input channel to its bound, independently."""
    omega = min(max(u.omega, -p.omega_max), p.omega_max)
    accel = min(max(u.accel, -p.accel_max), p.accel_max)
    return Control(omega, accel)


def step(x: RobotState, u: Control, p: DynamicsParams) -> RobotState:
    """One discrete dynamics step.

    Position advances with the pre-update velocity; v is clamped to
    [0, v_max] and theta wrapped to (-pi, pi] after the update. The input
    is clamped defensively even if the caller already did.
    """
    u = clamp_control(u, p)
    px = x.px + x.v * math.cos(x.theta) * p.dt
    py = x.py + x.v * math.sin(x.theta) * p.dt
    theta = wrap_angle(x.theta + u.omega * p.dt)
    v = x.v + u.accel * p.dt
    v = min(max(v, 0.0), p.v_max)
    return RobotState(px, py, theta, v)


def rollout(x0: RobotState, seq: list[Control], p: DynamicsParams) -> list[RobotState]:
    """Roll a control sequence forward; returns H+1 states including x0."""
    if not seq:
        raise ValueError("empty horizon")
    states = [x0]
    for u in seq:
        states.append(step(states[-1], u, p))
    return states
