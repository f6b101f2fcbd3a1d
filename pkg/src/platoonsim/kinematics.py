"""Point-mass vehicle kinematics with exact piecewise-constant-acceleration motion.

Positions are front-bumper positions; the bumper-to-bumper gap between a
follower n and its predecessor is x_{n-1} - x_n - length_{n-1}.  Speeds are
clamped exactly at 0 and at the vehicle's speed cap by splitting the motion
at the crossing instant, so a vehicle never reverses and never exceeds its
cap, and positions stay exact (no integration error).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

EPS = 1e-9


@dataclass(frozen=True)
class VehicleSpec:
    """Static per-vehicle parameters.

    accel_min is negative (hard-brake rate).  mech_delay is the lag between
    a decision and the start of its execution.  elastic_coeff scales the
    speed-proportional part of the minimum-gap requirement.
    """

    id: int
    vclass: str
    length: float
    stop_gap: float = 1.0
    accel_max: float = 1.0
    accel_min: float = -1.5
    mech_delay: float = 0.07
    speed_max: float = 22.0
    elastic_coeff: float = 5.0

    def __post_init__(self):
        if not (self.accel_min < 0.0 < self.accel_max):
            raise ValueError(f"vehicle {self.id}: need accel_min < 0 < accel_max")
        if self.length <= 0.0 or self.stop_gap < 0.0:
            raise ValueError(f"vehicle {self.id}: bad length/stop_gap")
        if self.mech_delay < 0.0 or self.speed_max <= 0.0 or self.elastic_coeff < 0.0:
            raise ValueError(f"vehicle {self.id}: bad delay/speed/elastic values")

    @property
    def brake_rate(self) -> float:
        """Magnitude of the hard-brake deceleration."""
        return -self.accel_min


# Per-class defaults: length, accel_max, accel_min, mech_delay.
VEHICLE_CLASSES = {
    "small": (4.5, 1.0, -1.5, 0.07),
    "midsize": (7.5, 0.9, -0.9, 0.15),
    "large": (15.0, 0.6, -0.6, 0.5),
}

_CLASS_ALIASES = {"mid": "midsize"}


def make_spec(vid: int, vclass: str, *, stop_gap: float = 1.0, speed_max: float = 22.0,
              elastic_coeff: float = 5.0) -> VehicleSpec:
    """Build a VehicleSpec with the per-class defaults."""
    key = _CLASS_ALIASES.get(vclass, vclass)
    if key not in VEHICLE_CLASSES:
        raise ValueError(f"unknown vehicle class {vclass!r}")
    length, a_max, a_min, eps = VEHICLE_CLASSES[key]
    return VehicleSpec(id=vid, vclass=key, length=length, stop_gap=stop_gap,
                       accel_max=a_max, accel_min=a_min, mech_delay=eps,
                       speed_max=speed_max, elastic_coeff=elastic_coeff)


@dataclass(frozen=True)
class VehicleState:
    """Kinematic state at simulation time t: front position x, speed v, executed accel a."""

    t: float
    x: float
    v: float
    a: float = 0.0


@dataclass(frozen=True)
class BrakeOutcome:
    """Result of a hard-brake evaluation over a horizon.

    distance/speed are the moving distance and remaining speed at the end of
    the horizon; stop_time is the (relative) time at which speed reaches 0,
    independent of the horizon.
    """

    distance: float
    speed: float
    stop_time: float


@dataclass(frozen=True)
class MotionPiece:
    """Constant-acceleration motion segment with no interior speed crossing."""

    t0: float
    duration: float
    x0: float
    v0: float
    a: float

    def pos_at(self, t: float) -> float:
        dt = t - self.t0
        return self.x0 + self.v0 * dt + 0.5 * self.a * dt * dt

    def speed_at(self, t: float) -> float:
        dt = t - self.t0
        return self.v0 + self.a * dt

    @property
    def t1(self) -> float:
        return self.t0 + self.duration


def motion_pieces(state: VehicleState, accel: float, dt: float,
                  speed_max: float = math.inf) -> list[MotionPiece]:
    """Split constant-accel motion over dt at speed clamps (0 and speed_max).

    Returns 1 or 2 pieces covering [state.t, state.t + dt] exactly.  After a
    clamp the vehicle holds the boundary speed with zero acceleration.
    """
    if dt < 0.0:
        raise ValueError(f"negative dt {dt}")
    x, v = state.x, state.v
    if dt == 0.0:
        return [MotionPiece(state.t, 0.0, x, v, accel)]
    t_cross = None
    if accel < 0.0 and v + accel * dt < 0.0:
        t_cross = v / -accel
    elif accel > 0.0 and v < speed_max and v + accel * dt > speed_max:
        t_cross = (speed_max - v) / accel
    elif accel > 0.0 and v >= speed_max:
        t_cross = 0.0  # already at the cap, accel has no effect
    if t_cross is None or t_cross >= dt:
        return [MotionPiece(state.t, dt, x, v, accel)]
    first = MotionPiece(state.t, t_cross, x, v, accel)
    v_b = v + accel * t_cross
    v_b = 0.0 if v_b < EPS else min(v_b, speed_max)
    x_b = first.pos_at(state.t + t_cross)
    return [first, MotionPiece(state.t + t_cross, dt - t_cross, x_b, v_b, 0.0)]


def advance_state(state: VehicleState, accel: float, dt: float,
                  speed_max: float = math.inf) -> VehicleState:
    """Propagate (x, v) exactly over dt under constant accel with speed clamping.

    x' = x + v dt + accel dt^2 / 2 and v' = v + accel dt while no speed
    boundary is crossed; a crossing splits the motion exactly and the speed
    holds at the boundary thereafter.
    """
    pieces = motion_pieces(state, accel, dt, speed_max)
    last = pieces[-1]
    t_end = state.t + dt
    v_end = last.speed_at(t_end)
    if -EPS < v_end < 0.0:  # rounding dust at an exact stop
        v_end = 0.0
    return VehicleState(t=t_end, x=last.pos_at(t_end), v=v_end, a=accel)


def hard_brake(v0: float, accel_min: float, horizon: float) -> BrakeOutcome:
    """Distance and remaining speed after braking at accel_min for up to horizon.

    The effective braking time is min(horizon, v0 / -accel_min); past the
    stop instant the vehicle holds position.
    """
    if v0 < 0.0:
        raise ValueError(f"negative initial speed {v0}")
    if accel_min >= 0.0:
        raise ValueError(f"accel_min must be negative, got {accel_min}")
    stop_time = v0 / -accel_min
    dt = min(horizon, stop_time)
    dist = v0 * dt + 0.5 * accel_min * dt * dt
    speed = v0 + accel_min * dt
    return BrakeOutcome(distance=dist, speed=max(speed, 0.0), stop_time=stop_time)


def brake_distance(v0: float, accel_min: float) -> float:
    """Full stopping distance v0^2 / (2 |accel_min|)."""
    return v0 * v0 / (2.0 * -accel_min)


def shift_state(state: VehicleState, dx: float) -> VehicleState:
    return replace(state, x=state.x + dx)
