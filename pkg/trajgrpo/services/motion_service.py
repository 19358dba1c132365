import logging
import math
from typing import List, Optional, Sequence, Union

import numpy as np

from ..models import (
    DEFAULT_DT,
    DEFAULT_STEPS,
    History,
    MotionProfile,
    Scenario,
    Trajectory,
    Vec2,
    VehicleSpec,
    VehicleState,
)

logger = logging.getLogger(__name__)

STATIONARY_STEP = 1e-9
HISTORY_LENGTH = 4
SCENARIO_KINDS = ("straight", "constant_turn", "accel", "brake")


class MotionError(ValueError):
    """Raised for motion-model inputs outside their domain"""
    pass


def _wrap_angle(angle: float) -> float:
    """Map an angle into (-pi, pi]."""
    wrapped = math.atan2(math.sin(angle), math.cos(angle))
    if wrapped == -math.pi:
        return math.pi
    return wrapped


def derive_motion(traj: Trajectory, anchor: VehicleState) -> MotionProfile:
    """
    Finite-difference headings and speeds of a trajectory.

    theta_0 and v_0 come from the anchor state; every later heading is the
    chord angle of the step, unwrapped against the previous heading. Steps
    shorter than STATIONARY_STEP keep the previous heading.
    """
    dt = traj.dt
    points = np.vstack([np.array(anchor.position.as_tuple()), traj.as_array()])
    deltas = np.diff(points, axis=0)
    step_lengths = np.hypot(deltas[:, 0], deltas[:, 1])

    headings = [float(anchor.heading)]
    for (dx, dy), length in zip(deltas, step_lengths):
        previous = headings[-1]
        if length < STATIONARY_STEP:
            headings.append(previous)
            continue
        raw = math.atan2(dy, dx)
        headings.append(previous + _wrap_angle(raw - previous))

    speeds = [anchor.speed] + (step_lengths / dt).tolist()
    accels = (np.diff(speeds) / dt).tolist()
    return MotionProfile(headings=headings, speeds=speeds, accels=accels)


def avg_acceleration(history: Union[History, Sequence[VehicleState]]) -> Vec2:
    states = history.states if isinstance(history, History) else list(history)
    if not states:
        raise MotionError("empty history")
    accels = np.array([s.acceleration.as_tuple() for s in states], dtype=float)
    mean = accels.mean(axis=0)
    return Vec2.of(mean[0], mean[1])


def rollout_constant_accel(
    history: Union[History, Sequence[VehicleState]],
    steps: int = DEFAULT_STEPS,
    dt: float = DEFAULT_DT,
) -> Trajectory:
    """Constant average-acceleration rollout from the last history state."""
    if steps < 1:
        raise MotionError(f"steps must be >= 1, got {steps}")
    if dt <= 0:
        raise MotionError(f"dt must be positive, got {dt}")
    states = history.states if isinstance(history, History) else list(history)
    a = np.array(avg_acceleration(states).as_tuple())
    last = states[-1]
    p = np.array(last.position.as_tuple())
    v = np.array(last.velocity.as_tuple())

    waypoints = []
    for _ in range(steps):
        v_prev = v
        v = v + a * dt
        p = p + v_prev * dt + 0.5 * a * dt * dt
        waypoints.append(p.copy())
    return Trajectory.from_array(np.array(waypoints), dt=dt)


def lateral_offset(speed: float, steering: float) -> float:
    if abs(steering) >= math.pi / 2:
        raise MotionError("steering out of range")
    return speed * math.tan(steering)


def steering_from_heading(profile: MotionProfile, traj: Trajectory, spec: VehicleSpec) -> List[float]:
    """
    Bicycle-model steering reconstruction delta = atan(L * kappa), with kappa the
    heading change per metre of travel on each step. Stationary steps report 0.
    """
    steering = []
    for j in range(1, len(profile.headings)):
        arc = profile.speeds[j] * traj.dt
        if arc < STATIONARY_STEP:
            steering.append(0.0)
            continue
        kappa = (profile.headings[j] - profile.headings[j - 1]) / arc
        steering.append(math.atan(spec.wheelbase_L * kappa))
    return steering


def _maneuver_state(kind: str, t: float, v0: float, accel: float, yaw_rate: float, spec: VehicleSpec) -> VehicleState:
    if kind == "constant_turn":
        phi = yaw_rate * t
        position = Vec2.of(v0 * math.sin(phi) / yaw_rate, v0 * (1.0 - math.cos(phi)) / yaw_rate)
        velocity = Vec2.of(v0 * math.cos(phi), v0 * math.sin(phi))
        centripetal = v0 * yaw_rate
        acceleration = Vec2.of(-centripetal * math.sin(phi), centripetal * math.cos(phi))
        steering = math.atan(spec.wheelbase_L * yaw_rate / v0)
        return VehicleState(
            t=t, position=position, velocity=velocity, acceleration=acceleration, heading=phi, steering=steering
        )

    position = Vec2.of(v0 * t + 0.5 * accel * t * t, 0.0)
    velocity = Vec2.of(v0 + accel * t, 0.0)
    return VehicleState(t=t, position=position, velocity=velocity, acceleration=Vec2.of(accel, 0.0))


def synth_scenario(seed: int, kind: str, spec: Optional[VehicleSpec] = None, steps: int = DEFAULT_STEPS, dt: float = DEFAULT_DT) -> Scenario:
    """
    Deterministic synthetic scenario: a 4-state history ending at the ego origin
    and the exact continuation of the named maneuver as ground truth.
    """
    if kind not in SCENARIO_KINDS:
        raise MotionError(f"unknown scenario kind '{kind}', expected one of {SCENARIO_KINDS}")
    spec = spec or VehicleSpec()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), SCENARIO_KINDS.index(kind)]))

    v0 = float(rng.uniform(6.0, 12.0))
    accel = 0.0
    yaw_rate = 0.0
    if kind == "accel":
        accel = float(rng.uniform(0.5, 1.5))
    elif kind == "brake":
        accel = -float(rng.uniform(0.5, 1.5))
    elif kind == "constant_turn":
        v0 = float(rng.uniform(5.0, 10.0))
        yaw_rate = float(rng.uniform(0.05, 0.2)) * (1.0 if rng.random() < 0.5 else -1.0)

    history_times = [dt * k for k in range(-(HISTORY_LENGTH - 1), 1)]
    states = [_maneuver_state(kind, t, v0, accel, yaw_rate, spec) for t in history_times]
    future = [_maneuver_state(kind, dt * k, v0, accel, yaw_rate, spec).position for k in range(1, steps + 1)]

    scenario = Scenario(
        id=f"{kind}-{seed}",
        history=History(states=states),
        ground_truth=Trajectory(waypoints=future, dt=dt),
        spec=spec,
    )
    logger.debug(f"Synthesized scenario {scenario.id}: v0={v0:.3f} accel={accel:.3f} yaw_rate={yaw_rate:.3f}")
    return scenario


def synth_corpus(seed: int, count: int, kinds: Sequence[str] = SCENARIO_KINDS, spec: Optional[VehicleSpec] = None) -> List[Scenario]:
    """count scenarios, kinds taken round-robin, scenario i seeded by seed * 100003 + i."""
    if not kinds:
        raise MotionError("at least one scenario kind is required")
    return [synth_scenario(seed * 100003 + i, kinds[i % len(kinds)], spec) for i in range(count)]


def perturb_ground_truth(scenario: Scenario, offset: Vec2) -> Scenario:
    """Translate every ground-truth waypoint by a constant offset."""
    shifted = scenario.ground_truth.as_array() + np.array(offset.as_tuple())
    return scenario.model_copy(
        update={
            "id": f"{scenario.id}+shift",
            "ground_truth": Trajectory.from_array(shifted, dt=scenario.ground_truth.dt),
        }
    )
