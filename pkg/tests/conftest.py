import math

import numpy as np
import pytest

from trajgrpo.models import History, Scenario, Trajectory, Vec2, VehicleSpec, VehicleState
from trajgrpo.services.motion_service import synth_corpus, synth_scenario


def make_state(t, position=(0.0, 0.0), velocity=(0.0, 0.0), acceleration=(0.0, 0.0), heading=0.0, steering=0.0):
    return VehicleState(
        t=t,
        position=Vec2.of(*position),
        velocity=Vec2.of(*velocity),
        acceleration=Vec2.of(*acceleration),
        heading=heading,
        steering=steering,
    )


def make_history(velocity=(0.0, 0.0), acceleration=(0.0, 0.0), count=4, dt=0.5):
    """History ending at the origin whose every state reports the same velocity and acceleration."""
    return History(
        states=[make_state(dt * k, velocity=velocity, acceleration=acceleration) for k in range(-(count - 1), 1)]
    )


def arc_points(radius, speed, steps, dt=0.5):
    """Points on a left-turning circle through the origin with heading 0 at t=0."""
    omega = speed / radius
    return [
        (radius * math.sin(omega * dt * k), radius * (1.0 - math.cos(omega * dt * k)))
        for k in range(1, steps + 1)
    ]


def arc_anchor(radius, speed):
    return make_state(0.0, velocity=(speed, 0.0), acceleration=(0.0, speed * speed / radius))


@pytest.fixture
def spec():
    return VehicleSpec()


@pytest.fixture
def straight_scenario():
    return synth_scenario(1, "straight")


@pytest.fixture
def turn_scenario():
    return synth_scenario(3, "constant_turn")


@pytest.fixture
def small_corpus():
    return synth_corpus(5, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_scenario(rng, steps=6, dt=0.5):
    """Scenario with a random history and a random ground truth (not a physical maneuver)."""
    v = rng.uniform(-5, 15, size=2)
    a = rng.uniform(-2, 2, size=2)
    history = History(
        states=[
            make_state(dt * k, position=tuple(v * dt * k), velocity=tuple(v), acceleration=tuple(a))
            for k in range(-3, 1)
        ]
    )
    gt = Trajectory.from_array(np.cumsum(rng.uniform(-1, 6, size=(steps, 2)), axis=0), dt=dt)
    return Scenario(id="random", history=history, ground_truth=gt)
