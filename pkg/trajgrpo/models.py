"""
Shared domain types for the trajectory planning engine.

Coordinates live in the bird's-eye-view ego frame: x forward, y leftward,
origin and heading 0 at the last observed history state.
"""

import math
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

TIME_TOLERANCE = 1e-9
DEFAULT_DT = 0.5
DEFAULT_STEPS = 6


class Vec2(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float
    y: float

    @field_validator("x", "y")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("coordinate must be finite")
        return value

    @classmethod
    def of(cls, x: float, y: float) -> "Vec2":
        return cls(x=float(x), y=float(y))

    def as_tuple(self) -> Tuple[float, float]:
        return (self.x, self.y)

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


class VehicleSpec(BaseModel):
    """Vehicle limits used by the feasibility and comfort checks."""

    model_config = ConfigDict(frozen=True)

    wheelbase_L: float = Field(default=2.7, gt=0)
    delta_max: float = Field(default=0.6, gt=0, lt=math.pi / 2)
    mu: float = Field(default=0.8, gt=0)
    g: float = Field(default=9.81, gt=0)
    jerk_limit: float = Field(default=2.5, gt=0)


class VehicleState(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: float
    position: Vec2
    velocity: Vec2
    acceleration: Vec2
    heading: float = 0.0
    steering: float = 0.0

    @field_validator("t", "heading", "steering")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("value must be finite")
        return value

    @property
    def speed(self) -> float:
        return self.velocity.norm()


class History(BaseModel):
    """Observed vehicle states, oldest first, uniformly spaced in time."""

    model_config = ConfigDict(frozen=True)

    states: List[VehicleState] = Field(min_length=2)

    @model_validator(mode="after")
    def _uniform_spacing(self) -> "History":
        times = [s.t for s in self.states]
        dt = times[1] - times[0]
        if dt <= 0:
            raise ValueError("history times must be strictly increasing")
        for prev, cur in zip(times, times[1:]):
            if abs((cur - prev) - dt) > TIME_TOLERANCE:
                raise ValueError("history spacing must be uniform")
        for t in times:
            steps = t / dt
            if abs(steps - round(steps)) * dt > TIME_TOLERANCE:
                raise ValueError(f"history time {t} is not a multiple of the time step {dt}")
        return self

    @property
    def dt(self) -> float:
        return self.states[1].t - self.states[0].t

    @property
    def last(self) -> VehicleState:
        return self.states[-1]


class Trajectory(BaseModel):
    """Planned waypoints at fixed future timestamps dt, 2·dt, ..."""

    model_config = ConfigDict(frozen=True)

    waypoints: List[Vec2] = Field(min_length=1)
    dt: float = Field(default=DEFAULT_DT, gt=0)

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]], dt: float = DEFAULT_DT) -> "Trajectory":
        return cls(waypoints=[Vec2.of(p[0], p[1]) for p in points], dt=dt)

    @classmethod
    def from_array(cls, array: np.ndarray, dt: float = DEFAULT_DT) -> "Trajectory":
        return cls.from_points(np.asarray(array, dtype=float).reshape(-1, 2).tolist(), dt=dt)

    def as_array(self) -> np.ndarray:
        return np.array([w.as_tuple() for w in self.waypoints], dtype=float)

    def __len__(self) -> int:
        return len(self.waypoints)


class MotionProfile(BaseModel):
    """
    Headings theta_0..theta_N, speeds v_0..v_N and along-path accelerations a_1..a_N
    derived from a trajectory and its anchor state.
    """

    model_config = ConfigDict(frozen=True)

    headings: List[float]
    speeds: List[float]
    accels: List[float]

    @model_validator(mode="after")
    def _consistent(self) -> "MotionProfile":
        if len(self.headings) != len(self.speeds):
            raise ValueError("headings and speeds must have equal length")
        if len(self.accels) != len(self.speeds) - 1:
            raise ValueError("accels must have one entry per step")
        return self

    @property
    def steps(self) -> int:
        return len(self.speeds) - 1


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    history: History
    ground_truth: Trajectory
    spec: VehicleSpec = Field(default_factory=VehicleSpec)

    @model_validator(mode="after")
    def _check(self) -> "Scenario":
        if abs(self.ground_truth.dt - self.history.dt) > TIME_TOLERANCE:
            raise ValueError("ground_truth dt must equal the history spacing")
        for state in self.history.states:
            if abs(state.steering) > self.spec.delta_max + TIME_TOLERANCE:
                raise ValueError(f"steering {state.steering} exceeds delta_max {self.spec.delta_max}")
        return self

    @property
    def anchor(self) -> VehicleState:
        return self.history.last
