"""
Feasibility and comfort diagnostics: turning radius, friction-limited lateral
acceleration, longitudinal jerk, and the 1-DOF suspension response.
These are reported alongside rewards, never folded into them.
"""

import logging
import math
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..models import Trajectory, VehicleSpec, VehicleState
from .motion_service import derive_motion

logger = logging.getLogger(__name__)

COLLINEAR_TOLERANCE = 1e-9


class KinematicsError(ValueError):
    pass


class PathRadius(NamedTuple):
    index: int
    radius: Optional[float]

    @property
    def straight(self) -> bool:
        return self.radius is None


class LateralAccelResult(NamedTuple):
    max_a_c: float
    bound: float
    ok: bool
    index: Optional[int]


class FeasibilityReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    min_radius_ok: bool
    min_radius: Optional[float] = None
    min_radius_index: Optional[int] = None
    min_radius_limit: float
    lateral_accel_ok: bool
    max_lateral_accel: float
    max_lateral_accel_index: Optional[int] = None
    lateral_accel_bound: float
    jerk_ok: bool
    max_jerk: float
    max_jerk_index: Optional[int] = None
    jerk_limit: float
    overall: bool


class SuspensionParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    m: float = Field(gt=0)
    c: float = Field(gt=0)
    k: float = Field(gt=0)

    @property
    def natural_frequency(self) -> float:
        return math.sqrt(self.k / self.m)


def turning_radius(wheelbase: float, delta_max: float) -> float:
    if not 0 < delta_max < math.pi / 2:
        raise KinematicsError(f"delta_max must be in (0, pi/2), got {delta_max}")
    if wheelbase <= 0:
        raise KinematicsError(f"wheelbase must be positive, got {wheelbase}")
    return wheelbase / math.sin(delta_max)


def min_turn_radius(spec: VehicleSpec) -> float:
    return turning_radius(spec.wheelbase_L, spec.delta_max)


def _points(traj: Trajectory, anchor: VehicleState) -> np.ndarray:
    return np.vstack([np.array(anchor.position.as_tuple()), traj.as_array()])


def circumradius(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> Optional[float]:
    """Radius of the circle through three points, None when they are collinear."""
    ab = np.linalg.norm(b - a)
    bc = np.linalg.norm(c - b)
    ca = np.linalg.norm(a - c)
    cross = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    if cross <= COLLINEAR_TOLERANCE * max(ab * ca, COLLINEAR_TOLERANCE):
        return None
    return float(ab * bc * ca / (2.0 * cross))


def path_radii(traj: Trajectory, anchor: VehicleState) -> List[PathRadius]:
    """Circumscribed radius at every interior point of anchor + waypoints."""
    points = _points(traj, anchor)
    if len(points) < 3:
        raise KinematicsError("path_radii needs at least 3 points including the anchor")
    return [PathRadius(i, circumradius(points[i - 1], points[i], points[i + 1])) for i in range(1, len(points) - 1)]


def lateral_accel_check(traj: Trajectory, anchor: VehicleState, spec: VehicleSpec) -> LateralAccelResult:
    """a_c = v^2 / R at interior points, v the mean of the adjacent step speeds, against mu * g."""
    radii = path_radii(traj, anchor)
    speeds = derive_motion(traj, anchor).speeds
    bound = spec.mu * spec.g

    max_a_c, worst = 0.0, None
    for sample in radii:
        if sample.straight:
            continue
        v = 0.5 * (speeds[sample.index] + speeds[sample.index + 1])
        a_c = v * v / sample.radius
        if worst is None or a_c > max_a_c:
            max_a_c, worst = a_c, sample.index
    return LateralAccelResult(max_a_c, bound, max_a_c <= bound, worst)


def jerk_from_speeds(speeds: Sequence[float], dt: float) -> List[float]:
    if len(speeds) < 3:
        raise KinematicsError("jerk needs at least 3 speed samples")
    accels = np.diff(np.asarray(speeds, dtype=float)) / dt
    return (np.diff(accels) / dt).tolist()


def jerk_profile(traj: Trajectory, anchor: VehicleState) -> List[float]:
    """
    Longitudinal jerk from second differences of the step speeds v_1..v_N.
    The anchor contributes its position only: its instantaneous speed is not
    a step average and would break exactness on constant-acceleration paths.
    """
    if len(traj) < 3:
        raise KinematicsError(
            "jerk_profile needs at least 3 waypoints: the anchor speed is excluded from the speed differences"
        )
    speeds = derive_motion(traj, anchor).speeds[1:]
    return jerk_from_speeds(speeds, traj.dt)


def check_feasible(traj: Trajectory, anchor: VehicleState, spec: VehicleSpec) -> FeasibilityReport:
    if len(traj) < 3:
        raise KinematicsError("check_feasible needs at least 3 waypoints")
    r_min = min_turn_radius(spec)

    finite = [r for r in path_radii(traj, anchor) if not r.straight]
    tightest = min(finite, key=lambda r: r.radius) if finite else None
    radius_ok = tightest is None or tightest.radius >= r_min

    lateral = lateral_accel_check(traj, anchor, spec)

    jerks = jerk_profile(traj, anchor)
    jerk_index = int(np.argmax(np.abs(jerks)))
    max_jerk = abs(jerks[jerk_index])
    jerk_ok = max_jerk <= spec.jerk_limit

    return FeasibilityReport(
        min_radius_ok=radius_ok,
        min_radius=tightest.radius if tightest else None,
        min_radius_index=tightest.index if tightest else None,
        min_radius_limit=r_min,
        lateral_accel_ok=lateral.ok,
        max_lateral_accel=lateral.max_a_c,
        max_lateral_accel_index=lateral.index,
        lateral_accel_bound=lateral.bound,
        jerk_ok=jerk_ok,
        max_jerk=max_jerk,
        max_jerk_index=jerk_index,
        jerk_limit=spec.jerk_limit,
        overall=radius_ok and lateral.ok and jerk_ok,
    )


def suspension_states(
    params: SuspensionParams,
    forcing: Sequence[float],
    dt: float,
    x0: float = 0.0,
    v0: float = 0.0,
) -> Tuple[List[float], List[float]]:
    """
    Fixed-step RK4 integration of m x'' + c x' + k x = F(t).
    F between samples is linearly interpolated; entry i is the state at forcing[i].
    """
    if dt <= 0:
        raise KinematicsError(f"dt must be positive, got {dt}")
    bound = 2.0 / params.natural_frequency
    if dt >= bound:
        raise KinematicsError(f"unstable step: dt={dt} must be < 2/omega_n = {bound:.6g}")
    force = np.asarray(forcing, dtype=float)
    if force.size == 0:
        return [], []

    m, c, k = params.m, params.c, params.k

    def deriv(x: float, v: float, f: float):
        return v, (f - c * v - k * x) / m

    x, v = float(x0), float(v0)
    xs, vs = [x], [v]
    for i in range(force.size - 1):
        f0, f1 = force[i], force[i + 1]
        fm = 0.5 * (f0 + f1)
        k1x, k1v = deriv(x, v, f0)
        k2x, k2v = deriv(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v, fm)
        k3x, k3v = deriv(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v, fm)
        k4x, k4v = deriv(x + dt * k3x, v + dt * k3v, f1)
        x += dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v += dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        xs.append(x)
        vs.append(v)
    return xs, vs


def suspension_response(
    params: SuspensionParams,
    forcing: Sequence[float],
    dt: float,
    x0: float = 0.0,
    v0: float = 0.0,
) -> List[float]:
    return suspension_states(params, forcing, dt, x0, v0)[0]


def mechanical_energy(params: SuspensionParams, x: float, v: float) -> float:
    return 0.5 * params.m * v * v + 0.5 * params.k * x * x
