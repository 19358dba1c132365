"""
Wire grammar for model responses.

    response = ws "<think>" think "</think>" ws "<answer>" ws tuple { ws "," ws tuple } ws "</answer>" ws
    tuple    = "(" ws number ws "," ws number ws ")"
    number   = [ "+" | "-" ] ( digits [ "." [ digits ] ] | "." digits )
    think    = any text without "<think>" or "</think>"
    ws       = { " " | "\\t" | "\\n" | "\\r" }

The format is byte-compatible across versions: do not change it.
"""

import logging
import math
import re
from typing import List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict

from ..models import DEFAULT_DT, Scenario, Trajectory, Vec2
from .kinematics_service import check_feasible
from .motion_service import avg_acceleration, lateral_offset, rollout_constant_accel

logger = logging.getLogger(__name__)

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"
ANSWER_OPEN = "<answer>"
ANSWER_CLOSE = "</answer>"

_WS = " \t\n\r"
_NUMBER = r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)"
_TUPLE = re.compile(rf"[ \t\n\r]*\([ \t\n\r]*({_NUMBER})[ \t\n\r]*,[ \t\n\r]*({_NUMBER})[ \t\n\r]*\)[ \t\n\r]*")

COT_STAGES = ("Visual Analysis", "Motion Modeling", "Logical Deductions", "Self-Reflection Validation")
_STAGE_PATTERNS = (
    r"visual\s+analysis",
    r"motion\s+model(?:l)?ing",
    r"logical\s+deductions?",
    r"self[-\s]?reflection(?:\s+validation)?",
)
_STAGE_PREFIX = r"^[ \t]*(?:#+[ \t]*)?(?:\*\*)?(?:(?:stage|step)[ \t]*)?(?:\d+[ \t]*[.):]?[ \t]*)?"
_STAGE_REGEXES = tuple(re.compile(_STAGE_PREFIX + p, re.IGNORECASE | re.MULTILINE) for p in _STAGE_PATTERNS)

PLACEHOLDER_THINK = "toy policy rollout"


class ParseError(ValueError):
    """Base class for wire-grammar violations"""
    pass


class MissingThink(ParseError):
    pass


class MissingAnswer(ParseError):
    pass


class BadTuple(ParseError):
    def __init__(self, index: int, detail: str = ""):
        self.index = index
        message = f"bad waypoint tuple at index {index}"
        super().__init__(f"{message}: {detail}" if detail else message)


class TrailingContent(ParseError):
    pass


class SerializeError(ValueError):
    pass


class ModelResponse(BaseModel):
    model_config = ConfigDict(frozen=True)

    think: str
    answer: Trajectory


class CotStageReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    stage_present: Tuple[bool, bool, bool, bool]
    ordered: bool

    @property
    def missing(self) -> List[str]:
        return [name for name, present in zip(COT_STAGES, self.stage_present) if not present]


def _skip_ws(text: str, pos: int) -> int:
    while pos < len(text) and text[pos] in _WS:
        pos += 1
    return pos


def _parse_tuples(body: str) -> List[Vec2]:
    waypoints: List[Vec2] = []
    pos = 0
    while True:
        match = _TUPLE.match(body, pos)
        if match is None:
            raise BadTuple(len(waypoints), repr(body[pos:pos + 24]))
        x, y = float(match.group(1)), float(match.group(2))
        # long digit strings overflow to inf
        if not (math.isfinite(x) and math.isfinite(y)):
            raise BadTuple(len(waypoints), "number out of float range")
        waypoints.append(Vec2.of(x, y))
        pos = match.end()
        if pos == len(body):
            return waypoints
        if body[pos] != ",":
            raise BadTuple(len(waypoints), "expected ',' between tuples")
        pos += 1


def parse_response(text: str, dt: float = DEFAULT_DT) -> ModelResponse:
    """Parse the full response or raise the ParseError naming the first violation."""
    pos = _skip_ws(text, 0)
    if not text.startswith(THINK_OPEN, pos):
        raise MissingThink("response must start with <think>")
    think_start = pos + len(THINK_OPEN)
    think_end = text.find(THINK_CLOSE, think_start)
    if think_end < 0:
        raise MissingThink("unterminated <think> block")
    think = text[think_start:think_end]
    if THINK_OPEN in think:
        raise MissingThink("nested <think> tag")

    pos = _skip_ws(text, think_end + len(THINK_CLOSE))
    if not text.startswith(ANSWER_OPEN, pos):
        raise MissingAnswer("<answer> must follow </think>")
    answer_start = pos + len(ANSWER_OPEN)
    answer_end = text.find(ANSWER_CLOSE, answer_start)
    if answer_end < 0:
        raise MissingAnswer("unterminated <answer> block")

    waypoints = _parse_tuples(text[answer_start:answer_end])

    rest = answer_end + len(ANSWER_CLOSE)
    if _skip_ws(text, rest) != len(text):
        raise TrailingContent(f"unexpected content after </answer>: {text[rest:rest + 24]!r}")

    return ModelResponse(think=think, answer=Trajectory(waypoints=waypoints, dt=dt))


def format_reward(text: str) -> int:
    try:
        parse_response(text)
    except ParseError:
        return 0
    return 1


def serialize_response(resp: ModelResponse, decimals: int = 6) -> str:
    if not 1 <= decimals <= 9:
        raise SerializeError(f"decimals must be in [1, 9], got {decimals}")
    if THINK_OPEN in resp.think or THINK_CLOSE in resp.think:
        raise SerializeError("think text must not contain think tags")
    return _emit(resp.think, [w.as_tuple() for w in resp.answer.waypoints], decimals)


def serialize_points(think: str, points: Sequence[Sequence[float]], decimals: int = 6) -> str:
    """serialize_response for raw coordinate rows, skipping model construction."""
    if not 1 <= decimals <= 9:
        raise SerializeError(f"decimals must be in [1, 9], got {decimals}")
    return _emit(think, points, decimals)


def _emit(think: str, points: Sequence[Sequence[float]], decimals: int) -> str:
    tuples = []
    for x, y in points:
        if not (math.isfinite(x) and math.isfinite(y)):
            raise SerializeError(f"non-finite waypoint ({x}, {y})")
        tuples.append(f"({x:.{decimals}f}, {y:.{decimals}f})")
    return f"{THINK_OPEN}{think}{THINK_CLOSE}{ANSWER_OPEN}{', '.join(tuples)}{ANSWER_CLOSE}"


def _think_block(text: str) -> str:
    start = text.find(THINK_OPEN)
    if start < 0:
        return text
    start += len(THINK_OPEN)
    end = text.find(THINK_CLOSE, start)
    return text[start:] if end < 0 else text[start:end]


def validate_cot(text: str) -> CotStageReport:
    """Report which of the four reasoning-stage headers appear in the think block, and their order."""
    think = _think_block(text)
    positions: List[Optional[int]] = []
    for regex in _STAGE_REGEXES:
        match = regex.search(think)
        positions.append(match.start() if match else None)

    present = tuple(p is not None for p in positions)
    ordered = all(present) and all(a < b for a, b in zip(positions, positions[1:]))
    return CotStageReport(stage_present=present, ordered=ordered)


def render_cot(scenario: Scenario, traj: Trajectory) -> str:
    """Four-stage reasoning text built from the numeric history alone."""
    states = scenario.history.states
    anchor = scenario.anchor
    a_avg = avg_acceleration(states)
    dt = traj.dt
    if abs(anchor.steering) < 1e-3:
        direction = "straight"
    else:
        direction = "left turn" if anchor.steering > 0 else "right turn"

    lines = [
        "### 1. Visual Analysis",
        "No camera input; reasoning from the vehicle history only.",
        f"- Vehicle's intended direction: {direction} (steering angle: {anchor.steering:.3f} rad)",
        "",
        "### 2. Motion Modeling",
        f"Using historical data with {len(states)} time points:",
    ]
    for s in states:
        lines.append(
            f"t={s.t:.1f}: [x={s.position.x:.2f}, y={s.position.y:.2f}], v={s.speed:.2f}m/s, "
            f"a=({s.acceleration.x:.2f}, {s.acceleration.y:.2f})m/s^2"
        )
    vx = anchor.velocity.x + a_avg.x * dt
    vy = anchor.velocity.y + a_avg.y * dt
    baseline = rollout_constant_accel(states, len(traj), dt)
    first = baseline.waypoints[0]
    lines += [
        "Calculations:",
        f"- Average acceleration: a_x_avg = {a_avg.x:.3f}m/s^2, a_y_avg = {a_avg.y:.3f}m/s^2",
        f"- Velocity prediction: v_x = {vx:.3f}m/s, v_y = {vy:.3f}m/s",
        f"- Position prediction: x(t+1) = {first.x:.3f}, y(t+1) = {first.y:.3f}",
        f"- Lateral offset: delta_y = {lateral_offset(anchor.speed, anchor.steering):.3f}",
        "",
    ]

    report = check_feasible(traj, anchor, scenario.spec)
    lines += [
        "### 3. Logical Deductions",
        "Safety check:",
        f"- Turning radius within vehicle limits? -> {'yes' if report.min_radius_ok else 'no'}",
        f"- Lateral acceleration {report.max_lateral_accel:.2f} <= {report.lateral_accel_bound:.2f}? -> "
        f"{'yes' if report.lateral_accel_ok else 'no'}",
        f"- Jerk {report.max_jerk:.2f} within comfort limit? -> {'yes' if report.jerk_ok else 'no'}",
        "",
    ]

    end = traj.waypoints[-1]
    required = end.norm() / (dt * len(traj))
    lines += [
        "### 4. Self-Reflection Validation",
        f"- Predicted position (x={end.x:.2f}, y={end.y:.2f}) requires average speed of {required:.2f} m/s",
        f"- Achievable with the acceleration history? -> {'yes' if report.overall else 'no'}",
    ]
    return "\n".join(lines)
