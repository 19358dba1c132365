import logging
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..models import MotionProfile, Scenario, Trajectory, VehicleState
from .motion_service import derive_motion
from .response_codec import ParseError, parse_response

logger = logging.getLogger(__name__)

DEFAULT_PENALTY_CAP = 100.0
COMPONENTS = ("pos", "ste", "vel", "tem")


class RewardError(ValueError):
    pass


class RewardWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    lambda_pos: float = Field(default=1.0, ge=0)
    lambda_ste: float = Field(default=1.0, ge=0)
    lambda_vel: float = Field(default=1.0, ge=0)
    lambda_tem: float = Field(default=1.0, ge=0)

    @classmethod
    def parse(cls, text: str) -> "RewardWeights":
        """Parse 'pos,ste,vel,tem' weights, e.g. '1,1,0,1'."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != len(COMPONENTS):
            raise ValueError(f"expected {len(COMPONENTS)} comma-separated weights, got '{text}'")
        return cls(**{f"lambda_{name}": float(v) for name, v in zip(COMPONENTS, parts)})

    def without(self, *components: str) -> "RewardWeights":
        """Copy with the named components zeroed (ablation toggles)."""
        unknown = set(components) - set(COMPONENTS)
        if unknown:
            raise ValueError(f"unknown reward components: {sorted(unknown)}")
        return self.model_copy(update={f"lambda_{name}": 0.0 for name in components})

    def as_text(self) -> str:
        return ",".join(f"{getattr(self, f'lambda_{name}'):g}" for name in COMPONENTS)


class RewardBreakdown(BaseModel):
    """
    Per-response reward terms. Error components stay positive; the scalar
    fed to GRPO is total = r_format - r_acc, so lower error means higher reward.
    Components are None when the response could not be compared.
    """

    model_config = ConfigDict(frozen=True)

    r_pos: Optional[float] = None
    r_ste: Optional[float] = None
    r_vel: Optional[float] = None
    r_tem: Optional[float] = None
    r_acc: float
    r_format: int = 0
    total: float
    length_penalized: bool = False
    capped: bool = False
    parse_error: Optional[str] = None


def _check_lengths(a, b, what: str) -> None:
    if len(a) != len(b):
        raise RewardError(f"{what} length mismatch: {len(a)} != {len(b)}")


def r_pos(pred: Trajectory, gt: Trajectory) -> float:
    _check_lengths(pred.waypoints, gt.waypoints, "trajectory")
    if abs(pred.dt - gt.dt) > 1e-12:
        raise RewardError(f"dt mismatch: {pred.dt} != {gt.dt}")
    diff = pred.as_array() - gt.as_array()
    return float(np.mean(np.sum(diff * diff, axis=1)))


def r_ste(pred_profile: MotionProfile, gt_profile: MotionProfile) -> float:
    _check_lengths(pred_profile.headings, gt_profile.headings, "heading profile")
    diff = np.asarray(pred_profile.headings[1:]) - np.asarray(gt_profile.headings[1:])
    return float(np.mean(diff * diff))


def r_vel(pred_profile: MotionProfile, gt_profile: MotionProfile) -> float:
    _check_lengths(pred_profile.speeds, gt_profile.speeds, "speed profile")
    diff = np.asarray(pred_profile.speeds[1:]) - np.asarray(gt_profile.speeds[1:])
    return float(np.mean(diff * diff))


def r_tem(pred_profile: MotionProfile) -> float:
    if pred_profile.steps < 1:
        raise RewardError("profile must include the anchor and at least one step")
    d_theta = np.diff(pred_profile.headings)
    d_speed = np.diff(pred_profile.speeds)
    return float(np.mean(d_theta * d_theta) + np.mean(d_speed * d_speed))


def r_acc(
    pred: Trajectory,
    gt: Trajectory,
    anchor: VehicleState,
    w: RewardWeights = RewardWeights(),
    gt_profile: Optional[MotionProfile] = None,
) -> RewardBreakdown:
    """Weighted physics-grounded error; gt_profile may be passed in to skip re-deriving it."""
    pos = r_pos(pred, gt)
    pred_profile = derive_motion(pred, anchor)
    if gt_profile is None:
        gt_profile = derive_motion(gt, anchor)
    ste = r_ste(pred_profile, gt_profile)
    vel = r_vel(pred_profile, gt_profile)
    tem = r_tem(pred_profile)
    acc = w.lambda_pos * pos + w.lambda_ste * ste + w.lambda_vel * vel + w.lambda_tem * tem
    return RewardBreakdown(r_pos=pos, r_ste=ste, r_vel=vel, r_tem=tem, r_acc=acc, r_format=0, total=-acc)


def total_reward(
    response_text: str,
    scenario: Scenario,
    w: RewardWeights = RewardWeights(),
    penalty_cap: float = DEFAULT_PENALTY_CAP,
    gt_profile: Optional[MotionProfile] = None,
) -> RewardBreakdown:
    """
    Format reward minus accuracy error. Never raises: failures are encoded in the
    reward, and the accuracy error never exceeds penalty_cap, so total >= 1 - penalty_cap
    for every parseable response.
    """
    gt = scenario.ground_truth
    try:
        response = parse_response(response_text, dt=gt.dt)
    except ParseError as e:
        logger.debug(f"Unparseable response for {scenario.id}: {e}")
        return RewardBreakdown(r_acc=penalty_cap, r_format=0, total=-penalty_cap, parse_error=type(e).__name__)

    if len(response.answer) != len(gt):
        logger.debug(f"Waypoint count {len(response.answer)} != {len(gt)} for {scenario.id}")
        return RewardBreakdown(r_acc=penalty_cap, r_format=1, total=1 - penalty_cap, length_penalized=True)

    with np.errstate(over="ignore", invalid="ignore"):
        accuracy = r_acc(response.answer, gt, scenario.anchor, w, gt_profile=gt_profile)
    if not math.isfinite(accuracy.r_acc) or accuracy.r_acc > penalty_cap:
        logger.debug(f"Accuracy error {accuracy.r_acc} capped at {penalty_cap} for {scenario.id}")
        return accuracy.model_copy(update={"r_acc": penalty_cap, "r_format": 1, "total": 1 - penalty_cap, "capped": True})
    return accuracy.model_copy(update={"r_format": 1, "total": 1 - accuracy.r_acc})
