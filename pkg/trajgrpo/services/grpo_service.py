"""
Group relative policy optimization over the toy Gaussian trajectory policy.

One step samples G responses for a scenario, scores them through the wire
format and the reward, standardizes rewards within the group, and ascends
the KL-regularized surrogate with its analytic gradient. There is no critic.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from ..models import MotionProfile, Scenario, Trajectory
from .motion_service import derive_motion
from .policy_service import (
    DEFAULT_INIT_LOG_STD,
    FeatureScaler,
    PolicyParams,
    baseline_vector,
    draw,
    kl_divergence,
    kl_gradient,
    log_prob,
    mean_vector,
    scaled_features,
)
from .response_codec import PLACEHOLDER_THINK, serialize_points
from .reward_service import DEFAULT_PENALTY_CAP, RewardBreakdown, RewardWeights, total_reward

logger = logging.getLogger(__name__)

DEFAULT_EPS_STD = 1e-8
ADAM_BETA1 = 0.85
ADAM_BETA2 = 0.99
ADAM_EPS = 1e-8


class GrpoError(ValueError):
    pass


class GrpoConfig(BaseModel):
    """Toy-policy training settings. The defaults are sized for the desk-scale policy, not a VLM."""

    model_config = ConfigDict(frozen=True)

    group_size: int = Field(default=6, ge=2)
    beta: float = Field(default=0.04, ge=0)
    learning_rate: float = Field(default=1e-2, ge=0)
    optimizer: Literal["adam", "sgd"] = "adam"
    iterations: int = Field(default=500, ge=0)
    eps_std: float = Field(default=DEFAULT_EPS_STD, gt=0)
    seed: int = 0
    weights: RewardWeights = Field(default_factory=RewardWeights)
    penalty_cap: float = Field(default=DEFAULT_PENALTY_CAP, gt=0)
    decimals: int = Field(default=6, ge=1, le=9)
    clip_range: Optional[float] = Field(default=None, gt=0)
    init_log_std: float = DEFAULT_INIT_LOG_STD
    workers: int = Field(default=1, ge=1)


@dataclass
class GroupSample:
    """G responses for one scenario with their sampling log-densities, rewards and advantages."""

    samples: np.ndarray
    responses: List[str]
    trajectories: List[Trajectory]
    log_probs_old: np.ndarray
    rewards: np.ndarray
    advantages: np.ndarray
    breakdowns: List[RewardBreakdown]

    @property
    def size(self) -> int:
        return len(self.responses)


class StepDiagnostics(BaseModel):
    model_config = ConfigDict(frozen=True)

    iteration: int
    scenario_id: str
    mean_reward: float
    reward_std: float
    mean_r_pos: Optional[float] = None
    mean_r_tem: Optional[float] = None
    format_rate: float
    kl: float
    surrogate: float
    grad_norm: float
    mean_log_std: float


def advantages(rewards: Sequence[float], eps_std: float = DEFAULT_EPS_STD) -> np.ndarray:
    """Group-standardized rewards with the population std; all zero for a degenerate group."""
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise GrpoError(f"a group needs at least 2 rewards, got {r.size}")
    std = float(np.std(r))
    if std < eps_std:
        return np.zeros_like(r)
    return (r - r.mean()) / std


def _ratio_terms(
    params: PolicyParams, old: Optional[PolicyParams], group: GroupSample, scenario: Scenario
) -> Tuple[np.ndarray, np.ndarray]:
    baseline = baseline_vector(scenario, params.steps)
    mean = mean_vector(params, scenario, baseline)
    if old is None:
        logp_old = group.log_probs_old
    else:
        logp_old = log_prob(old, group.samples, mean_vector(old, scenario, baseline))
    ratio = np.exp(log_prob(params, group.samples, mean) - logp_old)
    return ratio, mean


def _clipped(ratio: np.ndarray, adv: np.ndarray, clip_range: Optional[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Per-member objective terms and the mask of members whose gradient flows through the ratio."""
    raw = ratio * adv
    if clip_range is None:
        return raw, np.ones_like(raw, dtype=bool)
    bounded = np.clip(ratio, 1.0 - clip_range, 1.0 + clip_range) * adv
    return np.minimum(raw, bounded), raw <= bounded


def surrogate(
    params: PolicyParams,
    ref: PolicyParams,
    old: Optional[PolicyParams],
    group: GroupSample,
    scenario: Scenario,
    beta: float,
    clip_range: Optional[float] = None,
) -> float:
    """
    J = mean_i(ratio_i * A_i) - beta * KL(params || ref) on the stored group.
    old=None uses the log-densities recorded when the group was sampled.
    """
    ratio, _ = _ratio_terms(params, old, group, scenario)
    terms, _ = _clipped(ratio, group.advantages, clip_range)
    return float(terms.mean() - beta * kl_divergence(params, ref, scenario))


def grad_surrogate(
    params: PolicyParams,
    ref: PolicyParams,
    old: Optional[PolicyParams],
    group: GroupSample,
    scenario: Scenario,
    beta: float,
    clip_range: Optional[float] = None,
) -> PolicyParams:
    """Analytic gradient of surrogate, returned in the shape of PolicyParams."""
    ratio, mean = _ratio_terms(params, old, group, scenario)
    _, active = _clipped(ratio, group.advantages, clip_range)
    coeff = np.where(active, ratio * group.advantages, 0.0) / group.size

    var = np.exp(2.0 * params.log_std)
    resid = group.samples - mean
    d_mean = coeff @ resid / var
    d_log_std = coeff @ (resid * resid / var - 1.0)

    kl_mean, kl_log_std = kl_gradient(params, ref, scenario)
    d_mean = d_mean - beta * kl_mean
    d_log_std = d_log_std - beta * kl_log_std

    return PolicyParams(
        weight=np.outer(d_mean, scaled_features(params, scenario)), bias=d_mean, log_std=d_log_std, scaler=params.scaler
    )


class PolicyOptimizer:
    """
    Ascent on the surrogate. "adam" keeps bias-corrected first and second moments
    of the flattened gradient; "sgd" steps along the raw gradient.
    """

    def __init__(self, config: GrpoConfig):
        self.kind = config.optimizer
        self.learning_rate = config.learning_rate
        self.steps_taken = 0
        self._m: Optional[np.ndarray] = None
        self._v: Optional[np.ndarray] = None

    def step(self, params: PolicyParams, grad: PolicyParams) -> PolicyParams:
        self.steps_taken += 1
        if self.kind == "sgd":
            return params.step(grad, self.learning_rate)

        g = grad.flatten()
        if self._m is None or self._m.shape != g.shape:
            self._m = np.zeros_like(g)
            self._v = np.zeros_like(g)
        self._m = ADAM_BETA1 * self._m + (1 - ADAM_BETA1) * g
        self._v = ADAM_BETA2 * self._v + (1 - ADAM_BETA2) * g * g
        m_hat = self._m / (1 - ADAM_BETA1 ** self.steps_taken)
        v_hat = self._v / (1 - ADAM_BETA2 ** self.steps_taken)
        return params.step(params.unflatten(m_hat / (np.sqrt(v_hat) + ADAM_EPS)), self.learning_rate)


def member_rng(seed: int, iteration: int, member: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(iteration), int(member)]))


def sample_group(
    params: PolicyParams,
    scenario: Scenario,
    config: GrpoConfig,
    iteration: int = 0,
    gt_profile: Optional[MotionProfile] = None,
) -> GroupSample:
    """Draw, serialize and score G members; member i owns the stream (seed, iteration, i)."""
    mean = mean_vector(params, scenario)
    dt = scenario.ground_truth.dt
    if gt_profile is None:
        gt_profile = derive_motion(scenario.ground_truth, scenario.anchor)

    def run_member(member: int):
        sample, logp = draw(params, mean, member_rng(config.seed, iteration, member))
        text = serialize_points(PLACEHOLDER_THINK, sample.reshape(-1, 2), config.decimals)
        breakdown = total_reward(text, scenario, config.weights, config.penalty_cap, gt_profile=gt_profile)
        return sample, logp, text, breakdown

    members = range(config.group_size)
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            results = list(executor.map(run_member, members))
    else:
        results = [run_member(m) for m in members]

    samples = np.array([r[0] for r in results])
    rewards = np.array([r[3].total for r in results])
    return GroupSample(
        samples=samples,
        responses=[r[2] for r in results],
        trajectories=[Trajectory.from_array(s, dt=dt) for s in samples],
        log_probs_old=np.array([r[1] for r in results]),
        rewards=rewards,
        advantages=advantages(rewards, config.eps_std),
        breakdowns=[r[3] for r in results],
    )


def _mean_of(values: List[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def train_step(
    params: PolicyParams,
    ref: PolicyParams,
    scenario: Scenario,
    config: GrpoConfig,
    iteration: int = 0,
    gt_profile: Optional[MotionProfile] = None,
    optimizer: Optional[PolicyOptimizer] = None,
) -> Tuple[PolicyParams, GroupSample, StepDiagnostics]:
    """
    Sample a group under params, then take one ascent step on the surrogate.
    Without an optimizer a fresh one is used, so Adam's first step is sign-like.
    """
    group = sample_group(params, scenario, config, iteration, gt_profile)

    # params is the sampling policy, so the ratio is 1 here and old=None reuses the recorded densities
    objective = surrogate(params, ref, None, group, scenario, config.beta, config.clip_range)
    grad = grad_surrogate(params, ref, None, group, scenario, config.beta, config.clip_range)
    if optimizer is None:
        optimizer = PolicyOptimizer(config)
    new_params = optimizer.step(params, grad)

    diagnostics = StepDiagnostics(
        iteration=iteration,
        scenario_id=scenario.id,
        mean_reward=float(group.rewards.mean()),
        reward_std=float(group.rewards.std()),
        mean_r_pos=_mean_of([b.r_pos for b in group.breakdowns]),
        mean_r_tem=_mean_of([b.r_tem for b in group.breakdowns]),
        format_rate=float(np.mean([b.r_format for b in group.breakdowns])),
        kl=kl_divergence(params, ref, scenario),
        surrogate=objective,
        grad_norm=grad.norm(),
        mean_log_std=float(params.log_std.mean()),
    )
    return new_params, group, diagnostics


def train_loop(
    scenarios: Sequence[Scenario],
    config: GrpoConfig,
    initial: Optional[PolicyParams] = None,
    progress: bool = False,
    on_step: Optional[Callable[[StepDiagnostics], None]] = None,
) -> Tuple[PolicyParams, List[StepDiagnostics]]:
    """
    Round-robin train_step over scenarios against a reference frozen at the initial params.
    A fresh policy gets its feature scaler fitted on the scenarios.
    """
    if not scenarios:
        raise GrpoError("train_loop needs at least one scenario")
    steps = len(scenarios[0].ground_truth)
    if initial is not None:
        params = initial.copy()
    else:
        params = PolicyParams.zeros(steps, config.init_log_std, FeatureScaler.fit(scenarios))
    if params.steps != steps:
        raise GrpoError(f"policy predicts {params.steps} waypoints but scenarios have {steps}")
    ref = params.copy()
    optimizer = PolicyOptimizer(config)

    gt_profiles = [derive_motion(s.ground_truth, s.anchor) for s in scenarios]
    history: List[StepDiagnostics] = []

    logger.info(
        f"🚀 Training on {len(scenarios)} scenarios: G={config.group_size} beta={config.beta} "
        f"lr={config.learning_rate} optimizer={config.optimizer} iterations={config.iterations} "
        f"weights={config.weights.as_text()}"
    )
    for iteration in tqdm(range(config.iterations), desc="train", disable=not progress, leave=False):
        index = iteration % len(scenarios)
        params, _, diagnostics = train_step(
            params, ref, scenarios[index], config, iteration, gt_profiles[index], optimizer
        )
        history.append(diagnostics)
        logger.debug(
            f"iter={iteration} scenario={diagnostics.scenario_id} reward={diagnostics.mean_reward:.6f} "
            f"kl={diagnostics.kl:.6f} grad_norm={diagnostics.grad_norm:.6f}"
        )
        if on_step is not None:
            on_step(diagnostics)

    if history:
        logger.info(
            f"✅ Training finished: last mean reward {history[-1].mean_reward:.6f}, "
            f"kl {history[-1].kl:.6f}"
        )
    return params, history
