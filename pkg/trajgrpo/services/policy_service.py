"""
Toy Gaussian trajectory policy standing in for the language model.

The mean of every response is the constant-acceleration rollout of the
history plus a linear correction of standardized last-state features; each
of the 2N coordinates is sampled independently with its own standard deviation.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from ..models import DEFAULT_STEPS, Scenario, Trajectory
from .motion_service import rollout_constant_accel

logger = logging.getLogger(__name__)

FEATURE_NAMES = ("x", "y", "vx", "vy", "ax", "ay", "heading")
FEATURE_DIM = len(FEATURE_NAMES)
LOG_STD_MIN = -10.0
LOG_STD_MAX = 2.0
DEFAULT_INIT_LOG_STD = -0.5
MIN_FEATURE_STD = 1e-8


def features(scenario: Scenario) -> np.ndarray:
    last = scenario.anchor
    return np.array(
        [
            last.position.x,
            last.position.y,
            last.velocity.x,
            last.velocity.y,
            last.acceleration.x,
            last.acceleration.y,
            last.heading,
        ]
    )


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    """Fixed affine map (raw - center) / scale applied before the linear correction."""

    center: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        if self.center.shape != (FEATURE_DIM,) or self.scale.shape != (FEATURE_DIM,):
            raise ValueError(f"feature scaler needs {FEATURE_DIM} centers and scales")
        if not (np.all(np.isfinite(self.center)) and np.all(np.isfinite(self.scale)) and np.all(self.scale > 0)):
            raise ValueError("feature scaler must be finite with positive scales")

    @classmethod
    def identity(cls) -> "FeatureScaler":
        return cls(center=np.zeros(FEATURE_DIM), scale=np.ones(FEATURE_DIM))

    @classmethod
    def fit(cls, scenarios: Sequence[Scenario]) -> "FeatureScaler":
        """Per-feature corpus mean and std; constant features keep scale 1."""
        if not scenarios:
            return cls.identity()
        raw = np.array([features(s) for s in scenarios])
        std = raw.std(axis=0)
        return cls(center=raw.mean(axis=0), scale=np.where(std > MIN_FEATURE_STD, std, 1.0))

    def apply(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.center) / self.scale


@dataclass(frozen=True, eq=False)
class PolicyParams:
    weight: np.ndarray
    bias: np.ndarray
    log_std: np.ndarray
    scaler: FeatureScaler = field(default_factory=FeatureScaler.identity)

    def __post_init__(self):
        n = self.bias.shape[0]
        if self.weight.shape != (n, FEATURE_DIM) or self.log_std.shape != (n,):
            raise ValueError(
                f"inconsistent policy shapes: weight {self.weight.shape}, bias {self.bias.shape}, "
                f"log_std {self.log_std.shape}"
            )
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias)) and np.all(np.isfinite(self.log_std))):
            raise ValueError("policy parameters must be finite")

    @classmethod
    def zeros(
        cls,
        steps: int = DEFAULT_STEPS,
        init_log_std: float = DEFAULT_INIT_LOG_STD,
        scaler: Optional[FeatureScaler] = None,
    ) -> "PolicyParams":
        n = 2 * steps
        return cls(
            weight=np.zeros((n, FEATURE_DIM)),
            bias=np.zeros(n),
            log_std=np.full(n, float(np.clip(init_log_std, LOG_STD_MIN, LOG_STD_MAX))),
            scaler=scaler or FeatureScaler.identity(),
        )

    @property
    def steps(self) -> int:
        return self.bias.shape[0] // 2

    @property
    def size(self) -> int:
        return self.weight.size + self.bias.size + self.log_std.size

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.weight.ravel(), self.bias, self.log_std])

    def unflatten(self, vector: np.ndarray) -> "PolicyParams":
        """Parameters of the same shape and scaler as self, read from a flat vector."""
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.size,):
            raise ValueError(f"expected a vector of length {self.size}, got {vector.shape}")
        w_end = self.weight.size
        b_end = w_end + self.bias.size
        return PolicyParams(
            weight=vector[:w_end].reshape(self.weight.shape).copy(),
            bias=vector[w_end:b_end].copy(),
            log_std=vector[b_end:].copy(),
            scaler=self.scaler,
        )

    def step(self, direction: "PolicyParams", scale: float) -> "PolicyParams":
        """self + scale * direction, with log_std clamped to its admissible range."""
        return PolicyParams(
            weight=self.weight + scale * direction.weight,
            bias=self.bias + scale * direction.bias,
            log_std=np.clip(self.log_std + scale * direction.log_std, LOG_STD_MIN, LOG_STD_MAX),
            scaler=self.scaler,
        )

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            weight=self.weight.copy(), bias=self.bias.copy(), log_std=self.log_std.copy(), scaler=self.scaler
        )

    def norm(self) -> float:
        return float(np.linalg.norm(self.flatten()))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "weight": self.weight.tolist(),
            "bias": self.bias.tolist(),
            "log_std": self.log_std.tolist(),
            "feature_center": self.scaler.center.tolist(),
            "feature_scale": self.scaler.scale.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PolicyParams":
        """Parameters read from a file; log_std outside [LOG_STD_MIN, LOG_STD_MAX] is rejected."""
        log_std = np.asarray(data["log_std"], dtype=float)
        if np.any(log_std < LOG_STD_MIN) or np.any(log_std > LOG_STD_MAX):
            raise ValueError(f"log_std must lie in [{LOG_STD_MIN}, {LOG_STD_MAX}]")
        scaler = FeatureScaler.identity()
        if "feature_center" in data or "feature_scale" in data:
            scaler = FeatureScaler(
                center=np.asarray(data.get("feature_center", scaler.center), dtype=float),
                scale=np.asarray(data.get("feature_scale", scaler.scale), dtype=float),
            )
        return cls(
            weight=np.asarray(data["weight"], dtype=float),
            bias=np.asarray(data["bias"], dtype=float),
            log_std=log_std,
            scaler=scaler,
        )


def scaled_features(params: PolicyParams, scenario: Scenario) -> np.ndarray:
    return params.scaler.apply(features(scenario))


def mean_offset(params: PolicyParams, scenario: Scenario) -> np.ndarray:
    """Linear correction added to the rollout."""
    return params.weight @ scaled_features(params, scenario) + params.bias


def baseline_vector(scenario: Scenario, steps: int) -> np.ndarray:
    rollout = rollout_constant_accel(scenario.history, steps, scenario.ground_truth.dt)
    return rollout.as_array().ravel()


def mean_vector(params: PolicyParams, scenario: Scenario, baseline: Optional[np.ndarray] = None) -> np.ndarray:
    if baseline is None:
        baseline = baseline_vector(scenario, params.steps)
    return baseline + mean_offset(params, scenario)


def log_prob(params: PolicyParams, samples: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Gaussian log-density of each row of samples (G x 2N) around mean."""
    return norm.logpdf(np.atleast_2d(samples), loc=mean, scale=np.exp(params.log_std)).sum(axis=1)


def draw(params: PolicyParams, mean: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, float]:
    sample = mean + np.exp(params.log_std) * rng.standard_normal(mean.shape[0])
    return sample, float(log_prob(params, sample, mean)[0])


def policy_sample(params: PolicyParams, scenario: Scenario, rng: np.random.Generator) -> Tuple[Trajectory, float]:
    sample, logp = draw(params, mean_vector(params, scenario), rng)
    return Trajectory.from_array(sample, dt=scenario.ground_truth.dt), logp


def policy_mean(params: PolicyParams, scenario: Scenario) -> Trajectory:
    return Trajectory.from_array(mean_vector(params, scenario), dt=scenario.ground_truth.dt)


def kl_divergence(p: PolicyParams, ref: PolicyParams, scenario: Scenario) -> float:
    """Closed-form KL(p || ref) between the diagonal Gaussians both policies induce on this scenario."""
    shift = mean_offset(p, scenario) - mean_offset(ref, scenario)
    var_ratio = np.exp(2.0 * (p.log_std - ref.log_std))
    ref_var = np.exp(2.0 * ref.log_std)
    per_coord = (ref.log_std - p.log_std) + 0.5 * var_ratio + 0.5 * shift * shift / ref_var - 0.5
    return float(max(per_coord.sum(), 0.0))


def kl_gradient(p: PolicyParams, ref: PolicyParams, scenario: Scenario) -> Tuple[np.ndarray, np.ndarray]:
    """d KL / d mean and d KL / d log_std, per coordinate."""
    shift = mean_offset(p, scenario) - mean_offset(ref, scenario)
    ref_var = np.exp(2.0 * ref.log_std)
    d_mean = shift / ref_var
    d_log_std = np.exp(2.0 * (p.log_std - ref.log_std)) - 1.0
    return d_mean, d_log_std


def sft_warm_start(scenarios: Sequence[Scenario], params: PolicyParams) -> PolicyParams:
    """
    Supervised warm start: least-squares fit of weight and bias so the policy mean
    matches the ground truth over the corpus. log_std and the scaler are kept.
    """
    if not scenarios:
        raise ValueError("supervised warm start needs at least one scenario")
    n = 2 * params.steps
    design = []
    targets = []
    for scenario in scenarios:
        if len(scenario.ground_truth) != params.steps:
            raise ValueError(
                f"scenario {scenario.id} has {len(scenario.ground_truth)} waypoints, policy predicts {params.steps}"
            )
        design.append(np.append(scaled_features(params, scenario), 1.0))
        targets.append(scenario.ground_truth.as_array().ravel() - baseline_vector(scenario, params.steps))

    coef, _, rank, _ = np.linalg.lstsq(np.array(design), np.array(targets).reshape(-1, n), rcond=None)
    logger.info(f"🎯 Supervised warm start on {len(scenarios)} scenarios (design rank {rank})")
    return PolicyParams(
        weight=coef[:-1].T.copy(),
        bias=coef[-1].copy(),
        log_std=params.log_std.copy(),
        scaler=params.scaler,
    )
