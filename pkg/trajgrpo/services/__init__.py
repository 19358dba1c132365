from .grpo_service import GrpoConfig, GroupSample, train_loop, train_step
from .harness_service import evaluate_corpus, l2_at_horizons, load_scenarios, write_scenarios
from .kinematics_service import check_feasible
from .motion_service import derive_motion, rollout_constant_accel, synth_corpus, synth_scenario
from .policy_service import PolicyParams, policy_mean, policy_sample
from .response_codec import parse_response, serialize_response
from .reward_service import RewardWeights, r_acc, total_reward

__all__ = [
    "GrpoConfig",
    "GroupSample",
    "train_loop",
    "train_step",
    "evaluate_corpus",
    "l2_at_horizons",
    "load_scenarios",
    "write_scenarios",
    "check_feasible",
    "derive_motion",
    "rollout_constant_accel",
    "synth_corpus",
    "synth_scenario",
    "PolicyParams",
    "policy_mean",
    "policy_sample",
    "parse_response",
    "serialize_response",
    "RewardWeights",
    "r_acc",
    "total_reward",
]
