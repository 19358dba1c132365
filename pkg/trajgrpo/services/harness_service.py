"""
Evaluation harness: horizon L2 metrics, scenario and prediction files,
corpus evaluation and the reward-ablation, training-stage and group-size experiments.

Scenario files are UTF-8 JSON lines. The first line is a header
{"format": "trajgrpo-scenarios", "version": 1, "dt": 0.5}; every further
line is one self-contained scenario record.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..models import History, Scenario, Trajectory, Vec2, VehicleSpec, VehicleState
from .grpo_service import GrpoConfig, StepDiagnostics, train_loop
from .kinematics_service import KinematicsError, check_feasible
from .motion_service import derive_motion, perturb_ground_truth, rollout_constant_accel
from .policy_service import FeatureScaler, PolicyParams, policy_mean, sft_warm_start
from .response_codec import ParseError, format_reward, parse_response, validate_cot
from .reward_service import COMPONENTS, RewardWeights, r_tem, total_reward

logger = logging.getLogger(__name__)

FILE_FORMAT = "trajgrpo-scenarios"
FILE_VERSION = 1
HORIZONS = (1.0, 2.0, 3.0)
DEFAULT_SHIFT = Vec2(x=0.6, y=-0.4)
GROUP_SIZES = (2, 4, 6, 8)
STAGES = ("sft", "rl", "sft+rl")

Predictor = Callable[[Scenario], Trajectory]
PathLike = Union[str, Path]


class EvaluationError(ValueError):
    pass


class ScenarioFileError(ValueError):
    def __init__(self, line: int, field: str, detail: str):
        self.line = line
        self.field = field
        super().__init__(f"line {line}: field '{field}': {detail}")


class AcceptanceCheckFailed(Exception):
    pass


class EvalRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    scenario_id: Optional[str] = None
    l2_1s: Optional[float] = None
    l2_2s: Optional[float] = None
    l2_3s: Optional[float] = None
    l2_avg: Optional[float] = None
    count: int = 1
    skipped: int = 0
    error: Optional[str] = None


class CorpusEvaluation(BaseModel):
    corpus: EvalRow
    rows: List[EvalRow]


class AblationRow(BaseModel):
    label: str
    weights: str
    l2_1s: Optional[float] = None
    l2_2s: Optional[float] = None
    l2_3s: Optional[float] = None
    l2_avg: Optional[float] = None
    mean_r_tem: Optional[float] = None
    train_r_tem: Optional[float] = None
    final_reward: Optional[float] = None


class SweepRow(BaseModel):
    group_size: int
    l2_avg_median: float
    l2_avg_runs: List[float]


class FeasibilityRow(BaseModel):
    scenario_id: str
    min_radius_ok: Optional[bool] = None
    min_radius: Optional[float] = None
    lateral_accel_ok: Optional[bool] = None
    max_lateral_accel: Optional[float] = None
    jerk_ok: Optional[bool] = None
    max_jerk: Optional[float] = None
    overall: Optional[bool] = None
    error: Optional[str] = None


class ResponseScoreRow(BaseModel):
    scenario_id: str
    r_format: int
    r_pos: Optional[float] = None
    r_ste: Optional[float] = None
    r_vel: Optional[float] = None
    r_tem: Optional[float] = None
    r_acc: float
    total: float
    parse_error: Optional[str] = None


class CotCheckRow(BaseModel):
    scenario_id: str
    format_ok: bool
    stages_present: int
    ordered: bool
    missing: str


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def horizon_indices(dt: float, length: int) -> Tuple[int, ...]:
    indices = []
    for horizon in HORIZONS:
        steps = horizon / dt
        if abs(steps - round(steps)) > 1e-9 or round(steps) > length:
            raise EvaluationError(f"horizon {horizon}s does not land on a waypoint of a {length}-step trajectory at dt={dt}")
        indices.append(int(round(steps)) - 1)
    return tuple(indices)


def l2_at_horizons(pred: Trajectory, gt: Trajectory) -> EvalRow:
    """Endpoint distance at 1 s, 2 s and 3 s and their plain average."""
    if len(pred) != len(gt):
        raise EvaluationError(f"prediction has {len(pred)} waypoints, ground truth {len(gt)}")
    if abs(pred.dt - gt.dt) > 1e-12:
        raise EvaluationError(f"dt mismatch: {pred.dt} != {gt.dt}")
    i1, i2, i3 = horizon_indices(gt.dt, len(gt))
    diff = pred.as_array() - gt.as_array()
    dist = np.hypot(diff[:, 0], diff[:, 1])
    l1, l2, l3 = float(dist[i1]), float(dist[i2]), float(dist[i3])
    return EvalRow(l2_1s=l1, l2_2s=l2, l2_3s=l3, l2_avg=(l1 + l2 + l3) / 3.0)


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------


class _StateRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    t: float
    position: Tuple[float, float]
    velocity: Tuple[float, float]
    acceleration: Tuple[float, float]
    heading: float = 0.0
    steering: float = 0.0


class ScenarioRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str = Field(min_length=1)
    dt: float = Field(gt=0)
    history: List[_StateRecord] = Field(min_length=2)
    ground_truth: List[Tuple[float, float]] = Field(min_length=1)
    spec: VehicleSpec = Field(default_factory=VehicleSpec)

    def to_scenario(self) -> Scenario:
        states = [
            VehicleState(
                t=s.t,
                position=Vec2.of(*s.position),
                velocity=Vec2.of(*s.velocity),
                acceleration=Vec2.of(*s.acceleration),
                heading=s.heading,
                steering=s.steering,
            )
            for s in self.history
        ]
        return Scenario(
            id=self.id,
            history=History(states=states),
            ground_truth=Trajectory.from_points(self.ground_truth, dt=self.dt),
            spec=self.spec,
        )

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "ScenarioRecord":
        return cls(
            id=scenario.id,
            dt=scenario.ground_truth.dt,
            history=[
                _StateRecord(
                    t=s.t,
                    position=s.position.as_tuple(),
                    velocity=s.velocity.as_tuple(),
                    acceleration=s.acceleration.as_tuple(),
                    heading=s.heading,
                    steering=s.steering,
                )
                for s in scenario.history.states
            ],
            ground_truth=[w.as_tuple() for w in scenario.ground_truth.waypoints],
            spec=scenario.spec,
        )


def _field_of(error: ValidationError) -> str:
    first = error.errors()[0]
    return ".".join(str(part) for part in first["loc"]) or "record"


def _json_lines(path: PathLike):
    """(line number, decoded object) for every non-blank line."""
    with open(path, "r", encoding="utf-8") as f:
        for number, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                data = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ScenarioFileError(number, "json", e.msg) from e
            if not isinstance(data, dict):
                raise ScenarioFileError(number, "record", "expected a JSON object")
            yield number, data


def load_scenarios(path: PathLike) -> List[Scenario]:
    """Order-preserving load; malformed lines raise ScenarioFileError naming line and field."""
    scenarios: List[Scenario] = []
    dt: Optional[float] = None
    for number, data in _json_lines(path):
        if dt is None:
            if data.get("format") != FILE_FORMAT:
                raise ScenarioFileError(number, "format", f"expected header with format '{FILE_FORMAT}'")
            if data.get("version") != FILE_VERSION:
                raise ScenarioFileError(number, "version", f"unsupported version {data.get('version')!r}")
            dt = data.get("dt")
            if not isinstance(dt, (int, float)) or dt <= 0:
                raise ScenarioFileError(number, "dt", "header dt must be a positive number")
            continue

        try:
            record = ScenarioRecord.model_validate(data)
        except ValidationError as e:
            raise ScenarioFileError(number, _field_of(e), e.errors()[0]["msg"]) from e
        if abs(record.dt - dt) > 1e-12:
            raise ScenarioFileError(number, "dt", f"record dt {record.dt} differs from file dt {dt}")
        try:
            scenarios.append(record.to_scenario())
        except ValidationError as e:
            raise ScenarioFileError(number, _field_of(e), e.errors()[0]["msg"]) from e

    logger.info(f"📂 Loaded {len(scenarios)} scenarios from {path}")
    return scenarios


def write_scenarios(path: PathLike, scenarios: Sequence[Scenario]) -> None:
    dts = {s.ground_truth.dt for s in scenarios}
    if len(dts) > 1:
        raise EvaluationError(f"scenarios in one file must share dt, got {sorted(dts)}")
    dt = dts.pop() if dts else 0.5
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps({"format": FILE_FORMAT, "version": FILE_VERSION, "dt": dt}) + "\n")
        for scenario in scenarios:
            f.write(ScenarioRecord.from_scenario(scenario).model_dump_json() + "\n")
    logger.info(f"💾 Wrote {len(scenarios)} scenarios to {path}")


def load_responses(path: PathLike) -> Dict[str, str]:
    """Raw response text per scenario id from a JSONL file of {"id", "response"} objects."""
    responses: Dict[str, str] = {}
    for number, data in _json_lines(path):
        for key in ("id", "response"):
            if not isinstance(data.get(key), str):
                raise ScenarioFileError(number, key, "missing or not a string")
        responses[data["id"]] = data["response"]
    return responses


def load_predictions(path: PathLike, dt: float = 0.5) -> Dict[str, Trajectory]:
    predictions: Dict[str, Trajectory] = {}
    for number, data in _json_lines(path):
        for key in ("id", "response"):
            if not isinstance(data.get(key), str):
                raise ScenarioFileError(number, key, "missing or not a string")
        try:
            predictions[data["id"]] = parse_response(data["response"], dt=dt).answer
        except ParseError as e:
            raise ScenarioFileError(number, "response", str(e)) from e
    return predictions


# ---------------------------------------------------------------------------
# Predictors and corpus evaluation
# ---------------------------------------------------------------------------


def baseline_predictor(scenario: Scenario) -> Trajectory:
    gt = scenario.ground_truth
    return rollout_constant_accel(scenario.history, len(gt), gt.dt)


def ground_truth_predictor(scenario: Scenario) -> Trajectory:
    return scenario.ground_truth


def policy_predictor(params: PolicyParams) -> Predictor:
    def predict(scenario: Scenario) -> Trajectory:
        return policy_mean(params, scenario)

    return predict


def file_predictor(predictions: Mapping[str, Trajectory]) -> Predictor:
    def predict(scenario: Scenario) -> Trajectory:
        if scenario.id not in predictions:
            raise EvaluationError(f"no prediction for scenario '{scenario.id}'")
        return predictions[scenario.id]

    return predict


def _evaluate_one(scenario: Scenario, predictor: Predictor) -> EvalRow:
    try:
        row = l2_at_horizons(predictor(scenario), scenario.ground_truth)
    except Exception as e:
        logger.warning(f"⚠️ Skipping scenario {scenario.id}: {e}")
        return EvalRow(scenario_id=scenario.id, count=0, skipped=1, error=str(e))
    return row.model_copy(update={"scenario_id": scenario.id})


def aggregate(rows: Sequence[EvalRow]) -> EvalRow:
    """Unweighted mean over evaluated rows; fsum keeps the result independent of row order."""
    done = [r for r in rows if not r.skipped]
    skipped = len(rows) - len(done)
    if not done:
        return EvalRow(scenario_id="corpus", count=0, skipped=skipped)

    def mean(field: str) -> float:
        return math.fsum(getattr(r, field) for r in done) / len(done)

    l1, l2, l3 = mean("l2_1s"), mean("l2_2s"), mean("l2_3s")
    return EvalRow(
        scenario_id="corpus",
        l2_1s=l1,
        l2_2s=l2,
        l2_3s=l3,
        l2_avg=(l1 + l2 + l3) / 3.0,
        count=len(done),
        skipped=skipped,
    )


def evaluate_corpus(scenarios: Sequence[Scenario], predictor: Predictor, workers: int = 1) -> CorpusEvaluation:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(lambda s: _evaluate_one(s, predictor), scenarios))
    else:
        rows = [_evaluate_one(s, predictor) for s in scenarios]
    corpus = aggregate(rows)
    if corpus.skipped:
        logger.warning(f"⚠️ {corpus.skipped} of {len(rows)} scenarios skipped during evaluation")
    return CorpusEvaluation(corpus=corpus, rows=rows)


def feasibility_table(scenarios: Sequence[Scenario], predictor: Predictor) -> List[FeasibilityRow]:
    rows = []
    for scenario in scenarios:
        try:
            report = check_feasible(predictor(scenario), scenario.anchor, scenario.spec)
        except (KinematicsError, EvaluationError) as e:
            rows.append(FeasibilityRow(scenario_id=scenario.id, error=str(e)))
            continue
        rows.append(
            FeasibilityRow(
                scenario_id=scenario.id,
                min_radius_ok=report.min_radius_ok,
                min_radius=report.min_radius,
                lateral_accel_ok=report.lateral_accel_ok,
                max_lateral_accel=report.max_lateral_accel,
                jerk_ok=report.jerk_ok,
                max_jerk=report.max_jerk,
                overall=report.overall,
            )
        )
    return rows


def score_responses(
    scenarios: Sequence[Scenario],
    responses: Mapping[str, str],
    weights: RewardWeights = RewardWeights(),
    penalty_cap: float = 100.0,
) -> List[ResponseScoreRow]:
    rows = []
    for scenario in scenarios:
        if scenario.id not in responses:
            logger.warning(f"⚠️ No response for scenario {scenario.id}")
            continue
        b = total_reward(responses[scenario.id], scenario, weights, penalty_cap)
        rows.append(
            ResponseScoreRow(
                scenario_id=scenario.id,
                r_format=b.r_format,
                r_pos=b.r_pos,
                r_ste=b.r_ste,
                r_vel=b.r_vel,
                r_tem=b.r_tem,
                r_acc=b.r_acc,
                total=b.total,
                parse_error=b.parse_error,
            )
        )
    return rows


def check_responses(responses: Mapping[str, str]) -> List[CotCheckRow]:
    rows = []
    for scenario_id, text in responses.items():
        report = validate_cot(text)
        rows.append(
            CotCheckRow(
                scenario_id=scenario_id,
                format_ok=bool(format_reward(text)),
                stages_present=sum(report.stage_present),
                ordered=report.ordered,
                missing=";".join(report.missing),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


ABLATIONS: Dict[str, Tuple[str, ...]] = {
    "full": (),
    "w/o pos": ("pos",),
    "w/o ste": ("ste",),
    "w/o vel": ("vel",),
    "w/o tem": ("tem",),
    "all off": COMPONENTS,
}


def mean_prediction_r_tem(scenarios: Sequence[Scenario], predictor: Predictor) -> float:
    values = [r_tem(derive_motion(predictor(s), s.anchor)) for s in scenarios]
    return math.fsum(values) / len(values)


def shift_corpus(scenarios: Sequence[Scenario], offset: Vec2 = DEFAULT_SHIFT) -> List[Scenario]:
    return [perturb_ground_truth(s, offset) for s in scenarios]


def run_ablation(
    scenarios: Sequence[Scenario],
    config: GrpoConfig,
    toggles: Optional[Mapping[str, Sequence[str]]] = None,
    progress: bool = False,
) -> List[AblationRow]:
    """
    Train one policy per toggle set (named components get weight zero) with
    identical seeds and evaluate each policy mean on the same corpus.
    The first row is the untrained physics baseline.
    """
    toggles = ABLATIONS if toggles is None else toggles
    rows = [_baseline_row(scenarios)]
    for label, components in toggles.items():
        weights = config.weights.without(*components)
        run_config = config.model_copy(update={"weights": weights})
        logger.info(f"🧪 Ablation '{label}' with weights {weights.as_text()}")
        params, history = train_loop(scenarios, run_config, progress=progress)
        rows.append(_trained_row(label, weights.as_text(), scenarios, params, history))
    return rows


def run_stage_ablation(
    scenarios: Sequence[Scenario],
    config: GrpoConfig,
    stages: Sequence[str] = STAGES,
    progress: bool = False,
) -> List[AblationRow]:
    """
    Compare training stages on one corpus: supervised warm start alone, GRPO from
    scratch, and GRPO started (and KL-anchored) at the warm-start policy.
    The first row is the untrained physics baseline.
    """
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise EvaluationError(f"unknown stages {unknown}, expected a subset of {list(STAGES)}")
    if not scenarios:
        raise EvaluationError("stage ablation needs at least one scenario")

    steps = len(scenarios[0].ground_truth)
    start = PolicyParams.zeros(steps, config.init_log_std, FeatureScaler.fit(scenarios))
    warm = sft_warm_start(scenarios, start) if {"sft", "sft+rl"} & set(stages) else None
    weights = config.weights.as_text()

    rows = [_baseline_row(scenarios)]
    for stage in stages:
        logger.info(f"🧪 Stage '{stage}'")
        if stage == "sft":
            rows.append(_trained_row(stage, "-", scenarios, warm, []))
        elif stage == "rl":
            params, history = train_loop(scenarios, config, progress=progress)
            rows.append(_trained_row(stage, weights, scenarios, params, history))
        else:
            params, history = train_loop(scenarios, config, initial=warm, progress=progress)
            rows.append(_trained_row(stage, weights, scenarios, params, history))
    return rows


def _baseline_row(scenarios: Sequence[Scenario]) -> AblationRow:
    baseline = evaluate_corpus(scenarios, baseline_predictor).corpus
    return AblationRow(
        label="baseline",
        weights="-",
        **baseline.model_dump(include={"l2_1s", "l2_2s", "l2_3s", "l2_avg"}),
        mean_r_tem=mean_prediction_r_tem(scenarios, baseline_predictor),
    )


def _trained_row(
    label: str,
    weights: str,
    scenarios: Sequence[Scenario],
    params: PolicyParams,
    history: Sequence[StepDiagnostics],
) -> AblationRow:
    predictor = policy_predictor(params)
    corpus = evaluate_corpus(scenarios, predictor).corpus
    train_tem = [d.mean_r_tem for d in history if d.mean_r_tem is not None]
    return AblationRow(
        label=label,
        weights=weights,
        **corpus.model_dump(include={"l2_1s", "l2_2s", "l2_3s", "l2_avg"}),
        mean_r_tem=mean_prediction_r_tem(scenarios, predictor),
        train_r_tem=math.fsum(train_tem) / len(train_tem) if train_tem else None,
        final_reward=history[-1].mean_reward if history else None,
    )


def sweep_group_sizes(
    scenarios: Sequence[Scenario],
    config: GrpoConfig,
    sizes: Sequence[int] = GROUP_SIZES,
    seeds: int = 3,
    progress: bool = False,
) -> List[SweepRow]:
    """Corpus l2_avg of the trained policy mean per group size, median over seeds."""
    rows = []
    for size in sizes:
        runs = []
        for offset in range(seeds):
            run_config = config.model_copy(update={"group_size": size, "seed": config.seed + offset})
            params, _ = train_loop(scenarios, run_config, progress=progress)
            runs.append(evaluate_corpus(scenarios, policy_predictor(params)).corpus.l2_avg)
        median = float(np.median(runs))
        logger.info(f"📊 G={size}: median l2_avg {median:.6f} over {seeds} seeds")
        rows.append(SweepRow(group_size=size, l2_avg_median=median, l2_avg_runs=runs))
    return rows


def params_to_json(params: PolicyParams) -> str:
    return json.dumps(params.to_dict())


def params_from_json(text: str) -> PolicyParams:
    data: Dict[str, Any] = json.loads(text)
    return PolicyParams.from_dict(data)
