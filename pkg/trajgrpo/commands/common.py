import logging
from pathlib import Path
from typing import List, Optional, Sequence

import click

from ..config import Config
from ..models import Scenario, Vec2
from ..services.harness_service import load_scenarios
from ..services.motion_service import SCENARIO_KINDS, synth_corpus
from ..services.report_service import REPORT_FORMATS
from ..services.reward_service import RewardWeights

logger = logging.getLogger(__name__)


def parse_kinds(ctx, param, value: Optional[str]) -> Sequence[str]:
    if not value:
        return SCENARIO_KINDS
    kinds = tuple(k.strip() for k in value.split(",") if k.strip())
    unknown = [k for k in kinds if k not in SCENARIO_KINDS]
    if unknown or not kinds:
        raise click.BadParameter(f"unknown kinds {unknown}, expected a subset of {','.join(SCENARIO_KINDS)}")
    return kinds


def parse_weights(ctx, param, value: Optional[str]) -> Optional[RewardWeights]:
    if value is None:
        return None
    try:
        return RewardWeights.parse(value)
    except ValueError as e:
        raise click.BadParameter(str(e)) from e


def parse_offset(ctx, param, value: Optional[str]) -> Optional[Vec2]:
    if value is None:
        return None
    parts = value.split(",")
    try:
        if len(parts) != 2:
            raise ValueError
        return Vec2.of(float(parts[0]), float(parts[1]))
    except ValueError:
        raise click.BadParameter(f"expected 'x,y', got '{value}'")


def parse_int_list(ctx, param, value: str) -> List[int]:
    try:
        values = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got '{value}'")
    if not values:
        raise click.BadParameter("at least one value is required")
    return values


def report_options(func):
    func = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the report to a file")(func)
    func = click.option(
        "--format", "fmt", type=click.Choice(REPORT_FORMATS), default="table", show_default=True, help="Report format"
    )(func)
    return func


def corpus_options(func):
    func = click.option("--kinds", callback=parse_kinds, default=None, help="Synthetic scenario kinds, comma-separated")(func)
    func = click.option("--count", type=click.IntRange(min=1), default=100, show_default=True, help="Synthetic scenario count")(func)
    func = click.option("--scenarios", type=click.Path(dir_okay=False), default=None, help="Scenario JSONL file")(func)
    func = click.option("--seed", type=click.IntRange(min=0), default=None, help="Random seed")(func)
    return func


def training_options(func):
    func = click.option("--workers", type=click.IntRange(1, 64), default=None, help="Threads per group")(func)
    func = click.option("--clip-range", type=click.FloatRange(min=0, min_open=True), default=None)(func)
    func = click.option("--init-log-std", type=click.FloatRange(-10.0, 2.0), default=None)(func)
    func = click.option("--weights", callback=parse_weights, default=None, help="Reward weights pos,ste,vel,tem")(func)
    func = click.option("--iterations", type=click.IntRange(min=0), default=None)(func)
    func = click.option("--optimizer", type=click.Choice(["adam", "sgd"]), default=None, help="Update rule")(func)
    func = click.option("--lr", type=click.FloatRange(min=0), default=None, help="Learning rate")(func)
    func = click.option("--beta", type=click.FloatRange(min=0), default=None, help="KL coefficient")(func)
    func = click.option("--group-size", type=click.IntRange(2, 64), default=None, help="Responses per group (G)")(func)
    return func


def resolve_seed(config: Config, seed: Optional[int]) -> int:
    return config.seed if seed is None else seed


def resolve_corpus(
    config: Config, scenarios_path: Optional[str], seed: int, count: int, kinds: Sequence[str]
) -> List[Scenario]:
    if scenarios_path:
        scenarios = load_scenarios(Path(scenarios_path))
    else:
        scenarios = synth_corpus(seed, count, kinds, config.vehicle_spec())
        logger.info(config.message("log_messages", "scenarios_generated", count=len(scenarios), kinds=",".join(kinds)))
    return scenarios
