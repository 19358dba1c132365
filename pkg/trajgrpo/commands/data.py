import json
import logging
from pathlib import Path

import click

from ..services.harness_service import (
    baseline_predictor,
    check_responses,
    load_responses,
    shift_corpus,
    write_scenarios,
)
from ..services.motion_service import synth_corpus
from ..services.report_service import emit, render
from ..services.response_codec import ModelResponse, render_cot, serialize_response
from ..utils.logger import RunContext, make_run_id
from .common import parse_kinds, parse_offset, report_options, resolve_seed

logger = logging.getLogger(__name__)


def setup_data_commands(cli, config):
    @cli.command("gen")
    @click.option("--seed", type=click.IntRange(min=0), default=None, help="Random seed")
    @click.option("--count", type=click.IntRange(min=1), default=100, show_default=True)
    @click.option("--kinds", callback=parse_kinds, default=None, help="Scenario kinds, comma-separated")
    @click.option("--shift", callback=parse_offset, default=None, help="Translate ground truth by 'x,y' metres")
    @click.option("--out", type=click.Path(dir_okay=False), required=True, help="Scenario JSONL file to write")
    @click.option("--responses-out", type=click.Path(dir_okay=False), default=None,
                  help="Also write physics-baseline responses with rendered reasoning")
    def gen(seed, count, kinds, shift, out, responses_out):
        """Generate a synthetic scenario corpus."""
        seed = resolve_seed(config, seed)
        with RunContext(make_run_id("gen", seed)):
            scenarios = synth_corpus(seed, count, kinds, config.vehicle_spec())
            if shift is not None:
                scenarios = shift_corpus(scenarios, shift)
            write_scenarios(Path(out), scenarios)
            logger.info(config.message("log_messages", "scenarios_generated", count=len(scenarios), kinds=",".join(kinds)))

            if responses_out:
                with open(responses_out, "w", encoding="utf-8") as f:
                    for scenario in scenarios:
                        traj = baseline_predictor(scenario)
                        text = serialize_response(
                            ModelResponse(think=render_cot(scenario, traj), answer=traj), config.decimals
                        )
                        f.write(json.dumps({"id": scenario.id, "response": text}) + "\n")
                logger.info(f"💾 Baseline responses written to {responses_out}")

    @cli.command("validate")
    @click.option("--responses", type=click.Path(dir_okay=False), required=True, help="JSONL of {id, response}")
    @report_options
    def validate(responses, fmt, out):
        """Check wire format and reasoning-stage headers of responses."""
        with RunContext(make_run_id("validate")):
            rows = check_responses(load_responses(Path(responses)))
            emit(render(rows, fmt, config.decimals), out)
            ok = sum(r.format_ok for r in rows)
            logger.info(f"✅ {ok}/{len(rows)} responses well-formed")
