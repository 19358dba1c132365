import logging
from pathlib import Path

import click

from ..services.harness_service import (
    AcceptanceCheckFailed,
    baseline_predictor,
    evaluate_corpus,
    feasibility_table,
    file_predictor,
    ground_truth_predictor,
    load_predictions,
    load_responses,
    params_from_json,
    policy_predictor,
    score_responses,
)
from ..services.report_service import emit, render
from ..utils.logger import RunContext, log_with_extra, make_run_id
from .common import corpus_options, parse_weights, report_options, resolve_corpus, resolve_seed

logger = logging.getLogger(__name__)

PREDICTORS = ("baseline", "truth", "policy", "file")


def setup_evaluation_commands(cli, config):
    @cli.command("eval")
    @corpus_options
    @click.option("--predictor", type=click.Choice(PREDICTORS), default="baseline", show_default=True)
    @click.option("--params", type=click.Path(exists=True, dir_okay=False), default=None,
                  help="Policy parameters JSON (predictor=policy)")
    @click.option("--predictions", type=click.Path(exists=True, dir_okay=False), default=None,
                  help="JSONL of {id, response} (predictor=file)")
    @click.option("--per-scenario", is_flag=True, help="Report one row per scenario after the corpus row")
    @click.option("--feasibility", is_flag=True, help="Report kinematic feasibility instead of L2")
    @click.option("--assert-max-l2", type=float, default=None, help="Exit 3 if corpus l2_avg exceeds this")
    @click.option("--workers", type=click.IntRange(1, 64), default=None)
    @report_options
    def evaluate(seed, scenarios, count, kinds, predictor, params, predictions, per_scenario, feasibility,
                 assert_max_l2, workers, fmt, out):
        """L2 error at 1 s, 2 s and 3 s for a predictor over a corpus."""
        seed = resolve_seed(config, seed)
        with RunContext(make_run_id("eval", seed)):
            corpus = resolve_corpus(config, scenarios, seed, count, kinds)

            if predictor == "baseline":
                predict = baseline_predictor
            elif predictor == "truth":
                predict = ground_truth_predictor
            elif predictor == "policy":
                if not params:
                    raise click.UsageError("--predictor policy requires --params")
                predict = policy_predictor(params_from_json(Path(params).read_text(encoding="utf-8")))
            else:
                if not predictions:
                    raise click.UsageError("--predictor file requires --predictions")
                dt = corpus[0].ground_truth.dt if corpus else 0.5
                predict = file_predictor(load_predictions(Path(predictions), dt=dt))

            if feasibility:
                emit(render(feasibility_table(corpus, predict), fmt, config.decimals), out)
                return

            result = evaluate_corpus(corpus, predict, workers or config.workers)
            rows = [result.corpus] + (result.rows if per_scenario else [])
            emit(render(rows, fmt, config.decimals), out)
            log_with_extra(
                logger,
                logging.INFO,
                config.message("log_messages", "evaluation_done", count=result.corpus.count, l2_avg=result.corpus.l2_avg),
                predictor=predictor,
                skipped=result.corpus.skipped,
            )

            if assert_max_l2 is not None:
                l2_avg = result.corpus.l2_avg
                if l2_avg is None or l2_avg > assert_max_l2:
                    raise AcceptanceCheckFailed(
                        config.message("error_messages", "acceptance_failed",
                                       detail=f"corpus l2_avg {l2_avg} > {assert_max_l2}")
                    )

    @cli.command("reward")
    @corpus_options
    @click.option("--responses", type=click.Path(exists=True, dir_okay=False), required=True,
                  help="JSONL of {id, response}")
    @click.option("--weights", callback=parse_weights, default=None, help="Reward weights pos,ste,vel,tem")
    @click.option("--penalty-cap", type=click.FloatRange(min=0, min_open=True), default=None)
    @report_options
    def reward(seed, scenarios, count, kinds, responses, weights, penalty_cap, fmt, out):
        """Score responses with the format and physics-grounded rewards."""
        seed = resolve_seed(config, seed)
        with RunContext(make_run_id("reward", seed)):
            corpus = resolve_corpus(config, scenarios, seed, count, kinds)
            rows = score_responses(
                corpus,
                load_responses(Path(responses)),
                weights or config.reward_weights,
                penalty_cap or config.penalty_cap,
            )
            emit(render(rows, fmt, config.decimals), out)
            if rows:
                mean_total = sum(r.total for r in rows) / len(rows)
                logger.info(f"📊 Scored {len(rows)} responses, mean total reward {mean_total:.6f}")
