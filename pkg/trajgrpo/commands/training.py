import logging
from pathlib import Path

import click

from ..services.grpo_service import train_loop
from ..services.harness_service import (
    ABLATIONS,
    DEFAULT_SHIFT,
    STAGES,
    params_to_json,
    run_ablation,
    run_stage_ablation,
    shift_corpus,
    sweep_group_sizes,
)
from ..services.policy_service import FeatureScaler, PolicyParams, sft_warm_start
from ..services.report_service import emit, render
from ..services.reward_service import COMPONENTS
from ..utils.logger import RunContext, make_run_id
from .common import corpus_options, parse_int_list, parse_offset, report_options, resolve_corpus, resolve_seed, training_options

logger = logging.getLogger(__name__)


def _grpo_config(config, seed, lr, **training):
    """GrpoConfig from the environment overridden by the training_options flags."""
    return config.grpo_config(seed=seed, learning_rate=lr, **training)


def _parse_toggles(ctx, param, value):
    if not value:
        return None
    toggles = {}
    for label in (v.strip() for v in value.split(";") if v.strip()):
        if label in ABLATIONS:
            toggles[label] = ABLATIONS[label]
            continue
        components = tuple(c.strip() for c in label.split(",") if c.strip())
        unknown = [c for c in components if c not in COMPONENTS]
        if unknown:
            raise click.BadParameter(f"unknown ablation '{label}', use one of {list(ABLATIONS)} or components {COMPONENTS}")
        toggles["w/o " + "+".join(components)] = components
    return toggles


def _parse_stages(ctx, param, value):
    if not value:
        return None
    stages = tuple(s.strip() for s in value.split(",") if s.strip())
    unknown = [s for s in stages if s not in STAGES]
    if unknown or not stages:
        raise click.BadParameter(f"unknown stages {unknown}, expected a subset of {','.join(STAGES)}")
    return stages


def setup_training_commands(cli, config):
    @cli.command("train")
    @corpus_options
    @training_options
    @click.option("--sft", is_flag=True, help="Start from the supervised least-squares fit instead of zeros")
    @click.option("--params-out", type=click.Path(dir_okay=False), default=None, help="Save trained parameters as JSON")
    @click.option("--progress/--no-progress", default=False, help="Show a progress bar on stderr")
    @report_options
    def train(seed, scenarios, count, kinds, sft, params_out, progress, fmt, out, **training):
        """Train the toy policy with GRPO and report per-iteration diagnostics."""
        seed = resolve_seed(config, seed)
        with RunContext(make_run_id("train", seed)):
            logger.info(config.message("log_messages", "run_started", command="train", seed=seed))
            corpus = resolve_corpus(config, scenarios, seed, count, kinds)
            if not corpus:
                raise click.UsageError(config.message("error_messages", "no_scenarios", path=scenarios))
            grpo = _grpo_config(config, seed, **training)

            initial = None
            if sft:
                start = PolicyParams.zeros(len(corpus[0].ground_truth), grpo.init_log_std, FeatureScaler.fit(corpus))
                initial = sft_warm_start(corpus, start)
            params, history = train_loop(corpus, grpo, initial=initial, progress=progress)
            emit(render(history, fmt, config.decimals), out)

            if params_out:
                Path(params_out).write_text(params_to_json(params), encoding="utf-8")
                logger.info(config.message("log_messages", "params_saved", path=params_out))
            logger.info(config.message("log_messages", "run_finished", command="train"))

    @cli.command("ablate")
    @corpus_options
    @training_options
    @click.option("--shift", callback=parse_offset, default=None,
                  help="Translate ground truth by 'x,y' metres (default 0.6,-0.4)")
    @click.option("--no-shift", is_flag=True, help="Use the corpus ground truth unchanged")
    @click.option("--toggles", callback=_parse_toggles, default=None,
                  help="';'-separated ablations, e.g. 'full;w/o pos' or 'pos,vel'")
    @click.option("--stages", callback=_parse_stages, default=None,
                  help="Compare training stages instead of reward terms, e.g. 'sft,rl,sft+rl'")
    @click.option("--progress/--no-progress", default=False)
    @report_options
    def ablate(seed, scenarios, count, kinds, shift, no_shift, toggles, stages, progress, fmt, out, **training):
        """Train one policy per reward ablation (or training stage) and compare L2 side by side."""
        seed = resolve_seed(config, seed)
        if toggles and stages:
            raise click.UsageError("--toggles and --stages are mutually exclusive")
        with RunContext(make_run_id("ablate", seed)):
            corpus = resolve_corpus(config, scenarios, seed, count, kinds)
            if not corpus:
                raise click.UsageError(config.message("error_messages", "no_scenarios", path=scenarios))
            if not no_shift:
                corpus = shift_corpus(corpus, shift or DEFAULT_SHIFT)
            grpo = _grpo_config(config, seed, **training)
            if stages:
                rows = run_stage_ablation(corpus, grpo, stages, progress=progress)
            else:
                rows = run_ablation(corpus, grpo, toggles, progress=progress)
            emit(render(rows, fmt, config.decimals), out)

    @cli.command("sweep-g")
    @corpus_options
    @training_options
    @click.option("--sizes", callback=parse_int_list, default="2,4,6,8", show_default=True)
    @click.option("--seeds", type=click.IntRange(min=1), default=3, show_default=True, help="Runs per group size")
    @click.option("--progress/--no-progress", default=False)
    @report_options
    def sweep_g(seed, scenarios, count, kinds, sizes, seeds, progress, fmt, out, **training):
        """Median corpus L2 of the trained policy for each group size."""
        seed = resolve_seed(config, seed)
        if any(size < 2 for size in sizes):
            raise click.BadParameter("group sizes must be >= 2", param_hint="--sizes")
        with RunContext(make_run_id("sweep-g", seed)):
            corpus = resolve_corpus(config, scenarios, seed, count, kinds)
            if not corpus:
                raise click.UsageError(config.message("error_messages", "no_scenarios", path=scenarios))
            grpo = _grpo_config(config, seed, **training)
            rows = sweep_group_sizes(corpus, grpo, sizes, seeds, progress=progress)
            emit(render(rows, fmt, config.decimals), out)
