from __future__ import annotations

import logging

from flash_max import persistence
from flash_max.errors import ConfigError
from flash_max.experiments.common import execute_run, make_run_id, repeat_seeds, run_row, snapshot, summarize
from flash_max.models import Experiment, ExperimentConfig, ExperimentSummary, GroundTruthKind

log = logging.getLogger(__name__)


def run_time_budget(config: ExperimentConfig) -> ExperimentSummary:
    """Train for a fixed wall-clock budget and keep the whole error curve.

    A configured target only records the time it was first reached; it does
    not stop training.
    """
    if config.train.wall_clock_budget_s is None:
        raise ConfigError("time_budget needs train.wall_clock_budget_s (or --budget)")
    ground_truth = config.ground_truth_or(GroundTruthKind.HOPF_FIBRATION)

    rows, runs = [], []
    for seed in repeat_seeds(config, 0):
        run_config = snapshot(config, seed, ground_truth)
        run_id = make_run_id("time-budget", ground_truth, config.setup.value, f"s{seed}")
        record = execute_run(run_config, run_id, stop_at_target=False, write_curve=True)
        rows.append(run_row(record, budget_seconds=config.train.wall_clock_budget_s))
        runs.append(record)
        log.info("Seed %d: best error %.4g within %.1fs", seed, record.best_error, record.wall_seconds)

    summary = summarize(rows, "best_error", "time_to_best", "residual_rmse")
    name = make_run_id("time-budget", ground_truth, config.setup.value)
    persistence.write_table(config.output_dir, name, rows, summary)
    return ExperimentSummary(Experiment.TIME_BUDGET, rows, summary, runs)
