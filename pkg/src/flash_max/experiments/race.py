from __future__ import annotations

import dataclasses
import logging

from flash_max import persistence
from flash_max.experiments.common import execute_run, make_run_id, repeat_seeds, run_row, snapshot, summarize
from flash_max.models import Experiment, ExperimentConfig, ExperimentSummary, GroundTruthKind

log = logging.getLogger(__name__)

DEFAULT_TARGET = 0.05


def run_race(config: ExperimentConfig) -> ExperimentSummary:
    """Train to a target validation error, once per seed.

    A run that exhausts its budget is kept with its elapsed time and best
    error; the aggregate is the mean and standard error over repeats.
    """
    ground_truth = config.ground_truth_or(GroundTruthKind.HOPF_FIBRATION)
    target = config.train.target_rel_error
    if target is None:
        target = DEFAULT_TARGET
        config = dataclasses.replace(config, train=dataclasses.replace(config.train, target_rel_error=target))

    rows, runs = [], []
    for seed in repeat_seeds(config, 0):
        run_config = snapshot(config, seed, ground_truth)
        run_id = make_run_id("race", ground_truth, config.setup.value, f"s{seed}")
        record = execute_run(run_config, run_id)
        if not record.converged:
            log.warning(
                "Seed %d did not reach %.3g within budget (best %.4g after %.1fs)",
                seed, target, record.best_error, record.wall_seconds,
            )
        compute = record.time_to_target if record.converged else record.wall_seconds
        rows.append(run_row(record, target=target, compute_seconds=compute))
        runs.append(record)

    summary = summarize(rows, "compute_seconds", "best_error", "residual_rmse")
    summary["converged"] = sum(row["converged"] for row in rows)
    persistence.write_table(config.output_dir, make_run_id("race", ground_truth, config.setup.value), rows, summary)
    return ExperimentSummary(Experiment.RACE, rows, summary, runs)
