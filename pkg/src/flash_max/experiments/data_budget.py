from __future__ import annotations

import logging

from flash_max import persistence
from flash_max.experiments.common import execute_run, make_run_id, snapshot
from flash_max.models import Experiment, ExperimentConfig, ExperimentSummary, GroundTruthKind, Setup

log = logging.getLogger(__name__)

DEFAULT_SEED = 42


def run_data_budget(config: ExperimentConfig) -> ExperimentSummary:
    """One IC run per training-set size at a single fixed seed."""
    ground_truth = config.ground_truth_or(GroundTruthKind.HOPF_FIBRATION)
    seed = config.seed_or(DEFAULT_SEED)

    rows, runs = [], []
    for n_points in config.n_points:
        run_config = snapshot(config, seed, ground_truth, sampling={"n_train": n_points, "setup": Setup.IC})
        run_id = make_run_id("data-budget", ground_truth, f"n{n_points}", f"s{seed}")
        record = execute_run(run_config, run_id)
        rows.append({
            "n_points": n_points,
            "min_error": record.best_error,
            "time_to_min": record.time_to_best,
            "residual_rmse": record.report.residual_rmse,
            "run_dir": str(record.run_dir),
        })
        runs.append(record)
        log.info("%d points: min error %.4g at %.1fs", n_points, record.best_error, record.time_to_best or 0.0)

    persistence.write_table(config.output_dir, make_run_id("data-budget", ground_truth, f"s{seed}"), rows)
    return ExperimentSummary(Experiment.DATA_BUDGET, rows, {}, runs)
