from __future__ import annotations

import logging

from flash_max import persistence
from flash_max.experiments.common import execute_run, make_run_id, snapshot
from flash_max.experiments.race import DEFAULT_TARGET
from flash_max.models import Experiment, ExperimentConfig, ExperimentSummary, GroundTruthKind

log = logging.getLogger(__name__)

DEFAULT_SEED = 42


def run_ablation(config: ExperimentConfig) -> ExperimentSummary:
    """Sweep width and activation; report time to target and the minimum error."""
    ground_truth = config.ground_truth_or(GroundTruthKind.RANDOM_SOLUTION)
    seed = config.seed_or(DEFAULT_SEED)
    target = config.train.target_rel_error
    if target is None:
        target = DEFAULT_TARGET

    rows, runs = [], []
    for width_half in config.widths:
        for activation in config.activations:
            run_config = snapshot(
                config, seed, ground_truth,
                train={"width_half": width_half, "activation": activation, "target_rel_error": target},
            )
            run_id = make_run_id("ablation", ground_truth, f"w{width_half}", activation.value, f"s{seed}")
            record = execute_run(run_config, run_id, stop_at_target=False)
            rows.append({
                "width_half": width_half,
                "activation": activation.value,
                "time_to_target": record.time_to_target,
                "min_error": record.best_error,
                "time_to_min": record.time_to_best,
                "residual_rmse": record.report.residual_rmse,
                "run_dir": str(record.run_dir),
            })
            runs.append(record)

    persistence.write_table(config.output_dir, make_run_id("ablation", ground_truth, f"s{seed}"), rows, {"target": target})
    return ExperimentSummary(Experiment.ABLATION, rows, {"target": target}, runs)
