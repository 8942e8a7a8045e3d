"""Single-shot commands: one training run, evaluation of a checkpoint,
exact cos-network construction and field export."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import yaml

from flash_max import persistence
from flash_max.errors import ConfigError
from flash_max.exact_init import assemble_cos_network, load_terms
from flash_max.experiments.common import execute_run, make_run_id, snapshot
from flash_max.ground_truth import export_grid, field_function
from flash_max.metrics import evaluate
from flash_max.models import EvalReport, ExperimentConfig, GroundTruthKind, ModelParams, RunRecord
from flash_max.network import forward, model_residual
from flash_max.sampling import sample_validation
from flash_max.training import masked_mse_loss

log = logging.getLogger(__name__)


def run_train(config: ExperimentConfig) -> RunRecord:
    ground_truth = config.ground_truth_or(GroundTruthKind.HOPF_FIBRATION)
    seed = config.seed_or(0)
    run_config = snapshot(config, seed, ground_truth)
    run_id = make_run_id("train", ground_truth, config.setup.value, f"s{seed}")
    return execute_run(run_config, run_id, write_curve=True)


def training_history(run_dir: Path, params: ModelParams, workers: int = 1) -> dict | None:
    trainlog_path = run_dir / "trainlog.csv"
    if not trainlog_path.is_file():
        return None
    train_log = persistence.read_trainlog(trainlog_path)
    if not len(train_log):
        return None
    last = train_log.records[-1]
    best = train_log.best_so_far()
    history = {
        "steps": last.step,
        "epochs": last.epoch,
        "wall_seconds_total": last.wall_seconds_total,
        "validations": len(best),
        "best_val_rel_error": best[-1][1] if best else None,
        "train_loss": None,
    }
    observations_path = run_dir / "observations.csv"
    if observations_path.is_file():
        obs = persistence.read_observations(observations_path)
        history["train_loss"] = masked_mse_loss(params, obs, workers=workers)
    return history


def run_eval(config: ExperimentConfig, checkpoint: Path) -> EvalReport:
    """Evaluate a checkpoint on a freshly sampled validation set.

    A checkpoint inside a run directory also gets that run's training
    history in eval.json.
    """
    params, _ = persistence.load_checkpoint(checkpoint)
    ground_truth = config.ground_truth_or(GroundTruthKind.HOPF_FIBRATION)
    seed = config.seed_or(0)
    _, sampling = config.for_seed(seed, ground_truth)
    points, targets = sample_validation(sampling)
    report = evaluate(
        params, points, targets,
        setup=sampling.setup, ground_truth=ground_truth, seed=seed, workers=config.workers,
    )
    out = persistence.report_to_dict(report)
    history = training_history(Path(checkpoint).parent, params, workers=config.workers)
    if history is not None:
        log.info("Run history: %d steps, train loss %s", history["steps"], history["train_loss"])
        out["training"] = history
    persistence.write_json(Path(checkpoint).with_name("eval.json"), out)
    return report


def run_exact_init(terms_path: Path, output: Path) -> Path:
    """Build the exact cos network for the terms in a JSON (or YAML) file."""
    try:
        with open(terms_path) as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read terms file {terms_path}: {exc}") from exc
    terms = load_terms(data)
    params = assemble_cos_network(terms)
    if params.width_half:
        points = np.random.default_rng(0).uniform(0.0, 1.0, size=(256, 4))
        log.info("Exact network residual max %.3g", float(np.max(np.abs(model_residual(params, points)))))
    return persistence.save_checkpoint(output, params, terms=len(terms))


def run_export_field(config: ExperimentConfig, checkpoint: Path | None = None) -> Path:
    """Write a ground truth (or a checkpoint's prediction) on the export grid."""
    grid = config.export
    if checkpoint is not None:
        params, _ = persistence.load_checkpoint(checkpoint)
        field = lambda pts: forward(params, pts, config.workers)
        label = Path(checkpoint).stem
    else:
        ground_truth = config.ground_truth_or(GroundTruthKind.HOPF_FIBRATION)
        field = field_function(ground_truth)
        label = make_run_id(ground_truth)
    points, values = export_grid(field, grid.times, grid.resolution, grid.lower, grid.upper)
    out_dir = config.output_dir / "export"
    out_dir.mkdir(parents=True, exist_ok=True)
    return persistence.write_field(out_dir / f"field-{label}.csv", points, values)
