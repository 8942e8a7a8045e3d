"""One training run on disk: sample, train, write the run directory."""
from __future__ import annotations

import dataclasses
import logging
import time
from pathlib import Path

from flash_max import persistence
from flash_max.config import config_to_dict
from flash_max.errors import NumericalAbort
from flash_max.metrics import aggregate, evaluate
from flash_max.models import ExperimentConfig, GroundTruthId, RunRecord
from flash_max.sampling import sample_train, sample_validation
from flash_max.training import TrainResult, train

log = logging.getLogger(__name__)


def make_run_id(*parts) -> str:
    return "-".join(str(p).replace(":", "") for p in parts if p is not None and p != "")


def snapshot(config: ExperimentConfig, seed: int, ground_truth: GroundTruthId, **changes) -> ExperimentConfig:
    train_cfg, sampling_cfg = config.for_seed(seed, ground_truth)
    train_cfg = dataclasses.replace(train_cfg, **changes.pop("train", {}))
    sampling_cfg = dataclasses.replace(sampling_cfg, **changes.pop("sampling", {}))
    return dataclasses.replace(
        config,
        seed=seed,
        ground_truth=ground_truth,
        repeats=1,
        setup=sampling_cfg.setup,
        train=train_cfg,
        sampling=sampling_cfg,
        **changes,
    )


def execute_run(
    run_config: ExperimentConfig,
    run_id: str,
    *,
    stop_at_target: bool = True,
    write_curve: bool = False,
) -> RunRecord:
    """Train one model from a per-run config and write its run directory.

    The directory holds config.json, observations.csv, trainlog.csv,
    checkpoint.json and report.json (and curve.csv when requested). On a numerical abort the
    partial train log is still written before the error propagates.
    """
    run_dir = Path(run_config.output_dir) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    persistence.write_json(run_dir / "config.json", config_to_dict(run_config))

    train_cfg, sampling_cfg = run_config.train, run_config.sampling
    log.info("Run %s: %s %s, seed %d", run_id, sampling_cfg.ground_truth, sampling_cfg.setup.value, train_cfg.seed)
    started = time.perf_counter()
    train_obs = sample_train(sampling_cfg)
    persistence.write_observations(run_dir / "observations.csv", train_obs)
    val_points, val_targets = sample_validation(sampling_cfg)

    trainlog_path = run_dir / "trainlog.csv"
    try:
        result: TrainResult = train(
            train_cfg, train_obs, val_points, val_targets,
            workers=run_config.workers, stop_at_target=stop_at_target,
        )
    except NumericalAbort as exc:
        if exc.log is not None:
            persistence.write_trainlog(trainlog_path, exc.log)
        log.error("Run %s aborted: %s", run_id, exc)
        raise
    wall = time.perf_counter() - started

    persistence.write_trainlog(trainlog_path, result.log)
    if write_curve:
        persistence.write_curve(run_dir / "curve.csv", result.log)
    checkpoint_path = persistence.save_checkpoint(run_dir / "checkpoint.json", result.params, result.state)

    report = evaluate(
        result.params, val_points, val_targets,
        setup=sampling_cfg.setup, ground_truth=sampling_cfg.ground_truth, seed=train_cfg.seed,
        residual_points=0, workers=run_config.workers,
    )
    report.residual_rmse = result.residual_rmse
    record = RunRecord(
        run_id=run_id,
        run_dir=run_dir,
        seed=train_cfg.seed,
        report=report,
        checkpoint_path=checkpoint_path,
        trainlog_path=trainlog_path,
        converged=result.converged,
        best_error=result.best_error,
        time_to_target=result.time_to_target,
        time_to_best=result.time_to_best,
        wall_seconds=result.log.records[-1].wall_seconds_total,
        steps=result.steps,
    )
    persistence.write_json(run_dir / "report.json", {
        **persistence.report_to_dict(report),
        "run_id": run_id,
        "converged": record.converged,
        "best_error": record.best_error,
        "time_to_target": record.time_to_target,
        "time_to_best": record.time_to_best,
        "wall_seconds": record.wall_seconds,
        "steps": record.steps,
        "elapsed_seconds": wall,
    })
    return record


def run_row(record: RunRecord, **extra) -> dict:
    return {
        **extra,
        "seed": record.seed,
        "converged": record.converged,
        "best_error": record.best_error,
        "time_to_target": record.time_to_target,
        "time_to_best": record.time_to_best,
        "wall_seconds": record.wall_seconds,
        "steps": record.steps,
        "residual_rmse": record.report.residual_rmse,
        "run_dir": str(record.run_dir),
    }


def summarize(rows: list[dict], *keys: str) -> dict:
    out = {}
    for key in keys:
        mean, sem = aggregate(row.get(key) for row in rows)
        out[key] = {"mean": mean, "sem": sem, "n": sum(row.get(key) is not None for row in rows)}
    return out


def repeat_seeds(config: ExperimentConfig, default_seed: int) -> list[int]:
    first = config.seed_or(default_seed)
    return [first + i for i in range(config.repeats)]
