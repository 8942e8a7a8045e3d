from __future__ import annotations

import logging

import numpy as np
from scipy import stats

from flash_max.errors import UndefinedMetricError
from flash_max.ground_truth import FD_STEP, fd_residual
from flash_max.models import EvalReport, GroundTruthId, ModelParams, Setup
from flash_max.network import forward, model_residual

log = logging.getLogger(__name__)

RESIDUAL_POINTS = 1000


def _rms(a: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(a))))


def relative_l2(pred, gt) -> float:
    """RMSE(pred - gt) / RMSE(gt), pooled over every component of every point."""
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if gt.size == 0:
        raise UndefinedMetricError("relative error of an empty set is undefined")
    scale = _rms(gt)
    if scale == 0.0:
        raise UndefinedMetricError("ground truth has zero RMSE")
    return _rms(pred - gt) / scale


def residual_error(source, points, h: float = FD_STEP, workers: int = 1) -> float:
    """RMSE of the eight Maxwell residual components.

    *source* is either network parameters (analytic residual) or a field
    callable (central differences with step *h*).
    """
    points = np.asarray(points, dtype=float).reshape(-1, 4)
    if len(points) == 0:
        raise UndefinedMetricError("residual error needs at least one point")
    if isinstance(source, ModelParams):
        residual = model_residual(source, points, workers)
    else:
        residual = fd_residual(source, points, h)
    return _rms(residual)


def evaluate(
    params: ModelParams,
    points,
    targets,
    *,
    setup: Setup | None = None,
    ground_truth: GroundTruthId | None = None,
    seed: int | None = None,
    residual_points: int = RESIDUAL_POINTS,
    workers: int = 1,
) -> EvalReport:
    points = np.asarray(points, dtype=float).reshape(-1, 4)
    rel = relative_l2(forward(params, points, workers), targets)
    residual = None
    if residual_points > 0:
        residual = residual_error(params, points[:residual_points], workers=workers)
    report = EvalReport(
        rel_l2_error=rel,
        residual_rmse=residual,
        n_points=len(points),
        setup=setup,
        ground_truth=ground_truth,
        seed=seed,
    )
    log.info("Evaluated %d points: relative error %.4g, residual RMSE %s", len(points), rel, residual)
    return report


def format_percent(value: float | None, floor: float = 0.01, digits: int = 2) -> str:
    """Display a fraction as a percentage; values under *floor* print as "<1.00%"."""
    if value is None or not np.isfinite(value):
        return "n/a"
    if value < floor:
        return f"<{100 * floor:.{digits}f}%"
    return f"{100 * value:.{digits}f}%"


def aggregate(values) -> tuple[float, float]:
    arr = np.asarray([v for v in values if v is not None], dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(stats.sem(arr))
