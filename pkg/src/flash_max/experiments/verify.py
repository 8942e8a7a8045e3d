"""Property checks: zero model residual, multiplier identities, ground-truth
convergence. Any violated bound raises VerificationError after the report is
written."""
from __future__ import annotations

import logging

import numpy as np

from flash_max import network, persistence
from flash_max.errors import VerificationError
from flash_max.ground_truth import fd_convergence, field_function, hopf_fibration
from flash_max.models import (
    Experiment,
    ExperimentConfig,
    ExperimentSummary,
    GroundTruthId,
    GroundTruthKind,
    TrainConfig,
)
from flash_max.training import init_params

log = logging.getLogger(__name__)

RESIDUAL_WIDTHS = (1, 16, 128, 1024)
RESIDUAL_POINTS = 10_000
RESIDUAL_BOUND = 1e-8
EQUIVALENCE_POINTS = 10_000
EQUIVALENCE_ULPS = 4.0
FD_POINTS = 200
FD_RATIO = (3.5, 4.5)
RADIAL_MIN_R = 0.1
HOPF_ORIGIN = np.array([-1.0, 0.0, 0.0, 0.0, 1.0, 0.0])

FD_BASE_STEP = 1e-3


def _row(check: str, statistic: float, bound: float, passed: bool, **extra) -> dict:
    status = "ok" if passed else "FAILED"
    log.info("verify %s: %.3g (bound %.3g) %s", check, statistic, bound, status)
    return {"check": check, "statistic": statistic, "bound": bound, "passed": bool(passed), **extra}


def check_model_residual(seed: int, workers: int = 1) -> list[dict]:
    rng = np.random.default_rng(seed)
    points = rng.uniform(0.0, 1.0, size=(RESIDUAL_POINTS, 4))
    rows = []
    for width in RESIDUAL_WIDTHS:
        params = init_params(TrainConfig(width_half=width, seed=seed + width))
        for br in params.branches:
            br.biases[:] = rng.normal(size=br.biases.shape)
        residual = network.model_residual(params, points, workers)
        field = network.forward(params, points, workers)
        stat = float(np.max(np.abs(residual))) / (1.0 + float(np.max(np.abs(field))))
        rows.append(_row(f"model_residual W={width}", stat, RESIDUAL_BOUND, stat <= RESIDUAL_BOUND))
    return rows


def check_multiplier_equivalence(seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    spatial = rng.normal(size=(EQUIVALENCE_POINTS, 3))
    signs = rng.choice([-1.0, 1.0], size=EQUIVALENCE_POINTS)
    z = network.lift_frequency(spatial, signs)
    ulp = np.finfo(float).eps * (z[:, 0] * z[:, 0])[:, None]
    rows = []
    for branch in network.BRANCHES:
        diff = np.abs(network.noetherian_multiplier(branch, z) - network.cone_multiplier(branch, z))
        stat = float(np.max(diff / ulp))
        rows.append(_row(f"multiplier_equivalence p{branch} (ulps)", stat, EQUIVALENCE_ULPS, stat <= EQUIVALENCE_ULPS))
    return rows


def convergence_points(kind: GroundTruthKind, rng: np.random.Generator, n: int = FD_POINTS) -> np.ndarray:
    """Uniform points in [0, 1]^4; Radial Waves keep only r >= 0.1."""
    if kind is not GroundTruthKind.RADIAL_WAVES:
        return rng.uniform(0.0, 1.0, size=(n, 4))
    kept = np.empty((0, 4))
    while len(kept) < n:
        batch = rng.uniform(0.0, 1.0, size=(n, 4))
        kept = np.vstack([kept, batch[np.linalg.norm(batch[:, 1:], axis=1) >= RADIAL_MIN_R]])
    return kept[:n]


def check_ground_truths(seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    low, high = FD_RATIO
    rows = []
    for kind in GroundTruthKind:
        ground_truth = GroundTruthId(kind)
        points = convergence_points(kind, rng)
        levels = fd_convergence(field_function(ground_truth), points, h=FD_BASE_STEP, levels=2)
        ratio = levels[1]["ratio"]
        passed = ratio is not None and low <= ratio <= high
        rows.append(_row(
            f"fd_convergence {ground_truth}", ratio if ratio is not None else float("nan"), high, passed,
            low=low, levels=levels,
        ))
    origin_error = float(np.max(np.abs(hopf_fibration(np.zeros(4)) - HOPF_ORIGIN)))
    rows.append(_row("hopf_origin", origin_error, 0.0, origin_error == 0.0))
    return rows


def run_verify(config: ExperimentConfig) -> ExperimentSummary:
    seed = config.seed_or(0)
    rows = [
        *check_model_residual(seed, config.workers),
        *check_multiplier_equivalence(seed),
        *check_ground_truths(seed),
    ]
    failed = [row for row in rows if not row["passed"]]
    summary = {"checks": len(rows), "failed": len(failed)}
    persistence.write_json(config.output_dir / "verify" / "report.json", {"rows": rows, "summary": summary})
    if failed:
        worst = failed[0]
        raise VerificationError(
            f"{len(failed)} check(s) failed; first: {worst['check']} = {worst['statistic']:.3g} "
            f"(bound {worst['bound']:.3g})"
        )
    return ExperimentSummary(Experiment.VERIFY, rows, summary)
