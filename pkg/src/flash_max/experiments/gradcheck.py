from __future__ import annotations

import logging

import numpy as np

from flash_max import persistence
from flash_max.errors import VerificationError
from flash_max.models import Activation, Experiment, ExperimentConfig, ExperimentSummary, ObservationSet, TrainConfig
from flash_max.network import forward
from flash_max.training import gradient_check, init_params

log = logging.getLogger(__name__)

WIDTHS = (1, 4, 16)
ACTIVATIONS = (Activation.TANH, Activation.COS, Activation.SILU)
SEEDS = 5
OBSERVATIONS = 20
TARGET_NOISE = 1e-3
BOUND = 1e-5


def gradcheck_problem(width_half: int, activation: Activation, seed: int):
    """Random parameters with non-zero biases and near-fit targets under random masks."""
    rng = np.random.default_rng(seed)
    params = init_params(TrainConfig(width_half=width_half, activation=activation, seed=seed), rng)
    for br in params.branches:
        br.biases[:] = rng.normal(0.0, 0.5, size=br.biases.shape)
    points = rng.uniform(0.0, 1.0, size=(OBSERVATIONS, 4))
    targets = forward(params, points) + TARGET_NOISE * rng.normal(size=(OBSERVATIONS, 6))
    masks = rng.random((OBSERVATIONS, 6)) < 0.7
    masks[np.arange(OBSERVATIONS), rng.integers(0, 6, size=OBSERVATIONS)] = True
    return params, ObservationSet(points, targets, masks)


def run_gradcheck(config: ExperimentConfig) -> ExperimentSummary:
    first_seed = config.seed_or(0)
    rows = []
    for width in WIDTHS:
        for activation in ACTIVATIONS:
            for seed in range(first_seed, first_seed + SEEDS):
                params, obs = gradcheck_problem(width, activation, seed)
                error = gradient_check(params, obs)
                rows.append({
                    "width_half": width,
                    "activation": activation.value,
                    "seed": seed,
                    "max_rel_error": error,
                    "passed": error <= BOUND,
                })
    worst = max(rows, key=lambda row: row["max_rel_error"])
    summary = {"max_rel_error": worst["max_rel_error"], "bound": BOUND, "failed": sum(not r["passed"] for r in rows)}
    persistence.write_table(config.output_dir / "gradcheck", "gradcheck", rows, summary)
    log.info("Gradient check: max relative error %.3g over %d cases", worst["max_rel_error"], len(rows))
    if summary["failed"]:
        raise VerificationError(
            f"gradient check failed: max relative error {worst['max_rel_error']:.3g} "
            f"(W={worst['width_half']}, {worst['activation']}, seed {worst['seed']}) exceeds {BOUND:g}"
        )
    return ExperimentSummary(Experiment.GRADCHECK, rows, summary)
