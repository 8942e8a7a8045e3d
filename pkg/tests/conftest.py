from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from flash_max.models import ExperimentConfig, SamplingConfig, TrainConfig
from flash_max.training import init_params


def random_params(width_half: int, seed: int = 0, activation="tanh", bias_scale: float = 0.5):
    """Xavier parameters with non-zero biases."""
    rng = np.random.default_rng(seed)
    params = init_params(TrainConfig(width_half=width_half, activation=activation, seed=seed), rng)
    for br in params.branches:
        br.biases[:] = rng.normal(0.0, bias_scale, size=br.biases.shape)
    return params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config(tmp_path):
    """A fast experiment config writing under tmp_path."""

    def make(**train_changes) -> ExperimentConfig:
        train = dataclasses.replace(
            TrainConfig(width_half=4, batch_size=50, max_epochs=20, cosine_epochs=20, val_every_steps=5),
            **train_changes,
        )
        return ExperimentConfig(
            output_dir=tmp_path / "runs",
            repeats=1,
            train=train,
            sampling=SamplingConfig(n_train=50, n_val=200),
        )

    return make
