"""Tests for the masked loss, its analytic gradient, initialization, the
optimizer and the training loop."""
import itertools
import logging
import math

import numpy as np
import pytest

from flash_max import network, training
from flash_max.errors import InvalidObservationsError, NumericalAbort
from flash_max.experiments.gradcheck import ACTIVATIONS, BOUND, SEEDS, WIDTHS, gradcheck_problem
from flash_max.ground_truth import hopf_fibration
from flash_max.models import ModelParams, ObservationSet, TrainConfig
from flash_max.training import (
    AdamWState,
    adamw_step,
    cosine_lr,
    gradient_check,
    init_params,
    loss_gradient,
    masked_mse_loss,
    train,
)

from conftest import random_params


def _hopf_observations(n, seed=0):
    rng = np.random.default_rng(seed)
    points = np.column_stack([np.zeros(n), rng.uniform(size=(n, 3))])
    return ObservationSet.full(points, hopf_fibration(points))


# ---------------------------------------------------------------------------
# loss

def test_loss_examples():
    zero = ModelParams.zeros(1)
    point = np.zeros((1, 4))
    full = ObservationSet.full(point, [[1, 0, 0, 0, 0, 0]])
    assert masked_mse_loss(zero, full) == pytest.approx(1 / 6)

    mask = np.array([[True, True, False, False, False, False]])
    partial = ObservationSet(point, [[1, 1, 0, 0, 0, 0]], mask)
    assert masked_mse_loss(zero, partial) == pytest.approx(1.0)


def test_loss_rejects_empty_observations():
    empty = ObservationSet(np.zeros((0, 4)), np.zeros((0, 6)), np.zeros((0, 6), dtype=bool))
    with pytest.raises(InvalidObservationsError):
        masked_mse_loss(ModelParams.zeros(1), empty)
    with pytest.raises(InvalidObservationsError):
        loss_gradient(ModelParams.zeros(1), empty)


def test_observation_rows_need_a_mask_bit():
    with pytest.raises(InvalidObservationsError):
        ObservationSet(np.zeros((1, 4)), np.zeros((1, 6)), np.zeros((1, 6), dtype=bool))


def test_masking_a_zero_error_component_keeps_the_error_sum(rng):
    params = random_params(3)
    points = rng.uniform(size=(5, 4))
    targets = network.forward(params, points) + rng.normal(size=(5, 6))
    targets[:, 4] = network.forward(params, points)[:, 4]
    full = ObservationSet.full(points, targets)
    masks = full.masks.copy()
    masks[:, 4] = False
    reduced = ObservationSet(points, targets, masks)
    assert masked_mse_loss(params, reduced) * masks.sum() == pytest.approx(
        masked_mse_loss(params, full) * full.masks.sum(), rel=1e-12
    )


# ---------------------------------------------------------------------------
# gradient

def test_zero_model_on_zero_targets_has_zero_gradient():
    params = ModelParams.zeros(3)
    params.branches[0].spatial_freqs[:] = 0.3
    obs = ObservationSet.full(np.random.default_rng(0).uniform(size=(10, 4)), np.zeros((10, 6)))
    loss, grads = loss_gradient(params, obs)
    assert loss == 0.0
    for br in grads.branches:
        for arr in br.arrays():
            np.testing.assert_array_equal(arr, 0.0)


def test_loss_gradient_returns_the_loss(rng):
    params = random_params(4)
    obs = _hopf_observations(30)
    loss, _ = loss_gradient(params, obs)
    assert loss == pytest.approx(masked_mse_loss(params, obs), rel=1e-12)


def test_single_neuron_bias_gradient_closed_form():
    params = network.single_neuron(1, (0.3, 0.2, -0.4), +1, weight=0.7, bias=0.1)
    point = np.array([[0.2, 0.5, -0.1, 0.3]])
    target = np.array([[0.1, -0.2, 0.3, 0.0, 0.5, -0.4]])
    obs = ObservationSet.full(point, target)

    z = network.lift_frequency((0.3, 0.2, -0.4), 1.0)
    p = network.noetherian_multiplier(1, z)
    pre = point[0] @ z + 0.1
    pred = 0.7 * np.tanh(pre) * p
    expected = np.sum(2.0 * (pred - target[0]) * 0.7 * p) * (1.0 - np.tanh(pre) ** 2) / 6.0

    _, grads = loss_gradient(params, obs)
    assert grads.branches[0].biases[0] == pytest.approx(expected, rel=1e-12)
    # idle neurons carry no weight, so their biases see no gradient
    assert grads.branches[0].biases[1] == 0.0


@pytest.mark.parametrize("width_half, activation, seed", list(itertools.product(WIDTHS, ACTIVATIONS, range(SEEDS))))
def test_gradient_matches_finite_differences(width_half, activation, seed):
    params, obs = gradcheck_problem(width_half, activation, seed)
    assert gradient_check(params, obs) <= BOUND


def test_gradient_with_partial_masks(rng):
    params = random_params(2, seed=4)
    points = rng.uniform(size=(12, 4))
    masks = rng.uniform(size=(12, 6)) < 0.5
    masks[:, 0] = True
    obs = ObservationSet(points, rng.normal(size=(12, 6)), masks)
    assert gradient_check(params, obs) <= BOUND


def test_gradient_does_not_depend_on_worker_count():
    params = random_params(3)
    obs = _hopf_observations(700)
    loss1, g1 = loss_gradient(params, obs, workers=1)
    loss4, g4 = loss_gradient(params, obs, workers=4)
    assert loss1 == loss4
    for a, b in zip(g1.branches, g4.branches):
        for x, y in zip(a.arrays(), b.arrays()):
            np.testing.assert_array_equal(x, y)


# ---------------------------------------------------------------------------
# initialization and optimizer

def test_init_params_layout_and_scale():
    config = TrainConfig(width_half=500, seed=3)
    params = init_params(config)
    n = 1000
    for br in params.branches:
        assert br.spatial_freqs.shape == (n, 3)
        np.testing.assert_array_equal(br.biases, 0.0)
        assert np.sum(br.signs > 0) == np.sum(br.signs < 0) == 500
        assert np.std(br.spatial_freqs) == pytest.approx(training.XAVIER_GAIN * math.sqrt(2 / (4 + n)), rel=0.1)
        assert np.std(br.out_weights) == pytest.approx(training.XAVIER_GAIN * math.sqrt(2 / (n + 6)), rel=0.1)


def test_init_params_is_deterministic():
    a = init_params(TrainConfig(width_half=8, seed=11))
    b = init_params(TrainConfig(width_half=8, seed=11))
    c = init_params(TrainConfig(width_half=8, seed=12))
    np.testing.assert_array_equal(a.branches[1].spatial_freqs, b.branches[1].spatial_freqs)
    assert not np.array_equal(a.branches[1].spatial_freqs, c.branches[1].spatial_freqs)


def test_cosine_schedule():
    config = TrainConfig(learning_rate=0.05, cosine_epochs=100, eta_min=0.0)
    assert cosine_lr(0, config) == pytest.approx(0.05)
    assert cosine_lr(50, config) == pytest.approx(0.025)
    assert cosine_lr(100, config) == pytest.approx(0.0)
    assert cosine_lr(250, config) == 0.0


def test_adamw_zero_gradient_without_decay_is_identity():
    params = random_params(2)
    config = TrainConfig(weight_decay=0.0)
    grads = training.GradientBundle.zeros_like(params)
    new, state = adamw_step(params, AdamWState.zeros(params), grads, 0.05, config)
    assert state.step == 1
    for a, b in zip(params.branches, new.branches):
        np.testing.assert_array_equal(a.spatial_freqs, b.spatial_freqs)
        np.testing.assert_array_equal(a.out_weights, b.out_weights)
        np.testing.assert_array_equal(a.biases, b.biases)


def test_adamw_first_step_moves_by_learning_rate(rng):
    params = random_params(2)
    config = TrainConfig(weight_decay=0.0)
    grads = training.GradientBundle.zeros_like(params)
    for br in grads.branches:
        for arr in br.arrays():
            arr[:] = rng.choice([-1.0, 1.0], size=arr.shape) * rng.uniform(0.1, 10.0, size=arr.shape)
    new, _ = adamw_step(params, AdamWState.zeros(params), grads, 1e-3, config)
    for old, updated, g in zip(params.branches, new.branches, grads.branches):
        np.testing.assert_allclose(updated.biases - old.biases, -1e-3 * np.sign(g.biases), rtol=1e-6)
        np.testing.assert_allclose(updated.out_weights - old.out_weights, -1e-3 * np.sign(g.out_weights), rtol=1e-6)


def test_adamw_decay_skips_biases():
    params = random_params(2)
    config = TrainConfig(weight_decay=0.5)
    grads = training.GradientBundle.zeros_like(params)
    new, _ = adamw_step(params, AdamWState.zeros(params), grads, 0.1, config)
    for old, updated in zip(params.branches, new.branches):
        np.testing.assert_allclose(updated.spatial_freqs, 0.95 * old.spatial_freqs, rtol=1e-14)
        np.testing.assert_allclose(updated.out_weights, 0.95 * old.out_weights, rtol=1e-14)
        np.testing.assert_array_equal(updated.biases, old.biases)
        np.testing.assert_array_equal(updated.signs, old.signs)


# ---------------------------------------------------------------------------
# training loop

def _val_set(n=200, seed=9):
    rng = np.random.default_rng(seed)
    points = np.column_stack([rng.uniform(0, 0.1, n), rng.uniform(0.2, 0.8, (n, 3))])
    return points, hopf_fibration(points)


def test_descent_on_a_small_problem():
    obs = _hopf_observations(10)
    val_points, val_targets = _val_set()
    config = TrainConfig(width_half=4, learning_rate=1e-3, weight_decay=0.0, batch_size=10,
                         max_epochs=200, cosine_epochs=200, val_every_steps=1000, seed=2)
    result = train(config, obs, val_points, val_targets)
    assert result.steps == 200
    assert len(result.log) == 201
    initial = result.log.records[0].loss
    assert masked_mse_loss(result.final_params, obs) < initial


def test_training_stops_at_the_target():
    obs = _hopf_observations(50)
    val_points, val_targets = _val_set()
    config = TrainConfig(width_half=8, batch_size=50, max_epochs=300, cosine_epochs=300,
                         val_every_steps=1, target_rel_error=1.0, seed=1)
    result = train(config, obs, val_points, val_targets)
    validations = result.log.validations()
    assert result.converged
    assert validations[-1].val_rel_error < 1.0
    assert all(r.val_rel_error >= 1.0 for r in validations[:-1])
    assert result.steps == validations[-1].step
    assert result.time_to_target == validations[-1].wall_seconds_total


def test_zero_budget_validates_the_initial_model_only():
    obs = _hopf_observations(20)
    val_points, val_targets = _val_set()
    config = TrainConfig(width_half=2, batch_size=20, wall_clock_budget_s=0.0)
    result = train(config, obs, val_points, val_targets)
    assert result.steps == 0
    assert len(result.log) == 1
    assert result.log.records[0].val_rel_error == result.best_error


def test_fake_clock_budget():
    ticks = itertools.count()
    obs = _hopf_observations(20)
    val_points, val_targets = _val_set()
    config = TrainConfig(width_half=2, batch_size=5, max_epochs=100, wall_clock_budget_s=10.0)
    result = train(config, obs, val_points, val_targets, clock=lambda: float(next(ticks)))
    assert 0 < result.steps < 100 * 4
    totals = [r.wall_seconds_total for r in result.log.records]
    assert totals == sorted(totals)


def test_non_finite_loss_aborts():
    points = np.random.default_rng(0).uniform(size=(10, 4))
    targets = np.zeros((10, 6))
    targets[3, 2] = np.nan
    val_points, val_targets = _val_set()
    config = TrainConfig(width_half=2, batch_size=10)
    with pytest.raises(NumericalAbort) as info:
        train(config, ObservationSet.full(points, targets), val_points, val_targets)
    assert info.value.step == 1
    assert info.value.log is not None
    assert len(info.value.log) == 1


def test_oversized_batch_is_clamped(caplog):
    obs = _hopf_observations(10)
    val_points, val_targets = _val_set()
    config = TrainConfig(width_half=2, batch_size=1000, max_epochs=3, cosine_epochs=3)
    with caplog.at_level(logging.WARNING, logger="flash_max.training"):
        result = train(config, obs, val_points, val_targets)
    assert result.steps == 3
    assert "exceeds" in caplog.text


def test_training_needs_validation_points():
    obs = _hopf_observations(10)
    with pytest.raises(InvalidObservationsError):
        train(TrainConfig(width_half=2, batch_size=10), obs, np.zeros((0, 4)), np.zeros((0, 6)))


def test_training_is_reproducible_across_workers():
    obs = _hopf_observations(600)
    val_points, val_targets = _val_set()
    config = TrainConfig(width_half=2, batch_size=600, max_epochs=2, cosine_epochs=2, seed=5)
    one = train(config, obs, val_points, val_targets, workers=1)
    three = train(config, obs, val_points, val_targets, workers=3)
    assert [r.loss for r in one.log.records] == [r.loss for r in three.log.records]
    for a, b in zip(one.params.branches, three.params.branches):
        np.testing.assert_array_equal(a.spatial_freqs, b.spatial_freqs)


def test_trained_model_keeps_zero_residual():
    obs = _hopf_observations(50)
    val_points, val_targets = _val_set()
    config = TrainConfig(width_half=4, batch_size=25, max_epochs=10, cosine_epochs=10)
    result = train(config, obs, val_points, val_targets)
    assert result.residual_rmse <= 1e-10
    z = network.branch_frequencies(result.final_params.branches[0])
    np.testing.assert_allclose(z[:, 0] ** 2, np.sum(z[:, 1:] ** 2, axis=1), rtol=1e-12)
