"""Analytic gradients of the masked data loss and the AdamW training loop.

Gradients flow through the light-cone lift (z0 depends on the spatial row)
and through the multiplier polynomials (p depends on z), so the constraint
is never relaxed during optimization.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from flash_max import network
from flash_max.activations import activate_with_derivative
from flash_max.errors import InvalidObservationsError, NumericalAbort, VerificationError
from flash_max.metrics import relative_l2, residual_error
from flash_max.models import (
    BranchGradient,
    BranchParams,
    GradientBundle,
    ModelParams,
    ObservationSet,
    TrainConfig,
    TrainLog,
    TrainRecord,
)
from flash_max.parallel import map_chunks, sum_in_order

log = logging.getLogger(__name__)

XAVIER_GAIN = 5.0 / 3.0
ADAM_EPS = 1e-8
RESIDUAL_GATE = 1e-6
RESIDUAL_GATE_POINTS = 1000


def masked_mse_loss(params: ModelParams, obs: ObservationSet, workers: int = 1) -> float:
    """Mean squared error over the unmasked (observation, component) pairs."""
    if len(obs) == 0:
        raise InvalidObservationsError("cannot compute a loss over zero observations")
    diff = (network.forward(params, obs.points, workers) - obs.targets)[obs.masks]
    return float(np.mean(diff * diff))


def loss_gradient(
    params: ModelParams, obs: ObservationSet, workers: int = 1
) -> tuple[float, GradientBundle]:
    if len(obs) == 0:
        raise InvalidObservationsError("cannot compute a loss over zero observations")
    count = int(obs.masks.sum())
    if params.width_half == 0:
        return masked_mse_loss(params, obs), GradientBundle.zeros_like(params)

    heads = []
    for index, br in zip(network.BRANCHES, params.branches):
        z = network.branch_frequencies(br)
        p = network.noetherian_multiplier(index, z)
        heads.append((z, p, br.out_weights[:, None] * p, br.biases))

    def chunk(rows: slice):
        xs = obs.points[rows]
        acts = []
        pred = np.zeros((len(xs), 6))
        for z, _, wp, b in heads:
            h, dh = activate_with_derivative(params.activation, xs @ z.T + b)
            acts.append((h, dh))
            pred += h @ wp
        resid = np.where(obs.masks[rows], pred - obs.targets[rows], 0.0)
        g = 2.0 * resid
        parts = []
        for (z, _, wp, _), (h, dh) in zip(heads, acts):
            da = (g @ wp.T) * dh
            parts.append((h.T @ g, da.T @ xs, da.sum(axis=0)))
        return float(np.sum(resid * resid)), parts

    sq, parts = sum_in_order(map_chunks(chunk, len(obs), workers))
    loss = sq / count

    grads = []
    for index, (z, p, _, _), br, (hg, dz_pre, db) in zip(network.BRANCHES, heads, params.branches, parts):
        w = br.out_weights
        dw = np.sum(hg * p, axis=1) / count
        dp = w[:, None] * hg / count
        jac = network.multiplier_jacobian(index, z)
        dz = dz_pre / count + np.einsum("kc,kcj->kj", dp, jac)
        norm = np.maximum(np.linalg.norm(br.spatial_freqs, axis=1), network.NORM_FLOOR)
        ds = dz[:, 1:] + (dz[:, 0] * br.signs / norm)[:, None] * br.spatial_freqs
        grads.append(BranchGradient(ds, dw, db / count))
    return loss, GradientBundle(tuple(grads))


def init_params(config: TrainConfig, rng: np.random.Generator | None = None) -> ModelParams:
    """Xavier-normal spatial rows and output weights, zero biases.

    The frequency matrix is read as a 4 -> 2W map and the output contraction
    as a 2W -> 6 map. Draw order: branch 1 rows, branch 1 weights, branch 2
    rows, branch 2 weights.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    w = config.width_half
    n = 2 * w
    std_spatial = XAVIER_GAIN * math.sqrt(2.0 / (4 + n))
    std_out = XAVIER_GAIN * math.sqrt(2.0 / (n + 6))
    signs = np.concatenate([np.ones(w), -np.ones(w)])
    branches = []
    for _ in network.BRANCHES:
        spatial = rng.normal(0.0, std_spatial, size=(n, 3))
        weights = rng.normal(0.0, std_out, size=n)
        branches.append(BranchParams(spatial, signs.copy(), weights, np.zeros(n)))
    return ModelParams(w, config.activation, tuple(branches))


def cosine_lr(epoch: int, config: TrainConfig) -> float:
    if epoch >= config.cosine_epochs:
        return config.eta_min
    cos = math.cos(math.pi * epoch / config.cosine_epochs)
    return config.eta_min + (config.learning_rate - config.eta_min) * (1.0 + cos) / 2.0


@dataclass
class AdamWState:
    step: int
    first: GradientBundle
    second: GradientBundle

    @classmethod
    def zeros(cls, params: ModelParams) -> AdamWState:
        return cls(0, GradientBundle.zeros_like(params), GradientBundle.zeros_like(params))


def adamw_step(
    params: ModelParams,
    state: AdamWState,
    grads: GradientBundle,
    lr: float,
    config: TrainConfig,
) -> tuple[ModelParams, AdamWState]:
    """One decoupled-weight-decay Adam update; returns new params and state.

    Decay applies to spatial rows and output weights, never to biases.
    """
    step = state.step + 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    decay = 1.0 - lr * config.weight_decay

    new_branches, firsts, seconds = [], [], []
    for br, g, m, v in zip(params.branches, grads.branches, state.first.branches, state.second.branches):
        updated, m_new, v_new = [], [], []
        for name, p, gi, mi, vi in zip(
            ("spatial_freqs", "out_weights", "biases"), (br.spatial_freqs, br.out_weights, br.biases),
            g.arrays(), m.arrays(), v.arrays(),
        ):
            mi = b1 * mi + (1.0 - b1) * gi
            vi = b2 * vi + (1.0 - b2) * gi * gi
            if name != "biases":
                p = p * decay
            p = p - lr * (mi / c1) / (np.sqrt(vi / c2) + ADAM_EPS)
            updated.append(p)
            m_new.append(mi)
            v_new.append(vi)
        new_branches.append(BranchParams(updated[0], br.signs.copy(), updated[1], updated[2]))
        firsts.append(BranchGradient(*m_new))
        seconds.append(BranchGradient(*v_new))

    new_params = ModelParams(params.width_half, params.activation, tuple(new_branches))
    return new_params, AdamWState(step, GradientBundle(tuple(firsts)), GradientBundle(tuple(seconds)))


@dataclass
class TrainResult:
    params: ModelParams
    log: TrainLog
    state: AdamWState
    converged: bool
    best_error: float
    time_to_target: float | None
    time_to_best: float | None
    residual_rmse: float
    steps: int
    final_params: ModelParams | None = field(default=None, repr=False)


class _Trainer:
    def __init__(self, config, train_obs, val_points, val_targets, workers, clock, stop_at_target):
        self.config = config
        self.stop_at_target = stop_at_target
        self.train_obs = train_obs
        self.val_points = np.asarray(val_points, dtype=float).reshape(-1, 4)
        self.val_targets = np.asarray(val_targets, dtype=float).reshape(-1, 6)
        self.workers = workers
        self.clock = clock
        self.log = TrainLog()
        self.start = clock()
        self.train_seconds = 0.0
        self.best_error = math.inf
        self.best_params: ModelParams | None = None
        self.time_to_best: float | None = None
        self.time_to_target: float | None = None

    def elapsed(self) -> float:
        return self.clock() - self.start

    def validate(self, params: ModelParams) -> bool:
        """Record a validation on the last log row; True once the target is hit."""
        pred = network.forward(params, self.val_points, self.workers)
        err = relative_l2(pred, self.val_targets)
        total = self.elapsed()
        self.log.set_last_validation(err)
        last = self.log.records[-1]
        log.info("step %d epoch %d: validation error %.4g (%.1fs)", last.step, last.epoch, err, total)
        if err < self.best_error:
            self.best_error = err
            self.best_params = params.copy()
            self.time_to_best = last.wall_seconds_total
        target = self.config.target_rel_error
        if target is not None and err < target:
            if self.time_to_target is None:
                self.time_to_target = last.wall_seconds_total
            return self.stop_at_target
        return False

    def out_of_time(self) -> bool:
        budget = self.config.wall_clock_budget_s
        return budget is not None and self.elapsed() >= budget

    def record(self, step: int, epoch: int, loss: float, lr: float) -> None:
        self.log.append(TrainRecord(
            step=step,
            epoch=epoch,
            wall_seconds_train=self.train_seconds,
            wall_seconds_total=self.elapsed(),
            loss=loss,
            lr=lr,
        ))


def train(
    config: TrainConfig,
    train_obs: ObservationSet,
    val_points,
    val_targets,
    *,
    params: ModelParams | None = None,
    rng: np.random.Generator | None = None,
    workers: int = 1,
    clock: Callable[[], float] = time.perf_counter,
    stop_at_target: bool = True,
) -> TrainResult:
    """Train with AdamW and a cosine schedule, keeping the best validated snapshot.

    The seeded generator is consumed by initialization first, then by one
    permutation per epoch. Stops when validation error drops below the
    target (unless *stop_at_target* is false, in which case the time to target
    is only recorded), or when the epoch or wall-clock budget runs out.
    """
    config.validate()
    n = len(train_obs)
    if n == 0:
        raise InvalidObservationsError("training needs at least one observation")
    if len(np.asarray(val_points).reshape(-1, 4)) == 0:
        raise InvalidObservationsError("training needs a non-empty validation set")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    params = init_params(config, rng) if params is None else params.copy()

    batch = config.batch_size
    if batch > n:
        log.warning("Batch size %d exceeds %d observations, using %d", batch, n, n)
        batch = n

    trainer = _Trainer(config, train_obs, val_points, val_targets, workers, clock, stop_at_target)
    state = AdamWState.zeros(params)
    log.info(
        "Training W=%d (%s) on %d observations, batch %d, up to %d epochs",
        params.width_half, params.activation.value, n, batch, config.max_epochs,
    )

    step = 0
    trainer.record(0, 0, masked_mse_loss(params, train_obs, workers), cosine_lr(0, config))
    stop = trainer.validate(params) or trainer.out_of_time()

    epoch = 0
    while not stop and epoch < config.max_epochs:
        lr = cosine_lr(epoch, config)
        order = rng.permutation(n)
        for begin in range(0, n, batch):
            tick = clock()
            loss, grads = loss_gradient(params, train_obs.subset(order[begin:begin + batch]), workers)
            if not math.isfinite(loss) or not grads.is_finite():
                log.error("Non-finite loss %r at step %d epoch %d", loss, step + 1, epoch)
                raise NumericalAbort(
                    f"non-finite loss {loss!r} at step {step + 1}, epoch {epoch}",
                    step=step + 1, epoch=epoch, loss=loss, log=trainer.log,
                )
            params, state = adamw_step(params, state, grads, lr, config)
            trainer.train_seconds += clock() - tick
            step += 1
            trainer.record(step, epoch, loss, lr)
            log.debug("step %d epoch %d loss %.6g lr %.3g", step, epoch, loss, lr)
            if step % config.val_every_steps == 0 and trainer.validate(params):
                stop = True
            if stop or trainer.out_of_time():
                stop = True
                break
        epoch += 1

    if trainer.log.records[-1].val_rel_error is None:
        trainer.validate(params)

    best = trainer.best_params if trainer.best_params is not None else params
    gate_points = trainer.val_points[:RESIDUAL_GATE_POINTS]
    residual = residual_error(best, gate_points, workers=workers)
    scale = 1.0 + float(np.max(np.abs(network.forward(best, gate_points, workers))))
    if residual > RESIDUAL_GATE * scale:
        raise VerificationError(f"model residual RMSE {residual:.3g} exceeds {RESIDUAL_GATE:g}")

    converged = trainer.time_to_target is not None
    log.info(
        "Training finished after %d steps (%d epochs): best error %.4g, converged=%s",
        step, epoch, trainer.best_error, converged,
    )
    return TrainResult(
        params=best,
        log=trainer.log,
        state=state,
        converged=converged,
        best_error=trainer.best_error,
        time_to_target=trainer.time_to_target,
        time_to_best=trainer.time_to_best,
        residual_rmse=residual,
        steps=step,
        final_params=params,
    )


def _flat_view(params: ModelParams) -> list[np.ndarray]:
    return [a for br in params.branches for a in (br.spatial_freqs, br.out_weights, br.biases)]


def _flat_grad(grads: GradientBundle) -> list[np.ndarray]:
    return [a for br in grads.branches for a in br.arrays()]


def gradient_check(params: ModelParams, obs: ObservationSet, step: float = 1e-5) -> float:
    """Max relative error between loss_gradient and central differences.

    Differences at *step* and *step*/2 are combined by Richardson
    extrapolation. Relative errors use max(|analytic|, |numeric|, 1e-8).
    """
    _, grads = loss_gradient(params, obs)
    perturbed = params.copy()
    worst = 0.0

    def central(arr, index, h):
        saved = arr[index]
        arr[index] = saved + h
        up = masked_mse_loss(perturbed, obs)
        arr[index] = saved - h
        down = masked_mse_loss(perturbed, obs)
        arr[index] = saved
        return (up - down) / (2.0 * h)

    for arr, g in zip(_flat_view(perturbed), _flat_grad(grads)):
        for index in np.ndindex(arr.shape):
            coarse = central(arr, index, step)
            fine = central(arr, index, step / 2.0)
            numeric = (4.0 * fine - coarse) / 3.0
            analytic = g[index]
            denom = max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic - numeric) / denom)
    log.debug("Gradient check over W=%d: max relative error %.3g", params.width_half, worst)
    return worst
