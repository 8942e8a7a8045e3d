from __future__ import annotations

import logging

import numpy as np

from flash_max.errors import ConfigError
from flash_max.ground_truth import eval_ground_truth
from flash_max.models import ObservationSet, SamplingConfig, Setup

log = logging.getLogger(__name__)

BC_FACES = 7
IC_VALIDATION_BOX = ((0.0, 0.1), (0.2, 0.8), (0.2, 0.8), (0.2, 0.8))
BC_VALIDATION_BOX = ((0.0, 1.0),) * 4

# (spatial axis, pinned value) for faces 1..6; face 0 is the t=0 interior.
SPATIAL_FACES = ((1, 0.0), (1, 1.0), (2, 0.0), (2, 1.0), (3, 0.0), (3, 1.0))


def streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    train_seq, val_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(train_seq), np.random.default_rng(val_seq)


def tangential_mask(axis: int) -> np.ndarray:
    """Mask selecting the two E components tangential to a face normal to *axis*."""
    mask = np.zeros(6, dtype=bool)
    mask[:3] = True
    mask[axis - 1] = False
    return mask


def _initial_slice(rng: np.random.Generator, n: int) -> np.ndarray:
    return np.column_stack([np.zeros(n), rng.uniform(0.0, 1.0, size=(n, 3))])


def sample_points_bc(rng: np.random.Generator, n_train: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Points, masks and face index for floor(n_train / 7) points on each face."""
    per_face = n_train // BC_FACES
    if per_face == 0:
        raise ConfigError(f"BC sampling needs at least {BC_FACES} training points, got {n_train}")
    if n_train % BC_FACES:
        log.debug("Dropping %d remainder point(s) in BC sampling", n_train % BC_FACES)

    points = [_initial_slice(rng, per_face)]
    masks = [np.ones((per_face, 6), dtype=bool)]
    for axis, value in SPATIAL_FACES:
        face = rng.uniform(0.0, 1.0, size=(per_face, 4))
        face[:, axis] = value
        points.append(face)
        masks.append(np.tile(tangential_mask(axis), (per_face, 1)))
    faces = np.repeat(np.arange(BC_FACES), per_face)
    return np.concatenate(points), np.concatenate(masks), faces


def sample_train(config: SamplingConfig) -> ObservationSet:
    rng, _ = streams(config.seed)
    if config.setup is Setup.IC:
        points = _initial_slice(rng, config.n_train)
        masks = np.ones((len(points), 6), dtype=bool)
    else:
        points, masks, _ = sample_points_bc(rng, config.n_train)
    targets = eval_ground_truth(config.ground_truth, points)
    log.info("Sampled %d %s training observations of %s", len(points), config.setup.value, config.ground_truth)
    return ObservationSet(points, targets, masks)


def sample_box(rng: np.random.Generator, n: int, box) -> np.ndarray:
    lows = np.array([lo for lo, _ in box])
    highs = np.array([hi for _, hi in box])
    return rng.uniform(lows, highs, size=(n, 4))


def sample_validation(config: SamplingConfig) -> tuple[np.ndarray, np.ndarray]:
    _, rng = streams(config.seed)
    box = IC_VALIDATION_BOX if config.setup is Setup.IC else BC_VALIDATION_BOX
    points = sample_box(rng, config.n_val, box)
    if len(points) == 0:
        return points, np.zeros((0, 6))
    return points, eval_ground_truth(config.ground_truth, points)
