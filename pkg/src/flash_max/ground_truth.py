"""Closed-form Maxwell solutions used as benchmarks, and a finite-difference
residual oracle that certifies them.

All fields take points (N, 4) ordered (t, x, y, z), or a single (4,) point,
and return (E1, E2, E3, B1, B2, B3) per point.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from flash_max.errors import SingularityError
from flash_max.models import GroundTruthId, GroundTruthKind
from flash_max.network import as_batch, residual_from_derivatives

log = logging.getLogger(__name__)

Field = Callable[[np.ndarray], np.ndarray]

RADIAL_MIN_R = 1e-8
RANDOM_WAVE_COUNT = 100
FD_STEP = 1e-4

_SQ3 = np.sqrt(3.0)
_SQ6 = np.sqrt(6.0)

PLANE_WAVE_DIRECTIONS = np.array([
    [_SQ3, 1.0, 1.0, 1.0],
    [_SQ3, -1.0, 1.0, 1.0],
    [_SQ6, -1.0, -2.0, 1.0],
])
# Rows are waves, columns are (E1, E2, E3, B1, B2, B3).
PLANE_WAVE_AMPLITUDES = np.array([
    [1 - _SQ3, 1 + _SQ3, -2.0, _SQ3 + 1, 1 - _SQ3, -2.0],
    [-(1 + _SQ3), 1 - _SQ3, -2.0, _SQ3 - 1, 1 + _SQ3, -2.0],
    [1 - 2 * _SQ6, 2 + _SQ6, 5.0, 2 * _SQ6 + 1, 2 - _SQ6, 5.0],
])


def _unbatch(out: np.ndarray, single: bool) -> np.ndarray:
    return out[0] if single else out


def profile(s):
    """Second derivative of the Gaussian bump 0.01 exp(-10 (s - 0.3)^2)."""
    u = np.asarray(s, dtype=float) - 0.3
    return -0.2 * np.exp(-10.0 * u * u) * (1.0 - 20.0 * u * u)


def plane_waves(points) -> np.ndarray:
    x, single = as_batch(points)
    phases = x @ PLANE_WAVE_DIRECTIONS.T
    return _unbatch(profile(phases) @ PLANE_WAVE_AMPLITUDES, single)


def _radial_profile(s):
    u = s - 0.7
    bump = np.exp(-10.0 * u * u)
    f = 0.01 * bump
    f1 = -0.2 * u * bump
    f2 = -0.2 * bump * (1.0 - 20.0 * u * u)
    return f, f1, f2


def radial_waves(points) -> np.ndarray:
    """Outgoing spherical pulse; singular at the spatial origin."""
    pts, single = as_batch(points)
    t, x, y, z = pts.T
    r = np.sqrt(x * x + y * y + z * z)
    if np.any(r < RADIAL_MIN_R):
        raise SingularityError(f"radial waves are undefined for r < {RADIAL_MIN_R:g}")
    f, f1, f2 = _radial_profile(r - t)
    r2 = r * r
    r3 = r2 * r
    g = f1 / r2 - f / r3
    h = f2 / r3 - 3.0 * f1 / (r2 * r2) + 3.0 * f / (r3 * r2)
    q = -f2 / r2 + f1 / r3
    out = 10.0 * np.stack([
        x * z * h - y * q,
        y * z * h + x * q,
        g + z * z * h - f2 / r,
        y * q + x * z * h,
        -x * q + y * z * h,
        -2.0 * g - (x * x + y * y) * h,
    ], axis=-1)
    return _unbatch(out, single)


def hopf_fibration(points) -> np.ndarray:
    """Rational electromagnetic knot, smooth everywhere."""
    pts, single = as_batch(points)
    t, x, y, z = pts.T
    a = 1.0 + x * x + y * y + z * z - t * t
    t1 = a ** 3 - 12.0 * t * t * a
    t2 = 8.0 * t ** 3 - 6.0 * t * a * a
    d = (a * a + 4.0 * t * t) ** 3
    w = t - z
    u1 = w * w - 1.0 - x * x + y * y
    u2 = 2.0 * x * y - 2.0 * w
    v1 = -2.0 * x * y - 2.0 * w
    v2 = 1.0 - w * w - x * x + y * y
    s1 = 2.0 * x * w - 2.0 * y
    s2 = 2.0 * x + 2.0 * y * w
    out = np.stack([
        t1 * u1 - t2 * u2,
        t1 * v1 - t2 * v2,
        t1 * s1 + t2 * s2,
        t2 * u1 + t1 * u2,
        t2 * v1 + t1 * v2,
        t2 * s1 - t1 * s2,
    ], axis=-1) / d[:, None]
    return _unbatch(out, single)


@dataclass(frozen=True, eq=False)
class RandomSolutionSpec:
    """Spatial frequencies and phase shifts of the random plane-wave superposition."""

    seed: int
    spatial: np.ndarray
    shifts: np.ndarray

    @property
    def count(self) -> int:
        return len(self.shifts)

    @property
    def frequencies(self) -> np.ndarray:
        """Lifted frequencies (count, 4) with z0 >= 0."""
        z0 = np.sqrt(np.sum(self.spatial ** 2, axis=1))
        return np.column_stack([z0, self.spatial])

    @property
    def amplitudes(self) -> np.ndarray:
        z0, z1, z2, z3 = self.frequencies.T
        return np.column_stack([
            z1 * z3 - z2 * z0,
            z2 * z3 + z1 * z0,
            z3 * z3 - z0 * z0,
            z0 * z2 + z1 * z3,
            -z0 * z1 + z2 * z3,
            -z1 * z1 - z2 * z2,
        ])


@functools.lru_cache(maxsize=32)
def random_solution_spec(seed: int) -> RandomSolutionSpec:
    rng = np.random.default_rng(seed)
    spatial = rng.normal(0.0, 0.1, size=(RANDOM_WAVE_COUNT, 3))
    shifts = rng.normal(0.0, 1.0, size=RANDOM_WAVE_COUNT)
    spatial.setflags(write=False)
    shifts.setflags(write=False)
    log.debug("Built random solution spec for seed %d", seed)
    return RandomSolutionSpec(seed, spatial, shifts)


def random_solution(points, seed: int = 0) -> np.ndarray:
    x, single = as_batch(points)
    spec = random_solution_spec(seed)
    phases = x @ spec.frequencies.T + spec.shifts
    return _unbatch(profile(phases) @ spec.amplitudes, single)


_FIELDS: dict[GroundTruthKind, Field] = {
    GroundTruthKind.PLANE_WAVES: plane_waves,
    GroundTruthKind.RADIAL_WAVES: radial_waves,
    GroundTruthKind.HOPF_FIBRATION: hopf_fibration,
}


def field_function(ground_truth: GroundTruthId | str) -> Field:
    if isinstance(ground_truth, str):
        ground_truth = GroundTruthId.parse(ground_truth)
    if ground_truth.kind is GroundTruthKind.RANDOM_SOLUTION:
        return functools.partial(random_solution, seed=ground_truth.seed)
    return _FIELDS[ground_truth.kind]


def eval_ground_truth(ground_truth: GroundTruthId | str, points) -> np.ndarray:
    return field_function(ground_truth)(points)


def fd_residual(field: Field, points, h: float = FD_STEP) -> np.ndarray:
    """Second-order central-difference Maxwell residual, (N, 8)."""
    if h <= 0:
        raise ValueError("h must be positive")
    x, single = as_batch(points)
    derivs = np.empty((len(x), 4, 6))
    for mu in range(4):
        step = np.zeros(4)
        step[mu] = h
        derivs[:, mu, :] = (np.asarray(field(x + step)) - np.asarray(field(x - step))) / (2.0 * h)
    return _unbatch(residual_from_derivatives(derivs), single)


def fd_convergence(field: Field, points, h: float = 1e-3, levels: int = 3) -> list[dict]:
    """Max |residual| at h, h/2, ... and the ratio to the previous level."""
    rows = []
    for level in range(levels):
        step = h / 2 ** level
        worst = float(np.max(np.abs(fd_residual(field, points, step))))
        ratio = rows[-1]["max_residual"] / worst if rows and worst > 0 else None
        rows.append({"h": step, "max_residual": worst, "ratio": ratio})
    return rows


def grid_points(times, resolution: int, lower: float = 0.0, upper: float = 1.0) -> np.ndarray:
    axis = np.linspace(lower, upper, resolution)
    t, x, y, z = np.meshgrid(np.asarray(times, dtype=float), axis, axis, axis, indexing="ij")
    return np.column_stack([t.ravel(), x.ravel(), y.ravel(), z.ravel()])


def export_grid(field: Field, times, resolution: int, lower: float = 0.0, upper: float = 1.0):
    points = grid_points(times, resolution, lower, upper)
    return points, np.asarray(field(points))
