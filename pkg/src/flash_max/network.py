"""The FLASH-MAX function class.

A network has two branches i = 1, 2 of 2W neurons each.  Neuron k of branch i
contributes ``w_ik * sigma(x . z_ik + b_ik) * p_i(z_ik)`` to the six field
components (E1, E2, E3, B1, B2, B3), where the spacetime frequency
``z_ik = (s_ik * |S_ik|, S_ik)`` is lifted from the trainable spatial row S_ik
onto the light cone z0^2 = z1^2 + z2^2 + z3^2.  The time component is never
stored, so the cone constraint survives any parameter update, and every
network solves the homogeneous Maxwell system exactly.
"""
from __future__ import annotations

import logging

import numpy as np

from flash_max.activations import activate, activate_with_derivative
from flash_max.models import Activation, BranchParams, ModelParams
from flash_max.parallel import map_chunks, sum_in_order

log = logging.getLogger(__name__)

BRANCHES = (1, 2)
NORM_FLOOR = 1e-12


def _check_branch(branch: int) -> None:
    if branch not in BRANCHES:
        raise ValueError(f"branch must be 1 or 2, got {branch!r}")


def as_batch(points, width: int = 4) -> tuple[np.ndarray, bool]:
    """Return (points as a 2-D array, whether the input was a single point)."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        return arr.reshape(1, width), True
    return arr.reshape(-1, width), False


def lift_frequency(spatial, sign) -> np.ndarray:
    """Lift spatial frequencies (..., 3) onto the light cone, giving (..., 4)."""
    spatial = np.asarray(spatial, dtype=float)
    sign = np.asarray(sign, dtype=float)
    if not np.all(np.abs(sign) == 1.0):
        raise ValueError("sign must be +1 or -1")
    z0 = sign * np.sqrt(np.sum(spatial * spatial, axis=-1))
    return np.concatenate([z0[..., None], spatial], axis=-1)


def branch_frequencies(branch: BranchParams) -> np.ndarray:
    return lift_frequency(branch.spatial_freqs, branch.signs)


def noetherian_multiplier(branch: int, z) -> np.ndarray:
    """Evaluate p_1 or p_2 at frequencies z of shape (..., 4)."""
    _check_branch(branch)
    z = np.asarray(z, dtype=float)
    z0, z1, z2, z3 = z[..., 0], z[..., 1], z[..., 2], z[..., 3]
    zero = np.zeros_like(z0)
    if branch == 1:
        parts = (-z1 * z3, -z2 * z3, z0 * z0 - z3 * z3, -z0 * z2, z0 * z1, zero)
    else:
        parts = (z1 * z2, -z0 * z0 + z2 * z2, z2 * z3, -z0 * z3, zero, z0 * z1)
    return np.stack(parts, axis=-1)


def cone_multiplier(branch: int, z) -> np.ndarray:
    """The multipliers with z0^2 eliminated; agrees with p_i on the light cone only."""
    _check_branch(branch)
    z = np.asarray(z, dtype=float)
    z0, z1, z2, z3 = z[..., 0], z[..., 1], z[..., 2], z[..., 3]
    zero = np.zeros_like(z0)
    if branch == 1:
        parts = (-z1 * z3, -z2 * z3, z1 * z1 + z2 * z2, -z0 * z2, z0 * z1, zero)
    else:
        parts = (z1 * z2, -z1 * z1 - z3 * z3, z2 * z3, -z0 * z3, zero, z0 * z1)
    return np.stack(parts, axis=-1)


def multiplier_jacobian(branch: int, z) -> np.ndarray:
    """Partial derivatives d p_c / d z_j, shape (..., 6, 4)."""
    _check_branch(branch)
    z = np.asarray(z, dtype=float)
    z0, z1, z2, z3 = z[..., 0], z[..., 1], z[..., 2], z[..., 3]
    jac = np.zeros(z.shape[:-1] + (6, 4))
    if branch == 1:
        jac[..., 0, 1] = -z3
        jac[..., 0, 3] = -z1
        jac[..., 1, 2] = -z3
        jac[..., 1, 3] = -z2
        jac[..., 2, 0] = 2 * z0
        jac[..., 2, 3] = -2 * z3
        jac[..., 3, 0] = -z2
        jac[..., 3, 2] = -z0
        jac[..., 4, 0] = z1
        jac[..., 4, 1] = z0
    else:
        jac[..., 0, 1] = z2
        jac[..., 0, 2] = z1
        jac[..., 1, 0] = -2 * z0
        jac[..., 1, 2] = 2 * z2
        jac[..., 2, 2] = z3
        jac[..., 2, 3] = z2
        jac[..., 3, 0] = -z3
        jac[..., 3, 3] = -z0
        jac[..., 5, 0] = z1
        jac[..., 5, 1] = z0
    return jac


def residual_from_derivatives(d: np.ndarray) -> np.ndarray:
    """Maxwell residual from field derivatives d[..., mu, c] = d F_c / d x_mu.

    Components: dtE - curl B (3), dtB + curl E (3), div E, div B.
    """
    dt = d[..., 0, :]

    def curl(offset):
        f = lambda mu, c: d[..., mu, offset + c]
        return np.stack([
            f(2, 2) - f(3, 1),
            f(3, 0) - f(1, 2),
            f(1, 1) - f(2, 0),
        ], axis=-1)

    div_e = d[..., 1, 0] + d[..., 2, 1] + d[..., 3, 2]
    div_b = d[..., 1, 3] + d[..., 2, 4] + d[..., 3, 5]
    return np.concatenate([
        dt[..., 0:3] - curl(3),
        dt[..., 3:6] + curl(0),
        div_e[..., None],
        div_b[..., None],
    ], axis=-1)


def maxwell_symbol(z: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Residual of sigma(x . z) p per unit sigma'; (..., 8)."""
    return residual_from_derivatives(z[..., :, None] * p[..., None, :])


def _branch_heads(params: ModelParams):
    heads = []
    for index, br in zip(BRANCHES, params.branches):
        z = branch_frequencies(br)
        p = noetherian_multiplier(index, z)
        heads.append((z, p, br))
    return heads


def forward(params: ModelParams, points, workers: int = 1) -> np.ndarray:
    """Evaluate the field (E, B) at spacetime points (N, 4) -> (N, 6)."""
    x, single = as_batch(points)
    if params.width_half == 0 or len(x) == 0:
        out = np.zeros((len(x), 6))
        return out[0] if single else out

    heads = [(z, br.out_weights[:, None] * p, br.biases) for z, p, br in _branch_heads(params)]

    def chunk(rows: slice) -> np.ndarray:
        xs = x[rows]
        acc = np.zeros((len(xs), 6))
        for z, wp, b in heads:
            acc += activate(params.activation, xs @ z.T + b) @ wp
        return acc

    out = np.concatenate(map_chunks(chunk, len(x), workers))
    return out[0] if single else out


def branch_forward(params: ModelParams, points, branch: int) -> np.ndarray:
    _check_branch(branch)
    x, single = as_batch(points)
    br = params.branches[branch - 1]
    if params.width_half == 0:
        out = np.zeros((len(x), 6))
    else:
        z = branch_frequencies(br)
        wp = br.out_weights[:, None] * noetherian_multiplier(branch, z)
        out = activate(params.activation, x @ z.T + br.biases) @ wp
    return out[0] if single else out


def model_residual(params: ModelParams, points, workers: int = 1) -> np.ndarray:
    """Analytic Maxwell residual of the network at points (N, 4) -> (N, 8).

    Each neuron contributes w * sigma'(x . z + b) * A(z) p(z), where A(z) p(z)
    vanishes on the light cone, so only roundoff remains.
    """
    x, single = as_batch(points)
    if params.width_half == 0 or len(x) == 0:
        out = np.zeros((len(x), 8))
        return out[0] if single else out

    heads = []
    for z, p, br in _branch_heads(params):
        heads.append((z, br.out_weights[:, None] * maxwell_symbol(z, p), br.biases))

    def chunk(rows: slice) -> np.ndarray:
        xs = x[rows]
        acc = np.zeros((len(xs), 8))
        for z, wr, b in heads:
            _, d_sigma = activate_with_derivative(params.activation, xs @ z.T + b)
            acc += d_sigma @ wr
        return acc

    out = np.concatenate(map_chunks(chunk, len(x), workers))
    return out[0] if single else out


def scale_out_weights(params: ModelParams, alpha: float) -> ModelParams:
    scaled = params.copy()
    for br in scaled.branches:
        br.out_weights *= alpha
    return scaled


def zero_branch(params: ModelParams, branch: int) -> ModelParams:
    _check_branch(branch)
    out = params.copy()
    out.branches[branch - 1].out_weights[:] = 0.0
    return out


def trainable_parameter_count(params: ModelParams) -> int:
    # three spatial entries, one output weight and one bias per neuron
    return 2 * (2 * params.width_half) * 5


def single_neuron(
    branch: int,
    spatial,
    sign: float,
    weight: float = 1.0,
    bias: float = 0.0,
    activation: Activation = Activation.TANH,
) -> ModelParams:
    """A W=1 network whose only active neuron is the given one."""
    _check_branch(branch)
    params = ModelParams.zeros(1, activation)
    br = params.branches[branch - 1]
    row = 0 if sign > 0 else 1
    br.spatial_freqs[row] = spatial
    br.out_weights[row] = weight
    br.biases[row] = bias
    return params
