"""Exact cos-activation networks for divergence-free trigonometric initial data.

For a spatial frequency xi with xi1 != 0 the four multiplier columns
p1(+|xi|, xi), p2(+|xi|, xi), p1(-|xi|, xi), p2(-|xi|, xi) span the kernel of
the divergence symbol R(xi), so any admissible amplitude is a combination of
them and the matching neurons reproduce the field exactly at t = 0.
"""
from __future__ import annotations

import logging

import numpy as np
from scipy import linalg

from flash_max.errors import ConfigError, InfeasibleAmplitudeError, RankDeficiencyError
from flash_max.models import Activation, BranchParams, ModelParams, TrigTerm
from flash_max.network import lift_frequency, noetherian_multiplier

log = logging.getLogger(__name__)

MIN_XI1 = 1e-8
KERNEL_TOL = 1e-10
FIT_TOL = 1e-9


def _xi(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float).reshape(3)
    if not np.any(xi):
        raise RankDeficiencyError("xi must be non-zero")
    return xi


def divergence_symbol(xi) -> np.ndarray:
    """R(xi): the 2x6 matrix taking (E, B) amplitudes to (xi.E, xi.B)."""
    xi = np.asarray(xi, dtype=float).reshape(3)
    r = np.zeros((2, 6))
    r[0, :3] = xi
    r[1, 3:] = xi
    return r


def build_P(xi) -> np.ndarray:
    xi = _xi(xi)
    plus = lift_frequency(xi, 1.0)
    minus = lift_frequency(xi, -1.0)
    return np.column_stack([
        noetherian_multiplier(1, plus),
        noetherian_multiplier(2, plus),
        noetherian_multiplier(1, minus),
        noetherian_multiplier(2, minus),
    ])


def project_to_kernel(xi, amplitude) -> np.ndarray:
    """Remove the xi-parallel parts of the E and B halves."""
    xi = _xi(xi)
    amp = np.asarray(amplitude, dtype=float).reshape(6).copy()
    unit = xi / np.linalg.norm(xi)
    for half in (slice(0, 3), slice(3, 6)):
        amp[half] -= np.dot(amp[half], unit) * unit
    return amp


def solve_coefficients(xi, amplitude) -> np.ndarray:
    xi = _xi(xi)
    if abs(xi[0]) < MIN_XI1:
        raise RankDeficiencyError(f"|xi1| = {abs(xi[0]):.3g} is below {MIN_XI1:g}; P(xi) loses rank")
    amp = np.asarray(amplitude, dtype=float).reshape(6)
    norm = np.linalg.norm(amp)
    kernel_residual = float(np.linalg.norm(divergence_symbol(xi) @ amp))
    if kernel_residual > KERNEL_TOL * max(1.0, np.linalg.norm(xi) * norm):
        raise InfeasibleAmplitudeError(
            f"amplitude is not divergence free for xi={xi.tolist()} (|R a| = {kernel_residual:.3g})",
            kernel_residual,
        )
    p = build_P(xi)
    coeffs, *_ = linalg.lstsq(p, amp, lapack_driver="gelsy")
    fit = float(np.linalg.norm(p @ coeffs - amp))
    if fit > FIT_TOL * max(norm, np.finfo(float).tiny):
        raise InfeasibleAmplitudeError(f"least-squares fit residual {fit:.3g} for xi={xi.tolist()}", fit)
    return coeffs


def assemble_cos_network(terms: list[TrigTerm]) -> ModelParams:
    """A cos network equal to sum(amp_cos cos(xi.x) + amp_sin sin(xi.x)) at t = 0.

    Each term uses a cos neuron (bias 0) and a sin neuron (bias -pi/2) for
    every (branch, sign) pair, so W = 2 * len(terms).
    """
    w = 2 * len(terms)
    params = ModelParams.zeros(w, Activation.COS)
    for j, term in enumerate(terms):
        for k, (amp, bias) in enumerate(((term.amp_cos, 0.0), (term.amp_sin, -np.pi / 2))):
            c = solve_coefficients(term.xi, amp)
            plus_row = 2 * j + k
            minus_row = w + plus_row
            for coeff, branch, row in (
                (c[0], 0, plus_row), (c[1], 1, plus_row), (c[2], 0, minus_row), (c[3], 1, minus_row)
            ):
                br: BranchParams = params.branches[branch]
                br.spatial_freqs[row] = term.xi
                br.out_weights[row] = coeff
                br.biases[row] = bias
    log.info("Assembled cos network with W=%d from %d term(s)", w, len(terms))
    return params


def trig_field(terms: list[TrigTerm], points) -> np.ndarray:
    """Closed-form trigonometric field at the spatial part of *points* (N, 4)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 4)
    out = np.zeros((len(pts), 6))
    for term in terms:
        phase = pts[:, 1:] @ term.xi
        out += np.outer(np.cos(phase), term.amp_cos) + np.outer(np.sin(phase), term.amp_sin)
    return out


def random_trig_term(rng: np.random.Generator, min_xi1: float = 0.1) -> TrigTerm:
    """A single-frequency divergence-free term with |xi1| >= min_xi1."""
    xi = rng.normal(0.0, 1.0, size=3)
    while abs(xi[0]) < min_xi1:
        xi[0] = rng.normal()
    amp_cos = project_to_kernel(xi, rng.normal(size=6))
    amp_sin = project_to_kernel(xi, rng.normal(size=6))
    return TrigTerm(xi, amp_cos, amp_sin)


def load_terms(data) -> list[TrigTerm]:
    """Parse ``[{"xi": [...], "amp_cos": [...], "amp_sin": [...]}, ...]``.

    A mapping with a ``terms`` key is accepted too. A missing amplitude is zero.
    """
    if isinstance(data, dict):
        data = data.get("terms")
    if not isinstance(data, list):
        raise ConfigError("expected a list of trigonometric terms")
    terms = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict) or "xi" not in entry:
            raise ConfigError(f"term {i}: expected a mapping with an 'xi' entry")
        unknown = set(entry) - {"xi", "amp_cos", "amp_sin"}
        if unknown:
            raise ConfigError(f"term {i}: unknown key(s) {sorted(unknown)}")
        try:
            terms.append(TrigTerm(
                entry["xi"],
                entry.get("amp_cos", [0.0] * 6),
                entry.get("amp_sin", [0.0] * 6),
            ))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"term {i}: {exc}") from exc
    return terms
