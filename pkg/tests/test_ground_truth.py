import numpy as np
import pytest

from flash_max import ground_truth as gt
from flash_max.errors import ConfigError, SingularityError
from flash_max.experiments.verify import FD_BASE_STEP, FD_RATIO, convergence_points
from flash_max.models import GroundTruthId, GroundTruthKind


def test_hopf_value_at_origin_is_exact():
    np.testing.assert_array_equal(gt.hopf_fibration([0.0, 0.0, 0.0, 0.0]), [-1, 0, 0, 0, 1, 0])


def test_profile_peak():
    assert gt.profile(0.3) == pytest.approx(-0.2, abs=1e-15)


def test_plane_wave_directions_are_null():
    d = gt.PLANE_WAVE_DIRECTIONS
    np.testing.assert_allclose(d[:, 0] ** 2, np.sum(d[:, 1:] ** 2, axis=1), rtol=1e-14)


def test_single_point_and_batch_shapes():
    point = np.array([0.1, 0.4, 0.5, 0.6])
    for kind in GroundTruthKind:
        field = gt.field_function(GroundTruthId(kind))
        single = field(point)
        batch = field(point[None, :])
        assert single.shape == (6,)
        assert batch.shape == (1, 6)
        np.testing.assert_array_equal(single, batch[0])


def test_random_solution_is_deterministic():
    points = np.random.default_rng(0).uniform(size=(20, 4))
    np.testing.assert_array_equal(gt.random_solution(points, seed=3), gt.random_solution(points, seed=3))
    assert not np.allclose(gt.random_solution(points, seed=3), gt.random_solution(points, seed=4))


def test_random_solution_matches_term_by_term_sum():
    spec = gt.random_solution_spec(0)
    assert spec.count == gt.RANDOM_WAVE_COUNT
    point = np.array([0.3, 0.2, 0.7, 0.1])
    expected = np.zeros(6)
    for z, shift, amp in zip(spec.frequencies, spec.shifts, spec.amplitudes):
        expected += gt.profile(point @ z + shift) * amp
    np.testing.assert_allclose(gt.random_solution(point, seed=0), expected, rtol=1e-12, atol=1e-15)


def test_random_solution_frequencies_are_null():
    z = gt.random_solution_spec(5).frequencies
    assert np.all(z[:, 0] >= 0)
    np.testing.assert_allclose(z[:, 0] ** 2, np.sum(z[:, 1:] ** 2, axis=1), rtol=1e-13)


def test_radial_waves_are_singular_at_origin():
    with pytest.raises(SingularityError):
        gt.radial_waves([0.5, 0.0, 0.0, 0.0])


def test_fd_residual_of_constant_and_linear_fields(rng):
    points = rng.uniform(size=(10, 4))
    constant = lambda pts: np.ones((len(np.atleast_2d(pts)), 6))
    assert np.max(np.abs(gt.fd_residual(constant, points))) <= 1e-12

    def linear(pts):
        pts = np.atleast_2d(pts)
        out = np.zeros((len(pts), 6))
        out[:, 0] = pts[:, 1]
        return out

    residual = gt.fd_residual(linear, points)
    np.testing.assert_allclose(residual[:, 6], 1.0, rtol=1e-8)
    np.testing.assert_allclose(np.delete(residual, 6, axis=1), 0.0, atol=1e-12)


@pytest.mark.parametrize("kind", list(GroundTruthKind))
def test_ground_truths_solve_maxwell(kind):
    points = convergence_points(kind, np.random.default_rng(0))
    field = gt.field_function(GroundTruthId(kind))
    rows = gt.fd_convergence(field, points, h=FD_BASE_STEP, levels=2)
    lo, hi = FD_RATIO
    assert lo <= rows[1]["ratio"] <= hi


def test_fd_residual_rejects_bad_step():
    with pytest.raises(ValueError):
        gt.fd_residual(gt.hopf_fibration, np.zeros((1, 4)), h=0.0)


@pytest.mark.parametrize("text", ["plane_waves", "radial_waves", "hopf_fibration", "random_solution:7"])
def test_ground_truth_id_round_trip(text):
    assert str(GroundTruthId.parse(text)) == text


def test_ground_truth_id_defaults_and_errors():
    assert GroundTruthId.parse("random_solution").seed == 0
    with pytest.raises(ConfigError):
        GroundTruthId.parse("gaussian_beam")
    with pytest.raises(ConfigError):
        GroundTruthId.parse("plane_waves:3")


def test_field_function_lookup():
    assert gt.field_function("hopf_fibration") is gt.hopf_fibration
    points = np.random.default_rng(2).uniform(size=(4, 4))
    np.testing.assert_array_equal(gt.eval_ground_truth("random_solution:2", points), gt.random_solution(points, seed=2))


def test_export_grid_layout():
    points, values = gt.export_grid(gt.hopf_fibration, [0.0, 0.5], resolution=3)
    assert points.shape == (54, 4)
    assert values.shape == (54, 6)
    assert set(points[:, 0]) == {0.0, 0.5}
    np.testing.assert_array_equal(np.unique(points[:, 1]), [0.0, 0.5, 1.0])


def _shifted_terms(points, shift, directions, offsets, amplitudes):
    phases = points @ directions.T + offsets + shift @ directions.T
    return gt.profile(phases) @ amplitudes


@pytest.mark.parametrize("tau", [0.3, -0.75])
def test_plane_waves_translate_along_their_directions(rng, tau):
    points = rng.uniform(size=(100, 4))
    directions = gt.PLANE_WAVE_DIRECTIONS
    for d in directions:
        shift = tau * d
        expected = _shifted_terms(points, shift, directions, 0.0, gt.PLANE_WAVE_AMPLITUDES)
        np.testing.assert_allclose(gt.plane_waves(points + shift), expected, rtol=0, atol=1e-12)


def test_plane_waves_are_constant_along_their_null_rays(rng):
    points = rng.uniform(size=(100, 4))
    for d, amp in zip(gt.PLANE_WAVE_DIRECTIONS, gt.PLANE_WAVE_AMPLITUDES):
        ray = np.concatenate([[1.0], -d[1:] / d[0]])
        moved = np.outer(gt.profile((points + 0.4 * ray) @ d), amp)
        np.testing.assert_allclose(moved, np.outer(gt.profile(points @ d), amp), rtol=0, atol=1e-12)


@pytest.mark.parametrize("tau", [0.3, -0.75])
def test_random_solution_translates_along_its_directions(rng, tau):
    points = rng.uniform(size=(100, 4))
    spec = gt.random_solution_spec(3)
    for d in spec.frequencies[:5]:
        shift = tau * d
        expected = _shifted_terms(points, shift, spec.frequencies, spec.shifts, spec.amplitudes)
        np.testing.assert_allclose(gt.random_solution(points + shift, seed=3), expected, rtol=0, atol=1e-11)


def test_convergence_starts_at_the_standard_step():
    kind = GroundTruthKind.RANDOM_SOLUTION
    points = convergence_points(kind, np.random.default_rng(1))
    rows = gt.fd_convergence(gt.field_function(GroundTruthId(kind)), points, h=FD_BASE_STEP, levels=3)
    assert FD_BASE_STEP == 1e-3
    assert [row["h"] for row in rows] == [1e-3, 5e-4, 2.5e-4]
    lo, hi = FD_RATIO
    assert all(lo <= row["ratio"] <= hi for row in rows[1:])
