import numpy as np
import pytest

from swarmlift.formation import (
    build_input_matrix,
    even_formation,
    gramian_objective,
    optimize_formation,
)
from swarmlift.payload import ConfigurationError


class TestInputMatrix:
    def test_square_formation_determinant(self):
        positions = [(1, 1), (-1, 1), (-1, -1), (1, -1)]
        signs = [1, -1, 1, -1]
        b = build_input_matrix(positions, signs, 1.0, 0.1, (0, 0))
        gram = b @ b.T
        assert np.allclose(np.diag(gram), [4.0, 4.0, 0.04])
        assert np.isclose(gramian_objective(b), 0.64)

    def test_zero_torque_coeff_kills_yaw_row(self):
        positions = [(1, 1), (-1, 1), (-1, -1), (1, -1)]
        b = build_input_matrix(positions, [1, -1, 1, -1], 1.0, 0.0, (0, 0))
        assert gramian_objective(b) == 0.0

    def test_com_shift_moves_coordinate_rows(self):
        positions = [(1, 1), (-1, 1), (-1, -1), (1, -1)]
        signs = [1, -1, 1, -1]
        b0 = build_input_matrix(positions, signs, 2.0, 0.1, (0, 0))
        b1 = build_input_matrix(positions, signs, 2.0, 0.1, (0.3, -0.2))
        assert np.allclose(b1[0], b0[0] - 2.0 * 0.3)
        assert np.allclose(b1[1], b0[1] + 2.0 * 0.2)
        assert np.allclose(b1[2], b0[2])

    def test_collinear_robots_rank_deficient(self):
        positions = [(x, 0.0) for x in np.linspace(-1, 1, 5)]
        b = build_input_matrix(positions, [1, -1, 1, -1, 1], 1.0, 0.01, (0, 0))
        assert abs(gramian_objective(b)) < 1e-18

    def test_column_permutation_invariance(self):
        rng = np.random.default_rng(0)
        positions = rng.uniform(-1, 1, size=(6, 2))
        signs = np.array([1, -1, 1, -1, 1, -1], dtype=float)
        b = build_input_matrix(positions, signs, 1.0, 0.01, (0.1, 0.0))
        perm = rng.permutation(6)
        bp = build_input_matrix(positions[perm], signs[perm], 1.0, 0.01, (0.1, 0.0))
        assert np.isclose(gramian_objective(b), gramian_objective(bp), rtol=1e-12)


class TestEvenFormation:
    def test_spacing_is_perimeter_over_count(self, rect_payload):
        form = even_formation(rect_payload, 8)
        gaps = np.diff(np.append(form.arc_positions,
                                 form.arc_positions[0] + rect_payload.rail.length))
        assert np.allclose(gaps, rect_payload.rail.length / 8)

    def test_centered_com_nearly_balanced(self, rect_payload):
        form = even_formation(rect_payload, 8, com=(0.0, 0.0))
        assert np.all(form.balance_residuals() < 0.11)

    def test_offset_com_residual_closed_form(self, rect_payload):
        com = (0.4, 0.01)
        form = even_formation(rect_payload, 8, com=com)
        expected_b1 = abs(form.thrust_coeff * (np.sum(form.positions[:, 0]) - 8 * com[0]))
        expected_b2 = abs(form.thrust_coeff * (np.sum(form.positions[:, 1]) - 8 * com[1]))
        residuals = form.balance_residuals()
        assert np.isclose(residuals[0], expected_b1, atol=1e-12)
        assert np.isclose(residuals[1], expected_b2, atol=1e-12)
        assert residuals[0] > 1.0      # strongly unbalanced about the offset COM


class TestOptimizeFree:
    def test_rectangle_centered(self, rect_payload):
        rng = np.random.default_rng(1)
        form, report = optimize_formation(rect_payload, (0.0, 0.0, 3.0), 8, 1e-5,
                                          mode="free", rng=rng, restarts=3)
        assert report.feasible
        assert report.objective > 0
        assert np.all(report.balance_residuals <= 1e-5)
        gaps = np.diff(form.arc_positions)
        assert np.all(gaps >= 0.15 - 1e-6) or len(gaps) == 0

    def test_offset_com_concentrates_toward_it(self, rect_payload):
        rng = np.random.default_rng(2)
        form, report = optimize_formation(rect_payload, (0.33, 0.01, 3.5), 8, 1e-5,
                                          mode="free", rng=rng, restarts=3)
        assert report.feasible
        # robot centroid coincides with the COM estimate, so in the payload
        # frame the crowd shifts toward the heavy +x side
        assert np.mean(form.positions[:, 0]) > 0.3
        assert np.isclose(np.sum(form.positions[:, 0] - 0.33), 0.0, atol=1e-5)

    def test_deterministic_given_seed(self, rect_payload):
        f1, r1 = optimize_formation(rect_payload, (0.2, 0.0, 3.0), 8, 1e-5,
                                    mode="free", rng=np.random.default_rng(9),
                                    restarts=2)
        f2, r2 = optimize_formation(rect_payload, (0.2, 0.0, 3.0), 8, 1e-5,
                                    mode="free", rng=np.random.default_rng(9),
                                    restarts=2)
        assert np.array_equal(f1.arc_positions, f2.arc_positions)
        assert r1.objective == r2.objective

    def test_beats_modest_random_search(self, rect_payload):
        from oracles import sample_feasible_stratified
        rng = np.random.default_rng(3)
        form, report = optimize_formation(rect_payload, (0.2, 0.0, 3.0), 8, 1e-5,
                                          mode="free", rng=rng, restarts=3)
        dets = sample_feasible_stratified(rect_payload, (0.2, 0.0), 8, 3000,
                                          np.random.default_rng(100), 0.15, 1e-5)
        assert report.objective >= float(np.max(dets))

    def test_too_few_robots_rejected(self, rect_payload):
        with pytest.raises(ConfigurationError):
            optimize_formation(rect_payload, (0.0, 0.0, 3.0), 2, 1e-5)


class TestOptimizeSymmetric:
    def test_exact_balance_and_structure(self, rect_payload):
        rng = np.random.default_rng(4)
        com = (0.195, 0.02, 3.55)
        form, report = optimize_formation(rect_payload, com, 8, 0.0,
                                          mode="symmetric", rng=rng, restarts=3)
        assert report.feasible
        assert np.all(report.balance_residuals <= 1e-13)
        # four COM-decided positions: end-wall trim duo and the bracketing pair
        xs = form.positions[:, 0]
        ys = form.positions[:, 1]
        y_trim = 8 * com[1] / 2.0
        assert np.isclose(ys[np.argmin(np.abs(xs - 0.88))], y_trim)
        assert np.isclose(ys[np.argmin(np.abs(xs + 0.88))], y_trim)
        assert np.sum(np.isclose(xs, com[0]) & np.isclose(np.abs(ys), 0.1)) == 2

    def test_mirror_symmetry_of_side_pairs(self, rect_payload):
        rng = np.random.default_rng(5)
        form, _ = optimize_formation(rect_payload, (0.1, -0.02, 3.0), 8, 0.0,
                                     mode="symmetric", rng=rng, restarts=3)
        side = form.positions[np.abs(np.abs(form.positions[:, 1]) - 0.1) < 1e-9]
        top = np.sort(side[side[:, 1] > 0][:, 0])
        bottom = np.sort(side[side[:, 1] < 0][:, 0])
        assert np.allclose(top, bottom, atol=1e-9)

    def test_excessive_com_y_rejected(self, rect_payload):
        with pytest.raises(ConfigurationError):
            optimize_formation(rect_payload, (0.0, 0.06, 3.0), 8, 0.0,
                               mode="symmetric", rng=np.random.default_rng(0),
                               restarts=2)

    def test_odd_robot_count_rejected(self, rect_payload):
        with pytest.raises(ConfigurationError):
            optimize_formation(rect_payload, (0.0, 0.0, 3.0), 7, 0.0,
                               mode="symmetric", rng=np.random.default_rng(0))

    def test_unknown_mode_rejected(self, rect_payload):
        with pytest.raises(ConfigurationError):
            optimize_formation(rect_payload, (0.0, 0.0, 3.0), 8, 0.0,
                               mode="diagonal", rng=np.random.default_rng(0))
