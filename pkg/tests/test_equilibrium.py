import itertools

import numpy as np
import pytest

from swarmlift.equilibrium import (
    CantileverProblem,
    cantilever_thrust,
    equilibrium_residual,
    problem_terms,
    simulate_measurement,
    unselected_weight_wrench,
)
from swarmlift.payload import PayloadModel, RailPath, evenly_spaced_candidates

from conftest import make_payload


def oracle_tipping_thrust(w_contacts, w_pair, load, tol=1e-9):
    """Exhaustive vertex enumeration of the balance polytope.

    The equality system has three rows, so every vertex activates at most
    three of the k+1 nonnegative variables; solving every 3-subset and
    keeping the nonnegative ones yields the exact maximum thrust.
    """
    k = w_contacts.shape[1]
    columns = np.hstack([w_contacts, w_pair.reshape(3, 1)])
    target = -load
    best = None
    for basis in itertools.combinations(range(k + 1), 3):
        sub = columns[:, basis]
        try:
            values = np.linalg.solve(sub, target)
        except np.linalg.LinAlgError:
            continue
        if np.any(values < -tol):
            continue
        lam = values[list(basis).index(k)] if k in basis else 0.0
        if best is None or lam > best:
            best = lam
    # bases smaller than 3 variables (degenerate geometry): try pairs too
    for basis in itertools.combinations(range(k + 1), 2):
        sub = columns[:, basis]
        values, residual, *_ = np.linalg.lstsq(sub, target, rcond=None)
        if np.max(np.abs(sub @ values - target)) > 1e-8:
            continue
        if np.any(values < -tol):
            continue
        lam = values[list(basis).index(k)] if k in basis else 0.0
        if best is None or lam > best:
            best = lam
    return best


def oracle_for(problem):
    return oracle_tipping_thrust(*problem_terms(problem))


class TestPlankExamples:
    def test_symmetric_plank_tipping(self, plank_payload):
        problem = CantileverProblem(plank_payload, (0, 1), (0.0, 0.0, 2.0))
        sol = cantilever_thrust(problem, detail=True)
        assert sol.feasible
        assert np.isclose(sol.lambda_r, 9.81, atol=1e-5)

    def test_com_over_pivot_gives_zero(self, plank_payload):
        problem = CantileverProblem(plank_payload, (0, 1), (-0.5, 0.0, 2.0))
        sol = cantilever_thrust(problem)
        assert sol.feasible
        assert abs(sol.lambda_r) < 1e-8

    def test_residual_within_tolerance(self, plank_payload):
        problem = CantileverProblem(plank_payload, (0, 1), (0.1, 0.0, 3.0))
        sol = cantilever_thrust(problem, detail=True)
        assert equilibrium_residual(problem, sol) <= 1e-6


class TestOracleAgreement:
    def test_rectangle_short_edge_pair(self, rect_payload):
        problem = CantileverProblem(rect_payload, (5, 6), (0.33, 0.01, 3.5))
        sol = cantilever_thrust(problem)
        assert sol.feasible
        assert abs(sol.lambda_r - oracle_for(problem)) <= 1e-6

    def test_randomized_instances(self):
        rng = np.random.default_rng(42)
        checked = 0
        while checked < 60:
            n_contacts = int(rng.integers(3, 9))
            half_l, half_w = rng.uniform(0.4, 1.0), rng.uniform(0.1, 0.4)
            footprint = np.array([[-half_l, -half_w], [half_l, -half_w],
                                  [half_l, half_w], [-half_l, half_w]])
            contacts = np.column_stack([rng.uniform(-half_l, half_l, n_contacts),
                                        rng.uniform(-half_w, half_w, n_contacts)])
            payload = make_payload(footprint, contacts=contacts,
                                   robot_mass=rng.uniform(0.0, 0.2))
            pair = (int(rng.integers(0, 12)),)
            pair = (pair[0], (pair[0] + 1) % 12)
            hyp = (rng.uniform(-half_l, half_l) * 0.8,
                   rng.uniform(-half_w, half_w) * 0.8,
                   rng.uniform(1.0, 5.0))
            problem = CantileverProblem(payload, pair, hyp)
            sol = cantilever_thrust(problem)
            oracle = oracle_for(problem)
            if sol.feasible:
                assert oracle is not None
                assert abs(sol.lambda_r - oracle) <= 1e-6
            else:
                assert oracle is None
            checked += 1


class TestProperties:
    def test_monotone_in_mass(self, rect_payload):
        lams = []
        for mass in (2.0, 2.5, 3.0, 3.5, 4.0):
            problem = CantileverProblem(rect_payload, (5, 6), (0.2, 0.0, mass))
            lams.append(cantilever_thrust(problem).lambda_r)
        assert np.all(np.diff(lams) >= -1e-9)

    def test_translation_equivariance(self):
        base = np.array([[-0.6, -0.15], [0.6, -0.15], [0.6, 0.15], [-0.6, 0.15]])
        shift = np.array([1.7, -0.9])
        p0 = make_payload(base)
        p1 = make_payload(base + shift)
        lam0 = cantilever_thrust(CantileverProblem(p0, (2, 3), (0.2, 0.05, 3.0))).lambda_r
        lam1 = cantilever_thrust(
            CantileverProblem(p1, (2, 3), (0.2 + shift[0], 0.05 + shift[1], 3.0))).lambda_r
        assert np.isclose(lam0, lam1, atol=1e-8)

    def test_infeasible_hypothesis_flagged(self, plank_payload):
        # gravity off the contact line cannot be balanced by the line contacts
        good = CantileverProblem(plank_payload, (0, 1), (0.2, 0.0, 2.0))
        bad = CantileverProblem(plank_payload, (0, 1), (-0.5, 0.04, 2.0))
        assert cantilever_thrust(good).feasible
        sol = cantilever_thrust(bad)
        assert not sol.feasible and sol.lambda_r is None


class TestMeasurement:
    def test_noiseless_equals_model(self, rect_payload):
        rng = np.random.default_rng(0)
        z = simulate_measurement(rect_payload, (0.3, 0.01, 3.5), (5, 6), 0.0, rng)
        lam = cantilever_thrust(
            CantileverProblem(rect_payload, (5, 6), (0.3, 0.01, 3.5))).lambda_r
        assert z == lam

    def test_seeded_reproducibility(self, rect_payload):
        z1 = simulate_measurement(rect_payload, (0.3, 0.01, 3.5), (5, 6), 1.0,
                                  np.random.default_rng(7))
        z2 = simulate_measurement(rect_payload, (0.3, 0.01, 3.5), (5, 6), 1.0,
                                  np.random.default_rng(7))
        assert z1 == z2

    def test_noise_variance_monte_carlo(self, rect_payload):
        rng = np.random.default_rng(11)
        lam = cantilever_thrust(
            CantileverProblem(rect_payload, (5, 6), (0.3, 0.01, 3.5))).lambda_r
        samples = np.array([
            simulate_measurement(rect_payload, (0.3, 0.01, 3.5), (5, 6), 1.0, rng)
            for _ in range(10_000)])
        assert abs(np.var(samples - lam) - 1.0) < 0.05

    def test_negative_variance_rejected(self, rect_payload):
        with pytest.raises(ValueError):
            simulate_measurement(rect_payload, (0.3, 0.01, 3.5), (5, 6), -1.0,
                                 np.random.default_rng(0))


class TestUnselectedRobots:
    def test_hovering_robots_add_nothing(self, rect_payload):
        positions = [rect_payload.rail.point_at(s) for s in np.linspace(0, 3, 6)]
        w = unselected_weight_wrench(rect_payload, positions, hover_own_weight=True)
        assert np.allclose(w.as_array(), 0.0)

    def test_parked_weights_add_up(self, rect_payload):
        positions = [rect_payload.rail.point_at(s) for s in np.linspace(0, 3, 6)]
        w = unselected_weight_wrench(rect_payload, positions, hover_own_weight=False)
        assert np.isclose(w.fz, -6 * 0.1 * 9.81)
        assert np.isclose(w.fz, -5.886)

    def test_toggle_changes_thrust_by_oracle_delta(self, rect_payload):
        positions = tuple((float(p[0]), float(p[1]))
                          for p in (rect_payload.rail.point_at(s)
                                    for s in np.linspace(0.2, 2.8, 6)))
        base = CantileverProblem(rect_payload, (5, 6), (0.2, 0.0, 3.0))
        loaded = CantileverProblem(rect_payload, (5, 6), (0.2, 0.0, 3.0),
                                   extra_weight_positions=positions)
        lam_base = cantilever_thrust(base).lambda_r
        lam_loaded = cantilever_thrust(loaded).lambda_r
        assert abs(lam_base - oracle_for(base)) <= 1e-6
        assert abs(lam_loaded - oracle_for(loaded)) <= 1e-6
        assert lam_loaded != pytest.approx(lam_base, abs=1e-3)
