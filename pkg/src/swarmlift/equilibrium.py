"""Static equilibrium of the grounded payload under a lifting robot pair.

Two robots on adjacent slots push straight up with a shared total thrust.
The payload stays grounded as long as nonnegative ground reactions can
balance the combined wrench; the largest such thrust is the verge-of-tipping
value, and that threshold is what the estimator treats as the measurement.

The balance is a tiny linear program: three wrench equalities (vertical
force, roll torque, pitch torque), one reaction variable per contact, one
thrust variable, all nonnegative, thrust maximized.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import chain, combinations

import numpy as np
from scipy.optimize import linprog

from .payload import (
    PayloadModel,
    Wrench,
    gravity_wrench,
    robot_weight_wrench,
    thrust_wrench,
)

RESIDUAL_TOL = 1e-6
_FORCE_TOL = 1e-9


class GeometryError(RuntimeError):
    """The lift geometry admits unbounded thrust (degenerate contact layout)."""


@dataclass(frozen=True)
class CantileverProblem:
    payload: PayloadModel
    pair: tuple[int, int]
    hypothesis: tuple[float, float, float]   # (com_x, com_y, mass)
    extra_weight_positions: tuple | None = None  # parked robots whose weight loads the payload

    def __post_init__(self):
        i1, i2 = self.pair
        n = len(self.payload.candidates)
        if i1 == i2 or not (0 <= i1 < n and 0 <= i2 < n):
            raise ValueError(f"invalid slot pair {self.pair}")


@dataclass(frozen=True)
class EquilibriumSolution:
    lambda_r: float | None          # pair-total thrust at tipping, None if infeasible
    contact_forces: np.ndarray | None
    active_set: tuple[int, ...]
    feasible: bool

    @property
    def thrust(self) -> float:
        if not self.feasible:
            raise ValueError("no equilibrium exists for this hypothesis")
        return float(self.lambda_r)


def problem_terms(problem: CantileverProblem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Contact wrench matrix (3 x k), pair lift wrench, and constant load wrench."""
    payload = problem.payload
    contacts = payload.contacts
    w_contacts = np.stack([thrust_wrench(c).as_array() for c in contacts], axis=1)

    i1, i2 = problem.pair
    p1, p2 = payload.candidates[i1], payload.candidates[i2]
    # lambda_r is the pair-total thrust, split equally between the two slots
    w_pair = 0.5 * (thrust_wrench(p1).as_array() + thrust_wrench(p2).as_array())

    load = gravity_wrench(problem.hypothesis, payload.gravity)
    load = load + robot_weight_wrench(p1, payload.robot_mass, payload.gravity)
    load = load + robot_weight_wrench(p2, payload.robot_mass, payload.gravity)
    if problem.extra_weight_positions is not None:
        for pos in problem.extra_weight_positions:
            load = load + robot_weight_wrench(pos, payload.robot_mass, payload.gravity)
    return w_contacts, w_pair, load.as_array()


def _canonical_active_set(w_contacts, w_pair, load, lambda_r):
    """First admissible contact subset in lexicographic order.

    The wrench balance has rank <= 3, so some subset of at most three
    contacts supports the optimal thrust; scanning subsets in lexicographic
    order makes the reported active set deterministic under degenerate ties.
    """
    k = w_contacts.shape[1]
    target = -(load + w_pair * lambda_r)
    subsets = sorted(chain.from_iterable(combinations(range(k), s) for s in range(1, min(k, 3) + 1)))
    for subset in subsets:
        sub = w_contacts[:, subset]
        forces, *_ = np.linalg.lstsq(sub, target, rcond=None)
        if np.any(forces < -1e-7):
            continue
        if np.max(np.abs(sub @ forces - target)) > RESIDUAL_TOL:
            continue
        full = np.zeros(k)
        full[list(subset)] = np.maximum(forces, 0.0)
        return subset, full
    return None


def cantilever_thrust(problem: CantileverProblem, detail: bool = False) -> EquilibriumSolution:
    """Largest pair thrust that nonnegative ground reactions can still balance.

    Beyond the returned value the moment about the far contact line cannot be
    countered and the payload starts to tip, so this is the thrust observable
    at the static-to-tilt transition. Infeasible hypotheses (cannot rest on
    the given contacts at all) come back flagged rather than raising.

    ``detail`` additionally canonicalizes the reported active set (needed for
    diagnostics; skipped in bulk hypothesis-table builds).
    """
    if problem.hypothesis[2] <= 0:
        raise ValueError("hypothesis mass must be positive")
    if len(problem.payload.contacts) == 0:
        raise ValueError("payload has no ground contacts")

    w_contacts, w_pair, load = problem_terms(problem)
    k = w_contacts.shape[1]

    # variables: [contact forces (k), lambda_r]; maximize lambda_r
    a_eq = np.hstack([w_contacts, w_pair.reshape(3, 1)])
    c = np.zeros(k + 1)
    c[-1] = -1.0
    res = linprog(c, A_eq=a_eq, b_eq=-load, bounds=[(0, None)] * (k + 1), method="highs")

    if res.status == 3:
        raise GeometryError("thrust is unbounded; lift line passes through every contact")
    if res.status == 2 or not res.success:
        return EquilibriumSolution(None, None, (), False)

    lambda_r = float(res.x[-1])
    forces = np.maximum(res.x[:-1], 0.0)
    if detail:
        canonical = _canonical_active_set(w_contacts, w_pair, load, lambda_r)
        if canonical is not None:
            subset, forces = canonical
            return EquilibriumSolution(lambda_r, forces, tuple(subset), True)
    active = tuple(int(i) for i in np.nonzero(forces > _FORCE_TOL)[0])
    return EquilibriumSolution(lambda_r, forces, active, True)


def equilibrium_residual(problem: CantileverProblem, solution: EquilibriumSolution) -> float:
    """Max absolute wrench-balance residual of a solution."""
    w_contacts, w_pair, load = problem_terms(problem)
    total = w_contacts @ solution.contact_forces + load + w_pair * solution.lambda_r
    return float(np.max(np.abs(total)))


def unselected_weight_wrench(payload: PayloadModel, unselected_positions,
                             hover_own_weight: bool = True) -> Wrench:
    """Net load wrench of the robots not taking the measurement.

    With ``hover_own_weight`` (the default) each parked robot thrusts exactly
    its own weight, so the net contribution is zero. Switched off, their
    weights load the payload at their parked positions.
    """
    if hover_own_weight:
        return Wrench(0.0, 0.0, 0.0)
    total = Wrench(0.0, 0.0, 0.0)
    for pos in unselected_positions:
        total = total + robot_weight_wrench(pos, payload.robot_mass, payload.gravity)
    return total


def simulate_measurement(payload: PayloadModel, true_hypothesis, pair,
                         noise_var: float, rng: np.random.Generator,
                         extra_weight_positions=None) -> float:
    """Noisy tipping-thrust reading for the true payload at one slot pair."""
    if noise_var < 0:
        raise ValueError("noise variance must be nonnegative")
    problem = CantileverProblem(payload, tuple(pair), tuple(true_hypothesis),
                                extra_weight_positions)
    solution = cantilever_thrust(problem)
    z = solution.thrust
    if noise_var > 0:
        z += rng.normal(0.0, np.sqrt(noise_var))
    return float(z)
