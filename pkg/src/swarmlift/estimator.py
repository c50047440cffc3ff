"""Grid Bayes filter over payload hypotheses with active pair selection.

Each measurement is the tipping thrust of one adjacent slot pair. The filter
keeps a probability vector over the hypothesis grid, updates it with a
Gaussian likelihood around the model-predicted thrust, and picks the next
pair by maximizing the mutual information between the hypothesis and the
predicted (Gaussian-mixture) measurement.

Tipping thrusts depend only on (hypothesis, pair), never on measured data,
so they are precomputed once into a table shared by every update and every
information evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .equilibrium import CantileverProblem, cantilever_thrust, simulate_measurement
from .payload import ParameterGrid, PayloadModel, adjacent_pairs

MI_QUAD_NODES = 4001      # fixed-grid quadrature nodes for the mixture entropy
MI_TAIL_SIGMAS = 5.0
NORMALIZATION_TOL = 1e-9


@dataclass
class MeasurementRecord:
    iteration: int
    pair: tuple[int, int]
    pair_index: int
    z: float
    mi_values: np.ndarray            # information score of every candidate pair
    map_hypothesis: np.ndarray
    neighborhood_mass: float
    normalization_error: float
    outlier: bool = False


@dataclass
class EstimationState:
    """Current belief plus the cached thrust table and measurement history."""

    payload: PayloadModel
    grid: ParameterGrid
    pairs: list[tuple[int, int]]
    lambda_table: np.ndarray          # (n_points, n_pairs); NaN where no equilibrium exists
    filter_var: float
    history: list[MeasurementRecord] = field(default_factory=list)

    def copy_with(self, probability: np.ndarray) -> "EstimationState":
        return EstimationState(self.payload, self.grid.normalized(probability),
                               self.pairs, self.lambda_table, self.filter_var,
                               list(self.history))


@dataclass(frozen=True)
class EstimateResult:
    theta_map: np.ndarray
    neighborhood_mass: float
    measurement_count: int
    converged: bool
    state: EstimationState


def build_thrust_table(payload: PayloadModel, grid: ParameterGrid,
                       pairs=None, extra_weight_positions=None) -> np.ndarray:
    """Tipping thrust for every hypothesis at every candidate pair."""
    if pairs is None:
        pairs = adjacent_pairs(payload.candidates, payload.rail.closed)
    table = np.full((grid.n_points, len(pairs)), np.nan)
    for j, pair in enumerate(pairs):
        for i, point in enumerate(grid.points):
            problem = CantileverProblem(payload, tuple(pair), tuple(point),
                                        extra_weight_positions)
            sol = cantilever_thrust(problem)
            if sol.feasible:
                table[i, j] = sol.lambda_r
    return table


def make_state(payload: PayloadModel, grid: ParameterGrid, filter_var: float,
               pairs=None, lambda_table=None, extra_weight_positions=None) -> EstimationState:
    if filter_var <= 0:
        raise ValueError("likelihood variance must be positive")
    if pairs is None:
        pairs = adjacent_pairs(payload.candidates, payload.rail.closed)
    if lambda_table is None:
        lambda_table = build_thrust_table(payload, grid, pairs, extra_weight_positions)
    return EstimationState(payload, grid, list(pairs), lambda_table, float(filter_var))


def likelihood(state: EstimationState, z: float, pair_index: int) -> np.ndarray:
    """Gaussian density of z around each hypothesis's predicted thrust.

    Hypotheses with no static equilibrium at this pair get density zero.
    """
    means = state.lambda_table[:, pair_index]
    var = state.filter_var
    dens = np.zeros_like(means)
    ok = np.isfinite(means)
    dens[ok] = np.exp(-0.5 * (z - means[ok]) ** 2 / var) / np.sqrt(2.0 * np.pi * var)
    return dens


def bayes_update(state: EstimationState, pair_index: int, z: float,
                 iteration: int = 0, mi_values=None) -> EstimationState:
    """Posterior ~ likelihood x prior; an all-zero posterior keeps the prior."""
    state.grid.check_normalized(NORMALIZATION_TOL)
    prior = state.grid.probability
    post = likelihood(state, z, pair_index) * prior
    total = float(np.sum(post))
    outlier = total <= 0.0
    if outlier:
        post = prior.copy()
        total = 1.0

    new_state = state.copy_with(post)
    norm_err = abs(float(np.sum(new_state.grid.probability)) - 1.0)
    map_idx, mass = _map_neighborhood(new_state.grid)
    if mi_values is None:
        mi_values = np.full(len(state.pairs), np.nan)
    new_state.history.append(MeasurementRecord(
        iteration=iteration,
        pair=state.pairs[pair_index],
        pair_index=pair_index,
        z=float(z),
        mi_values=np.asarray(mi_values, dtype=float),
        map_hypothesis=new_state.grid.points[map_idx].copy(),
        neighborhood_mass=mass,
        normalization_error=norm_err,
        outlier=outlier,
    ))
    return new_state


def _gaussian_entropy(var: float) -> float:
    return 0.5 * np.log(2.0 * np.pi * np.e * var)


def mutual_information(state: EstimationState, pair_index: int) -> float:
    """Expected information gain (nats) of measuring at one pair.

    The predictive is a Gaussian mixture with one component per hypothesis;
    its entropy is integrated on a fixed grid spanning the component means
    plus five standard deviations each side. Identical means shortcut to an
    exact zero, and quadrature round-off is floored at zero.
    """
    weights = state.grid.probability
    means = state.lambda_table[:, pair_index]
    ok = np.isfinite(means)
    w = weights[ok]
    mu = means[ok]
    wsum = float(np.sum(w))
    if wsum <= 0 or len(mu) == 0:
        return 0.0
    w = w / wsum

    lo, hi = float(np.min(mu)), float(np.max(mu))
    if hi == lo:
        return 0.0   # measurement cannot depend on the hypothesis

    sigma = np.sqrt(state.filter_var)
    z = np.linspace(lo - MI_TAIL_SIGMAS * sigma, hi + MI_TAIL_SIGMAS * sigma, MI_QUAD_NODES)
    # mixture density on the grid: (nodes,) from (hypotheses, nodes)
    diff = (z[None, :] - mu[:, None]) / sigma
    comp = np.exp(-0.5 * diff * diff) / (sigma * np.sqrt(2.0 * np.pi))
    pz = w @ comp
    integrand = np.where(pz > 0.0, -pz * np.log(np.where(pz > 0.0, pz, 1.0)), 0.0)
    h_z = float(np.trapezoid(integrand, z))
    info = h_z - _gaussian_entropy(state.filter_var)
    return max(info, 0.0)


def information_scores(state: EstimationState) -> np.ndarray:
    return np.array([mutual_information(state, j) for j in range(len(state.pairs))])


def select_pair(state: EstimationState, scores: np.ndarray | None = None) -> tuple[int, np.ndarray]:
    """Index of the most informative pair; ties go to the lowest pair index."""
    if not state.pairs:
        raise ValueError("no candidate pairs to select from")
    if scores is None:
        scores = information_scores(state)
    return int(np.argmax(scores)), scores


def _map_neighborhood(grid: ParameterGrid) -> tuple[int, float]:
    """MAP point (lowest flat index on ties) and the probability mass within
    one grid step of it on every axis simultaneously."""
    prob = grid.probability
    map_idx = int(np.argmax(prob))   # argmax returns the first (lowest) maximizer
    center = grid.axis_indices[map_idx]
    near = np.all(np.abs(grid.axis_indices - center) <= 1, axis=1)
    return map_idx, float(np.sum(prob[near]))


def check_convergence(state: EstimationState, mass_threshold: float) -> EstimateResult:
    """Converged when the MAP neighborhood holds more than the threshold mass."""
    state.grid.check_normalized(NORMALIZATION_TOL)
    map_idx, mass = _map_neighborhood(state.grid)
    return EstimateResult(
        theta_map=state.grid.points[map_idx].copy(),
        neighborhood_mass=mass,
        measurement_count=len(state.history),
        converged=mass > mass_threshold,
        state=state,
    )


def run_estimation(payload: PayloadModel, true_hypothesis, grid: ParameterGrid,
                   mass_threshold: float, noise_var: float, rng: np.random.Generator,
                   max_iters: int = 60, filter_var: float | None = None,
                   lambda_table=None, extra_weight_positions=None) -> EstimateResult:
    """Select pair -> measure -> update until the belief concentrates.

    ``filter_var`` defaults to the simulated noise variance; the two are kept
    separate so model mismatch can be studied. Hitting ``max_iters`` returns
    the best-effort estimate flagged unconverged.
    """
    if max_iters < 1:
        return check_convergence(
            make_state(payload, grid, filter_var or max(noise_var, 1.0),
                       lambda_table=lambda_table,
                       extra_weight_positions=extra_weight_positions), mass_threshold)
    if filter_var is None:
        if noise_var <= 0:
            raise ValueError("filter variance must be positive; pass filter_var explicitly")
        filter_var = noise_var

    state = make_state(payload, grid, filter_var, lambda_table=lambda_table,
                       extra_weight_positions=extra_weight_positions)
    result = check_convergence(state, mass_threshold)
    for iteration in range(max_iters):
        pair_index, scores = select_pair(state)
        z = simulate_measurement(payload, true_hypothesis, state.pairs[pair_index],
                                 noise_var, rng, extra_weight_positions)
        state = bayes_update(state, pair_index, z, iteration=iteration, mi_values=scores)
        result = check_convergence(state, mass_threshold)
        if result.converged:
            break
    return result
