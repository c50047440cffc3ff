"""End-to-end mission pipeline: estimate, rearrange, optimize, fly.

A mission runs the full autonomy chain on one scenario: active estimation of
the payload parameters with the robot pair walking the rail, formation
optimization around the estimate, a kinematic rearrangement plan onto the
chosen positions, and the closed-loop flight to the target. Every stage pulls
randomness from one seeded generator so a scenario replays byte-identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import estimator
from .equilibrium import simulate_measurement
from .flightsim import (
    ControllerConfig,
    FlightLog,
    SimConfig,
    TorquePulse,
    TrajectorySpec,
    assembly_inertia,
    run_flight,
)
from .formation import (
    DEFAULT_MIN_SPACING,
    DEFAULT_THRUST_COEFF,
    DEFAULT_TORQUE_COEFF,
    Formation,
    OptimizationReport,
    even_formation,
    optimize_formation,
)
from .payload import (
    ConfigurationError,
    ParameterGrid,
    PayloadModel,
    build_parameter_grid,
)


class PlanningError(RuntimeError):
    """No collision-free, order-preserving move sequence exists."""


# ---------------------------------------------------------------------------
# rail rearrangement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RailMove:
    robot: int
    from_arc: float
    to_arc: float
    direction: float        # +1 forward along arc, -1 backward


@dataclass(frozen=True)
class RearrangePlan:
    moves: tuple[RailMove, ...]
    assignment: tuple[int, ...]    # target index assigned to each robot


def _signed_gap(rail, s_from: float, s_to: float) -> float:
    """Signed displacement from s_from to s_to; shortest way on closed rails."""
    if not rail.closed:
        return rail.wrap(s_to) - rail.wrap(s_from)
    d = np.mod(rail.wrap(s_to) - rail.wrap(s_from), rail.length)
    return d if d <= rail.length / 2 else d - rail.length


def match_targets(rail, current, targets) -> tuple[int, ...]:
    """Assign target slots to robots preserving their order on the rail.

    Closed rails allow any cyclic shift; the shift with the least total
    travel wins (lowest shift on ties). Open rails admit only the in-order
    assignment.
    """
    current = np.asarray(current, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if len(current) != len(targets):
        raise PlanningError("robot and target counts differ")
    n = len(current)
    cur_order = np.argsort([rail.wrap(s) for s in current], kind="stable")
    tgt_order = np.argsort([rail.wrap(s) for s in targets], kind="stable")

    shifts = range(n) if rail.closed else (0,)
    best_shift, best_cost = None, np.inf
    for k in shifts:
        cost = 0.0
        for j in range(n):
            robot = cur_order[j]
            tgt = tgt_order[(j + k) % n]
            cost += abs(_signed_gap(rail, current[robot], targets[tgt]))
        if cost < best_cost - 1e-12:
            best_cost, best_shift = cost, k
    assignment = [0] * n
    for j in range(n):
        assignment[cur_order[j]] = int(tgt_order[(j + best_shift) % n])
    return tuple(assignment)


def _order_preserved(rail, current, destinations) -> bool:
    cur_order = list(np.argsort([rail.wrap(s) for s in current], kind="stable"))
    dst_order = list(np.argsort([rail.wrap(s) for s in destinations], kind="stable"))
    if not rail.closed:
        return cur_order == dst_order
    if len(cur_order) != len(dst_order):
        return False
    n = len(cur_order)
    for k in range(n):
        if all(cur_order[(j + k) % n] == dst_order[j] for j in range(n)):
            return True
    return False


def _path_clear(rail, s_from, s_to, others, min_spacing) -> bool:
    """No parked robot within min_spacing of any point of the travel interval."""
    gap = _signed_gap(rail, s_from, s_to)
    lo, hi = min(0.0, gap), max(0.0, gap)
    for other in others:
        rel = _signed_gap(rail, s_from, other)
        if lo <= rel <= hi:
            near = 0.0
        else:
            near = min(rail.arc_distance(other, rail.wrap(s_from + lo)),
                       rail.arc_distance(other, rail.wrap(s_from + hi)))
        if near < min_spacing:
            return False
    return True


def plan_rearrangement(rail, current, targets, min_spacing: float,
                       assignment=None) -> RearrangePlan:
    """Ordered single-robot moves from current arcs onto the target slots.

    Targets are matched automatically unless an explicit per-robot
    ``assignment`` is given. Robots move one at a time; a robot only moves
    when its whole travel interval keeps ``min_spacing`` from every parked
    robot, and a blocked full-ring rotation is broken by parking one robot in
    the widest free gap first.
    """
    current = [rail.wrap(s) for s in np.asarray(current, dtype=float)]
    targets = [rail.wrap(s) for s in np.asarray(targets, dtype=float)]
    n = len(current)
    srt = np.sort(targets)
    if n > 1:
        gaps = np.diff(srt)
        if rail.closed:
            gaps = np.append(gaps, rail.length - (srt[-1] - srt[0]))
        if np.min(gaps) < min_spacing - 1e-9:
            raise PlanningError("target slots violate the spacing floor")

    if assignment is None:
        assignment = match_targets(rail, current, targets)
    destinations = [targets[assignment[i]] for i in range(n)]
    if not _order_preserved(rail, current, destinations):
        raise PlanningError("assignment would require robots to pass each other")

    pos = list(current)
    moves: list[RailMove] = []
    pending = {i for i in range(n) if abs(_signed_gap(rail, pos[i], destinations[i])) > 1e-12}
    guard = 0
    while pending:
        guard += 1
        if guard > 4 * n * n + 8:
            raise PlanningError("could not sequence moves without overlap")
        progressed = False
        for i in sorted(pending):
            others = [pos[j] for j in range(n) if j != i]
            if _path_clear(rail, pos[i], destinations[i], others, min_spacing):
                gap = _signed_gap(rail, pos[i], destinations[i])
                moves.append(RailMove(i, pos[i], destinations[i], float(np.sign(gap) or 1.0)))
                pos[i] = destinations[i]
                pending.discard(i)
                progressed = True
                break
        if progressed:
            continue
        # rotation deadlock: park the robot bordering the widest gap inside it
        parked = False
        order = sorted(range(n), key=lambda j: pos[j])
        for rank, j in enumerate(order):
            if j not in pending:
                continue
            nxt = order[(rank + 1) % n]
            gap = _signed_gap(rail, pos[j], pos[nxt]) if rail.closed else pos[nxt] - pos[j]
            if rail.closed and gap <= 0:
                gap += rail.length
            if gap > 3.0 * min_spacing:
                park = rail.wrap(pos[j] + gap / 2.0)
                others = [pos[q] for q in range(n) if q != j]
                if _path_clear(rail, pos[j], park, others, min_spacing):
                    moves.append(RailMove(j, pos[j], park, 1.0))
                    pos[j] = park
                    parked = True
                    break
        if not parked:
            raise PlanningError("could not sequence moves without overlap")
    return RearrangePlan(tuple(moves), tuple(int(a) for a in assignment))


# ---------------------------------------------------------------------------
# scenario definition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """Everything one mission run needs, reproducibility seed included."""

    name: str
    payload: PayloadModel
    theta_true: tuple[float, float, float]
    grid_ranges: tuple            # ((min,max) x3)
    grid_resolutions: tuple       # (3,)
    mass_threshold: float         # posterior mass needed inside the MAP neighborhood
    noise_var: float = 1.0
    filter_var: float = 1.0
    formation_mode: str = "free"
    balance_epsilon: float = 1e-5
    min_spacing: float = DEFAULT_MIN_SPACING
    thrust_coeff: float = DEFAULT_THRUST_COEFF
    torque_coeff: float = DEFAULT_TORQUE_COEFF
    restarts: int = 12
    trajectory: TrajectorySpec = TrajectorySpec()
    disturbance: tuple[TorquePulse, ...] = ()
    controller: ControllerConfig | None = None   # est_mass/inertia filled per mission
    sim: SimConfig = SimConfig()
    seed: int = 0
    max_iters: int = 60
    target_tolerance: float = 0.1
    hover_own_weight: bool = True

    def __post_init__(self):
        ranges = np.asarray(self.grid_ranges, dtype=float).reshape(3, 2)
        theta = np.asarray(self.theta_true, dtype=float)
        if np.any(theta < ranges[:, 0] - 1e-12) or np.any(theta > ranges[:, 1] + 1e-12):
            raise ConfigurationError("true parameters fall outside the grid ranges")

    def build_grid(self) -> ParameterGrid:
        return build_parameter_grid(self.grid_ranges, self.grid_resolutions, self.payload)


@dataclass
class StageEvent:
    stage: str
    message: str


@dataclass
class MissionReport:
    scenario_name: str
    seed: int
    estimate: estimator.EstimateResult | None = None
    formation: Formation | None = None
    formation_report: OptimizationReport | None = None
    rearrange_plan: RearrangePlan | None = None
    measurement_plans: list[RearrangePlan] = field(default_factory=list)
    flight: FlightLog | None = None
    events: list[StageEvent] = field(default_factory=list)
    verdict: str = "failed"
    failed_stage: str | None = None

    @property
    def success(self) -> bool:
        return self.verdict == "success"


def _nearest_robots(rail, robot_arcs, pair_arcs) -> tuple[int, int]:
    """Two distinct robots cyclically closest to the two measurement slots."""
    d0 = [rail.arc_distance(a, pair_arcs[0]) for a in robot_arcs]
    d1 = [rail.arc_distance(a, pair_arcs[1]) for a in robot_arcs]
    r0 = int(np.argmin(d0))
    d1[r0] = np.inf
    r1 = int(np.argmin(d1))
    return r0, r1


def _plan_measurement_move(payload, robot_arcs, pair, report) -> list[float]:
    """Walk a robot pair onto the measurement slots, logging infeasible picks.

    Two robots nearest the slots free up their parking spots; the planner
    then auto-matches robots to the new slot multiset so nobody has to pass
    anyone. Whichever robots end on the slots take the measurement.
    """
    rail = payload.rail
    slot_arcs = (payload.candidate_arcs[pair[0]], payload.candidate_arcs[pair[1]])
    r0, r1 = _nearest_robots(rail, robot_arcs, slot_arcs)
    targets = list(robot_arcs)
    targets[r0], targets[r1] = slot_arcs[0], slot_arcs[1]
    try:
        plan = plan_rearrangement(rail, robot_arcs, targets, 0.0)
        report.measurement_plans.append(plan)
        return [targets[plan.assignment[i]] for i in range(len(robot_arcs))]
    except PlanningError as err:
        report.events.append(StageEvent("estimation", f"pair move infeasible: {err}"))
        return list(robot_arcs)


def run_mission(scenario: Scenario) -> MissionReport:
    """Execute the whole pipeline; stage failures short-circuit with a partial report."""
    report = MissionReport(scenario.name, scenario.seed)
    rng = np.random.default_rng(scenario.seed)
    payload = scenario.payload
    grid = scenario.build_grid()

    even = even_formation(payload, payload.n_robots,
                          thrust_coeff=scenario.thrust_coeff,
                          torque_coeff=scenario.torque_coeff)
    robot_arcs = list(even.arc_positions)

    # --- estimation ------------------------------------------------------
    extra = None
    state = estimator.make_state(payload, grid, scenario.filter_var,
                                 extra_weight_positions=extra)
    result = estimator.check_convergence(state, scenario.mass_threshold)
    for iteration in range(scenario.max_iters):
        pair_index, scores = estimator.select_pair(state)
        pair = state.pairs[pair_index]
        robot_arcs = _plan_measurement_move(payload, robot_arcs, pair, report)
        if not scenario.hover_own_weight:
            parked = [payload.rail.point_at(s) for k, s in enumerate(robot_arcs)
                      if not np.isclose(s, payload.candidate_arcs[pair[0]])
                      and not np.isclose(s, payload.candidate_arcs[pair[1]])]
            extra = tuple(tuple(p) for p in parked)
            state = estimator.make_state(payload, state.grid, scenario.filter_var,
                                         extra_weight_positions=extra)
            state.history.extend(result.state.history)
        z = simulate_measurement(payload, scenario.theta_true, pair,
                                 scenario.noise_var, rng, extra)
        state = estimator.bayes_update(state, pair_index, z,
                                       iteration=iteration, mi_values=scores)
        result = estimator.check_convergence(state, scenario.mass_threshold)
        if result.converged:
            break
    report.estimate = result
    if not result.converged:
        report.failed_stage = "estimation"
        report.events.append(StageEvent("estimation", "did not converge"))
        return report

    # --- formation -------------------------------------------------------
    theta_hat = result.theta_map
    try:
        formation, opt_report = optimize_formation(
            payload, theta_hat, payload.n_robots, scenario.balance_epsilon,
            mode=scenario.formation_mode, rng=rng, restarts=scenario.restarts,
            min_spacing=scenario.min_spacing, thrust_coeff=scenario.thrust_coeff,
            torque_coeff=scenario.torque_coeff)
    except ConfigurationError as err:
        report.failed_stage = "formation"
        report.events.append(StageEvent("formation", str(err)))
        return report
    report.formation = formation
    report.formation_report = opt_report
    if not opt_report.feasible:
        report.failed_stage = "formation"
        report.events.append(StageEvent("formation", "no feasible formation found"))
        return report

    # --- rearrangement ---------------------------------------------------
    try:
        plan = plan_rearrangement(payload.rail, robot_arcs,
                                  formation.arc_positions, scenario.min_spacing)
        report.rearrange_plan = plan
    except PlanningError as err:
        report.failed_stage = "rearrangement"
        report.events.append(StageEvent("rearrangement", str(err)))
        return report

    # --- flight ----------------------------------------------------------
    controller = build_controller(scenario, payload, formation, theta_hat)
    flight = run_flight(payload, formation, scenario.theta_true, theta_hat,
                        scenario.trajectory, scenario.disturbance, controller,
                        scenario.sim)
    report.flight = flight
    if flight.verdict != "completed":
        report.failed_stage = "flight"
        report.events.append(StageEvent("flight", flight.verdict))
        return report

    target = np.asarray(scenario.trajectory.target, dtype=float)
    final_err = float(np.linalg.norm(flight.final_position - target))
    if final_err > scenario.target_tolerance:
        report.failed_stage = "flight"
        report.events.append(StageEvent(
            "flight", f"final position {final_err:.3f} m from target"))
        return report

    report.verdict = "success"
    return report


def build_controller(scenario: Scenario, payload: PayloadModel,
                     formation: Formation, theta_hat) -> ControllerConfig:
    """Controller configured with estimated mass properties."""
    props = assembly_inertia(payload, formation, theta_hat)
    base = scenario.controller if scenario.controller is not None else ControllerConfig()
    return replace(base,
                   est_mass=props.mass,
                   est_inertia_diag=np.diag(props.inertia).copy(),
                   thrust_limit=payload.robot_max_thrust,
                   gravity=payload.gravity)


# ---------------------------------------------------------------------------
# Monte-Carlo estimation sweep
# ---------------------------------------------------------------------------

@dataclass
class TrialRecord:
    trial: int
    theta_true: np.ndarray
    theta_map: np.ndarray
    normalized_error: np.ndarray     # |map - true| / resolution per axis
    signed_error: np.ndarray         # (map - true) / resolution per axis
    converged: bool
    measurements: int


@dataclass
class SweepResult:
    records: list[TrialRecord]
    mean_abs_error: np.ndarray
    std_abs_error: np.ndarray
    mean_signed_error: np.ndarray
    std_signed_error: np.ndarray
    convergence_rate: float
    mean_measurements: float


def sweep_statistics(records: list[TrialRecord]) -> SweepResult:
    abs_err = np.array([r.normalized_error for r in records])
    signed = np.array([r.signed_error for r in records])
    return SweepResult(
        records=records,
        mean_abs_error=np.mean(abs_err, axis=0),
        std_abs_error=np.std(abs_err, axis=0),
        mean_signed_error=np.mean(signed, axis=0),
        std_signed_error=np.std(signed, axis=0),
        convergence_rate=float(np.mean([r.converged for r in records])),
        mean_measurements=float(np.mean([r.measurements for r in records])),
    )


def run_sweep(scenario: Scenario, n_trials: int) -> SweepResult:
    """Repeated estimation with the true parameters drawn from the grid.

    Trial seeds derive from the scenario seed plus the trial index, so any
    execution order (or a parallel runner) reproduces the same records.
    """
    if n_trials < 1:
        raise ValueError("need at least one trial")
    payload = scenario.payload
    grid = scenario.build_grid()
    table = estimator.build_thrust_table(payload, grid)
    res = np.asarray(scenario.grid_resolutions, dtype=float)

    records = []
    for trial in range(n_trials):
        rng = np.random.default_rng(scenario.seed + trial)
        theta_true = grid.points[int(rng.integers(grid.n_points))]
        result = estimator.run_estimation(
            payload, theta_true, grid, scenario.mass_threshold,
            scenario.noise_var, rng, max_iters=scenario.max_iters,
            filter_var=scenario.filter_var, lambda_table=table)
        err = (result.theta_map - theta_true) / res
        records.append(TrialRecord(
            trial=trial,
            theta_true=np.asarray(theta_true, dtype=float).copy(),
            theta_map=result.theta_map.copy(),
            normalized_error=np.abs(err),
            signed_error=err,
            converged=result.converged,
            measurements=result.measurement_count,
        ))
    return sweep_statistics(records)
