"""Cooperative aerial payload transport, desk-scale simulation suite.

Pipeline: estimate the payload's center of mass and mass from pair-lift
thrust measurements, choose attachment positions that maximize attitude
controllability under a takeoff balance constraint, rearrange the robots
along the rail, and fly the assembly to a target with a cascaded PID loop.
"""

from .payload import (
    ConfigurationError,
    ParameterGrid,
    PayloadModel,
    RailPath,
    Wrench,
    adjacent_pairs,
    build_parameter_grid,
    gravity_wrench,
    robot_weight_wrench,
    thrust_wrench,
)
from .equilibrium import (
    CantileverProblem,
    EquilibriumSolution,
    cantilever_thrust,
    simulate_measurement,
    unselected_weight_wrench,
)
from .estimator import (
    EstimateResult,
    EstimationState,
    bayes_update,
    build_thrust_table,
    check_convergence,
    likelihood,
    make_state,
    mutual_information,
    run_estimation,
    select_pair,
)
from .formation import (
    Formation,
    OptimizationReport,
    build_input_matrix,
    even_formation,
    gramian_objective,
    optimize_formation,
)
from .flightsim import (
    AssemblyDynamics,
    ControllerConfig,
    FlightLog,
    RigidBodyState,
    SimConfig,
    TorquePulse,
    TrajectorySpec,
    assembly_inertia,
    dynamics_step,
    mix,
    run_flight,
)
from .mission import (
    MissionReport,
    RearrangePlan,
    Scenario,
    SweepResult,
    plan_rearrangement,
    run_mission,
    run_sweep,
)
from .scenarios import BUILTIN_NAMES, builtin_scenario, load_scenario

__version__ = "0.1.0"
