"""Command-line entry points.

Subcommands mirror the pipeline stages: ``estimate``, ``formation``, ``fly``,
``mission`` (everything end to end), ``sweep`` (Monte-Carlo estimation), and
``compare-formations`` (even vs optimized flight on one scenario). Every
command writes its artifacts (JSON/JSONL/CSV plus PNG figures) into
``--out-dir`` and exits 0 on a success verdict, 1 otherwise, 2 on a bad
scenario file.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import estimator, plots, report
from .flightsim import run_flight
from .formation import even_formation, optimize_formation
from .mission import build_controller, run_mission, run_sweep
from .payload import ConfigurationError
from .scenarios import BUILTIN_NAMES, ScenarioFormatError, load_scenario


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scenario", required=True,
                        help=f"built-in name ({', '.join(BUILTIN_NAMES)}) or JSON file path")
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    parser.add_argument("--out-dir", type=Path, default=Path("out"),
                        help="directory for report artifacts")
    parser.add_argument("--no-plots", action="store_true", help="skip PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmlift",
        description="Cooperative aerial transport: estimation, formation design, flight")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="run the estimation stage only")
    _add_common(p)

    p = sub.add_parser("formation", help="optimize a formation for the true parameters")
    _add_common(p)
    p.add_argument("--mode", choices=["free", "symmetric"], default=None,
                   help="override the scenario formation mode")

    p = sub.add_parser("fly", help="fly the scenario (estimate taken as ground truth)")
    _add_common(p)
    p.add_argument("--even", action="store_true", help="fly the even-spacing baseline")

    p = sub.add_parser("mission", help="full pipeline: estimate, rearrange, optimize, fly")
    _add_common(p)

    p = sub.add_parser("sweep", help="Monte-Carlo estimation sweep")
    _add_common(p)
    p.add_argument("--trials", type=int, default=100)

    p = sub.add_parser("compare-formations", help="even vs optimized flight, paired traces")
    _add_common(p)
    return parser


def _load(args) -> tuple:
    scenario = load_scenario(args.scenario, seed=args.seed)
    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    return scenario, out_dir


def _cmd_estimate(args) -> int:
    scenario, out = _load(args)
    rng = np.random.default_rng(scenario.seed)
    grid = scenario.build_grid()
    result = estimator.run_estimation(
        scenario.payload, scenario.theta_true, grid, scenario.mass_threshold,
        scenario.noise_var, rng, max_iters=scenario.max_iters,
        filter_var=scenario.filter_var)
    report.write_canonical_json(report.estimate_to_dict(result), out / "estimate.json")
    report.write_trace(result, out / "estimation.jsonl")
    if not args.no_plots:
        plots.plot_estimation(result, out / "estimation.png",
                              title=f"Estimation: {scenario.name}")
    print(f"converged={result.converged} map={result.theta_map.tolist()} "
          f"measurements={result.measurement_count}")
    print(f"wrote {out / 'estimate.json'}")
    return 0 if result.converged else 1


def _cmd_formation(args) -> int:
    scenario, out = _load(args)
    if args.mode is not None:
        scenario = replace(scenario, formation_mode=args.mode)
    rng = np.random.default_rng(scenario.seed)
    formation, opt = optimize_formation(
        scenario.payload, scenario.theta_true, scenario.payload.n_robots,
        scenario.balance_epsilon, mode=scenario.formation_mode, rng=rng,
        restarts=scenario.restarts, min_spacing=scenario.min_spacing,
        thrust_coeff=scenario.thrust_coeff, torque_coeff=scenario.torque_coeff,
        )
    report.write_canonical_json(report.formation_to_dict(formation, opt),
                                out / "formation.json")
    if not args.no_plots:
        plots.plot_formation(scenario.payload, formation, out / "formation.png",
                             title=f"Optimized formation: {scenario.name}")
    print(f"feasible={opt.feasible} objective={opt.objective:.6g} "
          f"residuals={opt.balance_residuals.tolist()}")
    print(f"wrote {out / 'formation.json'}")
    return 0 if opt.feasible else 1


def _fly_once(scenario, even: bool):
    rng = np.random.default_rng(scenario.seed)
    if even:
        formation = even_formation(scenario.payload, scenario.payload.n_robots,
                                   com=scenario.theta_true[:2],
                                   thrust_coeff=scenario.thrust_coeff,
                                   torque_coeff=scenario.torque_coeff)
    else:
        formation, _ = optimize_formation(
            scenario.payload, scenario.theta_true, scenario.payload.n_robots,
            scenario.balance_epsilon, mode=scenario.formation_mode, rng=rng,
            restarts=scenario.restarts, min_spacing=scenario.min_spacing,
            thrust_coeff=scenario.thrust_coeff, torque_coeff=scenario.torque_coeff,
            )
    controller = build_controller(scenario, scenario.payload, formation,
                                  scenario.theta_true)
    log = run_flight(scenario.payload, formation, scenario.theta_true,
                     scenario.theta_true, scenario.trajectory,
                     scenario.disturbance, controller, scenario.sim)
    return formation, log


def _flight_success(scenario, log) -> bool:
    if log.verdict != "completed":
        return False
    target = np.asarray(scenario.trajectory.target, dtype=float)
    return float(np.linalg.norm(log.final_position - target)) <= scenario.target_tolerance


def _cmd_fly(args) -> int:
    scenario, out = _load(args)
    label = "even" if args.even else "optimized"
    _, log = _fly_once(scenario, args.even)
    report.write_flight_csv(log, out / "flight.csv")
    report.write_canonical_json(report.flight_summary(log), out / "flight.json")
    if not args.no_plots:
        plots.plot_flight(log, out / "flight.png",
                          title=f"{scenario.name} ({label} formation)")
    ok = _flight_success(scenario, log)
    print(f"verdict={log.verdict} peak_tilt={np.degrees(log.peak_tilt):.1f} deg "
          f"final={log.final_position.tolist()}")
    print(f"wrote {out / 'flight.csv'}")
    return 0 if ok else 1


def _cmd_mission(args) -> int:
    scenario, out = _load(args)
    result = run_mission(scenario)
    report.write_canonical_json(report.mission_to_dict(result), out / "mission.json")
    if result.estimate is not None:
        report.write_trace(result.estimate, out / "estimation.jsonl")
        if not args.no_plots:
            plots.plot_estimation(result.estimate, out / "estimation.png",
                                  title=f"Estimation: {scenario.name}")
    if result.flight is not None:
        report.write_flight_csv(result.flight, out / "flight.csv")
        if not args.no_plots:
            plots.plot_flight(result.flight, out / "flight.png",
                              title=f"Mission flight: {scenario.name}")
    if result.formation is not None and not args.no_plots:
        plots.plot_formation(scenario.payload, result.formation, out / "formation.png",
                             title=f"Formation: {scenario.name}")
    print(f"verdict={result.verdict}"
          + (f" (failed at {result.failed_stage})" if result.failed_stage else ""))
    print(f"wrote {out / 'mission.json'}")
    return 0 if result.success else 1


def _cmd_sweep(args) -> int:
    scenario, out = _load(args)
    result = run_sweep(scenario, args.trials)
    report.write_canonical_json(report.sweep_to_dict(result), out / "sweep.json")
    if not args.no_plots:
        plots.plot_sweep(result, out / "sweep_errors.png",
                         title=f"Sweep: {scenario.name}")
    print(f"trials={args.trials} convergence={result.convergence_rate:.2f} "
          f"mean|err|/res={result.mean_abs_error.tolist()} "
          f"std={result.std_abs_error.tolist()}")
    print(f"wrote {out / 'sweep.json'}")
    return 0


def _cmd_compare(args) -> int:
    scenario, out = _load(args)
    _, even_log = _fly_once(scenario, even=True)
    _, opt_log = _fly_once(scenario, even=False)
    (out / "compare_z.csv").write_text(report.compare_csv(opt_log, even_log, opt_log))
    summary = {
        "scenario": scenario.name,
        "even": report.flight_summary(even_log),
        "optimized": report.flight_summary(opt_log),
    }
    report.write_canonical_json(summary, out / "compare.json")
    if not args.no_plots:
        plots.plot_compare(even_log, opt_log, out / "compare_z.png",
                           title=f"{scenario.name}: even vs optimized")
    print(f"even: verdict={even_log.verdict} peak_tilt={np.degrees(even_log.peak_tilt):.1f} deg")
    print(f"optimized: verdict={opt_log.verdict} "
          f"peak_tilt={np.degrees(opt_log.peak_tilt):.1f} deg")
    print(f"wrote {out / 'compare_z.csv'}")
    return 0 if _flight_success(scenario, opt_log) else 1


_COMMANDS = {
    "estimate": _cmd_estimate,
    "formation": _cmd_formation,
    "fly": _cmd_fly,
    "mission": _cmd_mission,
    "sweep": _cmd_sweep,
    "compare-formations": _cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ScenarioFormatError, ConfigurationError) as err:
        print(f"scenario error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
