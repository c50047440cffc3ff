"""Canonical, byte-stable report serialization.

Reports deliberately avoid timestamps and environment details: the same
scenario and seed must serialize to identical bytes. Floats are rendered
with 17 significant digits so values round-trip exactly.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .estimator import EstimateResult
from .flightsim import FlightLog
from .formation import Formation, OptimizationReport
from .mission import MissionReport, RearrangePlan, SweepResult


def fmt_float(value: float) -> str:
    if value != value:
        return "NaN"
    if value in (float("inf"), float("-inf")):
        return "Infinity" if value > 0 else "-Infinity"
    return format(float(value), ".17g")


def _canonical(obj, out: list, indent: int, level: int) -> None:
    pad = " " * (indent * level)
    pad_in = " " * (indent * (level + 1))
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (key, val) in enumerate(obj.items()):
            out.append(f'{pad_in}"{key}": ')
            _canonical(val, out, indent, level + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        items = list(obj)
        if not items:
            out.append("[]")
            return
        out.append("[\n")
        for i, val in enumerate(items):
            out.append(pad_in)
            _canonical(val, out, indent, level + 1)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(pad + "]")
    elif isinstance(obj, np.ndarray):
        _canonical(obj.tolist(), out, indent, level)
    elif isinstance(obj, bool) or isinstance(obj, np.bool_):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt_float(float(obj)))
    elif obj is None:
        out.append("null")
    elif isinstance(obj, str):
        out.append('"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"')
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")


def canonical_dumps(obj) -> str:
    out: list[str] = []
    _canonical(obj, out, indent=2, level=0)
    out.append("\n")
    return "".join(out)


def _compact(obj, out: list) -> None:
    if isinstance(obj, dict):
        out.append("{")
        for i, (key, val) in enumerate(obj.items()):
            if i:
                out.append(", ")
            out.append(f'"{key}": ')
            _compact(val, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, val in enumerate(obj):
            if i:
                out.append(", ")
            _compact(val, out)
        out.append("]")
    elif isinstance(obj, np.ndarray):
        _compact(obj.tolist(), out)
    elif isinstance(obj, bool) or isinstance(obj, np.bool_):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt_float(float(obj)))
    elif obj is None:
        out.append("null")
    elif isinstance(obj, str):
        out.append('"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"')
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")


def canonical_dumps_compact(obj) -> str:
    out: list[str] = []
    _compact(obj, out)
    return "".join(out)


def write_canonical_json(obj, path: Path) -> None:
    Path(path).write_text(canonical_dumps(obj))


# ---------------------------------------------------------------------------
# structured views of result objects
# ---------------------------------------------------------------------------

def estimate_to_dict(result: EstimateResult) -> dict:
    return {
        "theta_map": result.theta_map,
        "neighborhood_mass": result.neighborhood_mass,
        "measurement_count": result.measurement_count,
        "converged": result.converged,
    }


def trace_lines(result: EstimateResult) -> list[str]:
    """Estimation trace as JSONL, one line per measurement."""
    lines = []
    for rec in result.state.history:
        row = {
            "iteration": rec.iteration,
            "pair": list(rec.pair),
            "pair_index": rec.pair_index,
            "z": rec.z,
            "mi_values": rec.mi_values,
            "map": rec.map_hypothesis,
            "neighborhood_mass": rec.neighborhood_mass,
            "normalization_error": rec.normalization_error,
            "outlier": rec.outlier,
        }
        lines.append(canonical_dumps_compact(row))
    return lines


def write_trace(result: EstimateResult, path: Path) -> None:
    Path(path).write_text("\n".join(trace_lines(result)) + "\n")


def formation_to_dict(formation: Formation, report: OptimizationReport | None = None) -> dict:
    data = {
        "arc_positions": formation.arc_positions,
        "positions": formation.positions,
        "signs": formation.signs,
        "thrust_coeff": formation.thrust_coeff,
        "torque_coeff": formation.torque_coeff,
        "com": formation.com,
        "input_matrix": formation.input_matrix,
    }
    if report is not None:
        data["optimization"] = {
            "objective": report.objective,
            "balance_residuals": report.balance_residuals,
            "iterations": report.iterations,
            "restarts_used": report.restarts_used,
            "mode": report.mode,
            "feasible": report.feasible,
        }
    return data


def flight_summary(log: FlightLog) -> dict:
    return {
        "verdict": log.verdict,
        "drop_time": log.drop_time,
        "rmse": log.rmse,
        "peak_tilt": log.peak_tilt,
        "takeoff_peak_tilt": log.takeoff_peak_tilt,
        "final_position": log.final_position,
        "max_quat_drift": log.max_quat_drift,
    }


def flight_csv(log: FlightLog) -> str:
    n = log.thrusts.shape[1] if log.thrusts.ndim == 2 else 0
    header = (["t", "x", "y", "z", "roll", "pitch", "yaw", "x_ref", "y_ref", "z_ref"]
              + [f"u_{k + 1}" for k in range(n)]
              + ["dist_tx", "dist_ty", "dist_tz"])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for i in range(len(log.times)):
        row = [log.times[i], *log.positions[i], *log.eulers[i], *log.references[i],
               *log.thrusts[i], *log.disturbances[i]]
        writer.writerow([fmt_float(float(v)) for v in row])
    return buf.getvalue()


def write_flight_csv(log: FlightLog, path: Path) -> None:
    Path(path).write_text(flight_csv(log))


def plan_to_dict(plan: RearrangePlan) -> dict:
    return {
        "assignment": list(plan.assignment),
        "moves": [{"robot": m.robot, "from_arc": m.from_arc, "to_arc": m.to_arc,
                   "direction": m.direction} for m in plan.moves],
    }


def mission_to_dict(report: MissionReport) -> dict:
    data: dict = {
        "scenario": report.scenario_name,
        "seed": report.seed,
        "verdict": report.verdict,
        "failed_stage": report.failed_stage,
    }
    if report.estimate is not None:
        data["estimate"] = estimate_to_dict(report.estimate)
    if report.formation is not None:
        data["formation"] = formation_to_dict(report.formation, report.formation_report)
    if report.rearrange_plan is not None:
        data["rearrangement"] = plan_to_dict(report.rearrange_plan)
    if report.flight is not None:
        data["flight"] = flight_summary(report.flight)
    data["events"] = [{"stage": e.stage, "message": e.message} for e in report.events]
    return data


def sweep_to_dict(result: SweepResult) -> dict:
    return {
        "trials": len(result.records),
        "mean_abs_error": result.mean_abs_error,
        "std_abs_error": result.std_abs_error,
        "mean_signed_error": result.mean_signed_error,
        "std_signed_error": result.std_signed_error,
        "convergence_rate": result.convergence_rate,
        "mean_measurements": result.mean_measurements,
        "records": [
            {
                "trial": r.trial,
                "theta_true": r.theta_true,
                "theta_map": r.theta_map,
                "normalized_error": r.normalized_error,
                "signed_error": r.signed_error,
                "converged": r.converged,
                "measurements": r.measurements,
            }
            for r in result.records
        ],
    }


def compare_csv(reference_log: FlightLog, even_log: FlightLog, opt_log: FlightLog | None = None) -> str:
    """Paired z traces (reference, even formation, optimized formation)."""
    opt = opt_log if opt_log is not None else reference_log
    times = opt.times if len(opt.times) >= len(even_log.times) else even_log.times
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "z_ref", "z_even", "z_optimized"])

    def z_at(log: FlightLog, i: int) -> str:
        return fmt_float(float(log.positions[i, 2])) if i < len(log.times) else ""

    for i, t in enumerate(times):
        z_ref = fmt_float(float(opt.references[i, 2])) if i < len(opt.times) \
            else fmt_float(float(even_log.references[i, 2]))
        writer.writerow([fmt_float(float(t)), z_ref, z_at(even_log, i), z_at(opt, i)])
    return buf.getvalue()
