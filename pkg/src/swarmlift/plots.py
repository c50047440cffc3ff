"""Figure rendering for mission artifacts.

Every CLI report path drops PNG figures next to the CSV/JSON output: flight
traces, even-vs-optimized altitude comparison, estimation progress, sweep
error bars, and the formation layout on the payload outline.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .estimator import EstimateResult
from .flightsim import FlightLog
from .formation import Formation
from .mission import SweepResult
from .payload import PayloadModel

AXIS_LABELS = ["com x", "com y", "mass"]


def plot_flight(log: FlightLog, path: Path, title: str = "Flight") -> None:
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    axes[0].plot(log.times, log.references[:, 2], "k--", label="z reference")
    axes[0].plot(log.times, log.positions[:, 2], "b-", label="z actual")
    axes[0].set_ylabel("Z position (m)")
    axes[0].legend()
    axes[0].grid(True, alpha=0.3)
    axes[0].set_title(title)

    axes[1].plot(log.times, np.degrees(log.eulers[:, 0]), label="roll")
    axes[1].plot(log.times, np.degrees(log.eulers[:, 1]), label="pitch")
    axes[1].axhline(45.0, color="r", linestyle=":", alpha=0.6)
    axes[1].axhline(-45.0, color="r", linestyle=":", alpha=0.6)
    axes[1].set_ylabel("Attitude (deg)")
    axes[1].set_xlabel("Time (s)")
    axes[1].legend()
    axes[1].grid(True, alpha=0.3)

    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_compare(even_log: FlightLog, opt_log: FlightLog, path: Path,
                 title: str = "Even vs optimized formation") -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(opt_log.times, opt_log.references[:, 2], "k--", label="reference")
    ax.plot(even_log.times, even_log.positions[:, 2], "r:", linewidth=2, label="even")
    ax.plot(opt_log.times, opt_log.positions[:, 2], "b-", label="optimized")
    if even_log.drop_time is not None:
        ax.axvline(even_log.drop_time, color="r", alpha=0.4, linestyle="--")
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("Z position (m)")
    ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_estimation(result: EstimateResult, path: Path,
                    title: str = "Estimation progress") -> None:
    records = result.state.history
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    iters = [r.iteration for r in records]
    axes[0].plot(iters, [r.neighborhood_mass for r in records], "o-")
    axes[0].set_ylabel("MAP neighborhood mass")
    axes[0].set_ylim(0, 1.05)
    axes[0].grid(True, alpha=0.3)
    axes[0].set_title(title)

    if records:
        mi = np.array([r.mi_values for r in records])
        for j in range(mi.shape[1]):
            axes[1].plot(iters, mi[:, j], alpha=0.5)
        axes[1].plot(iters, [r.mi_values[r.pair_index] for r in records],
                     "ko-", label="selected pair")
        axes[1].legend()
    axes[1].set_ylabel("Pair information (nats)")
    axes[1].set_xlabel("Measurement")
    axes[1].grid(True, alpha=0.3)

    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_sweep(result: SweepResult, path: Path, title: str = "Estimation error sweep") -> None:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    x = np.arange(3)
    ax.bar(x, result.mean_abs_error, yerr=result.std_abs_error, capsize=6,
           color="steelblue", alpha=0.8)
    ax.axhline(1.0, color="r", linestyle=":", alpha=0.6, label="one grid step")
    ax.set_xticks(x)
    ax.set_xticklabels(AXIS_LABELS)
    ax.set_ylabel("|error| / resolution")
    ax.set_title(f"{title} ({len(result.records)} trials, "
                 f"{100 * result.convergence_rate:.0f}% converged)")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_formation(payload: PayloadModel, formation: Formation, path: Path,
                   com=None, title: str = "Formation") -> None:
    fig, ax = plt.subplots(figsize=(7, 5))
    outline = np.vstack([payload.footprint, payload.footprint[:1]])
    ax.plot(outline[:, 0], outline[:, 1], "k-", linewidth=1.5, label="payload")
    ax.plot(payload.candidates[:, 0], payload.candidates[:, 1], "r*",
            markersize=9, alpha=0.6, label="slots")
    up = formation.signs > 0
    ax.plot(formation.positions[up, 0], formation.positions[up, 1], "b^",
            markersize=10, label="robot (ccw rotor)")
    ax.plot(formation.positions[~up, 0], formation.positions[~up, 1], "bv",
            markersize=10, label="robot (cw rotor)")
    com = formation.com if com is None else np.asarray(com)
    ax.plot([com[0]], [com[1]], "gx", markersize=12, markeredgewidth=3, label="COM estimate")
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
