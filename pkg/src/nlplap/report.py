"""Deterministic output files: delimited tables, JSON summaries, and figures.

All float formatting goes through repr() so that identical runs produce
byte-identical files regardless of thread count.  Figures are rendered
with the Agg backend and stripped of date metadata.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .analysis import RateStudyResult
from .evolve import Trajectory

_PNG_META = {"metadata": {"Date": None, "Software": None}}


def _fmt(x) -> str:
    return repr(float(x))


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """One row per time point: t, then the state values."""
    n = traj.mesh.n
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t," + ",".join(f"u{i + 1}" for i in range(n)) + "\n")
        for t, state in zip(traj.times, traj.states):
            fh.write(_fmt(t) + "," + ",".join(_fmt(v) for v in state) + "\n")


def write_trajectory_json(traj: Trajectory, path, extra: dict | None = None) -> None:
    meta = {
        "scheme": traj.scheme,
        "n": traj.mesh.n,
        "mesh_boundaries": [float(b) for b in traj.mesh.boundaries],
        "num_steps": len(traj.steps),
        "horizon": traj.horizon,
        "steps": [
            {"tau": s.tau, "iters": s.iters, "residual": s.residual} for s in traj.steps
        ],
    }
    if extra:
        meta.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_gridfunction_csv(values: np.ndarray, boundaries: np.ndarray, path) -> None:
    """One row per cell with its interval; header carries n."""
    n = len(values)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# n={n}\n")
        fh.write("x_left,x_right,value\n")
        for i, v in enumerate(values):
            fh.write(f"{_fmt(boundaries[i])},{_fmt(boundaries[i + 1])},{_fmt(v)}\n")


def write_matrix_csv(matrix: np.ndarray, boundaries: np.ndarray, path) -> None:
    n = matrix.shape[0]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# n={n} boundaries=" + " ".join(_fmt(b) for b in boundaries) + "\n")
        for row in matrix:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_rate_csv(result: RateStudyResult, path, param_name: str = "parameter") -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{param_name},error\n")
        for x, e in zip(result.params, result.errors):
            fh.write(f"{_fmt(x)},{_fmt(e)}\n")


def write_rate_json(result: RateStudyResult, path, verdict: dict | None = None) -> None:
    payload = {
        "params": [float(x) for x in result.params],
        "errors": [float(e) for e in result.errors],
        "slope": result.slope,
        "intercept": result.intercept,
        "max_residual": result.max_residual,
    }
    for key, val in result.extras.items():
        if key == "per_seed_errors":
            payload[key] = {str(k): [float(e) for e in v] for k, v in val.items()}
        else:
            payload[key] = val
    if verdict is not None:
        payload["verdict"] = verdict
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def render_rate_figure(result: RateStudyResult, path, param_name: str, title: str) -> None:
    """Log-log error plot with the fitted power law overlaid."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.loglog(result.params, result.errors, "o-", label="measured")
    fit = np.exp(result.intercept) * np.asarray(result.params) ** result.slope
    ax.loglog(result.params, fit, "--", label=f"slope {result.slope:.3f}")
    ax.set_xlabel(param_name)
    ax.set_ylabel("sup-in-time L2 error")
    ax.set_title(title)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, **_PNG_META)
    plt.close(fig)


def render_trajectory_figure(traj: Trajectory, path, max_curves: int = 12) -> None:
    """Space-time view: a handful of state snapshots over the mesh."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    idx = np.unique(np.linspace(0, len(traj.times) - 1, max_curves).astype(int))
    centers = traj.mesh.centers
    for k in idx:
        ax.step(
            traj.mesh.boundaries,
            np.append(traj.states[k], traj.states[k][-1]),
            where="post",
            label=f"t={traj.times[k]:.3g}",
        )
    ax.set_xlabel("x")
    ax.set_ylabel("u")
    ax.set_title(f"{traj.scheme}, n={traj.mesh.n}")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120, **_PNG_META)
    plt.close(fig)
