"""Figure rendering for emitted run CSVs.

Kept out of the run/verify paths on purpose: the delimited outputs stay
the interface of record, and this module only consumes them.  Figures are
written as PNG next to the CSVs (or to an explicit output directory).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _read_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=float)
    data = np.atleast_2d(data)
    return {name: data[:, i] for i, name in enumerate(header)}


def _plot_trajectories(paths: list[Path], out: Path) -> Path:
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.4))
    for path in paths[:8]:
        cols = _read_csv(path)
        label = path.stem.replace("_trajectory", "")
        axes[0].plot(cols["t"], cols["f"], lw=0.9, label=label)
        axes[1].semilogy(cols["t"], np.maximum(cols["dist_X"], 1e-18), lw=0.9)
        axes[2].semilogy(cols["t"], np.maximum(cols["step_norm"], 1e-18), lw=0.9)
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("objective")
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("distance to feasible set")
    axes[2].set_xlabel("t")
    axes[2].set_ylabel("step norm")
    if len(paths) <= 4:
        axes[0].legend(fontsize=6)
    fig.tight_layout()
    target = out / "trajectories.png"
    fig.savefig(target, dpi=150)
    plt.close(fig)
    return target


def _plot_summaries(paths: list[Path], out: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for path in paths:
        cols = _read_csv(path)
        label = path.stem.replace("_summary", "")
        ax.plot(cols["seed"], cols["C_lambda_sq_est"], "o", ms=3, label=label)
        bound = cols["bound_rhs"][0]
        if np.isfinite(bound):
            ax.axhline(bound, color="k", lw=0.8, ls="--")
    ax.set_xlabel("seed")
    ax.set_ylabel("squared stationarity at t*")
    ax.set_yscale("log")
    ax.legend(fontsize=6)
    fig.tight_layout()
    target = out / "summary.png"
    fig.savefig(target, dpi=150)
    plt.close(fig)
    return target


def _plot_sweep(path: Path, out: Path) -> Path:
    cols = _read_csv(path)
    T = cols["T"]
    mean_c2 = cols["mean_C_lambda_sq"]
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.loglog(T, mean_c2, "o-", label="mean squared measure")
    if np.all(np.isfinite(cols["bound_rhs"])):
        ax.loglog(T, cols["bound_rhs"], "s--", label="guarantee")
    if len(T) >= 2:
        slope = np.polyfit(np.log(T), np.log(np.maximum(mean_c2, 1e-300)), 1)[0]
        ax.set_title(f"log-log slope {slope:.2f}")
    ax.set_xlabel("T")
    ax.set_ylabel("mean squared stationarity")
    ax.legend(fontsize=7)
    fig.tight_layout()
    target = out / f"{path.stem}.png"
    fig.savefig(target, dpi=150)
    plt.close(fig)
    return target


def render_run_dir(run_dir: Path, out: Path) -> list[Path]:
    """Render every figure the directory's CSVs support; return paths."""
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    trajectories = sorted(run_dir.glob("*_trajectory.csv"))
    if trajectories:
        written.append(_plot_trajectories(trajectories, out))
    summaries = sorted(run_dir.glob("*_summary.csv"))
    summaries = [p for p in summaries if not p.name.endswith("_sweep_summary.csv")]
    if summaries:
        written.append(_plot_summaries(summaries, out))
    for sweep in sorted(run_dir.glob("*_sweep_summary.csv")):
        written.append(_plot_sweep(sweep, out))
    return written
