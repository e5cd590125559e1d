"""Figure rendering for datasets, fit traces, and benchmark summaries.

Everything draws through the Agg backend and writes straight to files; no
window system is touched.  These figures sit on the report path of the CLI;
the benchmark engine itself stays table-only.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .model import Dataset

# One color per algorithm, stable across every figure.
ALGO_COLORS = {"EM": "tab:red", "DSAEM": "tab:orange", "DQAEM": "tab:blue"}


def plot_traces(results, path, title: str | None = None) -> None:
    """Objective vs iteration (log-scale x) for one or more fits."""
    results = list(results)
    if not results:
        raise ValueError("no fit results to plot")
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for result in results:
        iterations = [row.iteration + 1 for row in result.trace]
        objectives = [row.objective for row in result.trace]
        ax.plot(
            iterations,
            objectives,
            label=result.algorithm,
            color=ALGO_COLORS.get(result.algorithm),
            linewidth=1.6,
        )
    ax.set_xscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective (nats)")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_dataset(data: Dataset, path, title: str | None = None) -> None:
    """Scatter of the first two coordinates, colored by true labels when present."""
    fig, ax = plt.subplots(figsize=(5.5, 5.0))
    x = data.points[:, 0]
    y = data.points[:, 1] if data.dim > 1 else np.zeros(data.n)
    if data.true_labels is not None:
        for label in np.unique(data.true_labels):
            mask = data.true_labels == label
            ax.scatter(x[mask], y[mask], s=12, alpha=0.7, label=f"component {label}")
        ax.legend()
    else:
        ax.scatter(x, y, s=12, alpha=0.7)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2" if data.dim > 1 else "")
    ax.set_aspect("equal", adjustable="datalim")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_success_ratios(report, path, title: str | None = None) -> None:
    """Bar chart of per-algorithm success ratios from a benchmark report."""
    names = list(report.algorithms)
    ratios = [report.success_ratios[name] for name in names]
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    bars = ax.bar(names, ratios, color=[ALGO_COLORS.get(name, "tab:gray") for name in names])
    for bar, ratio in zip(bars, ratios):
        ax.text(
            bar.get_x() + bar.get_width() / 2.0,
            bar.get_height() + 0.01,
            f"{100.0 * ratio:.1f}%",
            ha="center",
            va="bottom",
        )
    ax.set_ylim(0.0, 1.1)
    ax.set_ylabel("success ratio")
    ax.set_title(title or f"success over {report.n_trials} trials")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
