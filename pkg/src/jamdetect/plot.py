"""Plot data for the three result views: error trace, error histogram, and reconstruction overlay.

Each view is written as a CSV table plus a static SVG rendering.
"""

from __future__ import annotations

import csv
from typing import List, Sequence

import numpy as np

from .detect import AnomalyReport

PLOT_KINDS = ("error_trace", "histogram", "overlay")


def error_trace_table(report: AnomalyReport):
    header = ["window", "origin", "error", "threshold", "decision", "label"]
    labels = report.series.labels
    rows = []
    for k in range(len(report)):
        rows.append([k, int(report.series.origins[k]), float(report.series.errors[k]),
                     report.threshold.value, int(report.decisions[k]),
                     "" if labels is None else int(labels[k])])
    return header, rows


def histogram_table(report: AnomalyReport, bins: int = 50):
    errors = report.series.errors
    hi = max(float(errors.max()), report.threshold.value)
    lo = min(float(errors.min()), report.threshold.value)
    if hi == lo:
        hi = lo + 1.0
    counts, edges = np.histogram(errors, bins=bins, range=(lo, hi))
    header = ["bin_left", "bin_right", "count"]
    rows = [[float(edges[k]), float(edges[k + 1]), int(counts[k])] for k in range(bins)]
    return header, rows


def overlay_table(original: np.ndarray, reconstructed: np.ndarray):
    T, n = original.shape
    names = ["i", "q"] if n == 2 else [f"x{j}" for j in range(n)]
    header = ["t", *names, *[f"{c}_hat" for c in names]]
    rows = [[t, *map(float, original[t]), *map(float, reconstructed[t])] for t in range(T)]
    return header, rows


def write_csv(path, header: Sequence[str], rows: List[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "jamdetect"
    matplotlib.rcParams["svg.fonttype"] = "none"
    fig, ax = plt.subplots(figsize=(8, 3.5))
    return plt, fig, ax


def _save(plt, fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def render_error_trace(report: AnomalyReport, path) -> None:
    plt, fig, ax = _figure()
    x = np.arange(len(report))
    ax.plot(x, report.series.errors, lw=0.8, label="reconstruction error")
    ax.axhline(report.threshold.value, color="red", ls="--", lw=1.0, label="threshold")
    if report.series.labels is not None:
        jam = report.series.labels.astype(bool)
        ax.fill_between(x, 0, 1, where=jam, color="orange", alpha=0.2,
                        transform=ax.get_xaxis_transform(), label="jammed (truth)")
    ax.set_xlabel("window")
    ax.set_ylabel("error")
    ax.legend(loc="upper right", fontsize=8)
    _save(plt, fig, path)


def render_histogram(rows, threshold: float, path) -> None:
    plt, fig, ax = _figure()
    left = [r[0] for r in rows]
    width = [r[1] - r[0] for r in rows]
    ax.bar(left, [r[2] for r in rows], width=width, align="edge")
    ax.axvline(threshold, color="red", ls="--", lw=1.0, label="threshold")
    ax.set_xlabel("reconstruction error")
    ax.set_ylabel("windows")
    ax.legend(loc="upper right", fontsize=8)
    _save(plt, fig, path)


def render_overlay(original: np.ndarray, reconstructed: np.ndarray, path) -> None:
    plt, fig, ax = _figure()
    t = np.arange(original.shape[0])
    names = ["I", "Q"] if original.shape[1] == 2 else [f"x{j}" for j in range(original.shape[1])]
    for j, name in enumerate(names):
        line, = ax.plot(t, original[:, j], lw=1.2, label=f"{name} original")
        ax.plot(t, reconstructed[:, j], lw=1.2, ls="--", color=line.get_color(),
                label=f"{name} reconstructed")
    ax.set_xlabel("time step")
    ax.set_ylabel("normalized amplitude")
    ax.legend(loc="upper right", fontsize=8)
    _save(plt, fig, path)
