"""Render evaluation reports as figures next to the CSV outputs.

Uses the Agg backend so rendering works headless; every figure is written
to a file, never shown.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import EvalReport


def render_recall_bars(report: EvalReport, path: str) -> None:
    """Per-device recall bar chart; classes without test instances are skipped."""
    pairs = [
        (label, recall)
        for label, recall in sorted(report.per_class_recall.items())
        if recall is not None
    ]
    labels = [p[0] for p in pairs]
    values = [p[1] for p in pairs]
    width = max(6.0, 0.55 * len(labels) + 2.0)
    fig, ax = plt.subplots(figsize=(width, 4.5))
    x = np.arange(len(labels))
    ax.bar(x, values, color="#0485d1", edgecolor="k", linewidth=0.3)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("recall")
    ax.grid(axis="y", linestyle="dotted")
    ax.set_title(f"Per-device recall (n_test={report.n_test}, accuracy={report.accuracy:.4f})")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_confusion_heatmap(report: EvalReport, path: str) -> None:
    """Row-normalized confusion matrix with counts annotated when small."""
    labels = report.matrix.labels
    counts = np.asarray(report.matrix.counts, dtype=np.float64)
    row_sums = counts.sum(axis=1, keepdims=True)
    shares = np.divide(counts, row_sums, out=np.zeros_like(counts), where=row_sums > 0)
    side = max(4.5, 0.45 * len(labels) + 2.0)
    fig, ax = plt.subplots(figsize=(side, side))
    image = ax.imshow(shares, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(labels)))
    ax.set_yticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_yticklabels(labels, fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    if len(labels) <= 12:
        for i in range(len(labels)):
            for j in range(len(labels)):
                color = "white" if shares[i, j] > 0.5 else "black"
                ax.text(j, i, f"{int(counts[i, j])}", ha="center", va="center",
                        color=color, fontsize=8)
    fig.colorbar(image, ax=ax, fraction=0.046, pad=0.04, label="row share")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_eval_figures(report: EvalReport, outdir: str) -> list[str]:
    """Write the standard evaluation figures; returns the created paths."""
    recall_path = os.path.join(outdir, "per_device_recall.png")
    confusion_path = os.path.join(outdir, "confusion_matrix.png")
    render_recall_bars(report, recall_path)
    render_confusion_heatmap(report, confusion_path)
    return [recall_path, confusion_path]
