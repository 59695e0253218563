"""Matplotlib figures written next to the CSV/JSON reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _figure(width=5.0, height=3.4):
    with plt.rc_context(STYLE):
        return plt.subplots(figsize=(width, height))


def save(fig, path):
    with plt.rc_context(STYLE):
        fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def accuracy_figure(report, path, title="Keypoint localisation accuracy"):
    """Accuracy (%) against the deviation threshold, one line per joint group."""
    names, acc, counts = report.grouped()
    fig, ax = _figure()
    thr = report.thresholds
    for name, row, c in zip(names, acc, counts):
        if c > 0:
            ax.plot(thr, row, marker="o", ms=3, lw=1, label=name)
    ax.plot(thr, report.aggregate, color="k", lw=2, label="average")
    ax.set_xlabel("deviation threshold (px)")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 100)
    ax.set_xticks(thr)
    ax.set_title(title)
    ax.legend(ncol=2, frameon=False)
    save(fig, path)


def pcp_figure(report, path, title="Percentage of correct parts"):
    fig, ax = _figure(4.0, 3.0)
    x = np.arange(len(report.limbs))
    ax.bar(x, np.nan_to_num(report.scores), color="0.45")
    ax.axhline(report.average, color="k", ls="--", lw=1, label=f"average {report.average:.2f}")
    ax.set_xticks(x)
    ax.set_xticklabels(report.limbs, rotation=20, ha="right")
    ax.set_ylim(0, 1)
    ax.set_ylabel("PCP")
    ax.set_title(title)
    ax.legend(frameon=False)
    save(fig, path)


def bench_figure(rows, path):
    """Seconds per frame against candidate count, log scale."""
    fig, ax = _figure()
    n = [r.candidates for r in rows]
    ax.plot(n, [r.integral_s for r in rows], marker="o", label="integral image (incl. build)")
    ax.plot(n, [r.extract_s for r in rows], marker="s", label="integral image (lookups only)")
    ax.plot(n, [r.naive_s for r in rows], marker="^", label="per-pixel")
    ax.set_yscale("log")
    ax.set_xlabel("window candidates")
    ax.set_ylabel("seconds per frame")
    ax.set_title(f"Descriptor extraction, m = {rows[0].rings}" if rows else "Descriptor extraction")
    ax.legend(frameon=False)
    save(fig, path)
