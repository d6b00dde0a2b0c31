"""Benchmark figures rendered from metric rows.

Produces PNGs next to the CSV: distortion against code length, recall
against result-list depth for each code length, and mAP against code
length. Rows follow the metrics CSV schema.
"""

from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["render_bench_figures"]

_MARKERS = ["o", "s", "^", "D", "v", "*", "P", "X"]


def _label(row) -> str:
    if row["distance"]:
        return f"{row['method']}-{row['distance']}"
    return row["method"]


def _sorted_series(points):
    return sorted(points)


def render_bench_figures(rows, out_dir: str, prefix: str = "bench") -> list[str]:
    """Render every figure the row set supports; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    distortion = defaultdict(list)   # method -> [(bits, value)]
    recall = defaultdict(list)       # (bits, label) -> [(R, value)]
    mean_ap = defaultdict(list)      # label -> [(bits, value)]
    for row in rows:
        metric = row["metric"]
        if metric == "distortion":
            distortion[row["method"]].append((row["bits_index"], row["value"]))
        elif metric.startswith("recall@"):
            depth = int(metric.split("@", 1)[1])
            recall[(row["bits_index"], _label(row))].append((depth, row["value"]))
        elif metric == "map":
            mean_ap[_label(row)].append((row["bits_index"], row["value"]))

    if distortion:
        fig, ax = plt.subplots(figsize=(6, 4))
        for mi, (method, pts) in enumerate(sorted(distortion.items())):
            pts = _sorted_series(pts)
            ax.plot(*zip(*pts), marker=_MARKERS[mi % len(_MARKERS)], label=method)
        ax.set_xlabel("index bits per vector")
        ax.set_ylabel("mean squared distortion")
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, f"{prefix}_distortion_vs_bits.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    bits_values = sorted({bits for bits, _ in recall})
    for bits in bits_values:
        fig, ax = plt.subplots(figsize=(6, 4))
        series = {label: pts for (b, label), pts in recall.items() if b == bits}
        for mi, (label, pts) in enumerate(sorted(series.items())):
            pts = _sorted_series(pts)
            ax.plot(*zip(*pts), marker=_MARKERS[mi % len(_MARKERS)], label=label)
        ax.set_xscale("log", base=2)
        ax.set_xlabel("result list depth R")
        ax.set_ylabel("recall@R")
        ax.set_ylim(0.0, 1.05)
        ax.grid(True, alpha=0.3)
        ax.legend()
        ax.set_title(f"{bits} index bits per vector")
        fig.tight_layout()
        path = os.path.join(out_dir, f"{prefix}_recall_{bits}bits.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    if mean_ap:
        fig, ax = plt.subplots(figsize=(6, 4))
        for mi, (label, pts) in enumerate(sorted(mean_ap.items())):
            pts = _sorted_series(pts)
            ax.plot(*zip(*pts), marker=_MARKERS[mi % len(_MARKERS)], label=label)
        ax.set_xlabel("index bits per vector")
        ax.set_ylabel("mAP")
        ax.set_ylim(0.0, 1.05)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, f"{prefix}_map_vs_bits.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    return written
