"""Retrieval quality metrics and the delimited results format.

Relevance for a query is membership in its first t_eval exact neighbors.
recall@R counts how many of those land in the first R returned ids; average
precision walks the full returned ranking and adds hits/rank at every hit,
normalized by t_eval. Per-query AP sums use math.fsum so results do not
depend on summation order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .data import GroundTruth

__all__ = [
    "RunResult",
    "recall_per_query",
    "recall_at_r",
    "average_precision",
    "ap_per_query",
    "mean_average_precision",
    "mean_squared_distortion",
    "CSV_COLUMNS",
    "write_metrics_csv",
    "read_metrics_csv",
]


@dataclass
class RunResult:
    """Ranked ids per query plus accumulated per-stage wall time."""

    ids: np.ndarray  # (nq, depth) int
    timings: dict[str, float] = field(default_factory=dict)


def _check(run_ids: np.ndarray, gt: GroundTruth, t_eval: int) -> np.ndarray:
    run_ids = np.asarray(run_ids)
    if run_ids.ndim != 2:
        raise ValueError("run ids must be (nq, depth)")
    if run_ids.shape[0] != gt.ids.shape[0]:
        raise ValueError(
            f"query count mismatch: run has {run_ids.shape[0]}, ground truth {gt.ids.shape[0]}"
        )
    if not 1 <= t_eval <= gt.t:
        raise ValueError(f"need 1 <= t_eval <= {gt.t}, got {t_eval}")
    return run_ids


def recall_per_query(run_ids: np.ndarray, gt: GroundTruth, R: int, t_eval: int) -> np.ndarray:
    """Fraction of each query's t_eval true neighbors found in the top R."""
    run_ids = _check(run_ids, gt, t_eval)
    if not 1 <= R <= run_ids.shape[1]:
        raise ValueError(f"need 1 <= R <= returned depth {run_ids.shape[1]}, got R={R}")
    retrieved = run_ids[:, :R]
    relevant = gt.ids[:, :t_eval]
    hits = (retrieved[:, :, None] == relevant[:, None, :]).any(axis=1)
    return hits.sum(axis=1) / float(t_eval)


def recall_at_r(run_ids: np.ndarray, gt: GroundTruth, R: int, t_eval: int) -> float:
    return float(np.mean(recall_per_query(run_ids, gt, R, t_eval)))


def average_precision(ranked_ids: np.ndarray, relevant_ids: np.ndarray, t_eval: int) -> float:
    """AP for one query: sum of hits/rank at each hit, divided by t_eval."""
    ranked = np.asarray(ranked_ids).ravel()
    rel = set(int(v) for v in np.asarray(relevant_ids).ravel()[:t_eval])
    terms = []
    hits = 0
    for rank, rid in enumerate(ranked, start=1):
        if int(rid) in rel:
            hits += 1
            terms.append(hits / rank)
    return math.fsum(terms) / t_eval


def ap_per_query(run_ids: np.ndarray, gt: GroundTruth, t_eval: int) -> np.ndarray:
    run_ids = _check(run_ids, gt, t_eval)
    return np.array(
        [average_precision(run_ids[i], gt.ids[i], t_eval) for i in range(run_ids.shape[0])]
    )


def mean_average_precision(run_ids: np.ndarray, gt: GroundTruth, t_eval: int) -> float:
    return float(np.mean(ap_per_query(run_ids, gt, t_eval)))


def mean_squared_distortion(X: np.ndarray, recon: np.ndarray) -> float:
    """Mean squared error between rows of a matrix and their reconstructions."""
    X = np.asarray(X, dtype=np.float64)
    R = np.asarray(recon, dtype=np.float64)
    if X.shape != R.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {R.shape}")
    d = X - R
    return float(np.mean(np.einsum("ij,ij->i", d, d)))


CSV_COLUMNS = [
    "method",
    "distance",
    "bits_index",
    "coeff_bytes",
    "m",
    "k",
    "L",
    "metric",
    "value",
]


def write_metrics_csv(path: str, rows, metadata: dict | None = None) -> None:
    """Write metric rows under the fixed column schema.

    Metadata lands in leading comment lines of the form ``# key=value`` so
    the payload stays machine-readable as plain CSV.
    """
    with open(path, "w", newline="") as fh:
        for key in sorted(metadata or {}):
            fh.write(f"# {key}={metadata[key]}\n")
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            missing = set(CSV_COLUMNS) - set(row)
            if missing:
                raise ValueError(f"metric row missing columns {sorted(missing)}")
            writer.writerow({c: row[c] for c in CSV_COLUMNS})


def read_metrics_csv(path: str):
    """Read back (rows, metadata); numeric fields are converted."""
    metadata = {}
    rows = []
    with open(path, newline="") as fh:
        data_lines = []
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                metadata[key.strip()] = value
            else:
                data_lines.append(line)
        for row in csv.DictReader(data_lines):
            for col in ("bits_index", "coeff_bytes", "m", "k", "L"):
                row[col] = int(row[col]) if row[col] != "" else 0
            row["value"] = float(row["value"])
            rows.append(row)
    return rows, metadata
