"""Distance and selection primitives shared by every search path."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

__all__ = ["ScoredId", "sq_l2", "dot", "top_k"]


class ScoredId(NamedTuple):
    id: int
    score: float


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    return x, y


def sq_l2(x, y) -> float:
    """Squared Euclidean distance between two equal-length vectors."""
    x, y = _pair(x, y)
    d = x - y
    return float(np.dot(d, d))


def dot(x, y) -> float:
    """Inner product of two equal-length vectors."""
    x, y = _pair(x, y)
    return float(np.dot(x, y))


def top_k(scores: np.ndarray, k: int, ids: np.ndarray | None = None):
    """Select the k smallest scores, ascending, ties broken by lower id.

    Args:
        scores: 1-D array of scores (lower is better).
        k: number of results wanted, k >= 1. If fewer than k scores exist
           every one is returned.
        ids: optional id per score; defaults to positions 0..n-1.

    Returns:
        (ids, scores) arrays of length min(k, len(scores)). The tie rule is
        exact: equal scores always order by ascending id, independent of the
        input permutation.
    """
    if k < 1:
        raise ValueError(f"need k >= 1, got k={k}")
    scores = np.asarray(scores)
    if scores.ndim != 1:
        raise ValueError("scores must be 1-D")
    n = scores.shape[0]
    if ids is None:
        ids = np.arange(n, dtype=np.int64)
    else:
        ids = np.asarray(ids)
        if ids.shape != scores.shape:
            raise ValueError("ids and scores must have identical shapes")

    if k >= n:
        order = np.lexsort((ids, scores))
        return ids[order], scores[order]
    # Partition first, then resolve the boundary exactly: keep everything
    # <= the k-th smallest value and let the lexsort apply the tie rule.
    kth = np.partition(scores, k - 1)[k - 1]
    cand = np.flatnonzero(scores <= kth)
    order = np.lexsort((ids[cand], scores[cand]))[:k]
    sel = cand[order]
    return ids[sel], scores[sel]
