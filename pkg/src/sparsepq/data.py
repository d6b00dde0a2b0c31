"""Vector file I/O, synthetic data, and exact brute-force ground truth.

On-disk records follow the common descriptor-file convention: each vector is
a 4-byte little-endian int32 dimension field followed by its payload, one
record after another. ``fvecs`` stores float32 components, ``ivecs`` int32,
``bvecs`` one unsigned byte per component. Every record in a file must carry
the same dimension.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FormatError",
    "read_vecs",
    "write_vecs",
    "read_ivecs",
    "write_ivecs",
    "gen_gaussian",
    "GroundTruth",
    "exact_knn",
]

_PAYLOAD_DTYPES = {
    "fvecs": np.dtype("<f4"),
    "ivecs": np.dtype("<i4"),
    "bvecs": np.dtype("u1"),
}


class FormatError(ValueError):
    """Raised when a vector file is malformed or internally inconsistent."""


def infer_format(path: str) -> str:
    ext = os.path.splitext(str(path))[1].lstrip(".").lower()
    if ext not in _PAYLOAD_DTYPES:
        raise FormatError(
            f"cannot infer vector format from {path!r}; "
            f"expected one of {sorted(_PAYLOAD_DTYPES)}"
        )
    return ext


def _parse_records(path: str, fmt: str) -> np.ndarray:
    """Read raw records and return the payload matrix in the payload dtype."""
    payload = _PAYLOAD_DTYPES[fmt]
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        raise FormatError(f"{path}: empty file")
    if raw.size < 4:
        raise FormatError(f"{path}: truncated header at byte offset 0")
    d = int(raw[:4].view("<i4")[0])
    if d < 1:
        raise FormatError(f"{path}: bad dimension {d} at byte offset 0")
    rec_size = 4 + d * payload.itemsize
    n, trailing = divmod(raw.size, rec_size)
    if trailing:
        raise FormatError(
            f"{path}: truncated record at byte offset {n * rec_size}"
        )
    recs = raw.reshape(n, rec_size)
    dims = np.ascontiguousarray(recs[:, :4]).view("<i4").ravel()
    bad = np.flatnonzero(dims != d)
    if bad.size:
        off = int(bad[0]) * rec_size
        raise FormatError(
            f"{path}: dimension {int(dims[bad[0]])} != {d} at byte offset {off}"
        )
    return np.ascontiguousarray(recs[:, 4:]).view(payload).reshape(n, d)


def read_vecs(path: str, fmt: str | None = None) -> np.ndarray:
    """Load a vector file as a float32 matrix of shape (n, d).

    Integer formats are widened to float32. Raises FormatError for an empty
    file, a truncated record, a non-finite float payload, or records whose
    dimension fields disagree; offending byte offsets are reported.
    """
    fmt = fmt or infer_format(path)
    if fmt not in _PAYLOAD_DTYPES:
        raise FormatError(f"unknown vector format {fmt!r}")
    mat = _parse_records(path, fmt)
    out = mat.astype(np.float32)
    if fmt == "fvecs" and not np.isfinite(out).all():
        row = int(np.flatnonzero(~np.isfinite(out).all(axis=1))[0])
        off = row * (4 + 4 * mat.shape[1])
        raise FormatError(f"{path}: non-finite value in record at byte offset {off}")
    return out


def write_vecs(path: str, vectors: np.ndarray, fmt: str | None = None) -> None:
    """Write a float matrix of shape (n, d) as a vector file.

    For integer formats every value must be integral and in range (0..255
    for bvecs, int32 range for ivecs). Writing zero vectors is an error.
    Float payloads round-trip bit-exactly through read_vecs.
    """
    fmt = fmt or infer_format(path)
    if fmt not in _PAYLOAD_DTYPES:
        raise FormatError(f"unknown vector format {fmt!r}")
    vs = np.asarray(vectors)
    if vs.ndim != 2 or vs.shape[0] < 1 or vs.shape[1] < 1:
        raise ValueError(f"expected a non-empty (n, d) matrix, got shape {vs.shape}")
    if not np.isfinite(vs.astype(np.float64, copy=False)).all():
        raise ValueError("refusing to write non-finite values")
    payload = _PAYLOAD_DTYPES[fmt]
    if fmt == "fvecs":
        body = np.ascontiguousarray(vs, dtype=payload)
    else:
        rounded = np.rint(vs)
        if not np.array_equal(rounded, vs):
            raise ValueError(f"{fmt} payload requires integral values")
        lo, hi = (0, 255) if fmt == "bvecs" else (-(2**31), 2**31 - 1)
        if vs.min() < lo or vs.max() > hi:
            raise ValueError(f"value out of range [{lo}, {hi}] for {fmt}")
        body = np.ascontiguousarray(rounded, dtype=payload)
    n, d = body.shape
    rec = np.empty(n, dtype=np.dtype([("d", "<i4"), ("v", payload, (d,))]))
    rec["d"] = d
    rec["v"] = body
    rec.tofile(path)


def read_ivecs(path: str) -> np.ndarray:
    """Load an ivecs file keeping int32 values (used for id lists)."""
    return _parse_records(path, "ivecs").astype(np.int32)


def write_ivecs(path: str, ids: np.ndarray) -> None:
    """Write an int matrix of shape (n, t) as an ivecs file."""
    ids = np.asarray(ids)
    if ids.ndim != 2 or ids.shape[0] < 1 or ids.shape[1] < 1:
        raise ValueError(f"expected a non-empty (n, t) matrix, got shape {ids.shape}")
    n, d = ids.shape
    rec = np.empty(n, dtype=np.dtype([("d", "<i4"), ("v", "<i4", (d,))]))
    rec["d"] = d
    rec["v"] = ids
    rec.tofile(path)


def gen_gaussian(n: int, d: int, seed: int) -> np.ndarray:
    """Draw an (n, d) float32 matrix of i.i.d. standard normal components.

    Uses numpy's PCG64 generator; one seed always yields the same matrix.
    """
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, d), dtype=np.float32)


@dataclass(frozen=True)
class GroundTruth:
    """Exact nearest neighbors: per query the t closest gallery ids/distances.

    ids[q] is sorted by squared distance, ties broken toward the lower id;
    dists[q] is the matching non-decreasing squared-distance row.
    """

    ids: np.ndarray    # (nq, t) int32
    dists: np.ndarray  # (nq, t) float64

    @property
    def t(self) -> int:
        return self.ids.shape[1]


def exact_knn(gallery: np.ndarray, queries: np.ndarray, t: int) -> GroundTruth:
    """Brute-force exact k nearest neighbors under squared L2 distance.

    Distances accumulate in float64 regardless of input dtype. Queries are
    processed in chunks so memory stays bounded by roughly chunk * n floats.
    """
    from .kernels import top_k

    G = np.ascontiguousarray(gallery, dtype=np.float64)
    Q = np.ascontiguousarray(queries, dtype=np.float64)
    if G.ndim != 2 or Q.ndim != 2:
        raise ValueError("gallery and queries must be 2-D matrices")
    if G.shape[1] != Q.shape[1]:
        raise ValueError(f"dimension mismatch: gallery d={G.shape[1]}, queries d={Q.shape[1]}")
    n = G.shape[0]
    if not 1 <= t <= n:
        raise ValueError(f"need 1 <= t <= {n}, got t={t}")

    g_sq = np.einsum("ij,ij->i", G, G)
    nq = Q.shape[0]
    ids = np.empty((nq, t), dtype=np.int32)
    dists = np.empty((nq, t), dtype=np.float64)
    chunk = max(1, int(8_000_000 // max(n, 1)))
    for start in range(0, nq, chunk):
        stop = min(start + chunk, nq)
        Qc = Q[start:stop]
        q_sq = np.einsum("ij,ij->i", Qc, Qc)
        d2 = q_sq[:, None] + g_sq[None, :] - 2.0 * (Qc @ G.T)
        np.maximum(d2, 0.0, out=d2)
        for r in range(stop - start):
            row_ids, row_d = top_k(d2[r], t)
            ids[start + r] = row_ids
            dists[start + r] = row_d
    return GroundTruth(ids=ids, dists=dists)
