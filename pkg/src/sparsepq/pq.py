"""Classic product quantization baseline with hard single-centroid codes.

Centroids here stay raw (no normalization): each subvector maps to the id of
its nearest k-means centroid and reconstruction concatenates those centroids.
Search uses per-subspace lookup tables of squared distances, either between
the query and the centroids (asymmetric) or between centroid pairs
(symmetric, query quantized first).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .codebook import blocks_from_bytes, blocks_to_bytes, gram_matrix, id_dtype, lloyd_kmeans, _subspace_dims
from .kernels import top_k

__all__ = [
    "PQCodebook",
    "train_pq_codebook",
    "pq_encode",
    "pq_reconstruct",
    "pq_mean_distortion",
    "adc_tables",
    "sdc_tables",
    "scan",
    "pq_adc_search",
    "pq_sdc_search",
    "pq_code_bits",
    "save_pq_codebook",
    "load_pq_codebook",
    "save_pq_codes",
    "load_pq_codes",
]

PQ_CODES_MAGIC = b"SPQP"
PQ_CODES_VERSION = 1


@dataclass(frozen=True)
class PQCodebook:
    """Raw k-means centroids per subspace, all sharing one k."""

    centroids: tuple[np.ndarray, ...]  # m arrays of shape (k, d_i) float32

    @property
    def m(self) -> int:
        return len(self.centroids)

    @property
    def k(self) -> int:
        return self.centroids[0].shape[0]

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.centroids)

    @property
    def dim(self) -> int:
        return sum(self.dims)

    @property
    def offsets(self) -> tuple[int, ...]:
        out = [0]
        for w in self.dims:
            out.append(out[-1] + w)
        return tuple(out)

    def split(self, X: np.ndarray) -> list[np.ndarray]:
        X = np.asarray(X)
        if X.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim} columns, got {X.shape[-1]}")
        off = self.offsets
        return [X[..., off[i] : off[i + 1]] for i in range(self.m)]

    def validate(self) -> None:
        ks = {c.shape[0] for c in self.centroids}
        if len(ks) != 1:
            raise ValueError(f"all subspaces must share one k, got {sorted(ks)}")
        id_dtype(self.k)


def train_pq_codebook(
    train: np.ndarray,
    m: int,
    k: int,
    *,
    iters: int = 25,
    seed: int = 0,
    subspace_dims=None,
) -> PQCodebook:
    """k-means per subspace slice; subspace i runs with seed + i."""
    X = np.ascontiguousarray(train, dtype=np.float32)
    if X.ndim != 2:
        raise ValueError("train must be 2-D")
    dims = _subspace_dims(X.shape[1], m, subspace_dims)
    id_dtype(k)
    cents = []
    off = 0
    for i, w in enumerate(dims):
        cent, _, _ = lloyd_kmeans(X[:, off : off + w], k, iters, seed + i)
        cents.append(cent)
        off += w
    pqc = PQCodebook(centroids=tuple(cents))
    pqc.validate()
    return pqc


def _nearest_ids(sub: np.ndarray, cent: np.ndarray) -> np.ndarray:
    C = cent.astype(np.float64)
    S = sub.astype(np.float64)
    d2 = np.einsum("ij,ij->i", C, C)[None, :] - 2.0 * (S @ C.T)
    # argmin ignores the constant ||x||^2 term; ties go to the lower id
    return np.argmin(d2, axis=1)


def pq_encode(x: np.ndarray, pqc: PQCodebook) -> np.ndarray:
    """Quantize vectors to per-subspace centroid ids.

    A single (d,) vector yields an (m,) code; an (n, d) matrix yields
    (n, m). Ids use the narrowest dtype that covers k.
    """
    x = np.asarray(x)
    single = x.ndim == 1
    X = x[None, :] if single else x
    codes = np.empty((X.shape[0], pqc.m), dtype=id_dtype(pqc.k))
    for i, sub in enumerate(pqc.split(X)):
        codes[:, i] = _nearest_ids(sub, pqc.centroids[i])
    return codes[0] if single else codes


def pq_reconstruct(codes: np.ndarray, pqc: PQCodebook) -> np.ndarray:
    codes = np.asarray(codes)
    single = codes.ndim == 1
    C = codes[None, :] if single else codes
    out = np.empty((C.shape[0], pqc.dim), dtype=np.float64)
    off = pqc.offsets
    for i, cent in enumerate(pqc.centroids):
        out[:, off[i] : off[i + 1]] = cent.astype(np.float64)[C[:, i].astype(np.int64)]
    return out[0] if single else out


def pq_mean_distortion(gallery: np.ndarray, pqc: PQCodebook, codes: np.ndarray | None = None) -> float:
    """Mean squared reconstruction error over a gallery."""
    X = np.asarray(gallery, dtype=np.float64)
    if codes is None:
        codes = pq_encode(gallery, pqc)
    R = pq_reconstruct(codes, pqc)
    return float(np.mean(np.einsum("ij,ij->i", X - R, X - R)))


def adc_tables(q: np.ndarray, pqc: PQCodebook) -> np.ndarray:
    """(m, k) float64 squared distances query-subvector vs. centroids."""
    q = np.asarray(q, dtype=np.float64).ravel()
    tables = np.empty((pqc.m, pqc.k), dtype=np.float64)
    for i, qs in enumerate(pqc.split(q)):
        diff = pqc.centroids[i].astype(np.float64) - qs[None, :]
        tables[i] = np.einsum("ij,ij->i", diff, diff)
    return tables


def sdc_tables(pqc: PQCodebook) -> np.ndarray:
    """(m, k, k) float64 squared distances between centroid pairs."""
    tables = np.empty((pqc.m, pqc.k, pqc.k), dtype=np.float64)
    for i, cent in enumerate(pqc.centroids):
        C = cent.astype(np.float64)
        sq = np.einsum("ij,ij->i", C, C)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (C @ C.T)
        tables[i] = np.maximum(d2, 0.0)
    return tables


def scan(codes: np.ndarray, tables_per_sub, counter: dict | None) -> np.ndarray:
    n, m = codes.shape
    acc = np.zeros(n, dtype=np.float64)
    for i in range(m):
        acc += tables_per_sub[i][codes[:, i].astype(np.int64)]
        if counter is not None:
            counter["adds"] = counter.get("adds", 0) + n
    if counter is not None:
        counter["items"] = counter.get("items", 0) + n
    return acc


def pq_adc_search(codes: np.ndarray, q: np.ndarray, pqc: PQCodebook, p: int, counter: dict | None = None):
    """Asymmetric search: exact query subvectors against quantized codes."""
    scores = scan(codes, adc_tables(q, pqc), counter)
    return top_k(scores, p)


def pq_sdc_search(
    codes: np.ndarray,
    q: np.ndarray,
    pqc: PQCodebook,
    p: int,
    counter: dict | None = None,
    tables: np.ndarray | None = None,
):
    """Symmetric search: the query is quantized first, scores come from
    centroid-pair tables (precompute once via sdc_tables for many queries)."""
    if tables is None:
        tables = sdc_tables(pqc)
    q_code = pq_encode(np.asarray(q).ravel(), pqc).astype(np.int64)
    per_sub = [tables[i][q_code[i]] for i in range(pqc.m)]
    scores = scan(codes, per_sub, counter)
    return top_k(scores, p)


def pq_code_bits(m: int, k: int) -> int:
    """Index payload per code in bits."""
    return m * math.ceil(math.log2(k))


def save_pq_codebook(path: str, pqc: PQCodebook) -> None:
    pqc.validate()
    grams = [gram_matrix(c) for c in pqc.centroids]
    with open(path, "wb") as fh:
        fh.write(blocks_to_bytes(list(pqc.centroids), grams))


def load_pq_codebook(path: str) -> PQCodebook:
    with open(path, "rb") as fh:
        buf = fh.read()
    mats, _, pos = blocks_from_bytes(buf)
    if pos != len(buf):
        raise ValueError(f"{path}: {len(buf) - pos} trailing bytes")
    pqc = PQCodebook(centroids=tuple(mats))
    pqc.validate()
    return pqc


def save_pq_codes(path: str, codes: np.ndarray, k: int) -> None:
    """Write packed codes: header (magic, version, m, k, n) then the
    (n, m) id matrix row-major in the narrowest dtype for k."""
    codes = np.asarray(codes)
    if codes.ndim != 2:
        raise ValueError("codes must be (n, m)")
    n, m = codes.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIIIQ", PQ_CODES_MAGIC, PQ_CODES_VERSION, m, k, n))
        fh.write(np.ascontiguousarray(codes, dtype=id_dtype(k)).tobytes())


def load_pq_codes(path: str):
    """Read packed codes; returns (codes, k)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    head = struct.calcsize("<4sIIIQ")
    if len(buf) < head:
        raise ValueError(f"{path}: truncated header")
    magic, version, m, k, n = struct.unpack_from("<4sIIIQ", buf, 0)
    if magic != PQ_CODES_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != PQ_CODES_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    dt = id_dtype(k)
    want = head + n * m * dt().itemsize
    if len(buf) != want:
        raise ValueError(f"{path}: expected {want} bytes, found {len(buf)}")
    codes = np.frombuffer(buf, dtype=dt, count=n * m, offset=head).reshape(n, m).copy()
    return codes, int(k)
