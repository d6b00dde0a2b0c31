"""Flat index over sparse product codes with table-driven scanning.

Codes are stored structure-of-arrays: id planes and coefficient planes of
shape (m, L, n) so the scan walks stride-1 memory, plus each vector's true
squared norm. A query turns into per-subspace lookup tables once; scoring a
code is then m*L multiply-adds:

    score = ||x||^2 + ||q||^2 - 2 * sum_i sum_l coeff[i,l] * T_i[id[i,l]]

Asymmetric tables hold <q_i, atom_j>. Symmetric search encodes the query
too and folds its sparse code through the Gram matrices, which reduces to
the same scan with different tables.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import omp
from .codebook import Codebook, ProductCodebook, blocks_from_bytes, blocks_to_bytes, id_dtype
from .kernels import top_k

__all__ = [
    "SPQIndex",
    "LookupTables",
    "build",
    "adc_tables",
    "sdc_tables",
    "scan",
    "adc_search",
    "sdc_search",
    "mean_distortion",
    "spq_code_bits",
    "spq_coeff_bytes",
    "save_index",
    "load_index",
]

INDEX_MAGIC = b"SPQI"
INDEX_VERSION = 1


@dataclass
class SPQIndex:
    """Encoded gallery: planes are (m, L, n) with stride-1 item axis."""

    codebook: ProductCodebook
    ids: np.ndarray        # (m, L, n) uint8 or uint16
    coeffs: np.ndarray     # (m, L, n) float32, zero beyond each code's used count
    x_sq_norm: np.ndarray  # (n,) float32, squared norms of the original vectors

    @property
    def n(self) -> int:
        return self.ids.shape[2]

    @property
    def m(self) -> int:
        return self.ids.shape[0]

    @property
    def L(self) -> int:
        return self.ids.shape[1]

    @property
    def k(self) -> int:
        return self.codebook.k

    def validate(self) -> None:
        self.codebook.validate()
        if self.ids.shape != self.coeffs.shape:
            raise ValueError("id and coefficient planes must share a shape")
        if self.ids.shape[0] != self.codebook.m:
            raise ValueError("plane count must match the codebook's m")
        if self.x_sq_norm.shape != (self.n,):
            raise ValueError("x_sq_norm must be (n,)")
        if self.x_sq_norm.size and float(self.x_sq_norm.min()) < 0.0:
            raise ValueError("squared norms cannot be negative")


def encode_planes(gallery: np.ndarray, pcb: ProductCodebook, L: int):
    """Encode a gallery into (m, L, n) id/coefficient planes."""
    X = np.ascontiguousarray(gallery, dtype=np.float32)
    if X.ndim != 2:
        raise ValueError("gallery must be 2-D")
    n = X.shape[0]
    ids = np.empty((pcb.m, L, n), dtype=id_dtype(pcb.k))
    coeffs = np.empty((pcb.m, L, n), dtype=np.float32)
    for i, sub in enumerate(pcb.split(X)):
        sel, coef, _ = omp.omp_encode_batch(sub, pcb.books[i], L)
        ids[i] = np.ascontiguousarray(sel.T)
        coeffs[i] = np.ascontiguousarray(coef.T)
    return ids, coeffs


def build(gallery: np.ndarray, pcb: ProductCodebook, L: int) -> SPQIndex:
    """Encode every gallery vector and record its true squared norm.

    An empty gallery is legal and yields an index that scans nothing.
    """
    pcb.validate()
    X = np.ascontiguousarray(gallery, dtype=np.float32)
    if X.ndim != 2:
        raise ValueError("gallery must be a 2-D matrix")
    if X.shape[1] != pcb.dim:
        raise ValueError(f"gallery width {X.shape[1]} != codebook dim {pcb.dim}")
    ids, coeffs = encode_planes(X, pcb, L)
    x_sq = np.einsum("ij,ij->i", X.astype(np.float64), X.astype(np.float64))
    index = SPQIndex(codebook=pcb, ids=ids, coeffs=coeffs, x_sq_norm=x_sq.astype(np.float32))
    index.validate()
    return index


@dataclass(frozen=True)
class LookupTables:
    """Per-subspace score tables plus the query's squared norm."""

    tables: np.ndarray  # (m, k) float64
    q_sq: float


def adc_tables(q: np.ndarray, pcb: ProductCodebook) -> LookupTables:
    """Tables of <q_i, atom_j> for asymmetric scoring."""
    q = np.asarray(q, dtype=np.float64).ravel()
    if q.shape[0] != pcb.dim:
        raise ValueError(f"query dim {q.shape[0]} != codebook dim {pcb.dim}")
    tables = np.empty((pcb.m, pcb.k), dtype=np.float64)
    for i, qs in enumerate(pcb.split(q)):
        tables[i] = pcb.books[i].atoms.astype(np.float64) @ qs
    return LookupTables(tables=tables, q_sq=float(np.dot(q, q)))


def sdc_tables(q: np.ndarray, pcb: ProductCodebook, L: int) -> LookupTables:
    """Symmetric tables: the query's own sparse code folded through the
    Gram matrix, T_i = sum_l beta[l] * G_i[id[l], :]."""
    q = np.asarray(q, dtype=np.float64).ravel()
    if q.shape[0] != pcb.dim:
        raise ValueError(f"query dim {q.shape[0]} != codebook dim {pcb.dim}")
    tables = np.zeros((pcb.m, pcb.k), dtype=np.float64)
    for i, qs in enumerate(pcb.split(q)):
        code = omp.omp_encode(qs, pcb.books[i], L)
        g = pcb.books[i].gram.astype(np.float64)
        for l in range(code.used):
            tables[i] += float(code.coeffs[l]) * g[int(code.ids[l])]
    return LookupTables(tables=tables, q_sq=float(np.dot(q, q)))


def scan_planes(
    ids: np.ndarray,
    coeffs: np.ndarray,
    x_sq_norm: np.ndarray,
    lut: LookupTables,
    counter: dict | None = None,
) -> np.ndarray:
    """Score every item: m*L table gathers with multiply-add, then the
    norm terms. Returns float64 scores."""
    m, L, n = ids.shape
    acc = np.zeros(n, dtype=np.float64)
    for i in range(m):
        t = lut.tables[i]
        for l in range(L):
            acc += coeffs[i, l] * t[ids[i, l].astype(np.int64, copy=False)]
            if counter is not None:
                counter["madds"] = counter.get("madds", 0) + n
    if counter is not None:
        counter["items"] = counter.get("items", 0) + n
    return x_sq_norm.astype(np.float64) + lut.q_sq - 2.0 * acc


def scan(index: SPQIndex, lut: LookupTables, counter: dict | None = None) -> np.ndarray:
    return scan_planes(index.ids, index.coeffs, index.x_sq_norm, lut, counter)


def adc_search(index: SPQIndex, q: np.ndarray, p: int, counter: dict | None = None):
    """Top-p items by asymmetric score; ties break toward the lower id."""
    scores = scan(index, adc_tables(q, index.codebook), counter)
    return top_k(scores, p)


def sdc_search(index: SPQIndex, q: np.ndarray, p: int, counter: dict | None = None):
    """Top-p items by symmetric score (query quantized too)."""
    scores = scan(index, sdc_tables(q, index.codebook, index.L), counter)
    return top_k(scores, p)


def mean_distortion(gallery: np.ndarray, pcb: ProductCodebook, L: int) -> float:
    """Mean squared reconstruction error of encoding a gallery at budget L."""
    X = np.asarray(gallery, dtype=np.float64)
    err = 0.0
    for i, sub in enumerate(pcb.split(X)):
        sel, coef, _ = omp.omp_encode_batch(sub, pcb.books[i], L)
        recon = omp.reconstruct_batch(sel, coef, pcb.books[i])
        err += float(np.sum((sub - recon) ** 2))
    return err / X.shape[0]


def spq_code_bits(m: int, k: int, L: int) -> int:
    """Index payload per code in bits (coefficients are counted separately)."""
    return m * L * math.ceil(math.log2(k))


def spq_coeff_bytes(m: int, L: int) -> int:
    """Coefficient payload per code in bytes (float32 each)."""
    return 4 * m * L


def save_index(path: str, index: SPQIndex) -> None:
    """Write header (magic, version, n, m, k, L), id planes, coefficient
    planes, squared norms, then the embedded codebook block."""
    index.validate()
    with open(path, "wb") as fh:
        fh.write(
            struct.pack(
                "<4sIQIII", INDEX_MAGIC, INDEX_VERSION, index.n, index.m, index.k, index.L
            )
        )
        fh.write(np.ascontiguousarray(index.ids).tobytes())
        fh.write(np.ascontiguousarray(index.coeffs, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(index.x_sq_norm, dtype="<f4").tobytes())
        fh.write(
            blocks_to_bytes(
                [b.atoms for b in index.codebook.books],
                [b.gram for b in index.codebook.books],
            )
        )


def load_index(path: str) -> SPQIndex:
    with open(path, "rb") as fh:
        buf = fh.read()
    head = struct.calcsize("<4sIQIII")
    if len(buf) < head:
        raise ValueError(f"{path}: truncated header")
    magic, version, n, m, k, L = struct.unpack_from("<4sIQIII", buf, 0)
    if magic != INDEX_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != INDEX_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    dt = id_dtype(k)
    pos = head
    count = m * L * n
    ids = np.frombuffer(buf, dtype=dt, count=count, offset=pos).reshape(m, L, n).copy()
    pos += count * dt().itemsize
    coeffs = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).reshape(m, L, n).copy()
    pos += 4 * count
    x_sq = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).copy()
    pos += 4 * n
    mats, grams, pos = blocks_from_bytes(buf, pos)
    if pos != len(buf):
        raise ValueError(f"{path}: {len(buf) - pos} trailing bytes")
    pcb = ProductCodebook(books=tuple(Codebook(atoms=a, gram=g) for a, g in zip(mats, grams)))
    index = SPQIndex(codebook=pcb, ids=ids, coeffs=coeffs, x_sq_norm=x_sq)
    index.validate()
    return index
