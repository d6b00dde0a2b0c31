"""Inverted-file index: coarse quantizer plus residual sparse codes.

Every gallery vector lands in the cell of its nearest coarse centroid and
only the residual x - centroid gets product-coded. A query probes the w
closest cells; within a cell the usual table scan runs against tables built
from the shifted query q - centroid, so scores remain estimates of the full
squared distance ||q - x||^2. An optional final stage re-ranks the best
candidates with exact distances against the original vectors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .codebook import (
    Codebook,
    ProductCodebook,
    _subspace_dims,
    blocks_from_bytes,
    blocks_to_bytes,
    id_dtype,
    lloyd_kmeans,
    make_codebook,
    train_product_codebook,
    _assign,
)
from .kernels import top_k
from .spq import LookupTables, adc_tables, encode_planes, scan_planes

__all__ = ["IVFIndex", "build_ivf", "ivf_search", "save_ivf", "load_ivf"]

IVF_MAGIC = b"SPQV"
IVF_VERSION = 1


@dataclass
class IVFIndex:
    """Cell-ordered storage: items of cell c occupy positions
    offsets[c]..offsets[c+1] in every plane, and gallery_ids maps those
    positions back to original ids."""

    coarse: np.ndarray       # (kprime, D) float32 raw centroids
    codebook: ProductCodebook
    offsets: np.ndarray      # (kprime + 1,) int64, non-decreasing
    gallery_ids: np.ndarray  # (n,) int64, a permutation of 0..n-1
    ids: np.ndarray          # (m, L, n) residual code ids, cell order
    coeffs: np.ndarray       # (m, L, n) float32
    r_sq_norm: np.ndarray    # (n,) float32 residual squared norms

    @property
    def kprime(self) -> int:
        return self.coarse.shape[0]

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
        if self.offsets.shape != (self.kprime + 1,):
            raise ValueError("offsets must have kprime + 1 entries")
        if self.offsets[0] != 0 or self.offsets[-1] != self.n:
            raise ValueError("offsets must start at 0 and end at n")
        if np.any(np.diff(self.offsets) < 0):
            raise ValueError("offsets must be non-decreasing")
        if not np.array_equal(np.sort(self.gallery_ids), np.arange(self.n)):
            raise ValueError("gallery_ids must be a permutation of 0..n-1")
        if self.coarse.shape[1] != self.codebook.dim:
            raise ValueError("coarse centroid width must match the codebook dim")


def build_ivf(
    gallery: np.ndarray,
    kprime: int,
    m: int,
    k: int,
    L: int,
    seed: int,
    *,
    coarse_iters: int = 25,
    method: str = "kmeans",
    iters: int = 25,
    epochs: int = 5,
    train_sample: int | None = None,
    subspace_dims=None,
) -> IVFIndex:
    """Cluster the gallery, code the residuals, and lay lists out contiguously.

    The residual codebook trains on the residuals themselves (optionally a
    train_sample-row random subset). Every gallery id appears in exactly one
    cell: the one of its nearest coarse centroid.
    """
    X = np.ascontiguousarray(gallery, dtype=np.float32)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("gallery must be a non-empty 2-D matrix")
    n = X.shape[0]
    if not 1 <= kprime <= n:
        raise ValueError(f"need 1 <= kprime <= n={n}, got {kprime}")

    coarse, _, _ = lloyd_kmeans(X, kprime, coarse_iters, seed)
    assign, _ = _assign(X, coarse.astype(np.float64))
    residuals = X.astype(np.float64) - coarse.astype(np.float64)[assign]
    residuals = residuals.astype(np.float32)

    rng = np.random.default_rng(seed + 1)
    if train_sample is not None and train_sample < n:
        train_rows = residuals[rng.choice(n, size=train_sample, replace=False)]
    else:
        train_rows = residuals
    if np.abs(train_rows).max(initial=0.0) < 1e-12:
        # Perfectly quantized gallery (one point per cell): every residual is
        # zero, so codes carry zero coefficients and the atom directions never
        # matter. Clustering cannot run on all-zero data; use basis vectors.
        dims = _subspace_dims(X.shape[1], m, subspace_dims)
        books = []
        for w in dims:
            atoms = np.zeros((k, w), dtype=np.float32)
            atoms[np.arange(k), np.arange(k) % w] = 1.0
            books.append(make_codebook(atoms))
        pcb = ProductCodebook(books=tuple(books))
    else:
        pcb = train_product_codebook(
            train_rows,
            m,
            k,
            method=method,
            L=L,
            iters=iters,
            epochs=epochs,
            seed=seed + 2,
            subspace_dims=subspace_dims,
        )

    order = np.argsort(assign, kind="stable").astype(np.int64)
    counts = np.bincount(assign, minlength=kprime)
    offsets = np.zeros(kprime + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])

    ordered = residuals[order]
    ids, coeffs = encode_planes(ordered, pcb, L)
    r_sq = np.einsum("ij,ij->i", ordered.astype(np.float64), ordered.astype(np.float64))

    index = IVFIndex(
        coarse=coarse,
        codebook=pcb,
        offsets=offsets,
        gallery_ids=order,
        ids=ids,
        coeffs=coeffs,
        r_sq_norm=r_sq.astype(np.float32),
    )
    index.validate()
    return index


def ivf_search(
    index: IVFIndex,
    q: np.ndarray,
    w: int,
    p: int,
    *,
    rerank: int | None = None,
    gallery: np.ndarray | None = None,
    counter: dict | None = None,
):
    """Scan the w cells whose centroids are closest to the query.

    Per probed cell the residual tables are built from q - centroid, so a
    cell item's score approximates ||q - x||^2 and results from different
    cells merge on one scale. With rerank=R the top R candidates are
    re-scored exactly against `gallery` rows before the final top-p cut.
    Ties break toward the lower gallery id throughout.
    """
    if not 1 <= w <= index.kprime:
        raise ValueError(f"need 1 <= w <= kprime={index.kprime}, got {w}")
    if p < 1:
        raise ValueError(f"need p >= 1, got p={p}")
    if rerank is not None and gallery is None:
        raise ValueError("re-ranking needs the original gallery vectors")

    q64 = np.asarray(q, dtype=np.float64).ravel()
    diff = index.coarse.astype(np.float64) - q64[None, :]
    cell_d2 = np.einsum("ij,ij->i", diff, diff)
    probe, _ = top_k(cell_d2, w)

    found_ids = []
    found_scores = []
    for c in probe:
        s, e = int(index.offsets[c]), int(index.offsets[c + 1])
        if s == e:
            continue
        shifted = q64 - index.coarse[c].astype(np.float64)
        lut = adc_tables(shifted, index.codebook)
        scores = scan_planes(
            index.ids[:, :, s:e], index.coeffs[:, :, s:e], index.r_sq_norm[s:e], lut, counter
        )
        found_ids.append(index.gallery_ids[s:e])
        found_scores.append(scores)
        if counter is not None:
            counter["cells"] = counter.get("cells", 0) + 1
    if not found_ids:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)

    all_ids = np.concatenate(found_ids)
    all_scores = np.concatenate(found_scores)
    if rerank is None:
        return top_k(all_scores, p, ids=all_ids)

    cand_ids, _ = top_k(all_scores, max(int(rerank), p), ids=all_ids)
    G = np.asarray(gallery, dtype=np.float64)
    diff = G[cand_ids] - q64[None, :]
    exact = np.einsum("ij,ij->i", diff, diff)
    if counter is not None:
        counter["reranked"] = counter.get("reranked", 0) + cand_ids.size
    return top_k(exact, p, ids=cand_ids)


def save_ivf(path: str, index: IVFIndex) -> None:
    """Write header (magic, version, n, m, k, L, kprime, D), coarse
    centroids, list offsets, the id permutation, code planes, residual
    norms, then the embedded residual codebook block."""
    index.validate()
    D = index.coarse.shape[1]
    with open(path, "wb") as fh:
        fh.write(
            struct.pack(
                "<4sIQIIIII",
                IVF_MAGIC,
                IVF_VERSION,
                index.n,
                index.m,
                index.k,
                index.L,
                index.kprime,
                D,
            )
        )
        fh.write(np.ascontiguousarray(index.coarse, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(index.offsets, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(index.gallery_ids, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(index.ids).tobytes())
        fh.write(np.ascontiguousarray(index.coeffs, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(index.r_sq_norm, dtype="<f4").tobytes())
        fh.write(
            blocks_to_bytes(
                [b.atoms for b in index.codebook.books],
                [b.gram for b in index.codebook.books],
            )
        )


def load_ivf(path: str) -> IVFIndex:
    with open(path, "rb") as fh:
        buf = fh.read()
    head = struct.calcsize("<4sIQIIIII")
    if len(buf) < head:
        raise ValueError(f"{path}: truncated header")
    magic, version, n, m, k, L, kprime, D = struct.unpack_from("<4sIQIIIII", buf, 0)
    if magic != IVF_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != IVF_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    pos = head
    coarse = np.frombuffer(buf, dtype="<f4", count=kprime * D, offset=pos).reshape(kprime, D).copy()
    pos += 4 * kprime * D
    offsets = np.frombuffer(buf, dtype="<i8", count=kprime + 1, offset=pos).copy()
    pos += 8 * (kprime + 1)
    gallery_ids = np.frombuffer(buf, dtype="<i8", count=n, offset=pos).copy()
    pos += 8 * n
    dt = id_dtype(k)
    count = m * L * n
    ids = np.frombuffer(buf, dtype=dt, count=count, offset=pos).reshape(m, L, n).copy()
    pos += count * dt().itemsize
    coeffs = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).reshape(m, L, n).copy()
    pos += 4 * count
    r_sq = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).copy()
    pos += 4 * n
    mats, grams, pos = blocks_from_bytes(buf, pos)
    if pos != len(buf):
        raise ValueError(f"{path}: {len(buf) - pos} trailing bytes")
    pcb = ProductCodebook(books=tuple(Codebook(atoms=a, gram=g) for a, g in zip(mats, grams)))
    index = IVFIndex(
        coarse=coarse,
        codebook=pcb,
        offsets=offsets,
        gallery_ids=gallery_ids,
        ids=ids,
        coeffs=coeffs,
        r_sq_norm=r_sq,
    )
    index.validate()
    return index
