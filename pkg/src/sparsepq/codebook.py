"""Codebook training and persistence.

Two trainers produce per-subspace codebooks: batch Lloyd k-means (centroids
are unit-normalized into atoms afterwards) and an online dictionary learner
that respects the L0 sparsity budget during training. A ProductCodebook
bundles one codebook per subspace; every book shares the same atom count k
while subspace widths may differ.

Codebook files hold a small header (magic ``SPQB``, version, m, k, subspace
widths) followed by each subspace's atoms and then each Gram matrix, all as
little-endian float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Codebook",
    "ProductCodebook",
    "id_dtype",
    "gram_matrix",
    "lloyd_kmeans",
    "kmeans_train",
    "odl_train",
    "train_product_codebook",
    "save_product_codebook",
    "load_product_codebook",
]

CODEBOOK_MAGIC = b"SPQB"
CODEBOOK_VERSION = 1

_TINY = 1e-12


def id_dtype(k: int):
    """Smallest unsigned dtype that can index k atoms."""
    if not 1 <= k <= 65536:
        raise ValueError(f"need 1 <= k <= 65536, got k={k}")
    return np.uint8 if k <= 256 else np.uint16


def gram_matrix(atoms: np.ndarray) -> np.ndarray:
    """Pairwise inner products of atom rows, float32, exactly symmetric."""
    a = np.asarray(atoms, dtype=np.float64)
    g = a @ a.T
    g = 0.5 * (g + g.T)
    return g.astype(np.float32)


@dataclass(frozen=True)
class Codebook:
    """k unit-norm atoms spanning one subspace plus their Gram matrix."""

    atoms: np.ndarray  # (k, d) float32, rows unit L2 norm
    gram: np.ndarray   # (k, k) float32

    @property
    def k(self) -> int:
        return self.atoms.shape[0]

    @property
    def d(self) -> int:
        return self.atoms.shape[1]

    def validate(self, atol: float = 1e-5) -> None:
        if self.atoms.ndim != 2 or self.gram.shape != (self.k, self.k):
            raise ValueError("atoms must be (k, d) with a (k, k) gram")
        norms = np.linalg.norm(self.atoms.astype(np.float64), axis=1)
        if np.abs(norms - 1.0).max() > atol:
            raise ValueError("atoms must have unit L2 norm")
        if np.abs(self.gram - self.gram.T).max() > atol:
            raise ValueError("gram must be symmetric")
        if np.abs(np.diagonal(self.gram) - 1.0).max() > atol:
            raise ValueError("gram diagonal must be 1")


def make_codebook(atoms: np.ndarray) -> Codebook:
    atoms = np.ascontiguousarray(atoms, dtype=np.float32)
    cb = Codebook(atoms=atoms, gram=gram_matrix(atoms))
    cb.validate()
    return cb


def _assign(X: np.ndarray, centroids: np.ndarray, chunk: int = 16384):
    """Nearest-centroid assignment, float64 math, bounded memory.

    Returns (assign, sqdist) where ties go to the lower centroid index.
    """
    C = centroids.astype(np.float64, copy=False)
    c_sq = np.einsum("ij,ij->i", C, C)
    n = X.shape[0]
    assign = np.empty(n, dtype=np.int64)
    sqdist = np.empty(n, dtype=np.float64)
    for s in range(0, n, chunk):
        e = min(s + chunk, n)
        Xc = X[s:e].astype(np.float64, copy=False)
        d2 = c_sq[None, :] - 2.0 * (Xc @ C.T)
        d2 += np.einsum("ij,ij->i", Xc, Xc)[:, None]
        assign[s:e] = np.argmin(d2, axis=1)
        sqdist[s:e] = np.maximum(d2[np.arange(e - s), assign[s:e]], 0.0)
    return assign, sqdist


def lloyd_kmeans(data: np.ndarray, k: int, iters: int, seed: int):
    """Plain Lloyd iterations with farthest-point re-seeding of empty cells.

    Args:
        data: (n, d) training matrix, n >= k.
        k: centroid count.
        iters: assignment/update rounds, >= 1.
        seed: init draws k distinct rows with numpy's PCG64 generator.

    Returns:
        (centroids, assignments, history): float32 (k, d) raw centroids, the
        final (n,) assignment, and the per-iteration mean squared distortion
        measured at assignment time. The history never increases.
    """
    X = np.ascontiguousarray(data, dtype=np.float32)
    if X.ndim != 2:
        raise ValueError("data must be 2-D")
    n = X.shape[0]
    if n < k:
        raise ValueError(f"need at least k={k} training rows, got {n}")
    if iters < 1:
        raise ValueError(f"need iters >= 1, got {iters}")
    rng = np.random.default_rng(seed)
    cent = X[rng.choice(n, size=k, replace=False)].astype(np.float64)

    history = []
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        assign, sqdist = _assign(X, cent)
        history.append(float(sqdist.mean()))
        counts = np.bincount(assign, minlength=k)
        sums = np.empty((k, X.shape[1]), dtype=np.float64)
        for j in range(X.shape[1]):
            sums[:, j] = np.bincount(assign, weights=X[:, j].astype(np.float64), minlength=k)
        filled = counts > 0
        cent[filled] = sums[filled] / counts[filled, None]
        empties = np.flatnonzero(~filled)
        if empties.size:
            # Re-seed each empty cell from the point farthest from its
            # centroid; zeroing keeps one point from seeding two cells.
            far_pool = sqdist.copy()
            for c in empties:
                far = int(np.argmax(far_pool))
                cent[c] = X[far]
                far_pool[far] = -1.0
    return cent.astype(np.float32), assign, history


def kmeans_train(data: np.ndarray, k: int, iters: int = 25, seed: int = 0) -> Codebook:
    """Train a unit-atom codebook by k-means then row normalization.

    A centroid whose norm underflows is replaced by the farthest data point
    before normalizing; only k consecutive unusable candidates raise.
    """
    cent, assign, _ = lloyd_kmeans(data, k, iters, seed)
    cent64 = cent.astype(np.float64)
    norms = np.linalg.norm(cent64, axis=1)
    bad = np.flatnonzero(norms < _TINY)
    if bad.size:
        X = np.asarray(data, dtype=np.float64)
        sqdist = np.einsum("ij,ij->i", X - cent64[assign], X - cent64[assign])
        order = np.argsort(-sqdist, kind="stable")
        pos = 0
        for c in bad:
            failures = 0
            while True:
                if pos >= order.size or failures >= k:
                    raise RuntimeError("could not re-seed a zero-norm centroid")
                cand = X[order[pos]]
                pos += 1
                cn = np.linalg.norm(cand)
                if cn >= _TINY:
                    cent64[c] = cand
                    norms[c] = cn
                    break
                failures += 1
    atoms = cent64 / norms[:, None]
    return make_codebook(atoms)


def odl_train(
    data: np.ndarray,
    k: int,
    L: int,
    *,
    epochs: int = 5,
    batch_size: int = 256,
    seed: int = 0,
    on_epoch=None,
) -> Codebook:
    """Online dictionary learning under an L0 budget of L atoms per sample.

    Each mini-batch is sparse-coded against the current atoms, the sufficient
    statistics A += alpha^T alpha and B += X^T alpha are accumulated, and each
    atom is refreshed by its closed-form per-atom quadratic minimizer before
    being renormalized to unit length. Atoms never selected during an epoch
    are re-seeded from random data rows. After every epoch the objective
    sum(0.5 * ||C a_i - x_i||^2) over a held-out slice is reported through
    on_epoch(epoch, objective); it is non-increasing up to mini-batch noise.
    """
    from .omp import _omp_core  # deferred: omp imports this module

    X = np.ascontiguousarray(data, dtype=np.float32)
    if X.ndim != 2:
        raise ValueError("data must be 2-D")
    n, d = X.shape
    if n < k:
        raise ValueError(f"need at least k={k} training rows, got {n}")
    if epochs < 1 or batch_size < 1:
        raise ValueError("need epochs >= 1 and batch_size >= 1")

    rng = np.random.default_rng(seed)
    row_norms = np.linalg.norm(X.astype(np.float64), axis=1)
    usable = np.flatnonzero(row_norms >= _TINY)
    if usable.size < k:
        raise ValueError("need at least k rows with nonzero norm")
    init = rng.choice(usable, size=k, replace=False)
    atoms = X[init].astype(np.float64) / row_norms[init][:, None]

    holdout = min(1024, n // 10)
    if n - holdout < k:
        holdout = 0
    perm = rng.permutation(n)
    eval_idx = perm[:holdout] if holdout else perm
    stream_idx = perm[holdout:]

    A = np.zeros((k, k))
    B = np.zeros((d, k))
    for epoch in range(epochs):
        order = stream_idx[rng.permutation(stream_idx.size)]
        touched = np.zeros(k, dtype=bool)
        for s in range(0, order.size, batch_size):
            batch = order[s : s + batch_size]
            Xb = X[batch].astype(np.float64)
            gram = atoms @ atoms.T
            sel, coef, _ = _omp_core(Xb, atoms, gram, L)
            alpha = np.zeros((batch.size, k))
            np.add.at(alpha, (np.arange(batch.size)[:, None], sel), coef)
            A += alpha.T @ alpha
            B += Xb.T @ alpha
            touched[np.unique(sel)] = True
            for j in range(k):
                ajj = A[j, j]
                if ajj < 1e-10:
                    continue
                u = atoms[j] + (B[:, j] - atoms.T @ A[:, j]) / ajj
                un = np.linalg.norm(u)
                if un >= _TINY:
                    atoms[j] = u / un
        for j in np.flatnonzero(~touched):
            for _ in range(32):
                cand = X[rng.integers(n)].astype(np.float64)
                cn = np.linalg.norm(cand)
                if cn >= _TINY:
                    atoms[j] = cand / cn
                    break
            A[j, :] = 0.0
            A[:, j] = 0.0
            B[:, j] = 0.0
        if on_epoch is not None:
            gram = atoms @ atoms.T
            Xe = X[eval_idx].astype(np.float64)
            sel, coef, _ = _omp_core(Xe, atoms, gram, L)
            recon = np.einsum("bl,bld->bd", coef, atoms[sel])
            obj = 0.5 * float(np.sum((Xe - recon) ** 2))
            on_epoch(epoch, obj)
    return make_codebook(atoms)


@dataclass(frozen=True)
class ProductCodebook:
    """One codebook per subspace; k is uniform, widths may differ."""

    books: tuple[Codebook, ...]

    @property
    def m(self) -> int:
        return len(self.books)

    @property
    def k(self) -> int:
        return self.books[0].k

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.d for b in self.books)

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
        """Views of X's columns, one slice per subspace."""
        X = np.asarray(X)
        if X.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim} columns, got {X.shape[-1]}")
        off = self.offsets
        return [X[..., off[i] : off[i + 1]] for i in range(self.m)]

    def validate(self) -> None:
        if self.m < 1:
            raise ValueError("need at least one subspace")
        ks = {b.k for b in self.books}
        if len(ks) != 1:
            raise ValueError(f"all subspaces must share one k, got {sorted(ks)}")
        for b in self.books:
            b.validate()


def _subspace_dims(d: int, m: int, subspace_dims) -> list[int]:
    if subspace_dims is not None:
        dims = [int(w) for w in subspace_dims]
        if len(dims) != m or any(w < 1 for w in dims) or sum(dims) != d:
            raise ValueError(f"subspace widths {dims} do not partition d={d} into m={m}")
        return dims
    if m < 1 or d % m != 0:
        raise ValueError(f"d={d} is not divisible by m={m}; pass explicit subspace widths")
    return [d // m] * m


def train_product_codebook(
    train: np.ndarray,
    m: int,
    k: int,
    *,
    method: str = "kmeans",
    L: int = 2,
    iters: int = 25,
    epochs: int = 5,
    batch_size: int = 256,
    seed: int = 0,
    subspace_dims=None,
) -> ProductCodebook:
    """Train one codebook per subspace slice of the training matrix.

    method is "kmeans" or "odl"; subspace i trains with seed + i so runs are
    reproducible yet the streams differ across subspaces.
    """
    X = np.ascontiguousarray(train, dtype=np.float32)
    if X.ndim != 2:
        raise ValueError("train must be 2-D")
    dims = _subspace_dims(X.shape[1], m, subspace_dims)
    id_dtype(k)  # range check
    books = []
    off = 0
    for i, w in enumerate(dims):
        sub = X[:, off : off + w]
        if method == "kmeans":
            books.append(kmeans_train(sub, k, iters=iters, seed=seed + i))
        elif method == "odl":
            books.append(
                odl_train(sub, k, L, epochs=epochs, batch_size=batch_size, seed=seed + i)
            )
        else:
            raise ValueError(f"unknown training method {method!r}")
        off += w
    pcb = ProductCodebook(books=tuple(books))
    pcb.validate()
    return pcb


# ---------------------------------------------------------------------------
# Codebook container: shared by the sparse codebooks and the raw-centroid
# codebooks of the hard-assignment baseline, which skip the unit-norm check.

def blocks_to_bytes(mats: list[np.ndarray], grams: list[np.ndarray]) -> bytes:
    m = len(mats)
    k = mats[0].shape[0]
    parts = [struct.pack("<4sIII", CODEBOOK_MAGIC, CODEBOOK_VERSION, m, k)]
    dims = np.array([a.shape[1] for a in mats], dtype="<u4")
    parts.append(dims.tobytes())
    for a in mats:
        parts.append(np.ascontiguousarray(a, dtype="<f4").tobytes())
    for g in grams:
        if g.shape != (k, k):
            raise ValueError("gram shape must be (k, k)")
        parts.append(np.ascontiguousarray(g, dtype="<f4").tobytes())
    return b"".join(parts)


def blocks_from_bytes(buf: bytes, offset: int = 0):
    """Parse a codebook block; returns (mats, grams, next_offset)."""
    head = struct.calcsize("<4sIII")
    if len(buf) - offset < head:
        raise ValueError("codebook block truncated")
    magic, version, m, k = struct.unpack_from("<4sIII", buf, offset)
    if magic != CODEBOOK_MAGIC:
        raise ValueError(f"bad codebook magic {magic!r}")
    if version != CODEBOOK_VERSION:
        raise ValueError(f"unsupported codebook version {version}")
    pos = offset + head
    dims = np.frombuffer(buf, dtype="<u4", count=m, offset=pos).astype(np.int64)
    pos += 4 * m
    mats = []
    for w in dims:
        a = np.frombuffer(buf, dtype="<f4", count=k * int(w), offset=pos)
        mats.append(a.reshape(k, int(w)).copy())
        pos += 4 * k * int(w)
    grams = []
    for _ in range(m):
        g = np.frombuffer(buf, dtype="<f4", count=k * k, offset=pos)
        grams.append(g.reshape(k, k).copy())
        pos += 4 * k * k
    return mats, grams, pos


def save_product_codebook(path: str, pcb: ProductCodebook) -> None:
    pcb.validate()
    data = blocks_to_bytes([b.atoms for b in pcb.books], [b.gram for b in pcb.books])
    with open(path, "wb") as fh:
        fh.write(data)


def load_product_codebook(path: str) -> ProductCodebook:
    with open(path, "rb") as fh:
        buf = fh.read()
    mats, grams, pos = blocks_from_bytes(buf)
    if pos != len(buf):
        raise ValueError(f"{path}: {len(buf) - pos} trailing bytes")
    pcb = ProductCodebook(
        books=tuple(Codebook(atoms=a, gram=g) for a, g in zip(mats, grams))
    )
    pcb.validate()
    return pcb
