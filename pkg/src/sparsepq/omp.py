"""Greedy sparse coding of vectors against a unit-atom codebook.

Each step picks the atom with the largest absolute correlation to the
current residual (ties go to the lower atom id), then re-solves the
least-squares coefficients jointly over the selected support via the
normal equations restricted to that support. Encoding stops early once
the residual is negligible or the support's Gram submatrix turns
singular. All internal math runs in float64; stored coefficients are
float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebook import Codebook, id_dtype

__all__ = [
    "SparseCode",
    "omp_encode",
    "omp_encode_batch",
    "reconstruct",
    "reconstruct_batch",
    "distortion",
]

RESIDUAL_RTOL = 1e-7   # stop once ||r|| <= RESIDUAL_RTOL * ||x||
SINGULAR_DET = 1e-10   # freeze the code when |det| of the support Gram drops below


@dataclass(frozen=True)
class SparseCode:
    """Fixed-width sparse code: `used` leading entries are live, the rest
    are zero-padded so codes serialize at a constant size."""

    ids: np.ndarray     # (L,) unsigned, distinct among the first `used`
    coeffs: np.ndarray  # (L,) float32, zero beyond `used`
    used: int


def _omp_core(X: np.ndarray, atoms: np.ndarray, gram: np.ndarray, L: int):
    """Batched encoder on raw float64 arrays.

    Returns (sel, coef, used) with shapes (B, L), (B, L), (B,). Rows of X
    that are exactly zero receive the canonical code: one atom, id 0,
    coefficient 0.
    """
    B, d = X.shape
    k = atoms.shape[0]
    if not 1 <= L <= k:
        raise ValueError(f"need 1 <= L <= k={k}, got L={L}")

    sel = np.zeros((B, L), dtype=np.int64)
    coef = np.zeros((B, L))
    used = np.zeros(B, dtype=np.int64)
    x_norm = np.sqrt(np.einsum("ij,ij->i", X, X))
    active = x_norm > 0.0

    corr0 = X @ atoms.T          # RHS of every normal system
    resid = X.copy()
    rows = np.arange(B)
    eye_cache = {}
    for step in range(L):
        if not active.any():
            break
        corr = np.abs(corr0) if step == 0 else np.abs(resid @ atoms.T)
        if step:
            corr[rows[:, None], sel[:, :step]] = -1.0
        pick = np.argmax(corr, axis=1)
        sel[active, step] = pick[active]

        s = step + 1
        idx = sel[:, :s]
        G = gram[idx[:, :, None], idx[:, None, :]]
        b = np.take_along_axis(corr0, idx, axis=1)
        det = np.linalg.det(G)
        ok = np.abs(det) > SINGULAR_DET
        if s not in eye_cache:
            eye_cache[s] = np.eye(s)
        safe = np.where(ok[:, None, None], G, eye_cache[s])
        sols = np.linalg.solve(safe, b[..., None])[..., 0]

        accept = active & ok
        coef[accept, :s] = sols[accept]
        used[accept] = s
        recon = np.einsum("bs,bsd->bd", sols, atoms[idx])
        resid = np.where(accept[:, None], X - recon, resid)
        r_norm = np.sqrt(np.einsum("ij,ij->i", resid, resid))
        active = accept & (r_norm > RESIDUAL_RTOL * x_norm)

    zero = ~(x_norm > 0.0)
    used[zero] = 1
    sel[zero] = 0
    coef[zero] = 0.0
    pad = np.arange(L)[None, :] >= used[:, None]
    sel[pad] = 0
    coef[pad] = 0.0
    return sel, coef, used


def omp_encode_batch(X: np.ndarray, cb: Codebook, L: int):
    """Encode every row of X. Returns (ids, coeffs, used) where ids is
    (n, L) in the narrowest dtype for cb.k, coeffs is (n, L) float32 and
    used is (n,) int64."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != cb.d:
        raise ValueError(f"expected (n, {cb.d}) input, got shape {X.shape}")
    atoms = cb.atoms.astype(np.float64)
    gram = atoms @ atoms.T
    sel, coef, used = _omp_core(X.astype(np.float64), atoms, gram, L)
    return sel.astype(id_dtype(cb.k)), coef.astype(np.float32), used


def omp_encode(x: np.ndarray, cb: Codebook, L: int) -> SparseCode:
    """Encode a single vector; see omp_encode_batch."""
    x = np.asarray(x).ravel()
    ids, coeffs, used = omp_encode_batch(x[None, :], cb, L)
    return SparseCode(ids=ids[0], coeffs=coeffs[0], used=int(used[0]))


def reconstruct_batch(ids: np.ndarray, coeffs: np.ndarray, cb: Codebook) -> np.ndarray:
    """Decode (n, L) id/coefficient arrays into (n, d) float64 vectors."""
    atoms = cb.atoms.astype(np.float64)
    return np.einsum("nl,nld->nd", coeffs.astype(np.float64), atoms[ids.astype(np.int64)])


def reconstruct(code: SparseCode, cb: Codebook) -> np.ndarray:
    return reconstruct_batch(code.ids[None, :], code.coeffs[None, :], cb)[0]


def distortion(x: np.ndarray, code: SparseCode, cb: Codebook) -> float:
    """Squared reconstruction error of one encoded vector."""
    x = np.asarray(x, dtype=np.float64).ravel()
    r = x - reconstruct(code, cb)
    return float(np.dot(r, r))
