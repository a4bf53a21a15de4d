"""Small dense linear-algebra helpers shared by every module.

All matrices here are tiny (dimension <= 6), so plain LAPACK calls through
numpy are used throughout.  Eigen- and singular-value decompositions are
deterministic: eigenvalues ascending, ties resolved by LAPACK's fixed
ordering, no randomized algorithms.
"""

from __future__ import annotations

import numpy as np


def sym_part(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def sym_eig(mat: np.ndarray):
    """Eigenvalues (ascending) and eigenvectors of the symmetric part."""
    return np.linalg.eigh(sym_part(mat))


def ky_fan_extremes(mat: np.ndarray, k: int) -> tuple[float, float]:
    """(min, max) of Tr(A|_W) over k-dimensional subspaces W.

    By the Ky Fan extremal principle these are the sums of the k smallest
    and k largest eigenvalues of the symmetric part of ``mat``.
    """
    w = np.linalg.eigvalsh(sym_part(mat))
    if not 1 <= k <= len(w):
        raise ValueError(f"k={k} out of range [1, {len(w)}]")
    return float(np.sum(w[:k])), float(np.sum(w[len(w) - k:]))


def metric_gram_schmidt(vectors, g: np.ndarray, drop_tol: float = 1e-10) -> np.ndarray:
    """g-orthonormalize ``vectors`` (rows of candidates) in order.

    Near-dependent candidates are dropped, which makes the output frame a
    deterministic function of the input ordering.  Returns the kept vectors
    as columns of an (n, m) array.
    """
    kept: list[np.ndarray] = []
    for cand in vectors:
        w = np.asarray(cand, dtype=float).copy()
        for e in kept:
            w -= (e @ g @ w) * e
        nrm = float(np.sqrt(w @ g @ w))
        if nrm > drop_tol:
            kept.append(w / nrm)
    if not kept:
        return np.zeros((g.shape[0], 0))
    return np.column_stack(kept)


def orthonormal_basis_perp(v: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Deterministic g-orthonormal basis of the g-orthogonal complement of v.

    Gram-Schmidt of [v, e_1, ..., e_n] with the first survivor (v itself)
    removed; the result spans v-perp and has n-1 columns.
    """
    n = len(v)
    cands = [np.asarray(v, dtype=float)] + [np.eye(n)[i] for i in range(n)]
    frame = metric_gram_schmidt(cands, g)
    return frame[:, 1:]


def orthonormal_columns(mat: np.ndarray, rel_tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis of the column space of ``mat`` (Euclidean), via SVD."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.shape[1] == 0:
        return mat.reshape(mat.shape[0], 0)
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        return np.zeros((mat.shape[0], 0))
    rank = int(np.sum(s > rel_tol * s[0]))
    return u[:, :rank]


def orthonormal_complement(basis: np.ndarray, dim: int) -> np.ndarray:
    """Euclidean orthogonal complement of span(basis columns) inside R^dim."""
    if basis.size == 0 or basis.shape[1] == 0:
        return np.eye(dim)
    u, s, _ = np.linalg.svd(basis, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * max(s[0], 1.0)))
    return u[:, rank:]


def subspace_intersection_dim(u_basis: np.ndarray, v_basis: np.ndarray,
                              tol: float = 1e-8) -> int:
    """dim(span U  intersect  span V) for orthonormal column bases U, V."""
    du = u_basis.shape[1] if u_basis.size else 0
    dv = v_basis.shape[1] if v_basis.size else 0
    if du == 0 or dv == 0:
        return 0
    # principal angles: cos = singular values of U^T V; intersection counts
    # the ones numerically equal to 1
    s = np.linalg.svd(u_basis.T @ v_basis, compute_uv=False)
    return int(np.sum(s > 1.0 - tol))


def rank_and_gap(singular_values: np.ndarray, rel_tol: float = 1e-6):
    """(rank, gap) of a singular spectrum under a relative threshold.

    ``gap`` is the ratio of the smallest kept value to the largest dropped
    one (inf when nothing is dropped); reports record it so dimension counts
    are auditable.
    """
    s = np.sort(np.asarray(singular_values, dtype=float))[::-1]
    if s.size == 0 or s[0] <= 0.0:
        return 0, float("inf")
    thr = rel_tol * s[0]
    rank = int(np.sum(s > thr))
    if rank == s.size:
        return rank, float("inf")
    dropped = s[rank]
    kept = s[rank - 1] if rank > 0 else s[0]
    return rank, float(kept / dropped) if dropped > 0 else float("inf")


def trace_on_subspace(op: np.ndarray, basis: np.ndarray) -> float:
    """Tr(P_W op P_W) for an orthonormal column basis of W."""
    if basis.size == 0 or basis.shape[1] == 0:
        return 0.0
    return float(np.trace(basis.T @ op @ basis))


def random_orthonormal_frame(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """Random k-frame in R^n, QR of a Gaussian matrix (Haar-ish, seeded)."""
    m = rng.standard_normal((n, k))
    q, r = np.linalg.qr(m)
    return q * np.sign(np.diag(r))
