"""Morse index of geodesics: conjugate-point counting for the endpoint
case, the endmanifold formula, and a discretized second-variation oracle.

Endmanifold formula (Hingston-Kalish):

    index = Index A + (number of focal points in (0, b]) - dim(K_b(b) ^ TN~-perp)

where ``A(J1, J2) = <J1'(b) - S~ J1(b), J2(b)>`` on the fields of the
orthogonally-leaving family that arrive tangent to the far manifold, and
``K_b`` is the kernel at b.  The oracle discretizes the second variation of
energy over broken Jacobi fields and counts negative eigenvalues; equality
of the two on randomized scenarios is the main cross-check of the suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geodesic import GeodesicPath
from .jacobi import (LagrangianFamily, lagrangian_from_point,
                     lagrangian_from_submanifold, singular_times)
from .linalg import (orthonormal_columns, orthonormal_complement,
                     subspace_intersection_dim)
from .manifold import ParameterError, PreconditionError
from .submanifold import SubmanifoldPatch, shape_operator


class DegenerateLengthError(ValueError):
    """Geodesic length sits on a singular time; pass allow_degenerate=True."""


def index_endpoint(path: GeodesicPath, b: float | None = None,
                   allow_degenerate: bool = False) -> int:
    """Morse index of the geodesic with fixed endpoints.

    Equals the number of conjugate points to gamma(0) in the open interval
    (0, b), counted with multiplicity.  If b itself is conjugate within
    1e-3 the kernel makes the critical point degenerate; this raises
    ``DegenerateLengthError`` unless ``allow_degenerate`` is set (the count
    then covers strictly interior records only).
    """
    b = path.t_max if b is None else float(b)
    lam = lagrangian_from_point(path)
    recs = [r for r in singular_times(lam, (0.0, b)) if r.confidence == "clear"]
    at_end = [r for r in recs if abs(r.t - b) <= 1e-3]
    if at_end and not allow_degenerate:
        raise DegenerateLengthError(
            f"endpoint conjugate: singular time at t={at_end[0].t:.6g} "
            f"(kernel dim {at_end[0].multiplicity})")
    return int(sum(r.multiplicity for r in recs if b - r.t > 1e-3))


@dataclass
class AForm:
    """The endpoint bilinear form on fields arriving tangent to N~.

    ``coeffs`` are coefficient vectors (columns) of the subspace inside the
    orthogonally-leaving family; ``matrix`` the symmetric form; ``rank_gap``
    records the spectral gap at the extraction threshold.
    """

    coeffs: np.ndarray
    matrix: np.ndarray
    threshold: float
    rank_gap: float
    asymmetry: float

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    def index(self, zero_tol: float = 1e-8) -> int:
        if self.dim == 0:
            return 0
        w = np.linalg.eigvalsh(self.matrix)
        scale = max(float(abs(w).max()), 1.0)
        return int(np.sum(w < -zero_tol * scale))

    def kernel_dim(self, zero_tol: float = 1e-8) -> int:
        if self.dim == 0:
            return 0
        w = np.linalg.eigvalsh(self.matrix)
        scale = max(float(abs(w).max()), 1.0)
        return int(np.sum(np.abs(w) <= zero_tol * scale))


def _end_tangent_in_frame(path: GeodesicPath, patch: SubmanifoldPatch,
                          params_end=None):
    """Orthonormal frame components of T N~ at gamma(b); checks arrival
    orthogonality."""
    chart = path.chart
    xb = path.x[-1]
    vb = path.v[-1]
    g = chart.metric_at(xb)
    if params_end is None:
        params_end = patch.closest_parameter(xb)
    if float(np.linalg.norm(patch.embed_at(params_end) - xb)) > 1e-5:
        raise PreconditionError("path endpoint does not lie on the far patch")
    tan = patch.tangent_frame(params_end) if patch.dim_sub else np.zeros((chart.dim, 0))
    if tan.shape[1] and float(abs(tan.T @ g @ vb).max()) > 1e-6:
        raise PreconditionError("arrival velocity is not normal to the far patch")
    frame_b = path.frame[-1]
    t_frame = frame_b.T @ g @ tan if tan.shape[1] else np.zeros((chart.dim - 1, 0))
    return t_frame, params_end


def a_form(path: GeodesicPath, n_patch: SubmanifoldPatch,
           m_patch: SubmanifoldPatch, params_start=None, params_end=None,
           lam: LagrangianFamily | None = None,
           rel_threshold: float = 1e-6) -> AForm:
    """Assemble the A-form of the (N, N~) geodesic at b = path length.

    The subspace is extracted as the null space of the normal-projection of
    the family's value matrix at b; when that extraction is rank-ambiguous
    the recorded ``rank_gap`` exposes it.
    """
    if lam is None:
        lam = lagrangian_from_submanifold(path, n_patch, params=params_start)
    b = path.t_max
    m = path.dim - 1
    t_frame, params_end = _end_tangent_in_frame(path, m_patch, params_end)
    jm, jp = lam.blocks_at(b)

    if t_frame.shape[1] == m:
        coeffs = np.eye(m)
        gap = float("inf")
    else:
        proj_out = np.eye(m) - t_frame @ t_frame.T
        mat = proj_out @ jm
        u, s, wt = np.linalg.svd(mat)
        scale = max(float(s[0]), 1e-300)
        rank = int(np.sum(s > rel_threshold * scale))
        kept = s[rank - 1] / scale if rank else 1.0
        dropped = s[rank] / scale if rank < len(s) else 0.0
        gap = float(kept / dropped) if dropped > 0 else float("inf")
        coeffs = wt[rank:].T

    if coeffs.shape[1] == 0:
        return AForm(coeffs=coeffs, matrix=np.zeros((0, 0)),
                     threshold=rel_threshold, rank_gap=gap, asymmetry=0.0)

    jb = jm @ coeffs
    jpb = jp @ coeffs
    if m_patch.dim_sub:
        s_tilde = shape_operator(m_patch, params_end, path.v[-1]).matrix
        s_lift = t_frame @ s_tilde @ t_frame.T
    else:
        s_lift = np.zeros((m, m))
    amat = (jpb - s_lift @ jb).T @ jb
    asym = float(abs(amat - amat.T).max())
    amat = 0.5 * (amat + amat.T)
    return AForm(coeffs=coeffs, matrix=amat, threshold=rel_threshold,
                 rank_gap=gap, asymmetry=asym)


@dataclass
class IndexReport:
    """All terms of the endmanifold index formula, with thresholds.

    ``total`` = index_a + focal_count - correction.  ``identity`` holds the
    internal cross-check focal(0,b] - correction == focal(0,b) + m_T with
    ``m_T = dim Proj_{N~} K_b(b)``, asserted whenever b is focal.
    """

    index_a: int
    focal_count: int
    correction: int
    total: int
    focal_count_open: int
    m_t: int
    identity_holds: bool
    kernel_dim_b: int
    a_degenerate: int
    thresholds: dict = field(default_factory=dict)
    records: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "index_a": self.index_a,
            "focal_count": self.focal_count,
            "correction": self.correction,
            "total": self.total,
            "focal_count_open": self.focal_count_open,
            "m_t": self.m_t,
            "identity_holds": self.identity_holds,
            "kernel_dim_b": self.kernel_dim_b,
            "a_degenerate": self.a_degenerate,
            "thresholds": dict(self.thresholds),
            "focal_times": [float(r.t) for r in self.records],
            "focal_multiplicities": [int(r.multiplicity) for r in self.records],
        }


def index_endmanifold(path: GeodesicPath, n_patch: SubmanifoldPatch,
                      m_patch: SubmanifoldPatch, params_start=None,
                      params_end=None, allow_degenerate: bool = True,
                      rel_threshold: float = 1e-6) -> IndexReport:
    """Morse index of a geodesic orthogonal to N at 0 and N~ at b, by the
    endpoint-form + focal-count formula.

    When N~ is a point the correction term swallows the whole kernel at b
    and the total reduces to the focal count on the open interval.
    """
    b = path.t_max
    lam = lagrangian_from_submanifold(path, n_patch, params=params_start)
    recs = [r for r in singular_times(lam, (0.0, b)) if r.confidence == "clear"]
    ambiguous = [r for r in singular_times(lam, (0.0, b)) if r.confidence != "clear"]
    if ambiguous and not allow_degenerate:
        raise DegenerateLengthError("grazing singular time; rerun with allow_degenerate")

    interior = [r for r in recs if b - r.t > 1e-3]
    at_b = [r for r in recs if abs(r.t - b) <= 1e-3]
    focal_closed = int(sum(r.multiplicity for r in recs))
    focal_open = int(sum(r.multiplicity for r in interior))

    m = path.dim - 1
    t_frame, params_end = _end_tangent_in_frame(path, m_patch, params_end)
    tn_perp = orthonormal_complement(t_frame, m)

    if at_b:
        _, jp = lam.blocks_at(b)
        kb_b = orthonormal_columns(jp @ at_b[0].kernel)
    else:
        kb_b = np.zeros((m, 0))
    kernel_dim_b = kb_b.shape[1]
    correction = subspace_intersection_dim(kb_b, tn_perp)
    m_t = kernel_dim_b - correction

    af = a_form(path, n_patch, m_patch, params_start=params_start,
                params_end=params_end, lam=lam, rel_threshold=rel_threshold)
    total = af.index() + focal_closed - correction
    identity = (focal_closed - correction) == (focal_open + m_t)

    return IndexReport(
        index_a=af.index(),
        focal_count=focal_closed,
        correction=correction,
        total=int(total),
        focal_count_open=focal_open,
        m_t=m_t,
        identity_holds=bool(identity),
        kernel_dim_b=kernel_dim_b,
        a_degenerate=af.kernel_dim(),
        thresholds={"rank_rel_threshold": rel_threshold,
                    "a_rank_gap": af.rank_gap,
                    "a_asymmetry": af.asymmetry},
        records=recs,
    )


def _piece_propagators(path: GeodesicPath, breakpoints: np.ndarray):
    """Transfer blocks (C_i, S_i, Cp_i, Sp_i) of the Jacobi flow over each
    piece [t_i, t_{i+1}], from the global fundamental solution."""
    m = path.dim - 1
    phis = []
    for t in breakpoints:
        c, s, cp, sp = path.jacobi_blocks_at(float(t))
        phis.append(np.block([[c, s], [cp, sp]]))
    out = []
    for i in range(len(breakpoints) - 1):
        psi = phis[i + 1] @ np.linalg.inv(phis[i])
        out.append((psi[:m, :m], psi[:m, m:], psi[m:, :m], psi[m:, m:]))
    return out


def index_form_oracle(path: GeodesicPath, n_patch: Optional[SubmanifoldPatch],
                      m_patch: Optional[SubmanifoldPatch], m: int = 16,
                      params_start=None, params_end=None,
                      details: bool = False):
    """Second-variation index by discretization over broken Jacobi fields.

    The variation space is parametrized by node values (tangent to the end
    manifolds at the ends, free in between); on each subinterval the field
    is the unique Jacobi field matching the node values, and the quadratic
    form collects the transfer terms plus the shape-operator boundary
    terms.  Negative eigenvalues of the assembled symmetric matrix count
    the index.  ``m`` doubles automatically until every piece is free of
    conjugate pairs; pass points (or ``None``) for the endpoint case.
    """
    chart = path.chart
    b = path.t_max
    n_dim = path.dim
    md = n_dim - 1

    def end_data(patch, params, at_start: bool):
        if patch is None or patch.dim_sub == 0:
            return np.zeros((md, 0)), np.zeros((0, 0))
        idx = 0 if at_start else -1
        x = path.x[idx]
        g = chart.metric_at(x)
        if params is None:
            params = patch.closest_parameter(x)
        tan = patch.tangent_frame(params)
        t_frame = path.frame[idx].T @ g @ tan
        v_end = path.v[idx]
        s_mat = shape_operator(patch, params, v_end).matrix
        return t_frame, s_mat

    t0_frame, s0_mat = end_data(n_patch, params_start, True)
    tb_frame, sb_mat = end_data(m_patch, params_end, False)

    pieces = int(m)
    for _ in range(8):
        bps = np.linspace(0.0, b, pieces + 1)
        props = _piece_propagators(path, bps)
        ok = all(np.linalg.svd(s_i, compute_uv=False)[-1] >
                 1e-6 * max(np.linalg.svd(s_i, compute_uv=False)[0], 1e-300)
                 for (_, s_i, _, _) in props)
        if ok:
            break
        pieces *= 2
    else:
        raise ParameterError("could not find conjugate-free subdivision")

    nodes = pieces + 1
    big = np.zeros((nodes * md, nodes * md))

    def blk(i):
        return slice(i * md, (i + 1) * md)

    for i, (c_i, s_i, cp_i, sp_i) in enumerate(props):
        s_inv = np.linalg.inv(s_i)
        big[blk(i), blk(i)] += 0.5 * (s_inv @ c_i + (s_inv @ c_i).T)
        big[blk(i + 1), blk(i + 1)] += 0.5 * (sp_i @ s_inv + (sp_i @ s_inv).T)
        cross = (cp_i - sp_i @ s_inv @ c_i).T - s_inv
        big[blk(i), blk(i + 1)] += 0.5 * cross
        big[blk(i + 1), blk(i)] += 0.5 * cross.T

    # fold boundary nodes onto the end-manifold tangent coordinates
    sel = [t0_frame] + [np.eye(md)] * (nodes - 2) + [tb_frame]
    dims = [s.shape[1] for s in sel]
    z = np.zeros((nodes * md, sum(dims)))
    col = 0
    for i, s_i in enumerate(sel):
        z[blk(i), col:col + s_i.shape[1]] = s_i
        col += s_i.shape[1]
    q = z.T @ big @ z
    if dims[0]:
        q[:dims[0], :dims[0]] += s0_mat
    if dims[-1]:
        q[-dims[-1]:, -dims[-1]:] -= sb_mat
    q = 0.5 * (q + q.T)

    if q.shape[0] == 0:
        return (0, {"eigenvalues": np.zeros(0), "pieces": pieces,
                    "degenerate": 0}) if details else 0
    w = np.linalg.eigvalsh(q)
    scale = max(float(abs(w).max()), 1.0)
    idx = int(np.sum(w < -1e-8 * scale))
    degen = int(np.sum(np.abs(w) <= 1e-8 * scale))
    if details:
        return idx, {"eigenvalues": w, "pieces": pieces, "degenerate": degen}
    return idx
