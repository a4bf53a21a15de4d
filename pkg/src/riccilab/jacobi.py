"""Normal Jacobi fields, Lagrangian families, Riccati operators, and
singular-time (conjugate/focal point) detection.

Everything is expressed in the parallel orthonormal frame carried by a
:class:`~riccilab.geodesic.GeodesicPath`, where the Jacobi equation is the
linear system ``y'' + Rhat(t) y = 0`` and the omega-form of two fields is
the constant ``yp1 . y2 - y1 . yp2``.

A Lagrangian family is stored by its initial-data matrices ``(A, B)``:
the basis fields are the columns of ``J(t) = C(t) A + S(t) B``.  The
family is Lagrangian iff ``B^T A`` is symmetric, and spans n-1 independent
solutions iff ``[A; B]`` has full column rank.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .geodesic import GeodesicPath
from .linalg import orthonormal_columns, orthonormal_complement
from .manifold import PreconditionError


class IllDefinedError(ValueError):
    """Riccati evaluation requested outside its domain of definition."""


@dataclass
class JacobiField:
    """A normal Jacobi field in frame components.

    ``y0, yp0`` are the value and covariant derivative at t = 0; values at
    other times come from the path's fundamental blocks.
    """

    path: GeodesicPath
    y0: np.ndarray
    yp0: np.ndarray

    def at(self, t: float):
        c, s, cp, sp = self.path.jacobi_blocks_at(t)
        return c @ self.y0 + s @ self.yp0, cp @ self.y0 + sp @ self.yp0

    def values(self):
        """(y, yp) arrays over all path samples."""
        y = np.einsum("tab,b->ta", self.path.C, self.y0) + \
            np.einsum("tab,b->ta", self.path.S, self.yp0)
        yp = np.einsum("tab,b->ta", self.path.Cp, self.y0) + \
            np.einsum("tab,b->ta", self.path.Sp, self.yp0)
        return y, yp

    def coordinates(self, i: int) -> np.ndarray:
        """Coordinate components at sample i (frame -> chart basis)."""
        y, _ = self.at(float(self.path.t[i]))
        return self.path.frame[i] @ y

    def residual(self) -> float:
        """max |y'' + Rhat y| over interior samples, via the stored blocks.

        The second derivative is read off the fundamental solution itself
        (Cp', Sp' = -Rhat C, -Rhat S), so this checks the block algebra, not
        the integrator; integration accuracy is certified by the closed-form
        and variation oracles in the test-suite.
        """
        from .geodesic import _jacobi_matrix
        worst = 0.0
        for i in range(1, len(self.path.t) - 1, max(1, len(self.path.t) // 16)):
            t = float(self.path.t[i])
            y, _ = self.at(t)
            rhat = _jacobi_matrix(self.path.chart, self.path.x[i],
                                  self.path.v[i], self.path.frame[i])
            # FD second derivative of y in t (frame is parallel)
            h = self.path.step
            ym, _ = self.at(t - h)
            yp_, _ = self.at(t + h)
            ypp = (yp_ - 2 * y + ym) / h**2
            worst = max(worst, float(abs(ypp + rhat @ y).max()))
        return worst


def integrate_jacobi(path: GeodesicPath, y0, yp0) -> JacobiField:
    """Normal Jacobi field with initial frame components (y0, yp0).

    Linear in the initial data by construction (evaluated through the
    path's fundamental solution).
    """
    if path.C is None:
        raise ValueError("path was integrated with with_jacobi=False")
    y0 = np.asarray(y0, dtype=float)
    yp0 = np.asarray(yp0, dtype=float)
    m = path.dim - 1
    if y0.shape != (m,) or yp0.shape != (m,):
        raise ValueError(f"expected frame components of size {m}")
    return JacobiField(path=path, y0=y0, yp0=yp0)


def symplectic_form(j1: JacobiField, j2: JacobiField, t: float | None = None):
    """omega(J1, J2) = <J1', J2> - <J1, J2'> (constant along the geodesic).

    With ``t`` given returns the value there; otherwise returns the array
    over all samples (useful for constancy checks).
    """
    if t is not None:
        y1, yp1 = j1.at(t)
        y2, yp2 = j2.at(t)
        return float(yp1 @ y2 - y1 @ yp2)
    y1, yp1 = j1.values()
    y2, yp2 = j2.values()
    return np.einsum("ta,ta->t", yp1, y2) - np.einsum("ta,ta->t", y1, yp2)


@dataclass
class LagrangianFamily:
    """n-1 normal Jacobi fields with vanishing omega-form.

    ``A, B`` are the (n-1, n-1) initial value/derivative matrices; basis
    field j has frame components ``J(t) e_j`` with ``J(t) = C(t)A + S(t)B``.
    ``gram_mode`` tags the construction ("point" or "submanifold:<name>").
    """

    path: GeodesicPath
    A: np.ndarray
    B: np.ndarray
    gram_mode: str = "point"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = self.path.dim - 1
        omega = self.B.T @ self.A - self.A.T @ self.B
        if abs(omega).max() > 1e-8:
            raise PreconditionError("initial data is not Lagrangian (omega != 0)")
        stack = np.vstack([self.A, self.B])
        s = np.linalg.svd(stack, compute_uv=False)
        if s[-1] < 1e-10 * s[0]:
            raise PreconditionError("initial data does not span n-1 independent solutions")
        if self.A.shape != (m, m) or self.B.shape != (m, m):
            raise ValueError("A, B must be (n-1, n-1)")

    def blocks_at(self, t: float):
        c, s, cp, sp = self.path.jacobi_blocks_at(t)
        return c @ self.A + s @ self.B, cp @ self.A + sp @ self.B

    def values(self):
        """(J, Jp) arrays of shape (samples, n-1, n-1)."""
        jm = np.einsum("tab,bc->tac", self.path.C, self.A) + \
            np.einsum("tab,bc->tac", self.path.S, self.B)
        jp = np.einsum("tab,bc->tac", self.path.Cp, self.A) + \
            np.einsum("tab,bc->tac", self.path.Sp, self.B)
        return jm, jp

    def field(self, coeffs) -> JacobiField:
        coeffs = np.asarray(coeffs, dtype=float)
        return JacobiField(self.path, self.A @ coeffs, self.B @ coeffs)

    def basis(self):
        m = self.path.dim - 1
        return [self.field(np.eye(m)[:, j]) for j in range(m)]

    def omega_drift(self) -> float:
        """max over basis pairs and samples of |omega(t)| (should be ~0)."""
        jm, jp = self.values()
        om = np.einsum("tac,tad->tcd", jp, jm) - np.einsum("tac,tad->tcd", jm, jp)
        return float(abs(om).max())


def lagrangian_from_point(path: GeodesicPath) -> LagrangianFamily:
    """The Lagrangian of fields vanishing at t = 0 (conjugate-point family)."""
    m = path.dim - 1
    return LagrangianFamily(path, np.zeros((m, m)), np.eye(m), gram_mode="point")


def lagrangian_from_submanifold(path: GeodesicPath, patch,
                                params=None) -> LagrangianFamily:
    """Lagrangian of the fields of geodesic variations leaving ``patch``
    orthogonally: ``J(0)`` tangent to the patch and the tangential part of
    ``J'(0)`` equal to the shape operator applied to ``J(0)``; the normal
    part of ``J'(0)`` is free.

    As t -> 0+ the Riccati operator of this family restricted to the patch
    tangent space converges to the shape operator.

    Raises ``PreconditionError`` if the path does not start on the patch
    with velocity orthogonal to it.
    """
    from .submanifold import shape_operator

    chart = path.chart
    x0, v0 = path.x[0], path.v[0]
    if params is None:
        params = patch.closest_parameter(x0)
    emb = patch.embed_at(params)
    if float(np.linalg.norm(emb - x0)) > 1e-6:
        raise PreconditionError("path does not start on the patch")
    g = chart.metric_at(x0)
    tan = patch.tangent_frame(params)
    if tan.shape[1] and float(abs(tan.T @ g @ v0).max()) > 1e-8:
        raise PreconditionError("initial velocity is not normal to the patch")

    m = path.dim - 1
    frame0 = path.frame[0]
    if tan.shape[1]:
        p_mat = frame0.T @ g @ tan          # tangent basis in frame components
        s_op = shape_operator(patch, params, v0)
        s_mat = s_op.matrix
    else:
        p_mat = np.zeros((m, 0))
        s_mat = np.zeros((0, 0))
    q_mat = orthonormal_complement(p_mat, m)
    a = np.hstack([p_mat, np.zeros((m, q_mat.shape[1]))])
    b = np.hstack([p_mat @ s_mat, q_mat])
    return LagrangianFamily(path, a, b,
                            gram_mode=f"submanifold:{patch.name}",
                            meta={"params": np.asarray(params, dtype=float),
                                  "shape_matrix": s_mat,
                                  "tangent_in_frame": p_mat})


def riccati(lam: LagrangianFamily, t: float,
            subspace: np.ndarray | None = None,
            rel_threshold: float = 1e-6) -> np.ndarray:
    """Riccati operator ``S_t = J'(t) J(t)^{-1}`` of the family.

    At nonsingular t returns the full (n-1, n-1) matrix on the frame.  At
    singular t the operator is only defined on the orthogonal complement of
    the evaluated kernel; pass an orthonormal ``subspace`` (columns, frame
    components) contained there to get the compressed symmetric matrix.
    Raises ``IllDefinedError`` when the requested vectors leave the range
    of the evaluation map.
    """
    jm, jp = lam.blocks_at(t)
    s = np.linalg.svd(jm, compute_uv=False)
    nonsingular = s[-1] > rel_threshold * s[0]
    if subspace is None:
        if not nonsingular:
            raise IllDefinedError(
                f"family singular at t={t:.6g} (sigma_min/sigma_max = {s[-1]/s[0]:.2e}); "
                "pass a subspace of the evaluated-kernel complement")
        return jp @ np.linalg.inv(jm)
    u = np.asarray(subspace, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    coeffs, residuals, *_ = np.linalg.lstsq(jm, u, rcond=None)
    defect = abs(jm @ coeffs - u).max()
    if defect > 1e-5:
        raise IllDefinedError(
            f"requested vectors leave range(J(t)) at t={t:.6g} (defect {defect:.2e})")
    return u.T @ (jp @ coeffs)


def evaluate_subspace(lam: LagrangianFamily, coeffs: np.ndarray, t: float,
                      rel_tol: float = 1e-6):
    """Evaluation of a subspace V of the family at time t:

        V(t) = {J(t) : J in V}  (+)  {J'(t) : J in V, J(t) = 0},

    returned as an orthonormal basis in frame components, together with a
    flag telling whether the derivative summand was needed (it vanishes
    for almost every t).
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if coeffs.shape[0] != lam.path.dim - 1:
        coeffs = coeffs.T
    if coeffs.shape[1] == 0:
        return np.zeros((lam.path.dim - 1, 0)), False
    jm, jp = lam.blocks_at(t)
    m_v = jm @ coeffs
    u, s, wt = np.linalg.svd(m_v, full_matrices=False)
    rank = int(np.sum(s > rel_tol * max(s[0], 1e-300))) if s.size else 0
    basis = u[:, :rank]
    used_derivative = False
    if rank < coeffs.shape[1]:
        kernel_coeffs = coeffs @ wt[rank:].T
        extra = jp @ kernel_coeffs
        if extra.size and abs(extra).max() > 1e-12:
            used_derivative = True
            basis = orthonormal_columns(np.hstack([basis, extra]))
    return basis, used_derivative


@dataclass
class SingularTimeRecord:
    """A time where some nontrivial field of the family vanishes.

    ``kernel`` holds coefficient vectors (columns) of the vanishing basis
    combinations; ``multiplicity = kernel.shape[1]``.  ``confidence`` is
    "clear" for unambiguous zeros and "grazing" when the refined smallest
    singular value sits within a decade of the detection threshold.
    """

    t: float
    multiplicity: int
    kernel: np.ndarray
    sigma: np.ndarray
    threshold: float
    gap: float
    confidence: str = "clear"


def _sigma_min(lam: LagrangianFamily, t: float) -> float:
    jm, _ = lam.blocks_at(t)
    return float(np.linalg.svd(jm, compute_uv=False)[-1])


def _det(lam: LagrangianFamily, t: float) -> float:
    jm, _ = lam.blocks_at(t)
    return float(np.linalg.det(jm))


def singular_times(lam: LagrangianFamily, interval=None,
                   rel_threshold: float = 1e-6,
                   refine_xtol: float = 1e-10) -> list[SingularTimeRecord]:
    """Zeros of ``det J(t)`` on the interval, with multiplicities.

    Detection: sign changes of the determinant on the sample grid plus
    interior local minima of the smallest singular value; each candidate is
    refined (Brent bisection for sign changes, bounded scalar minimization
    otherwise) and accepted when the smallest singular value falls below
    ``rel_threshold`` times the largest.  Near-grazing minima within a
    decade of the threshold are reported with ``confidence="grazing"``.
    The interval is half-open ``(lo, hi]``; a zero at the right endpoint is
    reported.
    """
    path = lam.path
    lo, hi = interval if interval is not None else (0.0, path.t_max)
    hi = min(hi, path.t_max)
    ts = path.t
    sel = (ts > lo + 1e-12) & (ts <= hi + 1e-12)
    idx = np.where(sel)[0]
    if len(idx) < 3:
        return []

    jm_all, _ = lam.values()
    sig = np.array([np.linalg.svd(jm_all[i], compute_uv=False) for i in idx])
    sig_min = sig[:, -1]
    sig_max_global = float(sig[:, 0].max())
    dets = np.array([np.linalg.det(jm_all[i]) for i in idx])

    brackets = []
    for j in range(len(idx) - 1):
        if dets[j] == 0.0:
            brackets.append(("zero", float(ts[idx[j]])))
        elif dets[j] * dets[j + 1] < 0:
            brackets.append(("sign", float(ts[idx[j]]), float(ts[idx[j + 1]])))
    for j in range(1, len(idx) - 1):
        if sig_min[j] <= sig_min[j - 1] and sig_min[j] <= sig_min[j + 1] \
                and sig_min[j] < 0.25 * sig_max_global:
            brackets.append(("min", float(ts[idx[j - 1]]), float(ts[idx[j + 1]])))
    # right-boundary zero (half-open interval includes hi)
    if len(idx) >= 2 and sig_min[-1] < sig_min[-2] and sig_min[-1] < 0.05 * sig_max_global:
        brackets.append(("min", float(ts[idx[-2]]), hi))

    found: list[SingularTimeRecord] = []
    for br in brackets:
        if br[0] == "zero":
            t_star = br[1]
        elif br[0] == "sign":
            t_star = float(brentq(lambda t: _det(lam, t), br[1], br[2],
                                  xtol=refine_xtol, rtol=8.9e-16))
        else:
            res = minimize_scalar(lambda t: _sigma_min(lam, t),
                                  bounds=(br[1], br[2]), method="bounded",
                                  options={"xatol": refine_xtol})
            t_star = float(res.x)
        t_star = min(max(t_star, lo + 1e-12), hi)
        jm, _ = lam.blocks_at(t_star)
        u, s, wt = np.linalg.svd(jm)
        # scale against the family's size over the whole window, so zeros of
        # full multiplicity (J(t*) = 0 entirely) are still resolved
        thr = rel_threshold * max(sig_max_global, 1e-300)
        mult = int(np.sum(s < thr))
        grazing = int(np.sum((s >= thr) & (s < 10 * thr)))
        if mult == 0 and grazing == 0:
            continue
        if mult == 0:
            confidence, mult_eff = "grazing", grazing
            kernel = wt[len(s) - grazing:].T
        else:
            confidence = "clear" if grazing == 0 else "grazing"
            mult_eff = mult
            kernel = wt[len(s) - mult:].T
        above = s[s >= thr]
        gap = float(above.min() / thr) if above.size else float("inf")
        rec = SingularTimeRecord(t=t_star, multiplicity=mult_eff, kernel=kernel,
                                 sigma=s, threshold=thr, gap=gap,
                                 confidence=confidence)
        if all(abs(rec.t - other.t) > 1e-7 for other in found):
            found.append(rec)
    found.sort(key=lambda r: r.t)
    return found


def full_index_space(lam: LagrangianFamily, interval=None,
                     rel_threshold: float = 1e-6):
    """Span of all basis combinations vanishing somewhere in the interval.

    Returns ``(basis, records)`` where ``basis`` is an orthonormal set of
    coefficient vectors (columns) and ``records`` the singular times found.
    """
    records = singular_times(lam, interval, rel_threshold=rel_threshold)
    clear = [r for r in records if r.confidence == "clear"]
    if not clear:
        m = lam.path.dim - 1
        return np.zeros((m, 0)), records
    stacked = np.hstack([r.kernel for r in clear])
    return orthonormal_columns(stacked), records
