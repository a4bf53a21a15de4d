"""Parametrized embedded submanifolds: frames, shape operators, trace
extremization, focal radius, and distance between two patches.

Shape-operator convention
-------------------------
``<S_v X, Y> = <D_X v^, Y> = -<II(X, Y), v>`` for any extension ``v^`` of
the unit normal.  This is the convention matched by the Riccati operator of
the orthogonally-leaving Jacobi family: the Riccati operator at t -> 0+
restricted to the tangent space *is* the shape operator, and in constant
curvature 1 a parallel shape eigenvalue ``lambda`` produces the normal
Jacobi solution ``cos(t) + lambda sin(t)``, hence a focal time where
``cot(t) = -lambda``.  (The eigenvalue *sets* on the zoo patches are
symmetric, so all magnitude-based quantities are convention-free.)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import least_squares

from .geodesic import GeodesicPath, integrate_geodesic
from .jacobi import lagrangian_from_submanifold, singular_times
from .linalg import ky_fan_extremes, metric_gram_schmidt
from .manifold import (MetricChart, ParameterError, PreconditionError,
                       _christoffel_nocheck)


@dataclass(frozen=True)
class SubmanifoldPatch:
    """An embedded parametrized patch N inside an ambient chart.

    ``embed`` maps an l-vector of parameters to chart coordinates; it must
    accept complex input (all zoo patches are trig/rational) so first
    derivatives can use complex-step differentiation, or an analytic
    ``d_embed`` may be supplied.
    """

    name: str
    ambient: MetricChart
    dim_sub: int
    embed: Callable[[np.ndarray], np.ndarray]
    param_box: tuple
    periodic: tuple
    d_embed: Optional[Callable] = None
    constants: dict = field(default_factory=dict)

    def embed_at(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.asarray(self.embed(s), dtype=float)

    def jacobian(self, s) -> np.ndarray:
        """(n, l) matrix of d embed / d params."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self.d_embed is not None:
            return np.asarray(self.d_embed(s), dtype=float)
        l = self.dim_sub
        n = self.ambient.dim
        jac = np.empty((n, l))
        h = 1e-20
        for i in range(l):
            sc = s.astype(complex)
            sc[i] += 1j * h
            jac[:, i] = np.imag(self.embed(sc)) / h
        return jac

    def second_derivatives(self, s) -> np.ndarray:
        """H[i, j, :] = d^2 embed / d s_i d s_j (central diff of jacobian)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        l = self.dim_sub
        n = self.ambient.dim
        h = 1e-5
        out = np.empty((l, l, n))
        for j in range(l):
            e = np.zeros(l)
            e[j] = h
            out[:, j, :] = ((self.jacobian(s + e) - self.jacobian(s - e)) / (2 * h)).T
        return 0.5 * (out + np.swapaxes(out, 0, 1))

    def tangent_frame(self, s) -> np.ndarray:
        """g-orthonormal basis of the tangent space, columns, deterministic."""
        if self.dim_sub == 0:
            return np.zeros((self.ambient.dim, 0))
        x = self.embed_at(s)
        g = self.ambient.metric_at(x)
        jac = self.jacobian(s)
        frame = metric_gram_schmidt(list(jac.T), g)
        if frame.shape[1] != self.dim_sub:
            raise PreconditionError(f"{self.name}: degenerate parametrization at {s}")
        return frame

    def normal_frame(self, s) -> np.ndarray:
        """g-orthonormal basis of the normal space, columns, deterministic."""
        x = self.embed_at(s)
        g = self.ambient.metric_at(x)
        n = self.ambient.dim
        tan = self.tangent_frame(s)
        cands = list(tan.T) + [np.eye(n)[i] for i in range(n)]
        full = metric_gram_schmidt(cands, g)
        return full[:, self.dim_sub:]

    def closest_parameter(self, x, s0=None, max_iter: int = 60) -> np.ndarray:
        """Gauss-Newton projection: parameters minimizing |embed(s) - x|.

        Starts from ``s0`` or a coarse grid argmin; periodic parameters are
        wrapped back into their box.
        """
        x = np.asarray(x, dtype=float)
        if self.dim_sub == 0:
            return np.zeros(0)
        if s0 is None:
            grids = [np.linspace(lo, hi, 9, endpoint=False) + (hi - lo) / 18.0
                     for lo, hi in self.param_box]
            mesh = np.meshgrid(*grids, indexing="ij")
            pts = np.stack([m.ravel() for m in mesh], axis=-1)
            dists = [float(np.linalg.norm(self.embed_at(p) - x)) for p in pts]
            s = pts[int(np.argmin(dists))].astype(float)
        else:
            s = np.atleast_1d(np.asarray(s0, dtype=float)).copy()
        for _ in range(max_iter):
            r = self.embed_at(s) - x
            if np.linalg.norm(r) < 1e-12:
                break
            jac = self.jacobian(s)
            try:
                delta = np.linalg.lstsq(jac, -r, rcond=None)[0]
            except np.linalg.LinAlgError:
                break
            step = 1.0
            base = float(np.linalg.norm(r))
            for _ in range(20):
                cand = s + step * delta
                if float(np.linalg.norm(self.embed_at(cand) - x)) < base:
                    s = cand
                    break
                step *= 0.5
            else:
                break
            if np.linalg.norm(step * delta) < 1e-14:
                break
        for i, ((lo, hi), per) in enumerate(zip(self.param_box, self.periodic)):
            if per:
                width = hi - lo
                s[i] = lo + np.mod(s[i] - lo, width)
        return s

    def contains(self, x, tol: float = 1e-6) -> bool:
        s = self.closest_parameter(x)
        return float(np.linalg.norm(self.embed_at(s) - x)) <= tol


def point_patch(chart: MetricChart, coords, name: str = "point") -> SubmanifoldPatch:
    """A zero-dimensional patch (single point)."""
    coords = np.asarray(coords, dtype=float)
    chart.require_inside(coords)
    return SubmanifoldPatch(name=name, ambient=chart, dim_sub=0,
                            embed=lambda s: coords.copy(),
                            param_box=(), periodic=())


@dataclass(frozen=True)
class ShapeOperator:
    """Shape operator S_v in an orthonormal tangent frame.

    ``tangent_basis`` holds the frame columns in chart coordinates;
    ``matrix`` the symmetric l x l components.
    """

    base_params: np.ndarray
    normal: np.ndarray
    tangent_basis: np.ndarray
    matrix: np.ndarray

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T))


def shape_operator(patch: SubmanifoldPatch, s, v) -> ShapeOperator:
    """Shape operator of the patch at parameters ``s`` for unit normal ``v``.

    Computed from the second fundamental form: ``<S_v X, Y> = -<II(X,Y), v>``
    with ``II`` assembled from embedding second derivatives and ambient
    Christoffel symbols.  Raises ``PreconditionError`` unless v is a unit
    normal within 1e-8.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    v = np.asarray(v, dtype=float)
    chart = patch.ambient
    x = patch.embed_at(s)
    g = chart.metric_at(x)
    if abs(float(np.sqrt(v @ g @ v)) - 1.0) > 1e-8:
        raise PreconditionError("normal vector is not unit length")
    l = patch.dim_sub
    if l == 0:
        return ShapeOperator(s, v, np.zeros((chart.dim, 0)), np.zeros((0, 0)))
    tan = patch.tangent_frame(s)
    if float(abs(tan.T @ g @ v).max()) > 1e-8:
        raise PreconditionError("v is not normal to the patch")

    jac = patch.jacobian(s)
    hess = patch.second_derivatives(s)
    gam = _christoffel_nocheck(chart, x)
    # ambient covariant second derivative of the embedding, coordinate comps
    cov = hess + np.einsum("kab,ai,bj->ijk", gam, jac, jac)
    ii_dot_v = np.einsum("ijk,kl,l->ij", cov, g, v)
    # change of basis: tangent frame columns = jac @ m
    m = np.linalg.lstsq(jac, tan, rcond=None)[0]
    mat = -m.T @ ii_dot_v @ m
    return ShapeOperator(s, v, tan, 0.5 * (mat + mat.T))


def trace_extremes(op, k: int) -> tuple[float, float]:
    """(min, max) of Tr(S|_W) over k-dimensional subspaces W.

    Accepts a :class:`ShapeOperator` or a bare symmetric matrix; the
    extremes are the Ky Fan sums of the k smallest/largest eigenvalues.
    """
    mat = op.matrix if isinstance(op, ShapeOperator) else np.asarray(op, dtype=float)
    if not 1 <= k <= mat.shape[0]:
        raise ParameterError(f"k={k} out of range [1, {mat.shape[0]}]")
    return ky_fan_extremes(mat, k)


def _param_grid(patch: SubmanifoldPatch, per_dim: int) -> list[np.ndarray]:
    if patch.dim_sub == 0:
        return [np.zeros(0)]
    axes = []
    for (lo, hi), per in zip(patch.param_box, patch.periodic):
        if per:
            axes.append(lo + (hi - lo) * (np.arange(per_dim) + 0.381966) / per_dim)
        else:
            axes.append(np.linspace(lo, hi, per_dim + 2)[1:-1])
    mesh = np.meshgrid(*axes, indexing="ij")
    return [np.array(p) for p in np.stack([m.ravel() for m in mesh], axis=-1)]


def _normal_directions(patch: SubmanifoldPatch, s, per_sphere: int) -> list[np.ndarray]:
    """Deterministic sample of the unit normal sphere at parameters s."""
    nor = patch.normal_frame(s)
    codim = nor.shape[1]
    if codim == 1:
        return [nor[:, 0], -nor[:, 0]]
    if codim == 2:
        angles = 2 * np.pi * (np.arange(per_sphere) + 0.381966) / per_sphere
        return [np.cos(a) * nor[:, 0] + np.sin(a) * nor[:, 1] for a in angles]
    # codim >= 3: golden-spiral points on the sphere of coefficients
    out = []
    npts = max(per_sphere, 2 * codim)
    for i in range(npts):
        z = 1 - 2 * (i + 0.5) / npts
        r = np.sqrt(max(0.0, 1 - z * z))
        phi = np.pi * (1 + 5 ** 0.5) * i
        if codim == 3:
            c = np.array([r * np.cos(phi), r * np.sin(phi), z])
        else:
            rng = np.random.default_rng(i)
            c = rng.standard_normal(codim)
            c /= np.linalg.norm(c)
        out.append(nor @ c)
    return out


def min_admissible_r(patch: SubmanifoldPatch, k: int,
                     per_dim: int = 6, per_sphere: int = 8):
    """Smallest r in [0, pi/2) with ``|Tr(S_v|_W)| <= k cot(pi/2 - r)`` over
    all sampled points, unit normals, and k-subspaces W.

    Equivalently ``r = arctan(max |Tr| / k)`` where the max is certified by
    the Ky Fan extremes at each sample.  Returns ``(r, max_trace)``.
    """
    if patch.dim_sub == 0:
        return 0.0, 0.0
    if not 1 <= k <= patch.dim_sub:
        raise ParameterError(f"k={k} out of range [1, {patch.dim_sub}]")
    worst = 0.0
    for s in _param_grid(patch, per_dim):
        for v in _normal_directions(patch, s, per_sphere):
            op = shape_operator(patch, s, v)
            lo, hi = trace_extremes(op, k)
            worst = max(worst, abs(lo), abs(hi))
    return float(np.arctan(worst / k)), float(worst)


@dataclass
class FocalRadiusResult:
    """Infimum over sampled unit normals of the first focal time.

    ``value`` is None when no focal point was found before ``horizon``
    (the ">= horizon" marker); ``per_sample`` lists
    (params, normal, first focal time or None).
    """

    value: Optional[float]
    horizon: float
    per_sample: list

    @property
    def is_bounded(self) -> bool:
        return self.value is not None

    def lower_bound(self) -> float:
        return self.value if self.value is not None else self.horizon


def focal_radius(patch: SubmanifoldPatch, per_dim: int = 5, per_sphere: int = 6,
                 horizon: float = float(np.pi), tol: float = 1e-8) -> FocalRadiusResult:
    """First focal time of the patch, minimized over a deterministic
    low-discrepancy sample of the unit normal bundle.

    Each sample integrates the normal geodesic to ``horizon`` and locates
    the first singular time of the orthogonally-leaving Jacobi family by
    bisection.  Returns the ">= horizon" marker when nothing focuses.
    """
    per_sample = []
    best = None
    for s in _param_grid(patch, per_dim):
        x = patch.embed_at(s)
        for v in _normal_directions(patch, s, per_sphere):
            path = integrate_geodesic(patch.ambient, x, v, horizon, tol=tol)
            lam = lagrangian_from_submanifold(path, patch, params=s)
            recs = [r for r in singular_times(lam, (0.0, path.t_max))
                    if r.confidence == "clear"]
            first = recs[0].t if recs else None
            per_sample.append((s, v, first))
            if first is not None and (best is None or first < best):
                best = first
    return FocalRadiusResult(value=best, horizon=horizon, per_sample=per_sample)


@dataclass
class DistanceResult:
    """Outcome of the two-patch distance search.

    ``value`` is the geodesic length of the best connector found; ``path``
    the connecting geodesic (None for intersecting patches);
    ``ortho_defect`` the worst end angle defect in radians; ``certified``
    whether the first-variation criterion holds within 1e-4.
    """

    value: float
    path: Optional[GeodesicPath]
    ortho_defect: float
    certified: bool
    message: str = ""


def _coarse_pair(n_patch: SubmanifoldPatch, m_patch: SubmanifoldPatch, per_dim: int):
    best = (None, None, np.inf)
    for s in _param_grid(n_patch, per_dim):
        xs = n_patch.embed_at(s)
        for u in _param_grid(m_patch, per_dim):
            d = float(np.linalg.norm(m_patch.embed_at(u) - xs))
            if d < best[2]:
                best = (s, u, d)
    return best


def distance(n_patch: SubmanifoldPatch, m_patch: SubmanifoldPatch,
             grid: int = 6, tol: float = 1e-8) -> DistanceResult:
    """Distance between two compact patches with the connecting geodesic.

    Coarse product-grid initialization on the chart-coordinate proxy,
    followed by damped least-squares on the first-variation system: the
    unknowns are the foot parameters on N and the normal vector there; the
    residuals ask the geodesic endpoint to project onto N~ and the arrival
    velocity to be normal to it.  Intersecting patches short-circuit to
    distance zero.
    """
    if n_patch.ambient is not m_patch.ambient:
        raise PreconditionError("patches live in different ambient charts")
    chart = n_patch.ambient

    s0, u0, proxy = _coarse_pair(n_patch, m_patch, grid)

    # intersection branch: polish the coordinate distance to zero
    if n_patch.dim_sub + m_patch.dim_sub > 0:
        def gap(z):
            s = z[:n_patch.dim_sub]
            u = z[n_patch.dim_sub:]
            return n_patch.embed_at(s) - m_patch.embed_at(u)
        z0 = np.concatenate([np.atleast_1d(s0) if n_patch.dim_sub else np.zeros(0),
                             np.atleast_1d(u0) if m_patch.dim_sub else np.zeros(0)])
        sol = least_squares(gap, z0, method="lm", xtol=1e-14, ftol=1e-14,
                            max_nfev=400)
        if float(np.linalg.norm(sol.fun)) < 1e-9:
            return DistanceResult(value=0.0, path=None, ortho_defect=0.0,
                                  certified=True, message="patches intersect")
    elif proxy < 1e-10:
        return DistanceResult(value=0.0, path=None, ortho_defect=0.0,
                              certified=True, message="patches intersect")

    nor0 = n_patch.normal_frame(s0)
    x0 = n_patch.embed_at(s0)
    g0 = chart.metric_at(x0)
    delta = m_patch.embed_at(u0) - x0
    t0_len = max(float(np.sqrt(delta @ g0 @ delta)), 1e-3)
    w0 = nor0.T @ g0 @ delta
    if float(np.linalg.norm(w0)) < 1e-10:
        w0 = np.zeros(nor0.shape[1])
        w0[0] = 1.0
    w0 = w0 / np.linalg.norm(w0) * t0_len

    l_n = n_patch.dim_sub
    state = {"u_guess": np.atleast_1d(u0) if m_patch.dim_sub else np.zeros(0)}

    def shoot(z):
        s = z[:l_n]
        w = z[l_n:]
        length = float(np.linalg.norm(w))
        x_start = n_patch.embed_at(s)
        if length < 1e-12:
            return x_start, None, length
        nu = (n_patch.normal_frame(s) @ w) / length
        path = integrate_geodesic(chart, x_start, nu, length, tol=1e-8,
                                  with_jacobi=False)
        return path.endpoint(), path, length

    def residual(z):
        y, path, length = shoot(z)
        u = m_patch.closest_parameter(y, s0=state["u_guess"])
        state["u_guess"] = u
        r1 = y - m_patch.embed_at(u)
        if m_patch.dim_sub and path is not None:
            g_end = chart.metric_at(np.clip(y, [lo + 1e-9 for lo, _ in chart.domain],
                                            [hi - 1e-9 for _, hi in chart.domain]))
            tanm = m_patch.tangent_frame(u)
            r2 = tanm.T @ g_end @ path.v[-1]
        else:
            r2 = np.zeros(0)
        return np.concatenate([r1, r2])

    z_init = np.concatenate([np.atleast_1d(s0) if l_n else np.zeros(0), w0])
    sol = least_squares(residual, z_init, method="lm", xtol=1e-13, ftol=1e-13,
                        max_nfev=600)
    z = sol.x
    y, path, length = shoot(z)

    # orthogonality certificate at both ends
    defect = 0.0
    if path is not None:
        g_end = chart.metric_at(y)
        u = m_patch.closest_parameter(y, s0=state["u_guess"])
        tanm = m_patch.tangent_frame(u)
        if tanm.shape[1]:
            defect = max(defect, float(np.abs(np.arcsin(
                np.clip(tanm.T @ g_end @ path.v[-1], -1, 1))).max()))
        gap_end = float(np.linalg.norm(y - m_patch.embed_at(u)))
    else:
        gap_end = float(np.linalg.norm(sol.fun))
    certified = bool(sol.success) and defect <= 1e-4 and gap_end <= 1e-6
    msg = "" if certified else "optimization stagnated; best-found value"
    return DistanceResult(value=length, path=path, ortho_defect=defect,
                          certified=certified, message=msg)
