"""Coordinate charts with metric data and curvature.

A :class:`MetricChart` is a single coordinate box together with a callable
returning the metric components.  Christoffel symbols come either from a
hand-coded analytic formula or from central finite differences of the
metric; the curvature operator ``R(., v)v`` likewise has analytic overrides
for every chart in the zoo, with a finite-difference fallback for generic
user charts.

Conventions
-----------
Curvature sign: ``R(X, Y)Z = D_X D_Y Z - D_Y D_X Z - D_[X,Y] Z``, so the
unit round sphere has ``sec = +1`` and the Jacobi operator ``R(., v)v`` on
the orthogonal complement of a unit ``v`` is ``kappa * Id`` in constant
curvature ``kappa``.

Intermediate Ricci curvature ``ric_k(v)`` is the minimum over orthonormal
k-frames ``{w_i}`` orthogonal to ``v`` of ``sum_i sec(v, w_i)``; by the
Ky Fan extremal principle this equals the sum of the k smallest eigenvalues
of the Jacobi operator matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .linalg import ky_fan_extremes, orthonormal_basis_perp


class DomainError(ValueError):
    """Point outside the chart's coordinate box."""


class DefinitenessError(ValueError):
    """Metric not symmetric positive definite at the requested point."""


class NormalizationError(ValueError):
    """Tangent vector violates a unit-norm precondition."""


class DegeneracyError(ValueError):
    """Inputs span a degenerate plane (|v ^ w| below tolerance)."""


class ParameterError(ValueError):
    """Parameter (k, r, ...) outside its admissible range."""


class PreconditionError(ValueError):
    """A geometric precondition (orthogonality, membership, ...) fails."""


@dataclass(frozen=True)
class MetricChart:
    """A coordinate chart with metric components and curvature access.

    Parameters
    ----------
    name : str
        Registry identifier.
    dim : int
        Dimension n of the chart.
    coords : tuple of str
        Coordinate labels, length n.
    domain : tuple of (lo, hi)
        Open coordinate box; all queries must stay strictly inside.
    metric : callable
        x -> (n, n) symmetric positive-definite array.
    christoffel_fn : callable, optional
        Analytic x -> (n, n, n) array ``Gamma[k, i, j]``; when absent the
        symbols are produced by central differences of ``metric``.
    curvature_fn : callable, optional
        Analytic ``(x, X, Y, Z) -> R(X, Y)Z`` in coordinate components;
        when absent the full curvature tensor is assembled from
        finite differences of the Christoffel symbols.
    fd_step : float
        Base step for metric finite differences (scaled per coordinate).
    to_embedding / from_embedding : callable, optional
        Adapters to an isometric embedding, used by closed-form test
        oracles and submanifold constructors; not required by any solver.
    """

    name: str
    dim: int
    coords: tuple
    domain: tuple
    metric: Callable[[np.ndarray], np.ndarray]
    christoffel_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    curvature_fn: Optional[Callable] = None
    fd_step: float = 1e-4
    to_embedding: Optional[Callable] = None
    from_embedding: Optional[Callable] = None
    constants: dict = field(default_factory=dict)

    @property
    def christoffel_mode(self) -> str:
        return "analytic" if self.christoffel_fn is not None else "finite-difference"

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return all(lo < xi < hi for xi, (lo, hi) in zip(x, self.domain))

    def require_inside(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DomainError(f"{self.name}: expected {self.dim} coordinates, got {x.shape}")
        if not self.contains(x):
            raise DomainError(f"{self.name}: point {x} outside chart domain")
        return x

    def metric_at(self, x) -> np.ndarray:
        g = np.asarray(self.metric(self.require_inside(x)), dtype=float)
        if not np.allclose(g, g.T, atol=1e-12 * max(1.0, abs(g).max())):
            raise DefinitenessError(f"{self.name}: metric not symmetric at {x}")
        return g

    def norm(self, x, v) -> float:
        g = self.metric_at(x)
        return float(np.sqrt(np.asarray(v) @ g @ np.asarray(v)))

    def inner(self, x, v, w) -> float:
        g = self.metric_at(x)
        return float(np.asarray(v) @ g @ np.asarray(w))


def _metric_partials(chart: MetricChart, x: np.ndarray, step: float) -> np.ndarray:
    """dg[l, i, j] = d g_ij / d x_l by central differences (per-coordinate scaled step)."""
    n = chart.dim
    dg = np.empty((n, n, n))
    for l in range(n):
        h = step * (1.0 + abs(x[l]))
        e = np.zeros(n)
        e[l] = h
        dg[l] = (chart.metric(x + e) - chart.metric(x - e)) / (2.0 * h)
    return dg


def _christoffel_nocheck(chart: MetricChart, x: np.ndarray, step: float | None = None) -> np.ndarray:
    if chart.christoffel_fn is not None and step is None:
        return np.asarray(chart.christoffel_fn(x), dtype=float)
    g = np.asarray(chart.metric(x), dtype=float)
    ginv = np.linalg.inv(g)
    dg = _metric_partials(chart, x, step if step is not None else chart.fd_step)
    # Gamma[k,i,j] = 1/2 ginv[k,l] (dg[i,j,l] + dg[j,i,l] - dg[l,i,j])
    term = np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg
    return 0.5 * np.einsum("kl,lij->kij", ginv, term)


def christoffel(chart: MetricChart, x, step: float | None = None) -> np.ndarray:
    """Christoffel symbols ``Gamma[k, i, j]`` of the Levi-Civita connection.

    Uses the chart's analytic formula when available, otherwise
    ``Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)`` with central
    finite differences of the metric.

    Raises
    ------
    DomainError
        If ``x`` is not strictly inside the chart domain.
    DefinitenessError
        If the metric fails to be positive definite at ``x``.
    """
    x = chart.require_inside(x)
    g = chart.metric_at(x)
    w = np.linalg.eigvalsh(g)
    if w[0] <= 0.0:
        raise DefinitenessError(f"{chart.name}: metric not positive definite at {x}")
    return _christoffel_nocheck(chart, x, step)


def _christoffel_partials(chart: MetricChart, x: np.ndarray, step: float) -> np.ndarray:
    """dGamma[l, k, i, j] = d Gamma^k_ij / d x_l by central differences."""
    n = chart.dim
    out = np.empty((n, n, n, n))
    for l in range(n):
        h = step * (1.0 + abs(x[l]))
        e = np.zeros(n)
        e[l] = h
        out[l] = (_christoffel_nocheck(chart, x + e) - _christoffel_nocheck(chart, x - e)) / (2.0 * h)
    return out


def _curvature_xyz_nocheck(chart: MetricChart, x: np.ndarray, X, Y, Z) -> np.ndarray:
    if chart.curvature_fn is not None:
        return np.asarray(chart.curvature_fn(x, X, Y, Z), dtype=float)
    gam = _christoffel_nocheck(chart, x)
    dgam = _christoffel_partials(chart, x, 10.0 * chart.fd_step)
    # R[l,k,i,j] contracted with X^i Y^j Z^k
    r = (np.einsum("iljk->lkij", dgam) - np.einsum("jlik->lkij", dgam)
         + np.einsum("lim,mjk->lkij", gam, gam)
         - np.einsum("ljm,mik->lkij", gam, gam))
    return np.einsum("lkij,i,j,k->l", r, X, Y, Z)


def curvature_xyz(chart: MetricChart, x, X, Y, Z) -> np.ndarray:
    """Coordinate components of ``R(X, Y)Z`` at ``x``.

    Analytic when the chart provides ``curvature_fn``; otherwise assembled
    from ``R^l_kij = d_i Gamma^l_jk - d_j Gamma^l_ik + Gamma^l_im Gamma^m_jk
    - Gamma^l_jm Gamma^m_ik`` with finite-difference Christoffel partials.
    """
    x = chart.require_inside(x)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    return _curvature_xyz_nocheck(chart, x, X, Y, Z)


@dataclass(frozen=True)
class CurvatureOperator:
    """The Jacobi operator ``R(., v)v`` on the orthogonal complement of v.

    ``matrix`` holds the symmetric (n-1) x (n-1) components in the
    orthonormal basis ``basis`` (columns, coordinate components) of v-perp.
    """

    basepoint: np.ndarray
    direction: np.ndarray
    basis: np.ndarray
    matrix: np.ndarray

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T))


def curvature_operator(chart: MetricChart, x, v, basis: np.ndarray | None = None) -> CurvatureOperator:
    """Matrix of ``w -> R(w, v)v`` on v-perp, in an orthonormal basis.

    Raises ``NormalizationError`` unless ``|v|_g = 1`` within 1e-8.  The
    matrix is symmetric (self-adjointness of the Jacobi operator) and its
    conjugacy class does not depend on the basis choice.
    """
    x = chart.require_inside(x)
    v = np.asarray(v, dtype=float)
    g = chart.metric_at(x)
    if abs(float(np.sqrt(v @ g @ v)) - 1.0) > 1e-8:
        raise NormalizationError(f"|v|_g = {np.sqrt(v @ g @ v):.3e}, expected 1")
    if basis is None:
        basis = orthonormal_basis_perp(v, g)
    m = basis.shape[1]
    mat = np.empty((m, m))
    for a in range(m):
        rv = curvature_xyz(chart, x, basis[:, a], v, v)
        mat[a, :] = basis.T @ g @ rv
    return CurvatureOperator(basepoint=x, direction=v, basis=basis, matrix=mat)


def sectional(chart: MetricChart, x, v, w) -> float:
    """Sectional curvature of span{v, w}.

    Symmetric in (v, w) and invariant under invertible change of basis of
    the plane.  Raises ``DegeneracyError`` when ``|v ^ w|`` is below
    tolerance.
    """
    x = chart.require_inside(x)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    g = chart.metric_at(x)
    vv = float(v @ g @ v)
    ww = float(w @ g @ w)
    vw = float(v @ g @ w)
    area2 = vv * ww - vw * vw
    if area2 <= 1e-14 * max(vv * ww, 1e-300):
        raise DegeneracyError("v, w span a degenerate plane")
    rv = curvature_xyz(chart, x, v, w, w)
    return float(v @ g @ rv) / area2


def ric_k(chart: MetricChart, x, v, k: int) -> float:
    """k-th intermediate Ricci curvature in the direction of unit v.

    Minimum over orthonormal k-frames in v-perp of the sectional curvature
    sum: the sum of the k smallest eigenvalues of the Jacobi operator.
    k = 1 recovers the minimal sectional curvature of planes containing v,
    k = n-1 the Ricci curvature Ric(v, v).
    """
    if not 1 <= k <= chart.dim - 1:
        raise ParameterError(f"k={k} out of range [1, {chart.dim - 1}]")
    op = curvature_operator(chart, x, v)
    lo, _ = ky_fan_extremes(op.matrix, k)
    return lo


def unit_vector(chart: MetricChart, x, v) -> np.ndarray:
    """Normalize v to unit g-length at x."""
    v = np.asarray(v, dtype=float)
    nrm = chart.norm(x, v)
    if nrm < 1e-14:
        raise NormalizationError("cannot normalize a zero vector")
    return v / nrm


def validate_chart(chart: MetricChart, rng: np.random.Generator, n_points: int = 20) -> None:
    """Sanity sweep used by tests: SPD metric, symmetric Christoffels,
    metric compatibility, and (analytic charts) FD agreement."""
    for _ in range(n_points):
        x = np.array([rng.uniform(lo + 0.15 * (hi - lo), hi - 0.15 * (hi - lo))
                      for lo, hi in chart.domain])
        g = chart.metric_at(x)
        w = np.linalg.eigvalsh(g)
        if w[0] <= 0:
            raise DefinitenessError(f"{chart.name}: metric not SPD at {x}")
        gam = christoffel(chart, x)
        if not np.allclose(gam, np.swapaxes(gam, 1, 2), atol=1e-8):
            raise AssertionError(f"{chart.name}: Christoffel not symmetric at {x}")
        # metric compatibility: d_l g_ij = Gamma^m_li g_mj + Gamma^m_lj g_im
        dg = _metric_partials(chart, x, chart.fd_step)
        rhs = np.einsum("mli,mj->lij", gam, g) + np.einsum("mlj,im->lij", gam, g)
        if not np.allclose(dg, rhs, atol=5e-6 * max(1.0, abs(g).max())):
            raise AssertionError(f"{chart.name}: metric compatibility fails at {x}")
