"""Unit-speed geodesics, parallel frames, and exponential maps.

A single fixed-step Runge-Kutta-4 pass integrates, jointly:

* the geodesic equation ``x'' + Gamma(x)[x', x'] = 0``,
* a parallel orthonormal frame of the normal bundle of the geodesic,
* the fundamental solution of the normal Jacobi equation in that frame,

so that every downstream object (Jacobi fields, Lagrangian families,
Riccati operators, index forms) evaluates on exactly the same grid.  The
fixed step makes two runs with identical inputs byte-identical.

The fundamental blocks ``C, S`` solve ``Y'' = -Rhat(t) Y`` with
``C(0) = I, C'(0) = 0`` and ``S(0) = 0, S'(0) = I``, where
``Rhat_ab = <R(E_a, v)v, E_b>`` is the Jacobi operator in the frame.  Any
normal Jacobi field with frame components ``(y0, yp0)`` at time 0 is then
``y(t) = C(t) y0 + S(t) yp0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import orthonormal_basis_perp
from .manifold import (
    MetricChart,
    NormalizationError,
    PreconditionError,
    _christoffel_nocheck,
    _curvature_xyz_nocheck,
)


def _jacobi_matrix(chart: MetricChart, x, v, frame) -> np.ndarray:
    """Symmetric frame matrix of the Jacobi operator R(., v)v."""
    g = np.asarray(chart.metric(x), dtype=float)
    m = frame.shape[1]
    rhat = np.empty((m, m))
    for a in range(m):
        rv = _curvature_xyz_nocheck(chart, x, frame[:, a], v, v)
        rhat[a, :] = frame.T @ (g @ rv)
    return 0.5 * (rhat + rhat.T)


def _rhs(chart: MetricChart, state, with_jacobi: bool):
    x, v, frame, c, s, cp, sp = state
    gam = _christoffel_nocheck(chart, x)
    acc = -np.einsum("kij,i,j->k", gam, v, v)
    dframe = -np.einsum("kij,i,jm->km", gam, v, frame)
    if with_jacobi:
        rhat = _jacobi_matrix(chart, x, v, frame)
        return (v, acc, dframe, cp, sp, -rhat @ c, -rhat @ s)
    return (v, acc, dframe, None, None, None, None)


def _rk4_step(chart: MetricChart, state, h: float, with_jacobi: bool):
    def add(st, k, f):
        if not with_jacobi:
            return (st[0] + f * k[0], st[1] + f * k[1], st[2] + f * k[2],
                    st[3], st[4], st[5], st[6])
        return tuple(a + f * b for a, b in zip(st, k))

    k1 = _rhs(chart, state, with_jacobi)
    k2 = _rhs(chart, add(state, k1, 0.5 * h), with_jacobi)
    k3 = _rhs(chart, add(state, k2, 0.5 * h), with_jacobi)
    k4 = _rhs(chart, add(state, k3, h), with_jacobi)
    if with_jacobi:
        return tuple(a + (h / 6.0) * (p + 2 * q + 2 * r + w)
                     for a, p, q, r, w in zip(state, k1, k2, k3, k4))
    out = [state[i] + (h / 6.0) * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])
           for i in range(3)]
    return (out[0], out[1], out[2], state[3], state[4], state[5], state[6])


@dataclass
class GeodesicPath:
    """Discretized unit-speed geodesic with parallel normal frame.

    Attributes
    ----------
    t : (m,) array of arclength values (t[0] = 0, uniform spacing ``step``).
    x, v : (m, n) arrays of positions and unit velocities.
    frame : (m, n, n-1) parallel orthonormal frames of v-perp (columns).
    C, S, Cp, Sp : (m, n-1, n-1) fundamental Jacobi blocks and their
        derivatives (``None`` when integrated with ``with_jacobi=False``).
    left_domain_at : float or None
        When the trajectory exits the chart box the path is truncated and
        this records the last valid arclength.
    """

    chart: MetricChart
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    frame: np.ndarray
    C: Optional[np.ndarray]
    S: Optional[np.ndarray]
    Cp: Optional[np.ndarray]
    Sp: Optional[np.ndarray]
    tol: float
    step: float
    left_domain_at: Optional[float] = None

    @property
    def t_max(self) -> float:
        return float(self.t[-1])

    @property
    def dim(self) -> int:
        return self.chart.dim

    def _index_below(self, t: float) -> int:
        i = int(np.searchsorted(self.t, t + 1e-13, side="right") - 1)
        return min(max(i, 0), len(self.t) - 1)

    def state_at(self, t: float):
        """Full state (x, v, frame, C, S, Cp, Sp) at arbitrary t in range.

        Restarts the integrator from the nearest stored sample below t, so
        off-grid values carry the same order of accuracy as the grid.
        """
        if t < -1e-12 or t > self.t_max + 1e-12:
            raise ValueError(f"t={t} outside path range [0, {self.t_max}]")
        i = self._index_below(t)
        dt = t - self.t[i]
        state = (self.x[i].copy(), self.v[i].copy(), self.frame[i].copy(),
                 None if self.C is None else self.C[i].copy(),
                 None if self.S is None else self.S[i].copy(),
                 None if self.Cp is None else self.Cp[i].copy(),
                 None if self.Sp is None else self.Sp[i].copy())
        if abs(dt) < 1e-13:
            return state
        nsub = max(1, int(np.ceil(dt / self.step - 1e-12)))
        h = dt / nsub
        wj = self.C is not None
        for _ in range(nsub):
            state = _rk4_step(self.chart, state, h, wj)
        return state

    def jacobi_blocks_at(self, t: float):
        """(C, S, Cp, Sp) at t (grid lookup; off-grid via state_at)."""
        i = self._index_below(t)
        if abs(t - self.t[i]) < 1e-13:
            return self.C[i], self.S[i], self.Cp[i], self.Sp[i]
        st = self.state_at(t)
        return st[3], st[4], st[5], st[6]

    def position_at(self, t: float) -> np.ndarray:
        return self.state_at(t)[0]

    def velocity_at(self, t: float) -> np.ndarray:
        return self.state_at(t)[1]

    def frame_at(self, t: float) -> np.ndarray:
        return self.state_at(t)[2]

    def endpoint(self) -> np.ndarray:
        return self.x[-1].copy()

    def speed_drift(self) -> float:
        """max over samples of | |v|_g - 1 |."""
        worst = 0.0
        for xi, vi in zip(self.x, self.v):
            g = self.chart.metric(xi)
            worst = max(worst, abs(float(np.sqrt(vi @ g @ vi)) - 1.0))
        return worst

    def frame_defect(self) -> float:
        """max deviation of the frame Gram matrix from identity and of
        <E_a, v> from 0 (metric-compatibility proxy for transport error)."""
        worst = 0.0
        for xi, vi, fi in zip(self.x, self.v, self.frame):
            g = self.chart.metric(xi)
            gram = fi.T @ g @ fi
            worst = max(worst, float(abs(gram - np.eye(fi.shape[1])).max()))
            worst = max(worst, float(abs(fi.T @ g @ vi).max()))
        return worst

    def endpoint_error(self) -> float:
        """Richardson estimate: re-integrate at half step, compare endpoints."""
        fine = integrate_geodesic(self.chart, self.x[0], self.v[0], self.t_max,
                                  tol=self.tol, with_jacobi=False,
                                  _step_override=self.step / 2.0)
        g = self.chart.metric(self.x[-1])
        d = self.x[-1] - fine.x[-1]
        return float(np.sqrt(d @ g @ d))

    def energy(self) -> float:
        """Energy 1/2 int |v|^2 dt by the trapezoid rule on the samples."""
        sq = np.array([vi @ self.chart.metric(xi) @ vi
                       for xi, vi in zip(self.x, self.v)])
        return 0.5 * float(np.trapezoid(sq, self.t))

    def to_csv(self, filename: str) -> None:
        cols = ["t"] + [f"x_{c}" for c in self.chart.coords] + \
            [f"v_{c}" for c in self.chart.coords]
        with open(filename, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for ti, xi, vi in zip(self.t, self.x, self.v):
                row = [f"{ti:.12g}"] + [f"{val:.12g}" for val in xi] + \
                    [f"{val:.12g}" for val in vi]
                fh.write(",".join(row) + "\n")


def _initial_frame(chart: MetricChart, x0: np.ndarray, v0: np.ndarray) -> np.ndarray:
    g = chart.metric_at(x0)
    return orthonormal_basis_perp(v0, g)


def integrate_geodesic(chart: MetricChart, x0, v0, length: float,
                       tol: float = 1e-8, with_jacobi: bool = True,
                       _step_override: float | None = None) -> GeodesicPath:
    """Integrate the unit-speed geodesic from (x0, v0) for the given length.

    Fixed-step classical RK4; the step is ``min(0.01, tol**(1/4))`` so the
    sample grid is dense enough for all downstream sign-change detection.
    If the trajectory leaves the chart box the path truncates and records
    ``left_domain_at`` (the last valid arclength).

    Raises ``NormalizationError`` unless |v0|_g = 1 within 1e-8, and
    ``DomainError`` if x0 is not strictly inside the chart.
    """
    x0 = chart.require_inside(x0)
    v0 = np.asarray(v0, dtype=float)
    g0 = chart.metric_at(x0)
    nrm = float(np.sqrt(v0 @ g0 @ v0))
    if abs(nrm - 1.0) > 1e-8:
        raise NormalizationError(f"|v0|_g = {nrm:.3e}, expected 1")
    if length <= 0:
        raise ValueError("length must be positive")

    step = _step_override if _step_override is not None else min(0.01, tol ** 0.25)
    nsteps = max(1, int(np.ceil(length / step - 1e-12)))
    h = length / nsteps

    n = chart.dim
    m = n - 1
    frame0 = _initial_frame(chart, x0, v0)
    if frame0.shape[1] != m:
        raise PreconditionError("could not build a full orthonormal frame of v-perp")

    ident = np.eye(m)
    zero = np.zeros((m, m))
    state = (x0.copy(), v0.copy(), frame0,
             ident.copy() if with_jacobi else None,
             zero.copy() if with_jacobi else None,
             zero.copy() if with_jacobi else None,
             ident.copy() if with_jacobi else None)

    ts = [0.0]
    xs = [state[0].copy()]
    vs = [state[1].copy()]
    frames = [state[2].copy()]
    cs, ss, cps, sps = [], [], [], []
    if with_jacobi:
        cs.append(state[3].copy())
        ss.append(state[4].copy())
        cps.append(state[5].copy())
        sps.append(state[6].copy())

    left_at = None
    for i in range(nsteps):
        try:
            new = _rk4_step(chart, state, h, with_jacobi)
        except (FloatingPointError, np.linalg.LinAlgError):
            left_at = ts[-1]
            break
        if not np.all(np.isfinite(new[0])) or not chart.contains(new[0]):
            left_at = ts[-1]
            break
        state = new
        ts.append((i + 1) * h)
        xs.append(state[0].copy())
        vs.append(state[1].copy())
        frames.append(state[2].copy())
        if with_jacobi:
            cs.append(state[3].copy())
            ss.append(state[4].copy())
            cps.append(state[5].copy())
            sps.append(state[6].copy())

    return GeodesicPath(
        chart=chart,
        t=np.asarray(ts),
        x=np.asarray(xs),
        v=np.asarray(vs),
        frame=np.asarray(frames),
        C=np.asarray(cs) if with_jacobi else None,
        S=np.asarray(ss) if with_jacobi else None,
        Cp=np.asarray(cps) if with_jacobi else None,
        Sp=np.asarray(sps) if with_jacobi else None,
        tol=tol,
        step=h,
        left_domain_at=left_at,
    )


def parallel_transport(path: GeodesicPath, w0) -> np.ndarray:
    """Parallel-transport w0 along the path; returns (m, n) samples.

    Re-runs the same RK4 scheme on the joint system (x, v, w) from the
    path's initial data, so the transported field is consistent with the
    stored samples to machine precision.
    """
    chart = path.chart
    w = np.asarray(w0, dtype=float).copy()
    x = path.x[0].copy()
    v = path.v[0].copy()
    out = [w.copy()]

    def rhs(xx, vv, ww):
        gam = _christoffel_nocheck(chart, xx)
        return (vv,
                -np.einsum("kij,i,j->k", gam, vv, vv),
                -np.einsum("kij,i,j->k", gam, vv, ww))

    h = path.step
    for _ in range(len(path.t) - 1):
        k1 = rhs(x, v, w)
        k2 = rhs(x + 0.5 * h * k1[0], v + 0.5 * h * k1[1], w + 0.5 * h * k1[2])
        k3 = rhs(x + 0.5 * h * k2[0], v + 0.5 * h * k2[1], w + 0.5 * h * k2[2])
        k4 = rhs(x + h * k3[0], v + h * k3[1], w + h * k3[2])
        x = x + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v = v + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        w = w + (h / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        out.append(w.copy())
    return np.asarray(out)


def exp_map(chart: MetricChart, x0, w, tol: float = 1e-8) -> np.ndarray:
    """exp_x0(w): follow the geodesic with initial velocity w for time 1."""
    x0 = chart.require_inside(x0)
    w = np.asarray(w, dtype=float)
    g = chart.metric_at(x0)
    length = float(np.sqrt(w @ g @ w))
    if length < 1e-14:
        return x0.copy()
    path = integrate_geodesic(chart, x0, w / length, length, tol=tol,
                              with_jacobi=False)
    if path.left_domain_at is not None:
        from .manifold import DomainError
        raise DomainError(f"exp_map left chart domain at t={path.left_domain_at:.6g}")
    return path.endpoint()


def exp_normal(patch, q, nu, t: float, tol: float = 1e-8) -> np.ndarray:
    """Normal exponential map of a submanifold patch.

    ``q`` is a point of the patch (chart coordinates), ``nu`` a unit normal
    there; returns the geodesic point at arclength t.  Raises
    ``PreconditionError`` if nu fails to be orthogonal to the tangent space
    within 1e-8.
    """
    chart = patch.ambient
    q = np.asarray(q, dtype=float)
    nu = np.asarray(nu, dtype=float)
    g = chart.metric_at(q)
    nrm = float(np.sqrt(nu @ g @ nu))
    if abs(nrm - 1.0) > 1e-8:
        raise NormalizationError(f"|nu|_g = {nrm:.3e}, expected 1")
    s = patch.closest_parameter(q)
    tan = patch.tangent_frame(s)
    if tan.shape[1] and float(abs(tan.T @ g @ nu).max()) > 1e-8:
        raise PreconditionError("nu is not orthogonal to the patch tangent space")
    if t == 0.0:
        return q.copy()
    sign = 1.0 if t > 0 else -1.0
    path = integrate_geodesic(chart, q, sign * nu, abs(t), tol=tol,
                              with_jacobi=False)
    return path.endpoint()


def polyline_length(chart: MetricChart, xs) -> float:
    """g-length of a sampled curve: trapezoid with midpoint metric."""
    xs = np.asarray(xs, dtype=float)
    total = 0.0
    for a, b in zip(xs[:-1], xs[1:]):
        mid = 0.5 * (a + b)
        g = chart.metric(mid)
        d = b - a
        total += float(np.sqrt(d @ g @ d))
    return total
