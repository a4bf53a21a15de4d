"""The model-space zoo: charts and submanifold patches with closed-form
metric, Christoffel, and curvature data.

Charts
------
``flat_rn`` / ``flat_r2``
    Euclidean space (n = 3 resp. 2).
``s2_polar``
    Unit 2-sphere in colatitude coordinates (theta, phi), metric
    diag(1, sin^2 theta).  Useful for pole-truncation scenarios.
``s3_unit``
    Unit 3-sphere, stereographic coordinates from the embedding point
    (0, 0, 0, -1): g = 4 delta / (1 + |u|^2)^2.  Covers the sphere minus
    one point, so the Clifford torus, the coordinate circle {(z, 0)} and
    the equatorial 2-spheres all sit compactly inside.
``s2x2_k3``
    Product of two curvature-3 2-spheres, block-stereographic coordinates:
    each block (4/3) delta / (1 + |u|^2)^2.  Ricci tensor is identically 3;
    conjugate radius pi/sqrt(3).
``cp2_fs``
    Complex projective plane, affine Fubini-Study chart normalized to
    sec in [1, 4] (holomorphic sectional curvature 4); real coordinates
    (x1, y1, x2, y2).  Christoffels by finite differences of the analytic
    metric, curvature via the constant-holomorphic-curvature closed form.

Patches (all in ``s3_unit`` unless noted)
-----------------------------------------
``clifford_torus``     |z1| = |z2| = 1/sqrt(2): shape eigenvalues {+1, -1},
                       focal radius pi/4.
``coord_circle``       {(z1, 0)}: totally geodesic great circle, focal
                       radius pi/2.
``equator_s2_in_s3``   great 2-sphere {p4 = 0} (the unit sphere |u| = 1).
``plane_sphere_s3``    great 2-sphere {p1 = 0}, parametrized so the chart
                       center u = 0 is an interior point.
``tilted_equator_s3``  great 2-sphere in general position (angle 0.6).
``factor_sphere_s2x2`` {point} x S^2_3 inside the product chart.
``flat_line``          the line {x = 0} in flat_r2; universal-cover model
                       of a flat-cylinder cross circle (no focal points).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .manifold import MetricChart
from .submanifold import SubmanifoldPatch, point_patch


# ---------------------------------------------------------------------------
# curvature closed forms


def _constant_curvature_fn(metric, kappa):
    def rf(x, X, Y, Z):
        g = metric(x)
        return kappa * ((Y @ g @ Z) * X - (X @ g @ Z) * Y)
    return rf


def _block_constant_curvature_fn(blocks):
    """blocks: list of (slice, kappa, block_metric). Product curvature has
    no mixed components; each block contributes its own constant form."""
    def rf(x, X, Y, Z):
        out = np.zeros_like(np.asarray(X, dtype=float))
        for sl, kappa, bm in blocks:
            g = bm(x[sl])
            xb, yb, zb = X[sl], Y[sl], Z[sl]
            out[sl] = kappa * ((yb @ g @ zb) * xb - (xb @ g @ zb) * yb)
        return out
    return rf


# ---------------------------------------------------------------------------
# flat charts


def _flat(n: int, name: str, half: float = 50.0) -> MetricChart:
    eye = np.eye(n)
    return MetricChart(
        name=name, dim=n,
        coords=tuple(f"x{i + 1}" for i in range(n)),
        domain=tuple((-half, half) for _ in range(n)),
        metric=lambda x: eye.copy(),
        christoffel_fn=lambda x: np.zeros((n, n, n)),
        curvature_fn=lambda x, X, Y, Z: np.zeros(n),
        constants={"sec": "0 (flat)", "conjugate_radius": "none"},
    )


# ---------------------------------------------------------------------------
# round spheres


def _stereo_metric(n: int, kappa: float):
    def metric(u):
        s = np.sum(np.asarray(u) ** 2)
        return (4.0 / kappa) / (1.0 + s) ** 2 * np.eye(n)
    return metric


def _stereo_christoffel(n: int):
    # conformal metric e^{2f} delta with f = log 2 - log(1+|u|^2):
    # Gamma^k_ij = d_j f delta_ik + d_i f delta_jk - d_k f delta_ij
    def gamma(u):
        u = np.asarray(u, dtype=float)
        df = -2.0 * u / (1.0 + np.sum(u ** 2))
        eye = np.eye(n)
        return (np.einsum("ik,j->kij", eye, df)
                + np.einsum("jk,i->kij", eye, df)
                - np.einsum("ij,k->kij", eye, df))
    return gamma


def _sphere_stereo(n: int, kappa: float, name: str, half: float = 25.0) -> MetricChart:
    metric = _stereo_metric(n, kappa)
    radius = 1.0 / np.sqrt(kappa)

    def to_embedding(u):
        u = np.asarray(u, dtype=float)
        s = np.sum(u ** 2)
        p = np.empty(n + 1)
        p[:n] = 2.0 * u / (1.0 + s)
        p[n] = (1.0 - s) / (1.0 + s)
        return radius * p

    def from_embedding(p):
        p = np.asarray(p, dtype=float) / radius
        return p[:n] / (1.0 + p[n])

    return MetricChart(
        name=name, dim=n,
        coords=tuple(f"u{i + 1}" for i in range(n)),
        domain=tuple((-half, half) for _ in range(n)),
        metric=metric,
        christoffel_fn=_stereo_christoffel(n),
        curvature_fn=_constant_curvature_fn(metric, kappa),
        to_embedding=to_embedding,
        from_embedding=from_embedding,
        constants={"sec": f"{kappa:g} (constant)",
                   "conjugate_radius": f"pi/sqrt({kappa:g})"},
    )


def _s2_polar() -> MetricChart:
    def metric(x):
        th = x[0]
        return np.diag([1.0, np.sin(th) ** 2])

    def gamma(x):
        th = x[0]
        g = np.zeros((2, 2, 2))
        g[0, 1, 1] = -np.sin(th) * np.cos(th)
        cot = np.cos(th) / np.sin(th)
        g[1, 0, 1] = g[1, 1, 0] = cot
        return g

    def to_embedding(x):
        th, ph = x
        return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])

    def from_embedding(p):
        return np.array([np.arccos(np.clip(p[2], -1, 1)), np.arctan2(p[1], p[0])])

    eps = 1e-3
    return MetricChart(
        name="s2_polar", dim=2, coords=("theta", "phi"),
        domain=((eps, np.pi - eps), (-7.0, 7.0)),
        metric=metric, christoffel_fn=gamma,
        curvature_fn=_constant_curvature_fn(metric, 1.0),
        to_embedding=to_embedding, from_embedding=from_embedding,
        constants={"sec": "1 (constant)", "conjugate_radius": "pi"},
    )


def _s2x2_k3(half: float = 25.0) -> MetricChart:
    kappa = 3.0
    block_metric = _stereo_metric(2, kappa)

    def metric(u):
        g = np.zeros((4, 4))
        g[:2, :2] = block_metric(u[:2])
        g[2:, 2:] = block_metric(u[2:])
        return g

    g2 = _stereo_christoffel(2)

    def gamma(u):
        out = np.zeros((4, 4, 4))
        out[:2, :2, :2] = g2(u[:2])
        out[2:, 2:, 2:] = g2(u[2:])
        return out

    radius = 1.0 / np.sqrt(kappa)

    def to_embedding(u):
        u = np.asarray(u, dtype=float)
        out = np.empty(6)
        for b, sl in enumerate((slice(0, 2), slice(2, 4))):
            ub = u[sl]
            s = np.sum(ub ** 2)
            out[3 * b:3 * b + 2] = radius * 2.0 * ub / (1.0 + s)
            out[3 * b + 2] = radius * (1.0 - s) / (1.0 + s)
        return out

    blocks = [(slice(0, 2), kappa, block_metric), (slice(2, 4), kappa, block_metric)]
    return MetricChart(
        name="s2x2_k3", dim=4,
        coords=("u1", "u2", "u3", "u4"),
        domain=tuple((-half, half) for _ in range(4)),
        metric=metric, christoffel_fn=gamma,
        curvature_fn=_block_constant_curvature_fn(blocks),
        to_embedding=to_embedding,
        constants={"ricci": "3 (identically; same as the round 4-sphere)",
                   "conjugate_radius": "pi/sqrt(3)",
                   "same_factor_sec": "3", "cross_factor_sec": "0"},
    )


# ---------------------------------------------------------------------------
# complex projective plane, affine Fubini-Study chart, sec in [1, 4]

_CP2_J = np.array([[0.0, -1.0, 0.0, 0.0],
                   [1.0, 0.0, 0.0, 0.0],
                   [0.0, 0.0, 0.0, -1.0],
                   [0.0, 0.0, 1.0, 0.0]])

# complex representation of the real coordinate basis (x1, y1, x2, y2)
_CP2_W = np.array([[1.0, 0.0], [1.0j, 0.0], [0.0, 1.0], [0.0, 1.0j]])


def _cp2_metric(x):
    z = np.array([x[0] + 1j * x[1], x[2] + 1j * x[3]])
    s = 1.0 + float(np.real(np.vdot(z, z)))
    h = (s * np.eye(2) - np.outer(np.conj(z), z)) / s ** 2
    # g(e_a, e_b) = Re sum_{mn} h[m,n] W[a,m] conj(W[b,n])
    g = np.real(np.einsum("mn,am,bn->ab", h, _CP2_W, np.conj(_CP2_W)))
    return 0.5 * (g + g.T)


def _cp2_curvature(x, X, Y, Z):
    g = _cp2_metric(x)

    def ip(a, b):
        return float(a @ g @ b)

    jx, jy, jz = _CP2_J @ X, _CP2_J @ Y, _CP2_J @ Z
    return (ip(Y, Z) * X - ip(X, Z) * Y
            + ip(jy, Z) * jx - ip(jx, Z) * jy - 2.0 * ip(jx, Y) * jz)


def _cp2_fs(half: float = 8.0) -> MetricChart:
    return MetricChart(
        name="cp2_fs", dim=4,
        coords=("x1", "y1", "x2", "y2"),
        domain=tuple((-half, half) for _ in range(4)),
        metric=_cp2_metric,
        christoffel_fn=None,       # finite differences of the analytic metric
        curvature_fn=_cp2_curvature,
        fd_step=1e-6,
        constants={"sec": "[1, 4] (holomorphic sectional curvature 4)",
                   "conjugate_radius": "pi/2",
                   "curvature_operator_eigenvalues": "{4, 1, 1}"},
    )


# ---------------------------------------------------------------------------
# patches in s3_unit


def _stereo3(p):
    # embedding (p1, p2, p3, p4) on the unit 3-sphere -> chart coordinates
    return np.array([p[0], p[1], p[2]]) / (1.0 + p[3])


def _clifford_torus(chart: MetricChart) -> SubmanifoldPatch:
    r = 1.0 / np.sqrt(2.0)

    def embed(s):
        a, b = s[0], s[1]
        return np.array([r * np.cos(a), r * np.sin(a), r * np.cos(b)]) / (1.0 + r * np.sin(b))

    return SubmanifoldPatch(
        name="clifford_torus", ambient=chart, dim_sub=2, embed=embed,
        param_box=((0.0, 2 * np.pi), (0.0, 2 * np.pi)), periodic=(True, True),
        constants={"shape_eigenvalues": "{+1, -1} (any unit normal)",
                   "focal_radius": "pi/4", "second_focal_time": "3*pi/4",
                   "norm_II": "1 = cot(pi/2 - pi/4)"},
    )


def _coord_circle(chart: MetricChart) -> SubmanifoldPatch:
    def embed(s):
        a = s[0]
        return np.array([np.cos(a), np.sin(a), 0.0 * a])

    return SubmanifoldPatch(
        name="coord_circle", ambient=chart, dim_sub=1, embed=embed,
        param_box=((0.0, 2 * np.pi),), periodic=(True,),
        constants={"shape_operator": "0 (totally geodesic great circle)",
                   "focal_radius": "pi/2"},
    )


def _equator_s2(chart: MetricChart) -> SubmanifoldPatch:
    def embed(s):
        th, ph = s[0], s[1]
        return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])

    return SubmanifoldPatch(
        name="equator_s2_in_s3", ambient=chart, dim_sub=2, embed=embed,
        param_box=((0.12, np.pi - 0.12), (0.0, 2 * np.pi)), periodic=(False, True),
        constants={"shape_operator": "0 (totally geodesic great sphere)",
                   "focal_radius": "pi/2"},
    )


def _plane_sphere(chart: MetricChart) -> SubmanifoldPatch:
    # great sphere {p1 = 0}, parametrized so u = 0 sits at interior
    # parameters (pi/2, pi/2)
    def embed(s):
        th, ph = s[0], s[1]
        p = np.array([0.0 * th, np.sin(th) * np.cos(ph), np.cos(th),
                      np.sin(th) * np.sin(ph)])
        return np.array([p[0], p[1], p[2]]) / (1.0 + p[3])

    return SubmanifoldPatch(
        name="plane_sphere_s3", ambient=chart, dim_sub=2, embed=embed,
        param_box=((0.12, np.pi - 0.12), (0.0, 2 * np.pi)), periodic=(False, True),
        constants={"shape_operator": "0 (totally geodesic great sphere)",
                   "focal_radius": "pi/2"},
    )


def _tilted_equator(chart: MetricChart, psi: float = 0.6) -> SubmanifoldPatch:
    def embed(s):
        th, ph = s[0], s[1]
        a = np.sin(th) * np.cos(ph)
        b = np.sin(th) * np.sin(ph)
        c = np.cos(th)
        p = np.array([a * np.cos(psi), b, c, a * np.sin(psi)])
        return np.array([p[0], p[1], p[2]]) / (1.0 + p[3])

    return SubmanifoldPatch(
        name="tilted_equator_s3", ambient=chart, dim_sub=2, embed=embed,
        param_box=((0.12, np.pi - 0.12), (0.0, 2 * np.pi)), periodic=(False, True),
        constants={"shape_operator": "0 (totally geodesic great sphere)",
                   "tilt_angle": f"{psi:g}"},
    )


def _factor_sphere(chart: MetricChart) -> SubmanifoldPatch:
    base = np.array([0.15, -0.1])

    def embed(s):
        return np.array([base[0] + 0.0 * s[0], base[1] + 0.0 * s[0], s[0], s[1]])

    return SubmanifoldPatch(
        name="factor_sphere_s2x2", ambient=chart, dim_sub=2, embed=embed,
        param_box=((-1.8, 1.8), (-1.8, 1.8)), periodic=(False, False),
        constants={"shape_operator": "0 (totally geodesic factor)",
                   "first_focal_time": "pi/sqrt(3)"},
    )


def _flat_line(chart: MetricChart) -> SubmanifoldPatch:
    def embed(s):
        return np.array([0.0 * s[0], s[0]])

    return SubmanifoldPatch(
        name="flat_line", ambient=chart, dim_sub=1, embed=embed,
        param_box=((-4.0, 4.0),), periodic=(False,),
        constants={"shape_operator": "0 (straight line)",
                   "focal_radius": "unbounded (cylinder cross-circle model)"},
    )


# ---------------------------------------------------------------------------
# registries

_CHART_BUILDERS = {
    "flat_rn": lambda: _flat(3, "flat_rn"),
    "flat_r2": lambda: _flat(2, "flat_r2"),
    "s2_polar": _s2_polar,
    "s3_unit": lambda: _sphere_stereo(3, 1.0, "s3_unit"),
    "s2x2_k3": _s2x2_k3,
    "cp2_fs": _cp2_fs,
}

_PATCH_BUILDERS = {
    "clifford_torus": ("s3_unit", _clifford_torus),
    "coord_circle": ("s3_unit", _coord_circle),
    "equator_s2_in_s3": ("s3_unit", _equator_s2),
    "plane_sphere_s3": ("s3_unit", _plane_sphere),
    "tilted_equator_s3": ("s3_unit", _tilted_equator),
    "factor_sphere_s2x2": ("s2x2_k3", _factor_sphere),
    "flat_line": ("flat_r2", _flat_line),
}


class UnknownNameError(KeyError):
    """Registry lookup failed; carries close-match suggestions."""

    def __init__(self, kind: str, name: str, options):
        import difflib
        self.suggestions = difflib.get_close_matches(name, options, n=3)
        super().__init__(f"unknown {kind} '{name}'"
                         + (f"; did you mean: {', '.join(self.suggestions)}?"
                            if self.suggestions else ""))


@lru_cache(maxsize=None)
def get_chart(name: str) -> MetricChart:
    if name not in _CHART_BUILDERS:
        raise UnknownNameError("chart", name, list(_CHART_BUILDERS))
    return _CHART_BUILDERS[name]()


@lru_cache(maxsize=None)
def get_patch(name: str) -> SubmanifoldPatch:
    if name not in _PATCH_BUILDERS:
        raise UnknownNameError("patch", name, list(_PATCH_BUILDERS))
    ambient, builder = _PATCH_BUILDERS[name]
    return builder(get_chart(ambient))


def make_point(chart_name: str, coords, name: str = "point") -> SubmanifoldPatch:
    return point_patch(get_chart(chart_name), coords, name=name)


def chart_names() -> list[str]:
    return sorted(_CHART_BUILDERS)


def patch_names() -> list[str]:
    return sorted(_PATCH_BUILDERS)


def zoo_listing() -> list[dict]:
    """Registry listing with dimensions and documented constants."""
    out = []
    for name in chart_names():
        c = get_chart(name)
        out.append({"kind": "chart", "name": name, "dim": c.dim,
                    "constants": dict(c.constants)})
    for name in patch_names():
        p = get_patch(name)
        out.append({"kind": "patch", "name": name, "dim": p.dim_sub,
                    "ambient": p.ambient.name, "constants": dict(p.constants)})
    return out
