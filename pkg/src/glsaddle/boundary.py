"""The sphere-valued boundary map ``g`` and the ball datum ``g_R``.

``g`` is built on the closed spherical octant and reflected to the whole
sphere.  Inside geodesic caps of radius ``r`` around ``e1`` and ``e2`` it is
the planar vortex read through azimuthal-equidistant charts (degree +1 at
``±e1``, -1 at ``±e2``).  On the rest of the octant ``g = exp(i phi)`` with
``phi`` the discrete harmonic extension of the boundary values ``pi/2`` on
``{x=0} ∪ {y=0}``, ``0`` on ``{z=0}`` and the cap phases on the cap arcs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import E1, E2, E3, VORTEX_POINTS, dist_to_cross, dist_to_vortex_points
from .io import fmt, write_csv

DEFAULT_CAP_RADIUS = np.pi / 16
DEFAULT_MESH_LEVEL = 5
MIN_CAP_BOUNDARY_VERTICES = 8
# width of the collar outside each cap, as a fraction of the cap radius, in
# which the mesh phase is blended into the exact cap phase
BLEND_FRACTION = 0.5
VORTEX_EPS = 1e-9


class DatumError(ValueError):
    pass


def _norm(v):
    return np.sqrt(np.sum(v * v, axis=-1))


def _angle_to(theta, center):
    """Geodesic distance from unit vectors ``theta`` to ``center``."""
    c = theta @ center
    s = _norm(np.cross(theta, center))
    return np.arctan2(s, c)


@dataclass(frozen=True)
class GeodesicChart:
    """Azimuthal-equidistant chart of a spherical cap onto a planar disk.

    The tangent frame ``(f1, f2)`` at ``center`` fixes which directions land
    on the real and imaginary axes.
    """

    center: np.ndarray
    frame: tuple
    cap_radius: float

    def forward(self, theta):
        theta = np.asarray(theta, dtype=float)
        f1, f2 = self.frame
        a = theta @ f1
        b = theta @ f2
        t = _angle_to(theta, self.center)
        rho = np.hypot(a, b)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(rho > 0, t / np.where(rho > 0, rho, 1.0), 0.0)
        return scale * (a + 1j * b)

    def inverse(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        f1, f2 = self.frame
        t = np.abs(zeta)
        with np.errstate(invalid="ignore", divide="ignore"):
            ca = np.where(t > 0, zeta.real / np.where(t > 0, t, 1.0), 1.0)
            sa = np.where(t > 0, zeta.imag / np.where(t > 0, t, 1.0), 0.0)
        d = ca[..., None] * f1 + sa[..., None] * f2
        return np.cos(t)[..., None] * self.center + np.sin(t)[..., None] * d


def build_chart(center, frame, cap_radius=DEFAULT_CAP_RADIUS) -> GeodesicChart:
    center = np.asarray(center, dtype=float)
    if not any(np.allclose(center, p, atol=1e-12) for p in VORTEX_POINTS):
        raise DatumError(f"chart center {center} is not one of ±e1, ±e2")
    f1, f2 = (np.asarray(f, dtype=float) for f in frame)
    gram = np.array([[f1 @ f1, f1 @ f2], [f2 @ f1, f2 @ f2]])
    if not np.allclose(gram, np.eye(2), atol=1e-12):
        raise DatumError("chart frame is not orthonormal")
    if abs(f1 @ center) > 1e-12 or abs(f2 @ center) > 1e-12:
        raise DatumError("chart frame is not tangent at the center")
    return GeodesicChart(center=center, frame=(f1, f2), cap_radius=float(cap_radius))


def default_charts(cap_radius=DEFAULT_CAP_RADIUS):
    """Charts at ``e1`` and ``e2`` with the arc alignments used by ``g``.

    ``psi1`` sends ``{y=0, z>0}`` to the positive imaginary axis and
    ``{z=0, y>0}`` to the positive real axis; ``psi2`` sends ``{x=0, z>0}``
    to the positive imaginary axis and ``{z=0, x<0}`` to the positive real
    axis.  The charts at ``-e1``, ``-e2`` are their mirror images.
    """
    return {
        "e1": build_chart(E1, (E2, E3), cap_radius),
        "e2": build_chart(E2, (-E1, E3), cap_radius),
        "-e1": build_chart(-E1, (E2, E3), cap_radius),
        "-e2": build_chart(-E2, (E1, E3), cap_radius),
    }


class OctantMesh:
    """Uniform subdivision of the flat triangle ``(e1, e2, e3)`` into ``n**2``
    triangles, vertices projected radially onto the sphere.

    Vertex ``(i, j)`` sits over the planar point ``(i, j, n-i-j) / n``.  All
    three symmetry arcs are unions of mesh edges.
    """

    def __init__(self, level):
        level = int(level)
        if level < 1:
            raise DatumError("mesh level must be >= 1")
        self.level = level
        n = self.n = 2**level
        idx = -np.ones((n + 1, n + 1), dtype=np.int64)
        ij = [(i, j) for i in range(n + 1) for j in range(n + 1 - i)]
        for k, (i, j) in enumerate(ij):
            idx[i, j] = k
        self.index = idx
        self.ij = np.array(ij, dtype=np.int64)
        planar = np.column_stack(
            [self.ij[:, 0], self.ij[:, 1], n - self.ij[:, 0] - self.ij[:, 1]]
        ) / n
        self.vertices = planar / _norm(planar)[:, None]

        up = -np.ones((n, n), dtype=np.int64)
        down = -np.ones((n, n), dtype=np.int64)
        tris = []
        for i in range(n):
            for j in range(n - i):
                up[i, j] = len(tris)
                tris.append((idx[i, j], idx[i + 1, j], idx[i, j + 1]))
                if i + j <= n - 2:
                    down[i, j] = len(tris)
                    tris.append((idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]))
        self.up = up
        self.down = down
        self.triangles = np.array(tris, dtype=np.int64)

        V = self.vertices[self.triangles]  # (T, 3 vertices, 3 coords)
        # rows of Minv^T give a, b with phi = (a.theta)/(b.theta)
        M = np.transpose(V, (0, 2, 1))  # columns are vertices
        self._minv = np.linalg.inv(M)
        self.spherical_area = _spherical_triangle_area(V[:, 0], V[:, 1], V[:, 2])
        self.spacing = np.pi / 2 / n

    def locate(self, theta):
        """Triangle index containing each octant unit vector (all coords >= 0)."""
        n = self.n
        s = np.sum(theta, axis=-1)
        u = n * theta[..., 0] / s
        v = n * theta[..., 1] / s
        i = np.clip(np.floor(u).astype(np.int64), 0, n - 1)
        j = np.clip(np.floor(v).astype(np.int64), 0, n - 1 - i)
        fu = u - i
        fv = v - j
        use_down = (fu + fv > 1.0) & (i + j <= n - 2)
        return np.where(use_down, self.down[i, np.minimum(j, n - 1)], self.up[i, j])

    def homogeneous_coefficients(self, values):
        """Per-triangle ``(a, b)`` with ``interp(theta) = a.theta / b.theta``."""
        vt = values[self.triangles]  # (T, 3)
        a = np.einsum("tkc,tk->tc", self._minv, vt)
        b = np.einsum("tkc,tk->tc", self._minv, np.ones_like(vt))
        return a, b

    def cotan_laplacian(self):
        """Cotangent stiffness matrix on the chord triangles."""
        V = self.vertices
        T = self.triangles
        rows, cols, vals = [], [], []
        for k in range(3):
            i0, i1, i2 = T[:, k], T[:, (k + 1) % 3], T[:, (k + 2) % 3]
            e1 = V[i1] - V[i0]
            e2 = V[i2] - V[i0]
            cot = np.sum(e1 * e2, axis=1) / _norm(np.cross(e1, e2))
            # angle at i0 weights the opposite edge (i1, i2)
            w = 0.5 * cot
            rows += [i1, i2]
            cols += [i2, i1]
            vals += [w, w]
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        n = len(V)
        W = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        L = sp.diags(np.asarray(W.sum(axis=1)).ravel()) - W
        return L.tocsr(), float(vals.min())

    def neighbors(self):
        T = self.triangles
        pairs = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
        return np.unique(np.sort(pairs, axis=1), axis=0)


def _spherical_triangle_area(a, b, c):
    num = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
    den = 1 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    return 2 * np.arctan2(num, den)


def _cap_phase(theta, which):
    """Phase of ``g`` inside the e1 / e2 quarter caps of the octant."""
    if which == 1:
        return np.arctan2(theta[..., 2], theta[..., 1])
    return np.arctan2(theta[..., 2], theta[..., 0])


def _cap_phase_gradient(theta, which):
    x, y, z = theta[..., 0], theta[..., 1], theta[..., 2]
    zero = np.zeros_like(x)
    if which == 1:
        return np.stack([zero, -z, y], axis=-1) / (y * y + z * z)[..., None]
    return np.stack([-z, zero, x], axis=-1) / (x * x + z * z)[..., None]


def rest_phase(phase, theta, with_gradient=False):
    """Phase of ``g`` on octant unit vectors outside the caps.

    The mesh interpolant is blended into the exact cap phase over a collar
    ``r <= t < r (1 + BLEND_FRACTION)`` with a C^1 smoothstep, so ``g`` is
    continuous across the cap circles.  The collars meet the symmetry arcs
    only where both phases take the same prescribed value.
    """
    phi = phase.interpolate(theta)
    grad = phase.gradient(theta) if with_gradient else None
    r = phase.cap_radius
    w = BLEND_FRACTION * r
    for which, c in ((1, E1), (2, E2)):
        t = _angle_to(theta, c)
        zone = (t >= r) & (t < r + w)
        if not np.any(zone):
            continue
        th = theta[zone]
        s = (t[zone] - r) / w
        chi = 1 - s * s * (3 - 2 * s)
        pe = _cap_phase(th, which)
        pi_ = phi[zone]
        phi[zone] = chi * pe + (1 - chi) * pi_
        if with_gradient:
            dchi = -6 * s * (1 - s) / w
            ct = th @ c
            gt = -(c[None, :] - ct[:, None] * th) / np.sin(t[zone])[:, None]
            grad[zone] = (
                chi[:, None] * _cap_phase_gradient(th, which)
                + (1 - chi[:, None]) * grad[zone]
                + (dchi * (pe - pi_))[:, None] * gt
            )
    return (phi, grad) if with_gradient else phi


@dataclass
class PhaseField:
    """Per-vertex phase on the octant mesh.

    ``boundary`` flags the vertices with prescribed values (symmetry arcs and
    closed caps); the others come from the harmonic solve.
    """

    mesh: OctantMesh = field(repr=False)
    phi: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)
    cap_radius: float
    min_cotan_weight: float = 0.0

    def __post_init__(self):
        self._a, self._b = self.mesh.homogeneous_coefficients(self.phi)

    def interpolate(self, theta, tri=None):
        if tri is None:
            tri = self.mesh.locate(theta)
        a = self._a[tri]
        b = self._b[tri]
        return np.sum(a * theta, axis=-1) / np.sum(b * theta, axis=-1)

    def gradient(self, theta, tri=None):
        """Exact tangential gradient of the interpolated phase at unit
        vectors ``theta`` (the interpolant is 0-homogeneous)."""
        if tri is None:
            tri = self.mesh.locate(theta)
        a = self._a[tri]
        b = self._b[tri]
        at = np.sum(a * theta, axis=-1)[..., None]
        bt = np.sum(b * theta, axis=-1)[..., None]
        return (a * bt - b * at) / (bt * bt)

    def interior_range(self):
        p = self.phi[~self.boundary]
        return float(p.min()), float(p.max())


def cap_boundary_vertex_counts(mesh, cap_radius):
    """Number of vertices on mesh edges crossing each cap circle, per cap."""
    V = mesh.vertices
    edges = mesh.neighbors()
    counts = []
    for c in (E1, E2):
        inside = _angle_to(V, c) <= cap_radius
        cross = inside[edges[:, 0]] != inside[edges[:, 1]]
        ends = edges[cross].ravel()
        counts.append(int(np.unique(ends).size))
    return tuple(counts)


def build_phase_field(cap_radius=DEFAULT_CAP_RADIUS, mesh_level=DEFAULT_MESH_LEVEL) -> PhaseField:
    """Harmonic (cotangent Laplace-Beltrami) extension of the phase."""
    cap_radius = float(cap_radius)
    if not 0 < cap_radius < np.pi / 8:
        raise DatumError(f"cap radius must lie in (0, pi/8), got {cap_radius}")
    if int(mesh_level) < 3:
        raise DatumError("mesh_level must be >= 3")
    mesh = OctantMesh(mesh_level)
    counts = cap_boundary_vertex_counts(mesh, cap_radius)
    if min(counts) < MIN_CAP_BOUNDARY_VERTICES:
        raise DatumError(
            f"mesh level {mesh_level} resolves the caps with only {min(counts)} boundary "
            f"vertices (need {MIN_CAP_BOUNDARY_VERTICES})"
        )
    V = mesh.vertices
    i, j = mesh.ij[:, 0], mesh.ij[:, 1]
    k = mesh.n - i - j
    phi = np.zeros(len(V))
    fixed = np.zeros(len(V), dtype=bool)

    on_z = k == 0
    on_xy = (i == 0) | (j == 0)
    phi[on_z] = 0.0
    phi[on_xy] = np.pi / 2
    fixed |= on_z | on_xy

    d1 = _angle_to(V, E1)
    d2 = _angle_to(V, E2)
    in1 = d1 <= cap_radius
    in2 = d2 <= cap_radius
    with np.errstate(invalid="ignore"):
        phi[in1] = _cap_phase(V[in1], 1)
        phi[in2] = _cap_phase(V[in2], 2)
    # the vortex points themselves have no phase; any value in range works
    phi[d1 < VORTEX_EPS] = 0.0
    phi[d2 < VORTEX_EPS] = 0.0
    fixed |= in1 | in2

    L, wmin = mesh.cotan_laplacian()
    free = ~fixed
    A = L[free][:, free].tocsc()
    rhs = -L[free][:, fixed] @ phi[fixed]
    phi[free] = spla.spsolve(A, rhs)
    return PhaseField(mesh=mesh, phi=phi, boundary=fixed, cap_radius=cap_radius, min_cotan_weight=wmin)


@dataclass
class BoundaryDatum:
    phase: PhaseField
    charts: dict
    cap_radius: float

    @property
    def mesh_level(self):
        return self.phase.mesh.level


def build_boundary_datum(cap_radius=DEFAULT_CAP_RADIUS, mesh_level=DEFAULT_MESH_LEVEL) -> BoundaryDatum:
    phase = build_phase_field(cap_radius, mesh_level)
    return BoundaryDatum(phase=phase, charts=default_charts(cap_radius), cap_radius=float(cap_radius))


def _octant_g(datum, a):
    """``g`` on octant unit vectors ``a`` (all coordinates >= 0)."""
    r = datum.cap_radius
    d1 = _angle_to(a, E1)
    d2 = _angle_to(a, E2)
    out = np.empty(a.shape[:-1], dtype=complex)
    in1 = d1 < r
    in2 = d2 < r
    rest = ~(in1 | in2)
    if np.any(in1):
        z = datum.charts["e1"].forward(a[in1])
        out[in1] = z / np.abs(z)
    if np.any(in2):
        z = datum.charts["e2"].forward(a[in2])
        out[in2] = -np.conj(z) / np.abs(z)
    if np.any(rest):
        ar = a[rest]
        phi = rest_phase(datum.phase, ar)
        # the symmetry arcs carry exact values
        phi = np.where(ar[:, 2] == 0, 0.0, phi)
        phi = np.where((ar[:, 0] == 0) | (ar[:, 1] == 0), np.pi / 2, phi)
        w = np.exp(1j * phi)
        w = np.where(ar[:, 2] == 0, 1.0 + 0j, w)
        w = np.where((ar[:, 0] == 0) | (ar[:, 1] == 0), 1j, w)
        out[rest] = w / np.abs(w)
    return out


def apply_reflections(w, signs):
    """Carry octant values ``w`` to the octant given by coordinate ``signs``."""
    w = np.where(signs[..., 0] < 0, -np.conj(w), w)
    w = np.where(signs[..., 1] < 0, -np.conj(w), w)
    w = np.where(signs[..., 2] < 0, np.conj(w), w)
    return w


def eval_g(datum: BoundaryDatum, theta):
    """Unit-modulus boundary map at unit vectors ``theta``."""
    theta = np.asarray(theta, dtype=float)
    scalar = theta.ndim == 1
    th = np.atleast_2d(theta)
    if np.any(np.abs(_norm(th) - 1.0) > 1e-9):
        raise DatumError("eval_g expects unit vectors")
    if np.any(dist_to_vortex_points(th, tol=1e-9) <= VORTEX_EPS):
        raise DatumError("g is singular at the vortex points ±e1, ±e2")
    w = apply_reflections(_octant_g(datum, np.abs(th)), th)
    return w[0] if scalar else w


def _scaled_g(datum, x, modulus):
    """``modulus * g(x/|x|)`` with zero wherever the direction is singular."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    xs = np.atleast_2d(x)
    r = _norm(xs)
    mod = np.atleast_1d(modulus)
    out = np.zeros(len(xs), dtype=complex)
    ok = (r > 0) & (mod > 0)
    if np.any(ok):
        th = xs[ok] / r[ok, None]
        th /= _norm(th)[:, None]
        good = dist_to_vortex_points(th, tol=1e-9) > VORTEX_EPS
        idx = np.flatnonzero(ok)[good]
        out[idx] = mod[idx] * eval_g(datum, th[good])
    return out[0] if scalar else out


def eval_g_R(datum: BoundaryDatum, x, R=None):
    """Ball datum ``min{d_X(x), 1} g(x/|x|)``; exactly 0 on the cross."""
    x = np.asarray(x, dtype=float)
    return _scaled_g(datum, x, np.minimum(dist_to_cross(x), 1.0))


def eval_vortex_map(datum, x, m=1.0):
    """``min{m d_X(x), 1} g(x/|x|)``."""
    x = np.asarray(x, dtype=float)
    return _scaled_g(datum, x, np.minimum(m * np.asarray(dist_to_cross(x)), 1.0))


def tangential_gradient_sq(datum, theta):
    """``|grad_T g|^2`` at octant unit vectors away from the vortex points."""
    a = np.abs(np.atleast_2d(theta))
    r = datum.cap_radius
    d1 = _angle_to(a, E1)
    d2 = _angle_to(a, E2)
    out = np.empty(len(a))
    in1 = d1 < r
    in2 = (d2 < r) & ~in1
    rest = ~(in1 | in2)
    # inside a cap g is the azimuth around the center: |grad|^2 = 1/sin^2(t)
    out[in1] = 1.0 / np.sin(d1[in1]) ** 2
    out[in2] = 1.0 / np.sin(d2[in2]) ** 2
    if np.any(rest):
        _, gr = rest_phase(datum.phase, a[rest], with_gradient=True)
        out[rest] = np.sum(gr * gr, axis=-1)
    return out


def surface_gradient_bound(datum: BoundaryDatum, mesh_level=None):
    """Largest excess ``|grad_T g|^2 - 1/d_V^2`` over triangle barycenters of
    an octant mesh, ignoring triangles within one mesh spacing of ``V``."""
    mesh = OctantMesh(datum.mesh_level if mesh_level is None else mesh_level)
    bc = mesh.vertices[mesh.triangles].mean(axis=1)
    bc /= _norm(bc)[:, None]
    dv = dist_to_vortex_points(bc, tol=1e-9)
    keep = dv > mesh.spacing
    return float(np.max(tangential_gradient_sq(datum, bc[keep]) - 1.0 / dv[keep] ** 2))


def planar_gradient_excess(points, triangles, phase, center=(0.0, 0.0), min_dist=0.0):
    """Same excess for a P1 phase on a planar triangulation, measured against
    ``1/|x - center|^2``.  Used to check the estimate on model patches."""
    P = np.asarray(points, dtype=float)
    T = np.asarray(triangles)
    ph = np.asarray(phase, dtype=float)
    p0, p1, p2 = P[T[:, 0]], P[T[:, 1]], P[T[:, 2]]
    e1 = p1 - p0
    e2 = p2 - p0
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    d1 = ph[T[:, 1]] - ph[T[:, 0]]
    d2 = ph[T[:, 2]] - ph[T[:, 0]]
    gx = (d1 * e2[:, 1] - d2 * e1[:, 1]) / det
    gy = (d2 * e1[:, 0] - d1 * e2[:, 0]) / det
    bc = (p0 + p1 + p2) / 3 - np.asarray(center)
    r2 = np.sum(bc * bc, axis=1)
    keep = r2 > min_dist**2
    return float(np.max(gx[keep] ** 2 + gy[keep] ** 2 - 1.0 / r2[keep]))


def _tangent_frame(center):
    c = np.asarray(center, dtype=float)
    c = c / np.linalg.norm(c)
    helper = E3 if abs(c[2]) < 0.9 else E1
    f1 = np.cross(helper, c)
    f1 /= np.linalg.norm(f1)
    f2 = np.cross(c, f1)
    return c, f1, f2


def circle_on_sphere(center, radius, n_samples):
    """Points at geodesic distance ``radius`` from ``center``, traversed
    counterclockwise seen from outside the sphere (right-hand rule about
    ``center``)."""
    c, f1, f2 = _tangent_frame(center)
    a = 2 * np.pi * np.arange(n_samples) / n_samples
    d = np.cos(a)[:, None] * f1 + np.sin(a)[:, None] * f2
    pts = np.cos(radius) * c + np.sin(radius) * d
    return pts / _norm(pts)[:, None]


def winding_of_samples(values):
    """Winding number of a closed loop of complex samples (last sample is
    joined back to the first).  Returns ``(integer, residual)``."""
    v = np.asarray(values, dtype=complex)
    ang = np.angle(v)
    inc = np.diff(np.concatenate([ang, ang[:1]]))
    inc = (inc + np.pi) % (2 * np.pi) - np.pi
    raw = np.sum(inc) / (2 * np.pi)
    k = int(np.round(raw))
    return k, float(abs(raw - k))


def degree_on_sphere_cap(datum: BoundaryDatum, center, cap_radius, n_samples=720):
    cap_radius = float(cap_radius)
    if not 0 < cap_radius < np.pi / 4:
        raise DatumError("cap radius for the degree loop must lie in (0, pi/4)")
    pts = circle_on_sphere(center, cap_radius, n_samples)
    if np.min(dist_to_vortex_points(pts, tol=1e-9)) < cap_radius / 2:
        raise DatumError("degree loop passes too close to a vortex point")
    k, res = winding_of_samples(eval_g(datum, pts))
    if res >= 0.1:
        raise DatumError(f"degree loop under-resolved (residual {res:.3f})")
    return k


def lipschitz_constant_g_R(datum, R, n_pairs=20000, spread=0.05, seed=0):
    """Largest difference quotient of ``g_R`` over random nearby pairs on
    ``S_R``, with pairs biased towards the vortex points."""
    rng = np.random.default_rng(seed)
    base = VORTEX_POINTS[rng.integers(0, 4, n_pairs)] + rng.normal(scale=0.2, size=(n_pairs, 3))
    base /= _norm(base)[:, None]
    other = base + rng.normal(scale=spread / R, size=base.shape)
    other /= _norm(other)[:, None]
    x = R * base
    y = R * other
    num = np.abs(eval_g_R(datum, x) - eval_g_R(datum, y))
    den = _norm(x - y)
    keep = den > 0
    return float(np.max(num[keep] / den[keep]))


def write_phi1(path, phase: PhaseField):
    V = phase.mesh.vertices
    rows = [
        (k, fmt(V[k, 0]), fmt(V[k, 1]), fmt(V[k, 2]), fmt(phase.phi[k])) for k in range(len(V))
    ]
    write_csv(path, ["vertex_id", "x", "y", "z", "phi"], rows)
