"""Discrete octant domain, distance functions and the reflection symmetries.

The fundamental domain is the closed octant ``{x, y, z >= 0}`` of the ball
``B_R`` sampled on a uniform Cartesian grid with nodes at ``i * h``.  A field
on the full ball is recovered from its octant values through

    u(-x, y, z) = -conj(u(x, y, z))
    u(x, -y, z) = -conj(u(x, y, z))
    u(x, y, -z) =  conj(u(x, y, z))
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

MAX_NODES_PER_AXIS = 2048
SUBSAMPLES = 4

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])
VORTEX_POINTS = np.array([E1, -E1, E2, -E2])


class NodeClass(enum.IntFlag):
    """Bit labels of a grid node. Interior nodes carry no bit."""

    INTERIOR = 0
    FACE_X0 = 1
    FACE_Y0 = 2
    FACE_Z0 = 4
    SPHERE = 8
    EXTERIOR = 16


class GeometryError(ValueError):
    pass


def _subsample_offsets(n=SUBSAMPLES):
    return (np.arange(n) + 0.5) / n


def cell_fraction(dims, h, predicate, n_sub=SUBSAMPLES):
    """Fraction of each grid cell whose ``n_sub**3`` subsample points satisfy
    ``predicate(x, y, z)``.  Returns an array of shape ``dims - 1``.

    The loop runs over the subsample offsets, so memory stays at one cell
    array regardless of ``n_sub``.
    """
    nx, ny, nz = (d - 1 for d in dims)
    cx = np.arange(nx) * h
    cy = np.arange(ny) * h
    cz = np.arange(nz) * h
    count = np.zeros((nx, ny, nz), dtype=np.int32)
    offs = _subsample_offsets(n_sub) * h
    for ox in offs:
        X = (cx + ox)[:, None, None]
        for oy in offs:
            Y = (cy + oy)[None, :, None]
            for oz in offs:
                Z = (cz + oz)[None, None, :]
                count += predicate(X, Y, Z)
    return count / float(n_sub**3)


@dataclass
class OctantGeometry:
    """Uniform grid on the closed octant of ``B_R``.

    ``node_class`` holds :class:`NodeClass` bit sets, ``cell_weights`` the
    fraction of each cell inside ``B_R`` (4x4x4 subsampling).
    """

    R: float
    h: float
    dims: tuple
    node_class: np.ndarray = field(repr=False)
    cell_weights: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return tuple(self.dims)

    def axis(self, k=0):
        return np.arange(self.dims[k]) * self.h

    def coordinates(self):
        """Node coordinates as an array of shape ``dims + (3,)``."""
        X, Y, Z = np.meshgrid(self.axis(0), self.axis(1), self.axis(2), indexing="ij")
        return np.stack([X, Y, Z], axis=-1)

    @property
    def sphere_mask(self):
        return (self.node_class & NodeClass.SPHERE) != 0

    @property
    def exterior_mask(self):
        return (self.node_class & NodeClass.EXTERIOR) != 0

    @property
    def free_mask(self):
        """Nodes that are neither Dirichlet (sphere) nor exterior."""
        return (self.node_class & (NodeClass.SPHERE | NodeClass.EXTERIOR)) == 0

    def component_masks(self):
        """Boolean masks of the free real and imaginary components.

        Real part is fixed on ``x=0`` and ``y=0``, imaginary part on ``z=0``;
        both are fixed on sphere and exterior nodes.
        """
        free = self.free_mask
        c = self.node_class
        re_free = free & ((c & (NodeClass.FACE_X0 | NodeClass.FACE_Y0)) == 0)
        im_free = free & ((c & NodeClass.FACE_Z0) == 0)
        return re_free, im_free

    def weighted_volume(self):
        return float(np.sum(self.cell_weights)) * self.h**3

    def full_ball_deep_mask(self):
        """Nodes all of whose eight adjacent cells (counting mirrored cells
        across the symmetry faces) are fully inside the ball."""
        w = _mirror_pad_cells(self.cell_weights)
        full = w >= 1.0
        deep = (
            full[:-1, :-1, :-1] & full[1:, :-1, :-1] & full[:-1, 1:, :-1] & full[:-1, :-1, 1:]
            & full[1:, 1:, :-1] & full[1:, :-1, 1:] & full[:-1, 1:, 1:] & full[1:, 1:, 1:]
        )
        return deep & self.free_mask


def _mirror_pad_cells(w):
    """Cell weights padded by one mirrored cell before index 0 on each axis
    and one empty cell after the last index."""
    p = np.zeros(tuple(s + 2 for s in w.shape))
    p[1:-1, 1:-1, 1:-1] = w
    p[0, :, :] = p[1, :, :]
    p[:, 0, :] = p[:, 1, :]
    p[:, :, 0] = p[:, :, 1]
    return p


def build_octant_geometry(R, h) -> OctantGeometry:
    """Classify the nodes of the octant grid of ``B_R`` with spacing ``h``."""
    R = float(R)
    h = float(h)
    if not (np.isfinite(R) and np.isfinite(h)) or R <= 0 or h <= 0:
        raise GeometryError(f"R and h must be positive, got R={R}, h={h}")
    if R < 2 * h * (1 - 1e-12):
        raise GeometryError(f"need R >= 2h, got R={R}, h={h}")
    n = int(np.ceil(R / h - 1e-9)) + 1
    if n > MAX_NODES_PER_AXIS:
        raise GeometryError(f"{n} nodes per axis exceeds the cap of {MAX_NODES_PER_AXIS}")
    dims = (n, n, n)

    weights = cell_fraction(dims, h, lambda X, Y, Z: X * X + Y * Y + Z * Z <= R * R)

    # node volume indicator: any adjacent cell carries weight
    pw = np.zeros((n + 1, n + 1, n + 1))
    pw[1:-1, 1:-1, 1:-1] = weights
    touched = np.zeros(dims, dtype=bool)
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                touched |= pw[a:a + n, b:b + n, c:c + n] > 0

    ax = np.arange(n) * h
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    r2 = X * X + Y * Y + Z * Z
    inside = r2 < R * R

    cls = np.zeros(dims, dtype=np.int16)
    cls[X == 0] |= int(NodeClass.FACE_X0)
    cls[Y == 0] |= int(NodeClass.FACE_Y0)
    cls[Z == 0] |= int(NodeClass.FACE_Z0)
    sphere = touched & ~inside
    # inside nodes that carry no volume would be unconstrained; pin them
    sphere |= inside & ~touched
    cls[sphere] |= int(NodeClass.SPHERE)
    exterior = ~touched & ~inside
    cls[exterior] = int(NodeClass.EXTERIOR)
    return OctantGeometry(R=R, h=h, dims=dims, node_class=cls, cell_weights=weights)


def dist_to_cross(x):
    """Distance to ``X = {xy = 0} ∩ {z = 0}``, the union of the x- and y-axes.

    Accepts a single point or an array of points with a trailing axis of 3.
    """
    x = np.asarray(x, dtype=float)
    px, py, pz = x[..., 0], x[..., 1], x[..., 2]
    d = np.minimum(np.sqrt(py * py + pz * pz), np.sqrt(px * px + pz * pz))
    return float(d) if d.ndim == 0 else d


def dist_to_vortex_points(theta, tol=1e-12):
    """Geodesic distance on the unit sphere to ``{±e1, ±e2}``."""
    theta = np.asarray(theta, dtype=float)
    norm = np.linalg.norm(theta, axis=-1)
    if np.any(np.abs(norm - 1.0) > tol):
        raise GeometryError("dist_to_vortex_points expects unit vectors")
    # nearest of ±e1, ±e2 is the one with the largest |cos|; atan2 keeps
    # full precision close to the vortex points
    ax, ay, az = np.abs(theta[..., 0]), np.abs(theta[..., 1]), theta[..., 2]
    near_x = ax >= ay
    d = np.where(
        near_x,
        np.arctan2(np.sqrt(ay * ay + az * az), ax),
        np.arctan2(np.sqrt(ax * ax + az * az), ay),
    )
    return float(d) if d.ndim == 0 else d


def extend_octant_field(values):
    """Reflect octant values to the full symmetric grid.

    Returns an array of shape ``2 * dims - 1``; octant index ``i`` maps to
    full index ``i + dims - 1``.
    """
    v = np.asarray(values, dtype=complex)
    nx, ny, nz = v.shape
    out = np.empty((2 * nx - 1, 2 * ny - 1, 2 * nz - 1), dtype=complex)
    body = v
    # z reflection: conj
    zfull = np.concatenate([np.conj(body[:, :, :0:-1]), body], axis=2)
    # y reflection: -conj
    yfull = np.concatenate([-np.conj(zfull[:, :0:-1, :]), zfull], axis=1)
    # x reflection: -conj
    out[...] = np.concatenate([-np.conj(yfull[:0:-1, :, :]), yfull], axis=0)
    return out


def restrict_to_octant(full):
    full = np.asarray(full)
    nx, ny, nz = ((s + 1) // 2 for s in full.shape)
    return full[nx - 1:, ny - 1:, nz - 1:].copy()


def extend_node_class(node_class):
    """Mirror node labels to the full grid (labels are reflection invariant)."""
    c = np.asarray(node_class)
    c = np.concatenate([c[:, :, :0:-1], c], axis=2)
    c = np.concatenate([c[:, :0:-1, :], c], axis=1)
    return np.concatenate([c[:0:-1, :, :], c], axis=0)


def vortex_comparability_constant(n_theta=400, n_phi=800):
    """Supremum of ``d_X / d_V`` over a latitude-longitude mesh of the sphere,
    excluding the vortex points themselves."""
    t = np.linspace(0.0, np.pi, n_theta + 1)
    p = np.linspace(0.0, 2 * np.pi, n_phi, endpoint=False)
    T, P = np.meshgrid(t, p, indexing="ij")
    th = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1)
    th /= np.linalg.norm(th, axis=-1, keepdims=True)
    dv = dist_to_vortex_points(th, tol=1e-9)
    dx = dist_to_cross(th)
    keep = dv > 1e-9
    return float(np.max(dx[keep] / dv[keep]))


@dataclass
class ComplexField:
    """Complex samples ``u = u1 + i u2`` on the nodes of an octant grid."""

    geometry: OctantGeometry
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.geometry.shape:
            raise GeometryError(
                f"field shape {self.values.shape} does not match grid {self.geometry.shape}"
            )

    def copy(self):
        return ComplexField(self.geometry, self.values.copy())

    def extended(self):
        return extend_octant_field(self.values)

    def full_axes(self):
        """Coordinate axes of the extended (full ball) grid."""
        return tuple(
            np.arange(-(n - 1), n) * self.geometry.h for n in self.geometry.dims
        )


def field_interpolator(f: ComplexField):
    """Trilinear interpolant of the symmetric extension of ``f`` on the full
    grid; points outside the grid raise."""
    full = f.extended()
    axes = f.full_axes()
    re = RegularGridInterpolator(axes, full.real, method="linear", bounds_error=True)
    im = RegularGridInterpolator(axes, full.imag, method="linear", bounds_error=True)

    def interp(points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return re(p) + 1j * im(p)

    return interp
