"""Competitor maps ``v_m = min{m d_X, 1} g(x/|x|)``, their energies, and the
planar radial vortex profile.

The competitor energy is integrated direction by direction: along a ray
``x = rho * theta`` the modulus is ``min{m rho d(theta), 1}`` with
``d(theta) = d_X(theta)``, so the radial integral is a polynomial in
``rho`` that can be written down exactly.  What remains is a surface
integral over the sphere.  Inside the vortex caps the phase of ``g`` is the
azimuth around the cap center, the integrand depends on the geodesic
radius alone and a 1D adaptive quadrature handles the ``1/t^2`` growth;
outside the caps a degree-5 triangle rule on the phase mesh is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.linalg import solve_banded
from scipy.optimize import fsolve

from .boundary import BLEND_FRACTION, BoundaryDatum, OctantMesh, eval_vortex_map, rest_phase
from .geometry import E1, E2, dist_to_cross, field_interpolator
from .io import write_csv

OCTANTS = 8
_S15 = math.sqrt(15.0)
# 7-point degree-5 rule on the reference triangle (barycentric, weights sum to 1)
_A1, _B1 = (9 - 2 * _S15) / 21, (6 + _S15) / 21
_A2, _B2 = (9 + 2 * _S15) / 21, (6 - _S15) / 21
_W1, _W2 = (155 + _S15) / 1200, (155 - _S15) / 1200
TRI_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
TRI_W = np.array([9 / 40, _W1, _W1, _W1, _W2, _W2, _W2])
REFINE_DEPTH = 4


class CompetitorError(ValueError):
    pass


@dataclass
class CompetitorMap:
    m: float
    datum: BoundaryDatum = field(repr=False)

    def __post_init__(self):
        if not self.m > 0:
            raise CompetitorError("m must be positive")

    def __call__(self, x):
        return eval_v_m(self, x)


def eval_v_m(cmap: CompetitorMap, x):
    """``min{m d_X(x), 1} g(x/|x|)``; 0 on the cross and at the origin."""
    return eval_vortex_map(cmap.datum, x, cmap.m)


# ---------------------------------------------------------------------------
# radial integrals along a ray


def _inner_antiderivative(rho, m, d, d2G):
    """Antiderivative of ``rho^2 e`` inside the tube ``m rho d < 1``."""
    md2 = (m * d) ** 2
    r3 = rho**3
    return 0.5 * m * m * (1 + d2G) * r3 / 3 + 0.25 * (
        r3 / 3 - 2 * md2 * rho**5 / 5 + md2 * md2 * rho**7 / 7
    )


def radial_energy(d, G, m, r1, r2):
    """``int_{r1}^{r2} rho^2 e(v_m)(rho theta) d rho`` for directions with
    ``d = d_X(theta)`` and ``G = |grad_T g|^2(theta)``."""
    d = np.asarray(d, dtype=float)
    G = np.asarray(G, dtype=float)
    with np.errstate(divide="ignore"):
        rs = np.where(d > 0, 1.0 / (m * d), np.inf)
    d2G = d * d * G
    a = np.minimum(r1, rs)
    b = np.minimum(r2, rs)
    inner = _inner_antiderivative(b, m, d, d2G) - _inner_antiderivative(a, m, d, d2G)
    outer = 0.5 * G * np.maximum(r2 - np.maximum(r1, rs), 0.0)
    return inner + outer


def shell_density(d, G, m, r, kind="shell"):
    """Per-direction radial density at radius ``r`` times ``r^2``.

    ``kind="shell"`` gives ``r^2 e(v_m)``, the derivative of the ball energy;
    ``kind="surface"`` keeps only ``r^2 |grad_T v_m|^2 / 2``.
    """
    d = np.asarray(d, dtype=float)
    G = np.asarray(G, dtype=float)
    inside = m * r * d < 1
    s2 = (m * r * d) ** 2
    if kind == "shell":
        core = r * r * (0.5 * m * m * (1 + d * d * G) + 0.25 * (1 - s2) ** 2)
    elif kind == "surface":
        core = 0.5 * r * r * m * m * (1 - d * d + d * d * G)
    else:
        raise CompetitorError(f"unknown density kind {kind!r}")
    return np.where(inside, core, 0.5 * G)


# ---------------------------------------------------------------------------
# sphere quadrature outside the vortex caps


def _angle(theta, c):
    cr = np.linalg.norm(np.cross(theta, c), axis=-1)
    return np.arctan2(cr, theta @ c)


@dataclass
class SpherePoints:
    """Quadrature nodes (octant unit vectors) and solid-angle weights for the
    part of the octant sphere outside both vortex caps."""

    theta: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    d: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)


def _subdivide(P):
    """Split planar triangles ``(T, 3, 3)`` into four."""
    a, b, c = P[:, 0], P[:, 1], P[:, 2]
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return np.concatenate([
        np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
        np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1),
    ])


def _rule_points(P):
    q = np.einsum("pk,tkc->tpc", TRI_BARY, P)
    area = 0.5 * np.linalg.norm(np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]), axis=-1)
    nq = np.linalg.norm(q, axis=-1)
    # solid angle of a planar element on x+y+z=1 seen from the origin
    w = TRI_W[None, :] * area[:, None] * (1 / math.sqrt(3)) / nq**3
    return q / nq[..., None], w


def _cut(P, cap_radius, levels):
    """Triangles on which the integrand has a kink or a cap edge: cap
    circles, the diagonal x=y (switch of nearest axis) and the tube
    thresholds ``d = level``.  Tested on the vertices and the rule nodes."""
    th, _ = _rule_points(P)
    V = P / np.linalg.norm(P, axis=-1, keepdims=True)
    pts = np.concatenate([V, th], axis=1)
    flags = np.zeros(len(P), dtype=bool)
    for c in (E1, E2):
        t = _angle(pts, c)
        for edge in (cap_radius, cap_radius * (1 + BLEND_FRACTION)):
            flags |= (t.min(1) < edge) & (t.max(1) >= edge)
    s = pts[..., 0] - pts[..., 1]
    flags |= (s.min(1) < 0) & (s.max(1) > 0)
    if levels:
        d = dist_to_cross(pts)
        for lv in levels:
            flags |= (d.min(1) < lv) & (d.max(1) > lv)
    return flags


def rest_quadrature(datum: BoundaryDatum, mesh_level, levels=(), depth=REFINE_DEPTH) -> SpherePoints:
    """Triangle quadrature of the octant sphere minus the two quarter caps,
    on the planar mesh of level ``mesh_level`` (nested in the phase mesh)."""
    if mesh_level < datum.mesh_level:
        raise CompetitorError(
            f"quadrature mesh level {mesh_level} is coarser than the phase mesh level {datum.mesh_level}"
        )
    mesh = OctantMesh(mesh_level)
    n = mesh.n
    planar = np.column_stack([mesh.ij[:, 0], mesh.ij[:, 1], n - mesh.ij.sum(1)]) / n
    P = planar[mesh.triangles]
    c = datum.cap_radius
    thetas, weights = [], []
    for k in range(depth + 1):
        cut = _cut(P, c, levels) if k < depth else np.zeros(len(P), dtype=bool)
        th, w = _rule_points(P[~cut])
        thetas.append(th.reshape(-1, 3))
        weights.append(w.ravel())
        if not np.any(cut):
            break
        P = _subdivide(P[cut])
    th = np.concatenate(thetas)
    w = np.concatenate(weights)
    keep = (_angle(th, E1) >= c) & (_angle(th, E2) >= c)
    th, w = th[keep], w[keep]
    _, gr = rest_phase(datum.phase, th, with_gradient=True)
    G = np.sum(gr * gr, axis=-1)
    return SpherePoints(theta=th, weights=w, d=dist_to_cross(th), G=G)


def _cap_integral(fun, cap_radius, breaks):
    """``int_0^c fun(t) sin t dt`` with breakpoints at the kinks."""
    pts = sorted(b for b in breaks if 0 < b < cap_radius)
    val, _ = quad(lambda t: fun(t) * math.sin(t), 0.0, cap_radius, points=pts or None,
                  epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def _cap_breaks(m, radii):
    out = []
    for r in radii:
        if r > 0 and m * r > 1:
            out.append(math.asin(1.0 / (m * r)))
    return out


def _check_radii(r1, r2):
    if not (0 <= r1 <= r2) or not math.isfinite(r2):
        raise CompetitorError(f"need 0 <= r1 <= r2 < inf, got r1={r1}, r2={r2}")


def _tube_levels(m, radii):
    return tuple(1.0 / (m * r) for r in radii if r > 0 and m * r > 1)


def annulus_energy_quadrature(cmap: CompetitorMap, r1, r2, mesh_level=6, sphere=None):
    """Energy of ``v_m`` in ``B_{r2} \\ B_{r1}`` (full ball, all octants)."""
    r1 = float(r1)
    r2 = float(r2)
    _check_radii(r1, r2)
    if r1 == r2:
        return 0.0
    m = cmap.m
    datum = cmap.datum
    c = datum.cap_radius
    if sphere is None:
        sphere = rest_quadrature(datum, mesh_level, _tube_levels(m, (r1, r2)))
    rest = math.fsum((sphere.weights * radial_energy(sphere.d, sphere.G, m, r1, r2)).tolist())

    def cap_fun(t):
        s = math.sin(t)
        return float(radial_energy(s, 1.0 / (s * s) if s > 0 else 0.0, m, r1, r2))

    cap = _cap_integral(cap_fun, c, _cap_breaks(m, (r1, r2)))
    # two quarter caps per octant, each spanning a right angle of azimuth
    return OCTANTS * (rest + 2 * (math.pi / 2) * cap)


def energy_radius_derivative(cmap: CompetitorMap, r, mesh_level=6, kind="shell", sphere=None):
    """``int_{S^2} r^2 e dtheta`` (``kind="shell"``, the derivative of the
    ball energy) or its tangential-gradient part (``kind="surface"``)."""
    r = float(r)
    if not r > 0:
        raise CompetitorError("radius must be positive")
    m = cmap.m
    datum = cmap.datum
    if sphere is None:
        sphere = rest_quadrature(datum, mesh_level, _tube_levels(m, (r,)))
    rest = math.fsum((sphere.weights * shell_density(sphere.d, sphere.G, m, r, kind)).tolist())

    def cap_fun(t):
        s = math.sin(t)
        return float(shell_density(s, 1.0 / (s * s), m, r, kind))

    cap = _cap_integral(cap_fun, datum.cap_radius, _cap_breaks(m, (r,)))
    return OCTANTS * (rest + math.pi * cap)


def fit_log_slope(radii, values):
    """Least squares ``values ~ alpha log r + beta``."""
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(r) < 8:
        raise CompetitorError("slope fit needs at least 8 radii")
    A = np.column_stack([np.log(r), np.ones_like(r)])
    (alpha, beta), *_ = np.linalg.lstsq(A, v, rcond=None)
    return float(alpha), float(beta)


def slope_fit(cmap: CompetitorMap, radii, mesh_level=6, kind="surface"):
    """Fit ``dE/dr = alpha log r + beta`` over ``radii`` (>= 8 radii, all
    >= 10).  Returns ``(alpha, beta)``."""
    radii = np.asarray(radii, dtype=float)
    if len(radii) < 8:
        raise CompetitorError("slope fit needs at least 8 radii")
    if np.any(radii < 10):
        raise CompetitorError("slope fit radii must be >= 10")
    sphere = rest_quadrature(cmap.datum, mesh_level, _tube_levels(cmap.m, radii))
    vals = [energy_radius_derivative(cmap, r, mesh_level, kind, sphere) for r in radii]
    return fit_log_slope(radii, vals)


def energy_excess_fit(radii, energies):
    """Smallest ``C`` with ``E(r) - 4 pi r log r <= C r`` on the samples.

    Returns ``(C, residual, spread)``: ``residual`` is the RMS relative misfit
    of ``E`` against ``4 pi r log r + C r``; ``spread`` is the RMS of
    ``(E - 4 pi r log r)/r - C`` relative to ``|C|``.
    """
    r = np.asarray(radii, dtype=float)
    E = np.asarray(energies, dtype=float)
    q = (E - 4 * math.pi * r * np.log(r)) / r
    C = float(np.max(q))
    model = 4 * math.pi * r * np.log(r) + C * r
    residual = float(np.sqrt(np.mean(((E - model) / E) ** 2)))
    spread = float(np.sqrt(np.mean((q - C) ** 2)) / abs(C)) if C != 0 else float("inf")
    return C, residual, spread


def competitor_sphere(cmap: CompetitorMap, radii, mesh_level=6) -> SpherePoints:
    """One point set resolving the tube kinks of every radius in ``radii``;
    sharing it between annuli makes the quadrature exactly additive."""
    return rest_quadrature(cmap.datum, mesh_level, _tube_levels(cmap.m, radii))


def monte_carlo_energy(cmap: CompetitorMap, r, n_samples=10**7, batch=10**6, step=1e-5, seed=0):
    """Plain Monte-Carlo estimate of the energy of ``v_m`` in ``B_r`` with
    gradients from central differences.  Returns ``(estimate, std_error)``."""
    rng = np.random.default_rng(seed)
    vol = 4 / 3 * math.pi * r**3
    total = 0.0
    total2 = 0.0
    done = 0
    while done < n_samples:
        k = min(batch, n_samples - done)
        x = rng.normal(size=(k, 3))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        x *= r * rng.uniform(size=(k, 1)) ** (1 / 3)
        grad2 = np.zeros(k)
        for a in range(3):
            e = np.zeros(3)
            e[a] = step
            du = (eval_v_m(cmap, x + e) - eval_v_m(cmap, x - e)) / (2 * step)
            grad2 += np.abs(du) ** 2
        mod2 = np.abs(eval_v_m(cmap, x)) ** 2
        dens = 0.5 * grad2 + 0.25 * (1 - mod2) ** 2
        total += math.fsum(dens.tolist())
        total2 += math.fsum((dens * dens).tolist())
        done += k
    mean = total / n_samples
    var = max(total2 / n_samples - mean * mean, 0.0)
    return vol * mean, vol * math.sqrt(var / n_samples)


def write_competitor_csv(path, cmap: CompetitorMap, radii, mesh_level=6):
    rows = []
    for r in radii:
        E = annulus_energy_quadrature(cmap, 0.0, r, mesh_level)
        dEdr = energy_radius_derivative(cmap, r, mesh_level, kind="shell")
        rows.append((float(r), E, dEdr))
    write_csv(path, ["r", "E", "dEdr"], rows)
    return rows


# ---------------------------------------------------------------------------
# planar radial vortex profile


@dataclass
class RadialProfile:
    degree: int
    r_max: float
    r: np.ndarray = field(repr=False)
    rho: np.ndarray = field(repr=False)
    newton_steps: int = 0

    def __call__(self, t):
        return np.interp(t, self.r, self.rho)

    def write_csv(self, path):
        write_csv(path, ["r", "rho"], [(float(a), float(b)) for a, b in zip(self.r, self.rho)])


def far_field_value(d, r_max):
    return 1.0 - d * d / (2.0 * r_max * r_max)


def _check_profile_args(d, r_max, n_points):
    if int(d) != d or d < 1:
        raise CompetitorError("degree must be an integer >= 1")
    if r_max < 20:
        raise CompetitorError("r_max must be >= 20")
    if n_points < 200:
        raise CompetitorError("n_points must be >= 200")


def _profile_residual(rho, r, dr, d):
    """Interior residual of ``rho'' + rho'/r - d^2 rho/r^2 + rho(1-rho^2)``
    and its tridiagonal Jacobian in banded storage."""
    ri = r[1:-1]
    lo = 1 / dr**2 - 1 / (2 * ri * dr)
    up = 1 / dr**2 + 1 / (2 * ri * dr)
    mid = -2 / dr**2 - d * d / ri**2
    p = rho[1:-1]
    F = lo * rho[:-2] + mid * p + up * rho[2:] + p * (1 - p * p)
    ab = np.zeros((3, len(p)))
    ab[0, 1:] = up[:-1]
    ab[1] = mid + 1 - 3 * p * p
    ab[2, :-1] = lo[1:]
    return F, ab


def radial_profile(d=1, r_max=20.0, n_points=4001, tol=1e-12, max_sweeps=200) -> RadialProfile:
    """Degree-``d`` planar vortex modulus by damped Newton relaxation of the
    centered finite-difference discretisation."""
    _check_profile_args(d, r_max, n_points)
    r = np.linspace(0.0, r_max, int(n_points))
    dr = r[1] - r[0]
    rho = (r / np.sqrt(r * r + 2 * d * d)) ** d
    rho[0] = 0.0
    rho[-1] = far_field_value(d, r_max)
    F, ab = _profile_residual(rho, r, dr, d)
    norm = np.linalg.norm(F, np.inf)
    for sweep in range(1, max_sweeps + 1):
        step = solve_banded((1, 1), ab, -F)
        lam = 1.0
        while True:
            trial = rho.copy()
            trial[1:-1] += lam * step
            Ft, abt = _profile_residual(trial, r, dr, d)
            nt = np.linalg.norm(Ft, np.inf)
            if nt < norm or lam < 1e-4:
                break
            lam *= 0.5
        rho, F, ab, norm = trial, Ft, abt, nt
        if lam * np.max(np.abs(step)) < tol:
            break
    else:
        raise CompetitorError(f"radial profile relaxation did not converge in {max_sweeps} sweeps")
    if np.any(np.diff(rho) < 0) or np.any(rho[:-1] >= 1) or np.any(rho < 0):
        raise CompetitorError("radial profile is not monotone in [0, 1)")
    return RadialProfile(degree=int(d), r_max=float(r_max), r=r, rho=rho, newton_steps=sweep)


def _profile_rhs(d):
    def rhs(r, y):
        p, q = y
        return [q, -q / r + d * d * p / (r * r) - p * (1 - p * p)]

    return rhs


def shooting_profile(d=1, r_max=20.0, r_eval=None, r0=1e-3, rtol=1e-13, atol=1e-15):
    """Two-sided shooting for the same boundary value problem: a series start
    ``a r^d (1 - r^2/(4(d+1)))`` near 0 and the far-field value at ``r_max``
    with unknown slope, matched in value and slope at ``r_max / 2``."""
    rm = r_max / 2
    rhs = _profile_rhs(d)

    def left(a, t_eval=None):
        y0 = [a * r0**d * (1 - r0 * r0 / (4 * (d + 1))),
              a * (d * r0 ** (d - 1) - (d + 2) * r0 ** (d + 1) / (4 * (d + 1)))]
        return solve_ivp(rhs, (r0, rm), y0, method="DOP853", rtol=rtol, atol=atol, t_eval=t_eval)

    def right(s, t_eval=None):
        y0 = [far_field_value(d, r_max), s]
        return solve_ivp(rhs, (r_max, rm), y0, method="DOP853", rtol=rtol, atol=atol, t_eval=t_eval)

    def mismatch(p):
        a, s = p
        yl = left(a).y[:, -1]
        yr = right(s).y[:, -1]
        return [yl[0] - yr[0], yl[1] - yr[1]]

    guess = radial_profile(d, r_max, 2001)
    a0 = guess.rho[1] / guess.r[1] ** d
    s0 = (guess.rho[-1] - guess.rho[-2]) / (guess.r[1])
    sol, info, ier, msg = fsolve(mismatch, [a0, s0], xtol=1e-14, full_output=True)
    if ier != 1:
        raise CompetitorError(f"shooting did not converge: {msg}")
    a, s = sol
    if r_eval is None:
        r_eval = np.linspace(0, r_max, 2001)
    r_eval = np.asarray(r_eval, dtype=float)
    out = np.zeros_like(r_eval)
    tiny = r_eval < r0
    out[tiny] = a * r_eval[tiny] ** d * (1 - r_eval[tiny] ** 2 / (4 * (d + 1)))
    lm = (r_eval >= r0) & (r_eval <= rm)
    if np.any(lm):
        out[lm] = left(a, r_eval[lm]).y[0]
    rmask = r_eval > rm
    if np.any(rmask):
        tv = r_eval[rmask][::-1]
        out[rmask] = right(s, tv).y[0][::-1]
    return out


def cross_section_compare(f, x0, profile: RadialProfile, normal=(0.0, 0.0, 1.0), t_max=2.0, n_samples=201):
    """``sup_t | |u(x0 + t n)| - rho(t) |`` over ``t in [0, t_max]``."""
    x0 = np.asarray(x0, dtype=float)
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    if abs(x0[1]) > 0 or abs(x0[2]) > 0:
        raise CompetitorError("x0 must lie on the x-axis")
    if abs(n[0]) > 1e-12:
        raise CompetitorError("the transversal direction must be orthogonal to the x-axis")
    geom = f.geometry
    if abs(x0[0]) < geom.R / 2:
        raise CompetitorError("x0 must satisfy |x0| >= R/2")
    t = np.linspace(0.0, t_max, n_samples)
    pts = x0[None, :] + t[:, None] * n[None, :]
    lim = (geom.dims[0] - 1) * geom.h
    if np.linalg.norm(pts[-1]) > geom.R or np.any(np.abs(pts) > lim):
        raise CompetitorError("transversal segment leaves the grid")
    u = field_interpolator(f)(pts)
    return float(np.max(np.abs(np.abs(u) - profile(t))))
