"""Symmetric minimisation of the discrete energy in the octant.

The unknowns are the free components of the octant field: the real part
away from ``{x=0} ∪ {y=0}``, the imaginary part away from ``{z=0}``, both
away from the spherical boundary where ``u = g_R``.  The free components on
a face satisfy the natural (mirror) Neumann condition of the octant energy.
"""

from __future__ import annotations

import logging
import time
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import line_search

from .boundary import BoundaryDatum, eval_g_R, eval_vortex_map
from .energy import energy_and_gradient, quadrature_weights
from .geometry import ComplexField, NodeClass, OctantGeometry
from .io import write_csv

logger = logging.getLogger(__name__)

OPTIMIZERS = ("lbfgs", "cg", "gd")


class SolverError(RuntimeError):
    pass


@dataclass
class SolveConfig:
    max_iters: int = 4000
    grad_tol: float = 1e-6
    energy_tol: float = 1e-15
    truncate_every: int = 10
    optimizer: str = "lbfgs"
    memory: int = 12
    seed: int = 0
    epsilon: float = 1.0
    debug: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise SolverError("max_iters must be >= 1")
        if not (self.grad_tol > 0 and self.energy_tol > 0):
            raise SolverError("tolerances must be positive")
        if self.truncate_every < 1:
            raise SolverError("truncate_every must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise SolverError(f"optimizer must be one of {OPTIMIZERS}")


@dataclass
class SolveReport:
    iterations: int
    energies: list = field(repr=False)
    grad_norms: list = field(repr=False)
    step_lengths: list = field(repr=False)
    final_energy: float
    final_residual: float
    termination: str
    wall_time: float

    def write_csv(self, path):
        rows = [
            (k, float(e), float(g), float(s))
            for k, (e, g, s) in enumerate(zip(self.energies, self.grad_norms, self.step_lengths))
        ]
        write_csv(path, ["iter", "energy", "grad_norm", "step_len"], rows)


def initialize(geom: OctantGeometry, datum: BoundaryDatum, random=False, seed=0) -> ComplexField:
    """Sample ``v_1 = min{d_X, 1} g(x/|x|)`` on the grid (sphere nodes get
    ``g_R``, which coincides with ``v_1`` there).

    ``random=True`` replaces the free values by noise in the unit disk
    while keeping the boundary values, to probe other minimisers.
    """
    if getattr(datum, "R", None) is not None and abs(datum.R - geom.R) > 1e-12:
        raise SolverError("datum and geometry radii differ")
    X = geom.coordinates()
    live = ~geom.exterior_mask
    u = np.zeros(geom.shape, dtype=complex)
    u[live] = eval_vortex_map(datum, X[live], m=1.0)
    sph = geom.sphere_mask
    u[sph] = eval_g_R(datum, X[sph], geom.R)
    if random:
        rng = np.random.default_rng(seed)
        free = geom.free_mask
        k = int(np.count_nonzero(free))
        r = np.sqrt(rng.uniform(size=k))
        a = rng.uniform(0, np.pi / 2, size=k)
        u[free] = r * np.exp(1j * a)
    return enforce_bcs(truncate_unit_disk(ComplexField(geom, u)))


def boundary_values(f: ComplexField):
    return f.values[f.geometry.sphere_mask].copy()


def enforce_bcs(f: ComplexField, sphere_values=None) -> ComplexField:
    """Zero the constrained face components; optionally reinstate the
    Dirichlet values on the sphere nodes."""
    geom = f.geometry
    u = f.values.copy()
    c = geom.node_class
    xy = (c & (NodeClass.FACE_X0 | NodeClass.FACE_Y0)) != 0
    z = (c & NodeClass.FACE_Z0) != 0
    u.real[xy] = 0.0
    u.imag[z] = 0.0
    if sphere_values is not None:
        u[geom.sphere_mask] = sphere_values
        u.real[xy] = 0.0
        u.imag[z] = 0.0
    u[geom.exterior_mask] = 0.0
    return ComplexField(geom, u)


def truncate_unit_disk(f):
    """Pointwise radial projection ``z -> z min{1, 1/|z|}``."""
    vals = f.values if isinstance(f, ComplexField) else np.asarray(f, dtype=complex)
    a = np.abs(vals)
    out = np.where(a > 1.0, vals / np.where(a > 1.0, a, 1.0), vals)
    # rounding can leave |z/|z|| one ulp above 1; pull those inside so the
    # projection is idempotent
    over = np.abs(out) > 1.0
    if np.any(over):
        out[over] *= np.nextafter(1.0, 0.0)
    return ComplexField(f.geometry, out) if isinstance(f, ComplexField) else out


def _ghost_padded(u):
    """Octant array padded by one mirror layer below index 0 on each axis
    (odd real / even imaginary across x=0, y=0; the reverse across z=0)."""
    nx, ny, nz = u.shape
    p = np.zeros((nx + 1, ny + 1, nz + 1), dtype=complex)
    p[1:, 1:, 1:] = u
    p[0, 1:, 1:] = -np.conj(u[1])
    p[:, 0, 1:] = -np.conj(p[:, 2, 1:])
    p[:, :, 0] = np.conj(p[:, :, 2])
    return p


def laplacian_residual(u, h, epsilon=1.0):
    """``Δ_h u + u(1-|u|^2)/eps^2`` at every octant node that has all six
    neighbours (ghosts across the faces); NaN on the last layer."""
    p = _ghost_padded(u)
    c = p[1:-1, 1:-1, 1:-1]
    lap = (
        p[2:, 1:-1, 1:-1] + p[:-2, 1:-1, 1:-1]
        + p[1:-1, 2:, 1:-1] + p[1:-1, :-2, 1:-1]
        + p[1:-1, 1:-1, 2:] + p[1:-1, 1:-1, :-2]
        - 6 * c
    ) / h**2
    res = np.full(u.shape, np.nan + 0j)
    res[:-1, :-1, :-1] = lap + c * (1 - np.abs(c) ** 2) / epsilon**2
    return res


def el_residual(f: ComplexField, epsilon=1.0, where="interior"):
    """Relative RMS of the 7-point Euler-Lagrange residual.

    ``where="interior"`` uses nodes off the symmetry faces and away from
    the fractional boundary cells; ``"faces"`` uses the face nodes of the
    same region (mirror ghosts supply the missing neighbours).
    """
    geom = f.geometry
    u = f.values
    res = laplacian_residual(u, geom.h, epsilon)
    deep = geom.full_ball_deep_mask()
    on_face = (geom.node_class & (NodeClass.FACE_X0 | NodeClass.FACE_Y0 | NodeClass.FACE_Z0)) != 0
    mask = deep & (~on_face if where == "interior" else on_face)
    if not np.any(mask):
        return 0.0
    r = res[mask]
    rms = np.sqrt(np.mean(np.abs(r) ** 2))
    scale = (1.0 + np.max(np.abs(u[~geom.exterior_mask]))) / geom.h**2
    return float(rms / scale)


class _Problem:
    """Energy restricted to the free components, as a function of a flat
    real vector."""

    def __init__(self, f0: ComplexField, epsilon):
        self.geom = f0.geometry
        self.base = f0.values.copy()
        self.q = quadrature_weights(self.geom)
        self.re_free, self.im_free = self.geom.component_masks()
        self.n_re = int(np.count_nonzero(self.re_free))
        self.epsilon = epsilon
        self.n_evals = 0
        self._cache_x = None
        self._cache = None

    def pack(self, u):
        return np.concatenate([u.real[self.re_free], u.imag[self.im_free]])

    def unpack(self, x):
        u = self.base.copy()
        u.real[self.re_free] = x[: self.n_re]
        u.imag[self.im_free] = x[self.n_re:]
        return u

    def evaluate(self, x):
        if self._cache_x is not None and np.array_equal(x, self._cache_x):
            return self._cache
        u = self.unpack(x)
        e, g = energy_and_gradient(u, self.q, self.epsilon)
        self.n_evals += 1
        gv = np.concatenate([g.real[self.re_free], g.imag[self.im_free]])
        self._cache_x = x.copy()
        self._cache = (e, gv)
        return self._cache

    def f(self, x):
        return self.evaluate(x)[0]

    def g(self, x):
        return self.evaluate(x)[1]


def _backtracking(prob, x, fx, gx, d, alpha0=1.0, c1=1e-4, shrink=0.5, max_halvings=60):
    slope = float(gx @ d)
    alpha = alpha0
    for _ in range(max_halvings):
        fn = prob.f(x + alpha * d)
        if np.isfinite(fn) and fn <= fx + c1 * alpha * slope:
            return alpha, fn
        alpha *= shrink
    return None, fx


def _lbfgs_direction(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in reversed(list(zip(S, Y))):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        alphas.append((rho, a))
        q -= a * y
    if S:
        s, y = S[-1], Y[-1]
        q *= float(s @ y) / float(y @ y)
    else:
        q *= 1.0 / max(np.linalg.norm(g), 1e-300)
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def minimize(f0: ComplexField, cfg: SolveConfig | None = None):
    """Descend from ``f0`` (which must satisfy the boundary conditions)."""
    cfg = cfg or SolveConfig()
    t0 = time.perf_counter()
    geom = f0.geometry
    prob = _Problem(f0, cfg.epsilon)
    x = prob.pack(f0.values)
    fx, gx = prob.evaluate(x)
    if not np.isfinite(fx):
        raise SolverError("initial energy is not finite")
    g0 = float(np.linalg.norm(gx))
    energies, gnorms, steps = [fx], [g0], [0.0]
    S, Y = deque(maxlen=cfg.memory), deque(maxlen=cfg.memory)
    d_prev = None
    g_prev = None
    reason = "max_iters"
    it = 0
    if g0 == 0.0:
        reason = "grad_tol"
    while reason == "max_iters" and it < cfg.max_iters:
        it += 1
        if cfg.optimizer == "lbfgs":
            d = _lbfgs_direction(gx, list(S), list(Y))
        elif cfg.optimizer == "cg" and d_prev is not None:
            beta = max(0.0, float(gx @ (gx - g_prev)) / float(g_prev @ g_prev))
            d = -gx + beta * d_prev
        else:
            d = -gx / max(np.linalg.norm(gx), 1e-300) if cfg.optimizer != "lbfgs" else -gx
        if float(gx @ d) >= 0:
            S.clear()
            Y.clear()
            d = -gx / max(np.linalg.norm(gx), 1e-300)
        c2 = 0.9 if cfg.optimizer == "lbfgs" else 0.1
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="The line search algorithm")
            alpha, _, _, fn, _, _ = line_search(
                prob.f, prob.g, x, d, gfk=gx, old_fval=fx, c1=1e-4, c2=c2, maxiter=40
            )
        if alpha is None or fn is None or not np.isfinite(fn) or fn > fx:
            # fall back to steepest descent with backtracking
            S.clear()
            Y.clear()
            d = -gx / max(np.linalg.norm(gx), 1e-300)
            alpha, fn = _backtracking(prob, x, fx, gx, d, alpha0=geom.h**-1)
            if alpha is None:
                reason = "line_search_failure"
                it -= 1
                break
        x_new = x + alpha * d
        fn, gn = prob.evaluate(x_new)
        if not np.isfinite(fn):
            raise SolverError(f"energy became non-finite at iteration {it}")
        s = x_new - x
        y = gn - gx
        if float(y @ s) > 1e-12 * float(s @ s):
            S.append(s)
            Y.append(y)
        g_prev, d_prev = gx, d
        step = float(np.linalg.norm(s))
        f_old = fx
        x, fx, gx = x_new, fn, gn

        if it % cfg.truncate_every == 0:
            u = prob.unpack(x)
            ut = truncate_unit_disk(u)
            if np.any(ut != u):
                x = prob.pack(ut)
                fx, gx = prob.evaluate(x)
                S.clear()
                Y.clear()
                d_prev = None
        if cfg.debug:
            cur = ComplexField(geom, prob.unpack(x))
            again = enforce_bcs(cur, boundary_values(f0))
            if not np.array_equal(again.values, cur.values):
                raise SolverError(f"boundary conditions drifted at iteration {it}")

        gn_norm = float(np.linalg.norm(gx))
        energies.append(fx)
        gnorms.append(gn_norm)
        steps.append(step)
        if gn_norm <= cfg.grad_tol * g0:
            reason = "grad_tol"
        elif abs(f_old - fx) <= cfg.energy_tol * max(abs(fx), 1.0):
            reason = "energy_tol"
        if it % 200 == 0:
            logger.info("iter %d energy %.12g |g|/|g0| %.3e", it, fx, gn_norm / g0)

    u = truncate_unit_disk(prob.unpack(x))
    out = ComplexField(geom, u)
    final_e = prob.f(prob.pack(u))
    if final_e < energies[-1]:
        energies[-1] = final_e
    # the trace is kept for the octant; report ball energies
    energies = [8.0 * e for e in energies]
    report = SolveReport(
        iterations=it,
        energies=energies,
        grad_norms=gnorms,
        step_lengths=steps,
        final_energy=energies[-1],
        final_residual=el_residual(out, cfg.epsilon),
        termination=reason,
        wall_time=time.perf_counter() - t0,
    )
    return out, report
