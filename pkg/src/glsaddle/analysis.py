"""Diagnostics of a solved field: zero set, winding numbers, energy growth,
clearing-out, blow-down concentration, and a sampled checker for the growth
reabsorption lemma ``f(r) <= A r log r + B sqrt(r) sqrt(f(lam r))``."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .boundary import winding_of_samples
from .energy import (
    EnergyConfig,
    EnergyProfile,
    discrete_energy,
    energy_profile,
    fit_rlogr,
    tube_mass_fraction,
)
from .geometry import ComplexField, dist_to_cross, field_interpolator

MIN_LOOP_SAMPLES = 64
LOOP_MODULUS_FLOOR = 0.1
DEGREE_RESIDUAL_TOL = 0.1
CROSS_MASS = 4.0  # length of the cross inside the unit ball


class AnalysisError(ValueError):
    pass


@dataclass
class ZeroSet:
    points: np.ndarray = field(repr=False)
    distances: np.ndarray = field(repr=False)
    hausdorff: float
    empty: bool


def _live_nodes(f):
    geom = f.geometry
    X = geom.coordinates()
    live = ~geom.exterior_mask
    return X[live], f.values[live]


def extract_zero_set(f: ComplexField, threshold=0.5) -> ZeroSet:
    """Nodes of the symmetric extension with ``|u| < threshold`` and their
    distance to the cross.  ``hausdorff`` is the largest such distance."""
    if not 0 < threshold <= 0.5:
        raise AnalysisError("threshold must lie in (0, 1/2]")
    X, u = _live_nodes(f)
    low = np.abs(u) < threshold
    pts = X[low]
    # reflect octant points to all eight octants; d_X is reflection invariant
    signs = np.array([[sx, sy, sz] for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)], dtype=float)
    full = np.unique((pts[None, :, :] * signs[:, None, :]).reshape(-1, 3), axis=0)
    d = dist_to_cross(full) if len(full) else np.zeros(0)
    return ZeroSet(points=full, distances=d, hausdorff=float(d.max()) if len(d) else 0.0, empty=len(d) == 0)


def max_modulus_on_cross(f: ComplexField, r_max, spacing=None):
    """Largest interpolated ``|u|`` on points of the cross with ``|x| <= r_max``."""
    geom = f.geometry
    if not 0 < r_max <= geom.R:
        raise AnalysisError("r_max must lie in (0, R]")
    spacing = geom.h / 2 if spacing is None else spacing
    s = np.arange(-r_max, r_max + 0.5 * spacing, spacing)
    s = s[np.abs(s) <= r_max]
    z = np.zeros_like(s)
    pts = np.concatenate([np.column_stack([s, z, z]), np.column_stack([z, s, z])])
    return float(np.max(np.abs(field_interpolator(f)(pts))))


@dataclass
class DegreeResult:
    center: tuple
    radius: float
    axis: str
    n_samples: int
    winding: int
    residual: float
    min_modulus: float


_AXES = {"x": 0, "y": 1, "z": 2}


def loop_points(center, radius, axis, n_samples):
    """Circle around ``center`` in the plane normal to ``axis``, oriented by
    the right-hand rule about the positive axis."""
    a = 2 * np.pi * np.arange(n_samples) / n_samples
    c, s = np.cos(a), np.sin(a)
    k = _AXES[axis]
    # (e_{k+1}, e_{k+2}) is a positively oriented frame of the normal plane
    e1 = np.zeros(3)
    e2 = np.zeros(3)
    e1[(k + 1) % 3] = 1.0
    e2[(k + 2) % 3] = 1.0
    return np.asarray(center, dtype=float)[None, :] + radius * (c[:, None] * e1 + s[:, None] * e2)


def winding_number(f: ComplexField, center, radius, axis="x", n_samples=256) -> DegreeResult:
    if axis not in _AXES:
        raise AnalysisError("axis must be one of 'x', 'y', 'z'")
    if n_samples < MIN_LOOP_SAMPLES:
        raise AnalysisError(f"need at least {MIN_LOOP_SAMPLES} loop samples")
    pts = loop_points(center, radius, axis, n_samples)
    try:
        u = field_interpolator(f)(pts)
    except ValueError as exc:
        raise AnalysisError(f"degree loop leaves the grid: {exc}") from exc
    mn = float(np.min(np.abs(u)))
    if mn <= LOOP_MODULUS_FLOOR:
        raise AnalysisError(f"degree loop meets the vortex core (min |u| = {mn:.3g})")
    k, res = winding_of_samples(u)
    return DegreeResult(
        center=tuple(float(c) for c in center), radius=float(radius), axis=axis,
        n_samples=int(n_samples), winding=k, residual=res, min_modulus=mn,
    )


def fit_growth(profile: EnergyProfile):
    """``(a, b, residual)`` of ``E(r) ~ a r log r + b r``."""
    return fit_rlogr(profile.radii, profile.energies)


def clearing_out_check(f: ComplexField, modulus_floor=0.5):
    """Largest ``d_X`` over nodes with ``|u| < modulus_floor`` (0 if none)."""
    X, u = _live_nodes(f)
    low = np.abs(u) < modulus_floor
    if not np.any(low):
        return 0.0
    return float(np.max(dist_to_cross(X[low])))


def normalized_mass(energy, r):
    """Blow-down mass ``E(B_r) / (pi r log r)``; tends to 4 along the cross."""
    return energy / (math.pi * r * math.log(r))


@dataclass
class BlowdownRow:
    r: float
    mass: float
    tube_fraction: float


@dataclass
class BlowdownReport:
    delta_fraction: float
    rows: list
    fraction_nondecreasing: bool
    target_mass: float = CROSS_MASS


def blowdown_report(f: ComplexField, radii, delta_fraction=0.15, epsilon=1.0) -> BlowdownReport:
    if not 0 < delta_fraction < 0.25:
        raise AnalysisError("delta_fraction must lie in (0, 1/4)")
    R = f.geometry.R
    rows = []
    for r in radii:
        r = float(r)
        if not math.e < r <= R:
            raise AnalysisError(f"blow-down radius {r} outside (e, R]")
        cfg = EnergyConfig(epsilon=epsilon, ball=r)
        E = discrete_energy(f, cfg)
        frac = tube_mass_fraction(f, cfg, delta_fraction * r)
        rows.append(BlowdownRow(r=r, mass=normalized_mass(E, r), tube_fraction=frac))
    fr = [row.tube_fraction for row in rows]
    mono = all(b >= a for a, b in zip(fr, fr[1:]))
    return BlowdownReport(delta_fraction=float(delta_fraction), rows=rows, fraction_nondecreasing=mono)


# ---------------------------------------------------------------------------
# growth reabsorption lemma


@dataclass
class GrowthLemmaCase:
    A: float
    B: float
    K: float
    lam: float
    r0: float
    radii: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if min(self.A, self.B, self.K) <= 0:
            raise AnalysisError("A, B, K must be positive")
        if not self.lam > 1:
            raise AnalysisError("lambda must exceed 1")
        if self.r0 < 1:
            raise AnalysisError("r0 must be >= 1")
        if self.radii.shape != self.values.shape or self.radii.ndim != 1 or len(self.radii) < 2:
            raise AnalysisError("radii and values must be matching 1D tables")
        if np.any(np.diff(self.radii) <= 0):
            raise AnalysisError("radii must be increasing")
        if np.any(self.values <= 0):
            raise AnalysisError("sampled values must be positive")

    def interpolate(self, r):
        """Log-log interpolation of the sampled function."""
        return np.exp(np.interp(np.log(r), np.log(self.radii), np.log(self.values)))


@dataclass
class GrowthLemmaResult:
    verdict: str
    r1: float | None
    hypotheses_hold: bool
    conclusion_holds: bool | None
    checked_radii: np.ndarray = field(repr=False)


def _fmt_r(r):
    return f"{r:g}"


def r1_condition(A, B, lam, r):
    """Left and right sides of the choice of ``r_1``."""
    r = np.asarray(r, dtype=float)
    lhs = B * math.sqrt(lam) * np.sqrt(A * np.log(lam * r) + np.log(lam * r) ** (2 / 3))
    rhs = np.log(r) ** (2 / 3)
    return lhs, rhs


def conclusion_bound(A, B, lam, r):
    r = np.asarray(r, dtype=float)
    return A * r * np.log(r) + r * np.log(r) ** (2 / 3) + B * B * lam * lam * r


def compute_r1(case: GrowthLemmaCase):
    """Smallest sampled ``r >= r0`` (with ``r > 1``) from which the ``r_1``
    inequality holds at every larger sample; ``None`` if there is none."""
    r = case.radii
    ok = (r >= case.r0) & (r > 1)
    cand = r[ok]
    if len(cand) == 0:
        return None
    lhs, rhs = r1_condition(case.A, case.B, case.lam, cand)
    good = lhs <= rhs
    # trailing run of True
    if not good[-1]:
        return None
    k = len(good) - 1
    while k > 0 and good[k - 1]:
        k -= 1
    return float(cand[k])


def growth_lemma_check(case: GrowthLemmaCase) -> GrowthLemmaResult:
    r = case.radii
    if r[0] > case.r0 * (1 + 1e-12):
        raise AnalysisError("sampled radii do not reach down to r0")
    top = r[-1] / case.lam
    checked = r[(r >= case.r0) & (r <= top * (1 + 1e-12))]
    if len(checked) == 0:
        raise AnalysisError("radius coverage too short for the f(lam r) lookup")
    f = case.interpolate(checked)
    f_lam = case.interpolate(np.minimum(case.lam * checked, r[-1]))
    h1 = f <= case.A * checked * np.log(checked) + case.B * np.sqrt(checked) * np.sqrt(f_lam)
    if not np.all(h1):
        bad = checked[np.argmin(h1)]
        return GrowthLemmaResult(f"hypothesis-1-violated-at-{_fmt_r(bad)}", None, False, None, checked)
    h2 = f <= case.K * checked**3
    if not np.all(h2):
        bad = checked[np.argmin(h2)]
        return GrowthLemmaResult(f"hypothesis-2-violated-at-{_fmt_r(bad)}", None, False, None, checked)
    r1 = compute_r1(case)
    if r1 is None:
        return GrowthLemmaResult("hypotheses-hold", None, True, None, checked)
    # the conclusion is only implied where the hypotheses were verified
    tail = checked[checked > r1]
    if len(tail) == 0:
        return GrowthLemmaResult("hypotheses-hold", r1, True, None, checked)
    ok = case.interpolate(tail) <= conclusion_bound(case.A, case.B, case.lam, tail)
    if not np.all(ok):
        bad = tail[np.argmin(ok)]
        return GrowthLemmaResult(f"conclusion-violated-at-{_fmt_r(bad)}", r1, True, False, checked)
    return GrowthLemmaResult("conclusion-holds", r1, True, True, checked)


def induction_bound(A, B, K, lam, n, r):
    """Right side of the n-th induction stage."""
    r = np.asarray(r, dtype=float)
    e = 2.0 ** (-n)
    return (
        A * r * np.log(r) + r * np.log(r) ** (2 / 3)
        + B ** (2 - e) * K ** (e / 2) * lam**2 * r ** (1 + e)
    )


def induction_base_check(A, B, K, lam, r):
    """``A r log r + B sqrt(r) sqrt(K lam^3 r^3)`` against stage 0."""
    r = np.asarray(r, dtype=float)
    lhs = A * r * np.log(r) + B * np.sqrt(r) * np.sqrt(K * lam**3 * r**3)
    return lhs <= induction_bound(A, B, K, lam, 0, r)


def induction_step_check(A, B, K, lam, n, r):
    """Stage ``n`` fed through the recursion against stage ``n + 1``."""
    r = np.asarray(r, dtype=float)
    lhs = A * r * np.log(r) + B * np.sqrt(r) * np.sqrt(induction_bound(A, B, K, lam, n, lam * r))
    return lhs <= induction_bound(A, B, K, lam, n + 1, r)


# ---------------------------------------------------------------------------
# aggregate report


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def default_loops(R):
    """Degree loops at ``(±R/2, 0, 0)`` normal to x and ``(0, ±R/2, 0)``
    normal to y, with radius ``min(2, R/4)``."""
    c = R / 2
    rad = min(2.0, R / 4)
    return [
        ((c, 0.0, 0.0), rad, "x"), ((-c, 0.0, 0.0), rad, "x"),
        ((0.0, c, 0.0), rad, "y"), ((0.0, -c, 0.0), rad, "y"),
    ]


def default_radii(R):
    return [float(r) for r in range(3, int(math.floor(R)))]


def analyze_field(f: ComplexField, radii=None, loops=None, delta_fraction=0.15, threshold=0.5, epsilon=1.0):
    """All diagnostics in one JSON-ready dictionary."""
    R = f.geometry.R
    radii = default_radii(R) if radii is None else [float(r) for r in radii]
    loops = default_loops(R) if loops is None else loops
    zs = extract_zero_set(f, threshold)
    degrees = []
    for center, rad, axis in loops:
        try:
            degrees.append(asdict(winding_number(f, center, rad, axis)))
        except AnalysisError as exc:
            degrees.append({"center": list(center), "radius": rad, "axis": axis, "error": str(exc)})
    out = {
        "zero_set_hausdorff": zs.hausdorff,
        "zero_set_empty": zs.empty,
        "degrees": degrees,
        "fit_a": None,
        "fit_b": None,
        "fit_residual": None,
        "clearing_out_max_dx": clearing_out_check(f, 0.5),
        "blowdown": [],
        "radii": radii,
    }
    if len([r for r in radii if r >= math.e]) >= 3:
        prof = energy_profile(f, radii, epsilon)
        out["fit_a"], out["fit_b"], out["fit_residual"] = fit_growth(prof)
        out["energies"] = prof.energies.tolist()
    blow_r = [r for r in radii if r > math.e and 2 * f.geometry.h < delta_fraction * r < R / 4]
    if blow_r:
        rep = blowdown_report(f, blow_r, delta_fraction, epsilon)
        out["blowdown"] = [asdict(row) for row in rep.rows]
        out["blowdown_fraction_nondecreasing"] = rep.fraction_nondecreasing
    return _clean(out)


def write_analysis_json(path, analysis):
    text = json.dumps(analysis, indent=2, sort_keys=True, default=_json_default)
    with open(path, "w") as fh:
        fh.write(text + "\n")


def _json_default(obj):
    return _clean(obj)
