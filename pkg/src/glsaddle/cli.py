"""Command line entry point: ``glsaddle <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import analysis, competitors
from .boundary import DEFAULT_CAP_RADIUS, DEFAULT_MESH_LEVEL, build_boundary_datum, write_phi1
from .geometry import build_octant_geometry
from .io import read_csv, read_glf1, write_glf1
from .solver import SolveConfig, initialize, minimize

THREADS_ENV = "GLSADDLE_THREADS"
OPTIMIZER_ALIASES = {
    "lbfgs": "lbfgs",
    "limited-memory-quasi-newton": "lbfgs",
    "cg": "cg",
    "nonlinear-conjugate-gradient": "cg",
    "gd": "gd",
    "gradient-descent-with-line-search": "gd",
}

log = logging.getLogger("glsaddle")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# pipeline configuration


def _float_list(text):
    parts = text.replace(",", " ").split()
    if not parts:
        raise ValueError("empty list")
    return [float(p) for p in parts]


@dataclass
class PipelineConfig:
    R: float
    h: float
    cap_radius: float = DEFAULT_CAP_RADIUS
    mesh_level: int = DEFAULT_MESH_LEVEL
    max_iters: int = 4000
    grad_tol: float = 1e-6
    energy_tol: float = 1e-15
    truncate_every: int = 10
    optimizer: str = "lbfgs"
    seed: int = 0
    radii: list | None = None
    delta_fraction: float = 0.15
    comp_mesh_level: int = 6
    output_dir: str = "."

    def solve_config(self):
        return SolveConfig(
            max_iters=self.max_iters, grad_tol=self.grad_tol, energy_tol=self.energy_tol,
            truncate_every=self.truncate_every, optimizer=self.optimizer, seed=self.seed,
        )


_PARSERS = {
    "R": float, "h": float, "cap_radius": float, "mesh_level": int, "max_iters": int,
    "grad_tol": float, "energy_tol": float, "truncate_every": int, "seed": int,
    "radii": _float_list, "delta_fraction": float, "comp_mesh_level": int, "output_dir": str,
    "optimizer": lambda s: OPTIMIZER_ALIASES[s.lower()],
}
REQUIRED = ("R", "h")


def parse_config(text, base_dir=None) -> PipelineConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
        if key in values:
            raise ConfigError(f"duplicate config key {key!r} (line {lineno})")
        try:
            values[key] = _PARSERS[key](val)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"malformed value for key {key!r}: {val!r}") from exc
    for key in REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required config key {key!r}")
    # relative output directories (and the default) resolve next to the config file
    if base_dir is not None:
        out = values.get("output_dir", ".")
        values["output_dir"] = out if os.path.isabs(out) else str(Path(base_dir) / out)
    return PipelineConfig(**values)


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


def run_pipeline(cfg: PipelineConfig):
    """Datum, solve, analysis and competitor table into ``cfg.output_dir``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    geom = build_octant_geometry(cfg.R, cfg.h)
    datum = build_boundary_datum(cfg.cap_radius, cfg.mesh_level)
    f0 = initialize(geom, datum)
    f, rep = minimize(f0, cfg.solve_config())
    write_glf1(out / "field.glf1", f)
    rep.write_csv(out / "report.csv")
    radii = analysis.default_radii(cfg.R) if cfg.radii is None else cfg.radii
    res = analysis.analyze_field(f, radii=radii, delta_fraction=cfg.delta_fraction)
    res["solve"] = {
        "iterations": rep.iterations,
        "termination": rep.termination,
        "final_energy": rep.final_energy,
        "initial_energy": rep.energies[0],
        "el_residual": rep.final_residual,
    }
    analysis.write_analysis_json(out / "analysis.json", res)
    cmap = competitors.CompetitorMap(1.0, datum)
    competitors.write_competitor_csv(out / "comp.csv", cmap, radii, cfg.comp_mesh_level)
    return res


# ---------------------------------------------------------------------------
# summary table

REQUIRED_ANALYSIS_KEYS = ("fit_a", "zero_set_hausdorff", "degrees", "clearing_out_max_dx")
GROWTH_BAND = 0.5
ZERO_SET_TOL = 2.0
CLEARING_TOL = 2.0


def report_summary(path):
    """Human-readable table of an analysis file with PASS/FAIL flags."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read analysis file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("analysis file must hold a JSON object")
    for key in REQUIRED_ANALYSIS_KEYS:
        if key not in data:
            raise ConfigError(f"analysis file lacks key {key!r}")

    def flag(ok):
        return "PASS" if ok else "FAIL"

    lines = []
    a = data["fit_a"]
    if a is None:
        lines.append("growth      fit_a = n/a                                FAIL")
    else:
        ratio = a / (4 * math.pi)
        lines.append(f"growth      fit_a = {a:.6g}  fit_a/4pi = {ratio:.6g}  {flag(abs(ratio - 1) <= GROWTH_BAND)}")
    z = data["zero_set_hausdorff"]
    lines.append(f"zero set    max d_X = {z:.6g}  (tol {ZERO_SET_TOL:g})      {flag(z <= ZERO_SET_TOL)}")
    degs = data["degrees"]
    for d in degs:
        if isinstance(d, dict) and "winding" in d:
            k = d["winding"]
            lines.append(
                f"degree      center {tuple(d.get('center', ()))} winding {k:+d} |deg| = {abs(k)}  {flag(abs(k) == 1)}"
            )
        elif isinstance(d, dict):
            lines.append(f"degree      center {tuple(d.get('center', ()))} error: {d.get('error', '?')}  FAIL")
        else:
            k = int(d)
            lines.append(f"degree      winding {k:+d} |deg| = {abs(k)}  {flag(abs(k) == 1)}")
    c = data["clearing_out_max_dx"]
    lines.append(f"clearing    max d_X(|u|<1/2) = {c:.6g}  (tol {CLEARING_TOL:g})  {flag(c <= CLEARING_TOL)}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# argparse plumbing


def _cmd_gen_boundary(args):
    datum = build_boundary_datum(args.cap_radius, args.mesh_level)
    write_phi1(args.out, datum.phase)
    return 0


def _cmd_solve(args):
    geom = build_octant_geometry(args.R, args.h)
    datum = build_boundary_datum(args.cap_radius, args.mesh_level)
    cfg = SolveConfig(
        max_iters=args.max_iters, grad_tol=args.grad_tol, energy_tol=args.energy_tol,
        truncate_every=args.truncate_every, optimizer=OPTIMIZER_ALIASES[args.optimizer],
    )
    f, rep = minimize(initialize(geom, datum), cfg)
    write_glf1(args.out, f)
    if args.report:
        rep.write_csv(args.report)
    print(f"iterations {rep.iterations} termination {rep.termination} "
          f"energy {rep.final_energy:.17g} residual {rep.final_residual:.3e}")
    return 0


def _cmd_analyze(args):
    f = read_glf1(args.field)
    res = analysis.analyze_field(f, radii=args.radii, delta_fraction=args.delta_fraction)
    analysis.write_analysis_json(args.report, res)
    return 0


def _cmd_competitor(args):
    datum = build_boundary_datum(args.cap_radius, args.datum_mesh_level)
    cmap = competitors.CompetitorMap(args.m, datum)
    radii = args.radii or list(np.linspace(args.r2 / args.n_radii, args.r2, args.n_radii))
    competitors.write_competitor_csv(args.out, cmap, radii, args.mesh_level)
    return 0


def _cmd_radial(args):
    prof = competitors.radial_profile(args.d, args.rmax, args.n_points)
    prof.write_csv(args.out)
    return 0


_SYNTHETIC = {
    "rlogr": lambda r: r * np.log(r),
    "r2": lambda r: r**2,
    "r3": lambda r: r**3,
}


def _cmd_growth(args):
    if args.table:
        rows = read_csv(args.table)
        try:
            r = np.array([float(row["r"]) for row in rows])
            v = np.array([float(row["f"]) for row in rows])
        except KeyError as exc:
            raise ConfigError(f"growth table needs columns r and f, missing {exc}") from exc
    else:
        r = np.exp(np.linspace(math.log(args.r0), math.log(args.r_max), args.n_radii))
        v = _SYNTHETIC[args.function](r)
    case = analysis.GrowthLemmaCase(A=args.A, B=args.B, K=args.K, lam=args.lam, r0=args.r0, radii=r, values=v)
    res = analysis.growth_lemma_check(case)
    out = {"verdict": res.verdict, "r1": res.r1, "hypotheses_hold": res.hypotheses_hold,
           "conclusion_holds": res.conclusion_holds}
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _cmd_run(args):
    cfg = load_config(args.config)
    run_pipeline(cfg)
    return 0


def _cmd_report(args):
    print(report_summary(args.analysis))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="glsaddle", description="Symmetric Ginzburg-Landau saddle solutions on a ball.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-boundary", help="write the boundary phase table")
    s.add_argument("--cap-radius", type=float, default=DEFAULT_CAP_RADIUS)
    s.add_argument("--mesh-level", type=int, default=DEFAULT_MESH_LEVEL)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_gen_boundary)

    s = sub.add_parser("solve", help="minimise the energy on B_R")
    s.add_argument("--R", type=float, required=True)
    s.add_argument("--h", type=float, required=True)
    s.add_argument("--max-iters", type=int, default=4000)
    s.add_argument("--grad-tol", type=float, default=1e-6)
    s.add_argument("--energy-tol", type=float, default=1e-15)
    s.add_argument("--truncate-every", type=int, default=10)
    s.add_argument("--optimizer", choices=sorted(OPTIMIZER_ALIASES), default="lbfgs")
    s.add_argument("--cap-radius", type=float, default=DEFAULT_CAP_RADIUS)
    s.add_argument("--mesh-level", type=int, default=DEFAULT_MESH_LEVEL)
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.set_defaults(func=_cmd_solve)

    s = sub.add_parser("analyze", help="diagnostics of a solved field")
    s.add_argument("--field", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--radii", type=float, nargs="+")
    s.add_argument("--delta-fraction", type=float, default=0.15)
    s.set_defaults(func=_cmd_analyze)

    s = sub.add_parser("competitor-energy", help="energy table of the competitor map")
    s.add_argument("--m", type=float, default=1.0)
    s.add_argument("--r2", type=float, required=True)
    s.add_argument("--mesh-level", type=int, default=6)
    s.add_argument("--radii", type=float, nargs="+")
    s.add_argument("--n-radii", type=int, default=10)
    s.add_argument("--cap-radius", type=float, default=DEFAULT_CAP_RADIUS)
    s.add_argument("--datum-mesh-level", type=int, default=DEFAULT_MESH_LEVEL)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_competitor)

    s = sub.add_parser("radial-profile", help="planar vortex modulus")
    s.add_argument("--d", type=int, default=1)
    s.add_argument("--rmax", type=float, default=20.0)
    s.add_argument("--n-points", type=int, default=4001)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_radial)

    s = sub.add_parser("growth-lemma", help="check the growth reabsorption lemma on a sampled function")
    s.add_argument("--A", type=float, required=True)
    s.add_argument("--B", type=float, required=True)
    s.add_argument("--K", type=float, required=True)
    s.add_argument("--lam", type=float, required=True)
    s.add_argument("--r0", type=float, default=2.0)
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--table", help="CSV with columns r, f")
    src.add_argument("--function", choices=sorted(_SYNTHETIC))
    s.add_argument("--r-max", type=float, default=1e14)
    s.add_argument("--n-radii", type=int, default=400)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_growth)

    s = sub.add_parser("run", help="full pipeline from a key = value config")
    s.add_argument("config")
    s.set_defaults(func=_cmd_run)

    s = sub.add_parser("report", help="summary table of analysis.json")
    s.add_argument("analysis")
    s.set_defaults(func=_cmd_report)
    return p


def _threads():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(n, 1)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=_threads()):
            return args.func(args)
    except Exception as exc:  # report module and message, nonzero exit
        mod = type(exc).__module__.replace("glsaddle.", "")
        print(f"error [{mod}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
