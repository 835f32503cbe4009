"""Symmetric saddle solutions of the Ginzburg-Landau system on a ball with a
cross-shaped zero set, with analytic competitors and diagnostics."""

from .boundary import BoundaryDatum, build_boundary_datum, eval_g, eval_g_R
from .competitors import CompetitorMap, annulus_energy_quadrature, radial_profile, slope_fit
from .energy import EnergyConfig, discrete_energy, energy_gradient
from .estimator import SaddleSolver
from .geometry import ComplexField, OctantGeometry, build_octant_geometry
from .solver import SolveConfig, SolveReport, initialize, minimize

__version__ = "0.1.0"

__all__ = [
    "BoundaryDatum", "build_boundary_datum", "eval_g", "eval_g_R",
    "CompetitorMap", "annulus_energy_quadrature", "radial_profile", "slope_fit",
    "EnergyConfig", "discrete_energy", "energy_gradient",
    "SaddleSolver",
    "ComplexField", "OctantGeometry", "build_octant_geometry",
    "SolveConfig", "SolveReport", "initialize", "minimize",
]
