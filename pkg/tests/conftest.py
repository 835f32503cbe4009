import time
from dataclasses import dataclass

import numpy as np
import pytest

from glsaddle.boundary import build_boundary_datum
from glsaddle.competitors import CompetitorMap
from glsaddle.geometry import ComplexField, build_octant_geometry
from glsaddle.solver import SolveConfig, boundary_values, enforce_bcs, initialize, minimize


@dataclass
class SolvedCase:
    geometry: object
    datum: object
    initial: ComplexField
    field: ComplexField
    report: object
    wall_time: float


@pytest.fixture(scope="session")
def datum():
    return build_boundary_datum()


@pytest.fixture(scope="session")
def competitor(datum):
    return CompetitorMap(1.0, datum)


@pytest.fixture(scope="session")
def solved(datum):
    """The R = 12, h = 0.25 symmetric minimiser, computed once per session."""
    geom = build_octant_geometry(12.0, 0.25)
    t0 = time.process_time()
    f0 = initialize(geom, datum)
    f, rep = minimize(f0, SolveConfig())
    return SolvedCase(geom, datum, f0, f, rep, time.process_time() - t0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_bc_field(geom, datum, rng, scale=1.0):
    """Random field that satisfies the boundary conditions of the solve."""
    base = initialize(geom, datum)
    u = scale * (rng.normal(size=geom.shape) + 1j * rng.normal(size=geom.shape))
    return enforce_bcs(ComplexField(geom, u), boundary_values(base))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
