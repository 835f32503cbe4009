import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glsaddle.competitors import (
    CompetitorError,
    CompetitorMap,
    annulus_energy_quadrature,
    competitor_sphere,
    cross_section_compare,
    energy_excess_fit,
    energy_radius_derivative,
    eval_v_m,
    fit_log_slope,
    radial_profile,
    rest_quadrature,
    shooting_profile,
    slope_fit,
    write_competitor_csv,
)
from glsaddle.geometry import build_octant_geometry, dist_to_cross
from glsaddle.io import read_csv
from glsaddle.solver import initialize

FOUR_PI = 4 * math.pi


@pytest.fixture(scope="module")
def profile():
    return radial_profile(1, 20.0, 20001)


def test_v_m_examples(competitor):
    assert eval_v_m(competitor, np.array([3.0, 0, 0])) == 0
    assert eval_v_m(competitor, np.array([0.0, -2.0, 0])) == 0
    assert eval_v_m(competitor, np.zeros(3)) == 0
    assert abs(eval_v_m(competitor, np.array([0, 0, 5.0])) - 1j) < 1e-12
    with pytest.raises(CompetitorError):
        CompetitorMap(0.0, competitor.datum)


def test_v_m_modulus_and_symmetries(competitor):
    rng = np.random.default_rng(11)
    x = rng.normal(scale=6, size=(4000, 3))
    v = eval_v_m(competitor, x)
    assert np.all(np.abs(v) <= 1 + 1e-15)
    assert np.allclose(np.abs(v), np.minimum(dist_to_cross(x), 1), atol=1e-14)
    for flip, expect in (((-1, 1, 1), -np.conj(v)), ((1, -1, 1), -np.conj(v)), ((1, 1, -1), np.conj(v))):
        assert np.max(np.abs(eval_v_m(competitor, x * np.array(flip)) - expect)) < 1e-10


def test_empty_annulus_and_bad_radii(competitor):
    assert annulus_energy_quadrature(competitor, 5.0, 5.0) == 0.0
    with pytest.raises(CompetitorError):
        annulus_energy_quadrature(competitor, 5.0, 4.0)
    with pytest.raises(CompetitorError):
        annulus_energy_quadrature(competitor, -1.0, 4.0)


def test_under_resolved_sphere_mesh_rejected(datum):
    with pytest.raises(CompetitorError):
        rest_quadrature(datum, datum.mesh_level - 1)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 50.0), st.floats(0.1, 100.0), st.floats(0.1, 500.0))
def test_annulus_additivity(r1, d1, d2):
    cmap = _cmap()
    r2, r3 = r1 + d1, r1 + d1 + d2
    sphere = competitor_sphere(cmap, (r1, r2, r3), mesh_level=5)
    a = annulus_energy_quadrature(cmap, r1, r2, sphere=sphere)
    b = annulus_energy_quadrature(cmap, r2, r3, sphere=sphere)
    c = annulus_energy_quadrature(cmap, r1, r3, sphere=sphere)
    assert abs(a + b - c) <= 1e-10 * c


_CMAP = []


def _cmap():
    if not _CMAP:
        from glsaddle.boundary import build_boundary_datum

        _CMAP.append(CompetitorMap(1.0, build_boundary_datum()))
    return _CMAP[0]


def test_derivative_is_radial_derivative_of_energy(competitor):
    r, dr = 30.0, 1e-3
    sphere = competitor_sphere(competitor, (r - dr, r, r + dr))
    E = [annulus_energy_quadrature(competitor, 0.0, s, sphere=sphere) for s in (r - dr, r + dr)]
    fd = (E[1] - E[0]) / (2 * dr)
    assert energy_radius_derivative(competitor, r, sphere=sphere) == pytest.approx(fd, rel=1e-6)


def test_excess_constant_from_r10_still_valid_at_r100(competitor):
    E10 = annulus_energy_quadrature(competitor, 0.0, 10.0)
    C = (E10 - FOUR_PI * 10 * math.log(10)) / 10
    E100 = annulus_energy_quadrature(competitor, 0.0, 100.0)
    assert E100 <= FOUR_PI * 100 * math.log(100) + C * 100


def test_excess_fit_on_synthetic_data():
    r = np.array([10.0, 30.0, 100.0, 300.0, 1000.0])
    C, res, spread = energy_excess_fit(r, FOUR_PI * r * np.log(r) + 1.5 * r)
    assert C == pytest.approx(1.5, abs=1e-12) and res < 1e-14 and spread < 1e-12


def test_log_slope_fit_recovers_planted_model():
    r = np.geomspace(20, 1000, 10)
    alpha, beta = fit_log_slope(r, 0.5 * 8 * math.pi * np.log(r))
    assert abs(alpha - FOUR_PI) < 1e-9 and abs(beta) < 1e-9
    with pytest.raises(CompetitorError):
        fit_log_slope(r[:7], r[:7])


def test_slope_fit_preconditions(competitor):
    with pytest.raises(CompetitorError):
        slope_fit(competitor, np.geomspace(20, 1000, 7))
    with pytest.raises(CompetitorError):
        slope_fit(competitor, np.geomspace(5, 1000, 8))


def test_slope_fit_stable_under_refinement(competitor):
    radii = np.geomspace(20, 1000, 8)
    a6, _ = slope_fit(competitor, radii, mesh_level=6)
    a7, _ = slope_fit(competitor, radii, mesh_level=7)
    assert abs(a6 - a7) / a7 < 0.01
    shell, _ = slope_fit(competitor, radii, kind="shell")
    assert abs(shell - FOUR_PI) / FOUR_PI < 0.05


def test_competitor_csv(competitor, tmp_path):
    write_competitor_csv(tmp_path / "c.csv", competitor, [10.0, 20.0])
    rows = read_csv(tmp_path / "c.csv")
    assert list(rows[0]) == ["r", "E", "dEdr"]
    assert float(rows[0]["E"]) == annulus_energy_quadrature(competitor, 0.0, 10.0)


def test_profile_basic_properties(profile):
    assert profile.rho[0] == 0.0
    assert profile(20.0) >= 0.99
    assert np.all(np.diff(profile.rho) >= 0)
    assert np.all((profile.rho >= 0) & (profile.rho < 1))


def test_profile_matches_shooting(profile):
    t = profile.r[::10]
    shoot = shooting_profile(1, 20.0, t)
    assert np.max(np.abs(shoot - profile.rho[::10])) < 1e-6


def test_profile_degree_two_is_monotone():
    p = radial_profile(2, 25.0, 2001)
    assert np.all(np.diff(p.rho) >= 0) and p.rho[-1] == pytest.approx(1 - 4 / (2 * 25.0**2))
    assert p(0.1) < radial_profile(1, 25.0, 2001)(0.1)


@pytest.mark.parametrize("args", [(0, 20.0, 400), (1, 10.0, 400), (1, 20.0, 100), (1.5, 20.0, 400)])
def test_profile_preconditions(args):
    with pytest.raises(CompetitorError):
        radial_profile(*args)


def test_profile_csv(profile, tmp_path):
    profile.write_csv(tmp_path / "rho.csv")
    rows = read_csv(tmp_path / "rho.csv")
    assert list(rows[0]) == ["r", "rho"] and len(rows) == len(profile.r)


def test_cross_section_on_v1(datum, profile):
    geom = build_octant_geometry(8.0, 0.25)
    f = initialize(geom, datum)
    err = cross_section_compare(f, (5.0, 0, 0), profile)
    t = np.linspace(0, 2, 201)
    expect = np.max(np.abs(np.minimum(t, 1) - profile(t)))
    assert err > 0
    assert err == pytest.approx(expect, abs=1e-12)
    assert cross_section_compare(f, (5.0, 0, 0), profile, t_max=0.0, n_samples=1) == 0.0


def test_cross_section_preconditions(datum, profile):
    geom = build_octant_geometry(8.0, 0.5)
    f = initialize(geom, datum)
    with pytest.raises(CompetitorError):
        cross_section_compare(f, (5.0, 1.0, 0), profile)
    with pytest.raises(CompetitorError):
        cross_section_compare(f, (2.0, 0, 0), profile)
    with pytest.raises(CompetitorError):
        cross_section_compare(f, (7.9, 0, 0), profile)
    with pytest.raises(CompetitorError):
        cross_section_compare(f, (5.0, 0, 0), profile, normal=(1, 0, 1))
