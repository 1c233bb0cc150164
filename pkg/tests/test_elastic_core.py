import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elastocorner.elastic_core import (
    CGOProbe,
    DomainError,
    GridTooCoarse,
    InvalidSector,
    PlaneWave,
    cgo_boundary_integral_exact,
    cgo_boundary_integral_quadrature,
    cgo_eval,
    cgo_moment_bound,
    cgo_moment_quadrature,
    cgo_sector_integral_exact,
    cgo_sector_integral_quadrature,
    helmholtz_split,
    lame_operator,
    laplace_moment,
    laplace_moment_quadrature,
    plane_wave_eval,
    plane_wave_hessian,
    traction,
)
from elastocorner.geometry import SectorGeometry
from elastocorner.materials import LameParameters

LAME = LameParameters(1.0, 1.0)


@pytest.mark.parametrize("kind", ["p", "s"])
def test_plane_wave_solves_lame(kind):
    w = PlaneWave.of(kind, 0.4, LAME, 2.0)
    x = np.random.default_rng(0).normal(size=(20, 2))
    residual = lame_operator(plane_wave_hessian(w, x), LAME) + 4.0 * plane_wave_eval(w, x).value
    assert np.abs(residual).max() < 1e-12


def test_plane_wave_polarisations():
    p = PlaneWave.of("p", 0.3, LAME, 1.0)
    s = PlaneWave.of("s", 0.3, LAME, 1.0)
    assert np.allclose(p.polarization, p.direction)
    assert abs(s.polarization @ s.direction) < 1e-15
    assert abs(plane_wave_eval(s, np.array([[0.2, 0.1]])).divergence[0]) < 1e-14


def test_traction_of_pure_shear(lame):
    # u = (x2, x1): symmetric gradient offdiag 1, div 0 -> T nu = 2 mu (nu2, nu1)
    from elastocorner.elastic_core import FieldSample

    f = FieldSample(np.zeros(2), np.array([[0.0, 1.0], [1.0, 0.0]]), np.array(0.0))
    assert np.allclose(traction(f, np.array([1.0, 0.0]), lame), [0.0, 2.0])


@pytest.mark.parametrize("kind", ["p", "s"])
def test_helmholtz_split_isolates_the_wave_type(kind):
    om = 2.0
    w = PlaneWave.of(kind, 0.7, LAME, om)
    g = np.linspace(-1, 1, 161)
    X1, X2 = np.meshgrid(g, g, indexing="xy")
    u = plane_wave_eval(w, np.stack([X1, X2], -1)).value
    _, _, up, us = helmholtz_split(g, g, u, w.k)
    keep, drop = (up, us) if kind == "p" else (us, up)
    inner = u[4:-4, 4:-4]
    assert np.abs(keep - inner).max() < 1e-6
    assert np.abs(drop).max() < 1e-6


def test_helmholtz_split_rejects_coarse_grid():
    w = PlaneWave.of("s", 0.0, LAME, 20.0)
    g = np.linspace(-1, 1, 21)
    X1, X2 = np.meshgrid(g, g, indexing="xy")
    with pytest.raises(GridTooCoarse):
        helmholtz_split(g, g, plane_wave_eval(w, np.stack([X1, X2], -1)).value, w.k)


def test_cgo_is_a_static_solution():
    sec = SectorGeometry.from_angles(-0.6, 0.8)
    p = CGOProbe.for_sector(sec, 7.0)
    assert abs(p.rho @ p.rho) < 1e-12
    f = cgo_eval(p, np.array([[0.1, -0.05]]))
    assert abs(f.divergence[0]) < 1e-13


def test_fixture_sector_integral_value():
    sec = SectorGeometry.from_angles(-math.pi / 4, math.pi / 4)
    p = CGOProbe(10.0, math.pi, sec)
    assert cgo_sector_integral_exact(p) == pytest.approx(0.01, rel=1e-12)


def test_invalid_sector_rejected():
    sec = SectorGeometry.from_angles(-2.0, 1.5)
    with pytest.raises(InvalidSector):
        cgo_sector_integral_exact(CGOProbe.for_sector(sec, 5.0))


def test_laplace_moment_domain():
    with pytest.raises(DomainError):
        laplace_moment(0.5, -1.0 + 1j)
    with pytest.raises(DomainError):
        laplace_moment(-0.5, 1.0)


openings = st.floats(0.2, math.pi - 0.2)
rotations = st.floats(-0.9, 0.9)


@settings(max_examples=15, deadline=None)
@given(openings, rotations, st.floats(2.0, 60.0))
def test_sector_integral_matches_quadrature(opening, rot, s):
    sec = SectorGeometry.from_angles(rot - opening / 2, rot + opening / 2, h=0.5)
    p = CGOProbe.for_sector(sec, s)
    assert abs(cgo_sector_integral_exact(p) - cgo_sector_integral_quadrature(p)) <= 1e-9 * abs(
        cgo_sector_integral_exact(p)
    )


@settings(max_examples=15, deadline=None)
@given(openings, rotations, st.floats(2.0, 60.0), st.sampled_from(["plus", "minus"]))
def test_edge_integral_split(opening, rot, s, edge):
    sec = SectorGeometry.from_angles(rot - opening / 2, rot + opening / 2, h=0.5)
    p = CGOProbe.for_sector(sec, s)
    bi = cgo_boundary_integral_exact(p, edge)
    assert abs(bi.exact - (bi.leading - bi.remainder)) <= 1e-13 * abs(bi.leading)
    assert abs(bi.exact - cgo_boundary_integral_quadrature(p, edge)) <= 1e-9 * abs(bi.exact)
    assert abs(bi.remainder) <= bi.remainder_bound


@settings(max_examples=15, deadline=None)
@given(openings, st.floats(0.0, 1.0), st.floats(2.0, 40.0))
def test_moment_bound_dominates(opening, alpha, s):
    sec = SectorGeometry.from_angles(-opening / 2, opening / 2)
    p = CGOProbe.for_sector(sec, s)
    assert cgo_moment_quadrature(p, alpha) <= cgo_moment_bound(p, alpha)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.2, 5.0), st.floats(-5.0, 5.0))
def test_laplace_moment_property(alpha, re, im):
    g = complex(re, im)
    assert abs(laplace_moment(alpha, g) - laplace_moment_quadrature(alpha, g)) <= 1e-9 * abs(laplace_moment(alpha, g))


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, math.pi - 1e-3), st.floats(-1.0, 1.0))
def test_extraction_prefactors_nonzero(opening, rot):
    tm, tM = rot - opening / 2, rot + opening / 2
    assert abs(np.exp(-1j * tm) + np.exp(-1j * tM)) > 0
    assert abs(np.exp(-2j * tM) - np.exp(-2j * tm)) > 0
