import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elastocorner import corner_probe as cp
from elastocorner import fem_solver as fs
from elastocorner.dtn_farfield import build_dtn
from elastocorner.elastic_core import (
    CGOProbe,
    FieldSample,
    PlaneWave,
    cgo_boundary_integral_exact,
    cgo_sector_integral_exact,
    plane_wave_eval,
)
from elastocorner.geometry import SectorGeometry, build_nest_partition, extract_corners
from elastocorner.materials import LameParameters, MediumConfig

from conftest import square

LAME = LameParameters(1.0, 1.0)
SECTOR = SectorGeometry.from_angles(-math.pi / 3, math.pi / 4, h=0.5)
A = np.array([1.0, 1j])


def fixture(**kw):
    base = dict(c=(1.0, 0.3 + 0.2j), G=((0.4, -0.2), (0.1, 0.3)), cv=(0.5, 1j), sigma1=0.7, sigma2=-0.4)
    base.update(kw)
    return cp.ManufacturedCorner(SECTOR, **base)


def data(deta=0.0, dq=0.0, fx=None, q1=1.5, eta1=-0.3, omega=1.3):
    return cp.CornerData.manufactured(fx or fixture(), q1, q1 + dq, eta1, eta1 + deta, omega)


SPEC_S = np.array([20.0, 40.0, 80.0]) / SECTOR.h


def test_trivial_fixture_all_zero():
    d = data(fx=fixture(sigma1=0.2, sigma2=0.2))
    for s in (10.0, 40.0):
        t = cp.identity_terms(d, CGOProbe.for_sector(SECTOR, s))
        assert t.lhs == 0 and t.I3_plus == 0 and t.I3_minus == 0
        assert abs(t.I1) == 0 and abs(t.I2) == 0
        assert t.balance == 0.0


def test_constant_fixture_matches_closed_forms():
    fx = cp.ManufacturedCorner(SECTOR, c=(0.8, -0.1j))
    d = data(deta=0.2, dq=1.0, fx=fx)
    w2 = d.omega**2
    ca = complex(np.asarray(fx.c) @ A)
    p = CGOProbe.for_sector(SECTOR, 30.0)
    t = cp.identity_terms(d, p)
    assert t.lhs_cone == pytest.approx(w2 * 1.0 * ca * cgo_sector_integral_exact(p), rel=1e-14)
    assert t.lhs == pytest.approx(w2 * ca * cgo_sector_integral_exact(p) - w2 * t.I4, rel=1e-9)
    assert abs(t.I2) == 0 and abs(t.I5) <= 1e-15
    for edge, I3 in (("plus", t.I3_plus), ("minus", t.I3_minus)):
        assert I3 == pytest.approx(-0.2 * ca * cgo_boundary_integral_exact(p, edge).exact, rel=1e-10)
    assert abs(t.I32_plus) <= 1e-10 * abs(t.I3_plus)


@pytest.mark.parametrize("deta,dq", [(0.2, 0.0), (0.0, 1.0), (0.2, 1.0)])
def test_identity_balance(deta, dq):
    d = data(deta, dq)
    for s in cp.default_s_list(SECTOR):
        t = cp.identity_terms(d, CGOProbe.for_sector(SECTOR, s))
        assert t.relative_balance <= 1e-6


def test_green_formula_on_sector_for_lame_solution():
    q1, om = 1.7, 1.2
    w = PlaneWave.of("s", 0.7, LAME, om * math.sqrt(q1))
    v = lambda x: plane_wave_eval(w, x)  # noqa: E731
    sec = SectorGeometry.from_angles(-0.5, 0.9, h=0.7)
    for s in (3.0, 10.0, 30.0):
        p = CGOProbe.for_sector(sec, s)
        arc, plus, minus = cp.green_boundary_terms(v, p, LAME)
        vol = cp._polar(cp._dot_u0(lambda x: v(x).value, p), p, (0.0, sec.h), 1e-12)
        lhs = -(om**2) * q1 * vol
        assert abs(lhs - (arc + plus + minus)) <= 1e-10 * abs(lhs)


def test_arc_term_decays_exponentially():
    w = PlaneWave.of("p", 0.3, LAME, 1.0)
    v = lambda x: plane_wave_eval(w, x)  # noqa: E731
    vals = []
    for s in cp.default_s_list(SECTOR):
        p = CGOProbe.for_sector(SECTOR, s)
        arc = cp.green_boundary_terms(v, p, LAME)[0]
        vals.append(abs(arc) * math.exp(s * SECTOR.h * p.delta) / s)
    assert max(vals) <= 2 * vals[0]


def test_remainder_terms_decay_at_stated_rates():
    d = data(0.2, 1.0)
    alpha = 1.0
    rows = []
    for s in cp.default_s_list(SECTOR):
        p = CGOProbe.for_sector(SECTOR, s)
        t = cp.identity_terms(d, p)
        rows.append((
            abs(t.I2) * s ** (alpha + 2),
            abs(t.I32_plus) * s ** (alpha + 1),
            abs(t.I32_minus) * s ** (alpha + 1),
            abs(t.I4) * s * math.exp(p.delta * s * SECTOR.h / 2),
            abs(t.I5) * s ** (alpha + 2),
        ))
    rows = np.array(rows)
    assert np.all(rows.max(axis=0) <= 2 * rows[0])


@pytest.mark.parametrize("deta", [0.2, -0.35])
def test_recover_eta(deta):
    got = cp.recover_eta_difference(data(deta, 0.0), SPEC_S)
    assert got == pytest.approx(deta, rel=0.05)


def test_recover_eta_zero():
    assert abs(cp.recover_eta_difference(data(0.0, 1.0), SPEC_S)) <= 1e-3


def test_recover_q():
    d = data(0.0, 1.0)
    eta = cp.recover_eta_difference(d, SPEC_S)
    assert cp.recover_q_difference(d, eta, SPEC_S) == pytest.approx(1.0, rel=0.05)


def test_recover_q_zero():
    d = data(0.2, 0.0)
    eta = cp.recover_eta_difference(d, SPEC_S)
    assert abs(cp.recover_q_difference(d, eta, SPEC_S)) <= 1e-3


def test_q_error_shrinks_when_s_doubles():
    d = data(0.2, 1.0)
    errs = []
    for scale in (1.0, 2.0):
        s = scale * np.array([10.0, 20.0, 40.0]) / SECTOR.h
        eta = cp.recover_eta_difference(d, s)
        errs.append(abs(cp.recover_q_difference(d, eta, s) - 1.0))
    assert errs[1] < errs[0]


def test_swapping_media_negates_estimates():
    fx = fixture()
    d = data(0.2, 1.0, fx)
    swapped = cp.CornerData.manufactured(fx.swapped(), 2.5, 1.5, -0.1, -0.3, 1.3)
    a = cp.probe_corner(d, SPEC_S, with_identity=False)
    b = cp.probe_corner(swapped, SPEC_S, with_identity=False)
    assert b.eta_diff_hat == pytest.approx(-a.eta_diff_hat, rel=1e-3)
    assert b.q_diff_hat == pytest.approx(-a.q_diff_hat, rel=1e-3)


def test_fit_reports_decay_order_with_interval():
    res = cp.probe_corner(data(0.2, 1.0))
    assert res.eta_fit.decay_order == pytest.approx(1.0, abs=3 * res.eta_fit.decay_ci + 0.3)
    assert math.isfinite(res.eta_fit.decay_ci)
    assert res.max_relative_balance <= 1e-6


def test_degenerate_angle():
    sec = SectorGeometry.from_angles(-math.pi / 2, math.pi / 2, h=0.5)
    d = cp.CornerData.manufactured(cp.ManufacturedCorner(sec, c=(1.0, 0.0)), 1.0, 1.0, 0.0, 0.2)
    with pytest.raises(cp.DegenerateAngle):
        cp.recover_eta_difference(d)


def test_apex_degenerate():
    d = data(0.2, 0.0, fixture(c=(1.0, 1j)))
    with pytest.raises(cp.ApexDegenerate):
        cp.recover_eta_difference(d, SPEC_S)
    with pytest.raises(cp.ApexDegenerate):
        cp.recover_q_difference(d, 0.0, SPEC_S)


def test_not_asymptotic():
    with pytest.raises(cp.NotAsymptotic):
        cp.recover_eta_difference(data(0.2), [1.0, 2.0, 4.0, 8.0])


def test_sector_mismatch():
    other = SectorGeometry.from_angles(-0.5, 0.5, h=0.5)
    with pytest.raises(cp.SectorMismatch):
        cp.identity_terms(data(0.2), CGOProbe.for_sector(other, 20.0))


def test_trace_mismatch():
    base = data(0.2)

    def shifted(x):
        f = base.u2_minus(x)
        return FieldSample(f.value + 1e-3, f.gradient, f.divergence)

    bad = cp.CornerData(base.corner, shifted, base.u2_minus, base.u2_at_apex, 1.0, LAME, 1.0, 1.0, 0.0, 0.0)
    with pytest.raises(cp.TraceMismatch):
        cp.identity_terms(bad, CGOProbe.for_sector(SECTOR, 20.0))


def test_probe_report_round_trip(tmp_path):
    res = cp.probe_corner(data(0.2, 1.0), SPEC_S)
    cp.write_probe_report(tmp_path / "r.json", res)
    doc = cp.read_probe_report(tmp_path / "r.json")
    assert doc["eta_diff_hat"] == res.eta_diff_hat
    assert len(doc["terms"]) == 3


def test_vanishing_probe_zero_field():
    zero = lambda x: np.zeros(x.shape[:-1] + (2,))  # noqa: E731
    rep = cp.corner_vanishing_probe(zero, zero, cp.local_corner(SECTOR))
    assert max(rep.v_abs) == 0.0 and rep.v_decays and not rep.no_decay


def test_vanishing_probe_holder_exponent():
    holder = lambda x: np.linalg.norm(x, axis=-1)[..., None] ** 0.6 * np.array([0.6, 0.8])  # noqa: E731
    rep = cp.corner_vanishing_probe(holder, holder, cp.local_corner(SECTOR))
    assert rep.v_order == pytest.approx(0.6, abs=0.1)
    assert rep.v_decays


def test_vanishing_probe_flags_constant():
    const = lambda x: np.ones(x.shape[:-1] + (2,))  # noqa: E731
    rep = cp.corner_vanishing_probe(const, const, cp.local_corner(SECTOR))
    assert rep.no_decay and not rep.v_decays


@pytest.fixture(scope="module")
def square_mesh():
    part = build_nest_partition([square()])
    return fs.generate_mesh(part, fs.default_radius(part), 0.1)


def _solve(mesh, q, eta, omega=1.0):
    cfg = MediumConfig.build(mesh.partition, [q], [eta])
    wave = PlaneWave.of("p", 0.2, LAME, omega)
    dtn = build_dtn(LAME, omega, mesh.R)
    return fs.solve(fs.assemble(mesh, cfg, LAME, omega, dtn).with_rhs(fs.rhs_from_incident(mesh, cfg, wave)), wave)


def test_admissibility_without_scatterer(square_mesh):
    f = _solve(square_mesh, 1.0, 0.0)
    corners = extract_corners(square_mesh.partition)
    rep = cp.admissibility_check(f, corners, 0.5)
    assert rep.admissible
    assert np.allclose(rep.corner_values, 1.0, rtol=1e-12)
    assert not any(cp.admissibility_check(f, corners, 2.0).passed)


def test_p1_interpolant_is_exact_for_linear_fields(square_mesh):
    m = square_mesh
    vals = np.column_stack([1 + 2 * m.vertices[:, 0] - m.vertices[:, 1], 3j * m.vertices[:, 1]])
    interp = cp.P1Interpolant(m, vals)
    x = np.random.default_rng(0).uniform(-0.7, 0.7, size=(50, 2))
    f = interp(x)
    assert np.allclose(f.value[:, 0], 1 + 2 * x[:, 0] - x[:, 1])
    assert np.allclose(f.gradient[:, 0], [2.0, -1.0]) and np.allclose(f.gradient[:, 1], [0.0, 3j])


def test_solver_fixture_with_identical_media_balances(square_mesh):
    f = _solve(square_mesh, 2.0, -0.3)
    corner = extract_corners(square_mesh.partition)[0]
    d = cp.CornerData.from_solutions(corner, f, f, q1=2.0, q2=2.0, eta1=-0.3, eta2=-0.3)
    for s in (10.0, 20.0):
        t = cp.identity_terms(d, CGOProbe.for_sector(corner.sector, s / corner.sector.h))
        assert t.balance == 0.0 and t.lhs == 0.0
    assert abs(d.apex_projection()) > 0


@settings(max_examples=10, deadline=None)
@given(st.floats(0.3, math.pi - 0.3), st.floats(-0.8, 0.8), st.floats(-0.5, 0.5), st.floats(0.0, 2.0))
def test_recovery_property(opening, rot, deta, dq):
    sec = SectorGeometry.from_angles(rot - opening / 2, rot + opening / 2, h=0.4)
    fx = cp.ManufacturedCorner(sec, c=(1.0, 0.5), G=((0.2, 0.1), (-0.3, 0.2)), cv=(1.0, 0.0), sigma1=0.3)
    d = cp.CornerData.manufactured(fx, 1.2, 1.2 + dq, -0.2, -0.2 + deta, 1.0)
    s = np.array([20.0, 40.0, 80.0]) / (sec.h * sec.delta_W)
    res = cp.probe_corner(d, s, with_identity=False)
    assert abs(res.eta_diff_hat - deta) <= 0.05 * abs(deta) + 1e-3
    assert abs(res.q_diff_hat - dq) <= 0.05 * abs(dq) + 1e-2


def test_split_arc_rule_matches_single_rule():
    w = PlaneWave.of("s", 0.4, LAME, 1.1)
    v = lambda x: plane_wave_eval(w, x)  # noqa: E731
    p = CGOProbe.for_sector(SECTOR, 30.0)
    whole = cp.green_arc_term(v, p, LAME)
    split = cp.green_arc_term(v, p, LAME, arc_breaks=np.linspace(SECTOR.theta_m, SECTOR.theta_M, 9)[1:-1])
    assert abs(split - whole) <= 1e-11 * abs(whole)
    assert whole == cp.green_boundary_terms(v, p, LAME)[0]


def test_circle_crossings_lie_on_circle_and_edges(square_mesh):
    interp = cp.P1Interpolant(square_mesh, np.zeros((square_mesh.n_vertices, 2)))
    pts = interp.circle_crossings((0.5, 0.5), 0.2)
    assert len(pts) > 4
    assert np.allclose(np.linalg.norm(pts - 0.5, axis=1), 0.2)
    tri, bary = interp.locate(pts)
    assert np.all(bary.min(axis=1) <= 1e-9)


def test_solver_data_carries_arc_breaks(square_mesh):
    f = _solve(square_mesh, 2.0, -0.3)
    corner = extract_corners(square_mesh.partition)[0]
    d = cp.CornerData.from_solutions(corner, f, f, q1=2.0, q2=2.0, eta1=-0.3, eta2=-0.3)
    t = corner.sector
    assert d.arc_breaks and all(t.theta_m < a < t.theta_M for a in d.arc_breaks)
    assert d.quad_rtol == 1e-6
