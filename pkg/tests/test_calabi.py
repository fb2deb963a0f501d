import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affgeo import calabi as cal
from affgeo.catalog import catalog_get
from affgeo.errors import BoundaryViolation, NonConvex, NotMaximal, ZeroCubicForm
from affgeo.program import parse
from affgeo.structure import gauss_system_residual

X = ("x1", "x2")
U = ("u1", "u2")
PARABOLOID = parse("(x1^2 + x2^2)/2", X)
BUMP = parse("(1 - x1^2)^2*(1 - x2^2)^2", X)
SQUARE = ((-1.0, 1.0), (-1.0, 1.0))


def test_paraboloid_is_trivial():
    r = cal.calabi_invariants(PARABOLOID, np.array([[0.3, -0.2], [1.5, 2.0]]))
    for field in (r.A, r.T, r.J, r.R, r.lnD_laplacian):
        assert np.all(np.abs(field) < 1e-15)
    assert np.allclose(r.G, np.eye(2))


def test_constant_norm_graphs():
    r1 = cal.calabi_invariants(parse("-ln(x1)/4 + x2^2/2", X), [1.0, 5.0])
    assert r1.T_norm2 == pytest.approx(1.0, abs=1e-13)
    r3 = cal.calabi_invariants(parse("-(9/16)*ln(x1 - x2^2/2)", X), [2.0, 1.0])
    assert r3.T_norm2 == pytest.approx(1.0, abs=1e-13)
    assert r3.K == pytest.approx(-4 / 9, abs=1e-13)


def test_maximal_residual_examples():
    two_logs = parse("-ln(x1) - ln(x2)", X)
    assert abs(cal.maximal_residual(two_logs, [1.0, 1.0])) <= 1e-9
    assert cal.maximal_residual(PARABOLOID, [0.4, 0.1]) == 0.0
    assert abs(cal.maximal_residual(parse("x1^4 + x2^4", X), [1.0, 1.0])) > 1e-3


def test_maximal_type_examples():
    iii = parse("-(9/16)*ln(x1 - x2^2/2)", X)
    pde, trace = cal.maximal_type_residual(iii, -2 / 3, [2.0, 1.0])
    assert abs(pde) <= 1e-8 and abs(trace) <= 1e-8
    iv = parse("-(9/16)*ln(x1) + x2^2/(2*x1)", X)
    pde, trace = cal.maximal_type_residual(iv, -1 / 3, [1.0, 0.5])
    assert abs(pde) <= 1e-8 and abs(trace) <= 1e-8
    for a in (-0.5, 0.7, 2.0):
        pde, trace = cal.maximal_type_residual(PARABOLOID, a, [0.2, 0.9])
        assert abs(pde) <= 1e-14 and abs(trace) <= 1e-14
    # the wrong exponent leaves a residual
    pde, _ = cal.maximal_type_residual(iii, -1 / 3, [2.0, 1.0])
    assert abs(pde) > 1e-3


def test_nonconvex_graph_raises():
    with pytest.raises(NonConvex):
        cal.calabi_invariants(parse("x1^2 - x2^2", X), [0.0, 0.0])


def test_parametric_paraboloid_and_flat_maximal():
    comps = [parse("u1", U), parse("u2", U), parse("(u1^2 + u2^2)/2", U)]
    d = cal.decompose_calabi_immersion(comps, [0.3, 0.7])
    assert d.G == pytest.approx(np.eye(2), abs=1e-14)
    assert np.all(np.abs(d.A_up) < 1e-14)
    flat = catalog_get("flat-maximal")
    d = cal.decompose_calabi_immersion(flat.components, [1.0, 0.0])
    assert d.G == pytest.approx(np.eye(2), abs=1e-12)
    assert d.A_up[:, 0, 0] == pytest.approx([2.0, 0.0], abs=1e-12)
    assert d.A_up[:, 1, 1] == pytest.approx([0.0, 0.0], abs=1e-12)
    assert d.report.T == pytest.approx([1.0, 0.0], abs=1e-12)


def test_flat_family_structure_equation_at_origin():
    spec = catalog_get("flat-family")
    c1, c2 = spec.resolved_constants["c1"], spec.resolved_constants["c2"]
    coeff = parse(f"{c1!r}*u1 + {c2!r}", U)
    one = parse("1", U)
    r = gauss_system_residual(spec.components, np.zeros(2), 0, 0, [coeff, None], constant_coeff=one)
    assert r <= 1e-12
    wrong = gauss_system_residual(spec.components, np.zeros(2), 0, 0, [coeff, None], constant_coeff=None)
    assert wrong > 0.5


def test_ejiri_frame_examples():
    flat = catalog_get("flat-maximal")
    at_u1 = cal.ejiri_frame(cal.decompose_calabi_immersion(flat.components, [1.0, 0.0]).report)
    assert at_u1.lam == pytest.approx(2.0, abs=1e-10)
    assert at_u1.mu == pytest.approx(0.0, abs=1e-10)
    assert at_u1.e1 == pytest.approx([1.0, 0.0], abs=1e-8)
    at_u2 = cal.ejiri_frame(cal.decompose_calabi_immersion(flat.components, [0.0, 1.0]).report)
    assert at_u2.lam == pytest.approx(2.0, abs=1e-10)
    assert at_u2.e1 == pytest.approx([0.0, -1.0], abs=1e-8)
    iii = cal.ejiri_frame(cal.calabi_invariants(parse("-(9/16)*ln(x1 - x2^2/2)", X), [2.0, 1.0]))
    assert iii.lam == pytest.approx(4 / 3, abs=1e-10)
    assert iii.mu == pytest.approx(2 / 3, abs=1e-10)
    with pytest.raises(ZeroCubicForm):
        cal.ejiri_frame(cal.calabi_invariants(PARABOLOID, [0.0, 0.0]))


def test_second_variation_on_paraboloid():
    res = cal.second_variation(PARABOLOID, BUMP, SQUARE)
    assert res.second_variation < 0 and res.second_variation_tracefree < 0
    assert abs(res.second_variation - res.second_variation_tracefree) <= 10 * (
        res.error_estimate + res.error_estimate_tracefree)
    zero = cal.second_variation(PARABOLOID, parse("0", X), SQUARE)
    assert zero.second_variation == 0.0 and zero.LL == 0.0 and zero.AA == 0.0


def test_second_variation_gates():
    with pytest.raises(NotMaximal):
        cal.second_variation(parse("x1^4 + x2^4 + x1^2 + x2^2", X), BUMP, SQUARE)
    with pytest.raises(BoundaryViolation):
        cal.second_variation(PARABOLOID, parse("1 - x1^2", X), SQUARE)


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_area_comparison(sign):
    same = cal.area_compare(PARABOLOID, PARABOLOID, SQUARE)
    assert same.area == same.area_sharp
    f_sharp = parse(f"(x1^2 + x2^2)/2 + {0.05 * sign!r}*(1 - x1^2)^2*(1 - x2^2)^2", X)
    cmp_ = cal.area_compare(PARABOLOID, f_sharp, SQUARE)
    assert cmp_.area_sharp < cmp_.area - (cmp_.error + cmp_.error_sharp)
    assert cmp_.holds
    with pytest.raises(BoundaryViolation):
        cal.area_compare(PARABOLOID, parse("(x1^2 + x2^2)/2 + 0.1", X), SQUARE)


coef = st.floats(-0.8, 0.8, allow_nan=False)


def _graph(a, b, c):
    return parse(f"exp({a!r}*x1 + {b!r}*x2) + x1^2 + x2^2 + {c!r}*x1^3/6", X)


@settings(max_examples=30, deadline=None)
@given(coef, coef, coef, st.floats(-1, 1), st.floats(-1, 1))
def test_graph_and_parametric_routes_agree(a, b, c, x, y):
    f = _graph(a, b, c)
    r = cal.calabi_invariants(f, [x, y])
    d = cal.decompose_calabi_immersion(cal.graph_components(f), [x, y])
    scale = 1 + np.abs(r.G).max()
    assert np.abs(d.G - r.G).max() <= 1e-10 * scale
    assert np.abs(d.report.A - r.A).max() <= 1e-10 * scale
    assert abs(d.report.lnD_laplacian - r.lnD_laplacian) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(coef, coef, coef, st.floats(-1, 1), st.floats(-1, 1))
def test_calabi_identities_hold_for_convex_graphs(a, b, c, x, y):
    r = cal.calabi_invariants(_graph(a, b, c), [x, y])
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    for p in perms:
        assert np.allclose(r.A, np.transpose(r.A, p), atol=1e-13)
    assert r.T_norm2 >= 0
    assert abs(cal.scalar_identity_residual(r)) <= 1e-8
    assert cal.gauss_residual(r) <= 1e-8
    assert abs(cal.tchebychev_identity_residual(r)).max() <= 1e-8
    n = r.dim
    assert abs(r.lnD_laplacian + 2 * n * cal.divergence_T(r)) <= 1e-8 * (1 + abs(r.lnD_laplacian))
    assert cal.codazzi_residual(r) <= 1e-8


def test_stencil_codazzi_and_nabla_T_on_flat_maximal():
    spec = catalog_get("flat-maximal")
    pts = spec.sample_grid((5, 5))
    assert np.max(cal.codazzi_residual_stencil(list(spec.components), pts)) <= 1e-6
    assert np.max(np.abs(cal.nabla_T_norm2_stencil(list(spec.components), pts) - 2.0)) <= 1e-6


def test_jet_determinant_matches_numpy():
    from affgeo.evaluate import jet_eval
    f = _graph(0.3, -0.2, 0.5)
    jf = jet_eval(f, [0.2, 0.1], 2)
    hess = [[jf.partial(i).partial(j) for j in range(2)] for i in range(2)]
    assert cal.jet_det(hess).value == pytest.approx(np.linalg.det(jf.tensor(2)), rel=1e-14)
    assert math.isfinite(float(cal.jet_det(hess).value))
