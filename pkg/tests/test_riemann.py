import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affgeo.calabi import calabi_invariants
from affgeo.catalog import catalog_get
from affgeo.errors import DegenerateFrame, SingularMetric, StepFailure
from affgeo.evaluate import jet_eval
from affgeo.finite_diff import fd_derivative
from affgeo.harness import geodesic_probe, metric_field
from affgeo.program import parse
from affgeo.riemann import (MetricJet, bianchi_residual, christoffel, compatibility_residual, covariant_hessian,
                            curvature, geodesic_ray, integrate_density, laplace_beltrami, positive_definite_mask)

TU = ("t", "u")


def metric_from_programs(entries, variables, points):
    """MetricJet of a metric given entrywise as programs."""
    n = len(entries)
    jets = [[jet_eval(parse(entries[i][j], variables), points, 2) for j in range(n)] for i in range(n)]
    return MetricJet.from_jets(jets)


def field_from_programs(entries, variables):
    return lambda p: metric_from_programs(entries, variables, p)


WARPED = [["1", "0"], ["0", "0.75*cosh(t)^2"]]
UPPER_HALF_PLANE = [["1/y^2", "0"], ["0", "1/y^2"]]


def test_flat_metric_has_no_connection_or_curvature():
    m = MetricJet.constant(np.broadcast_to(np.eye(2), (3, 2, 2)))
    c = christoffel(m)
    assert np.all(c.gamma == 0)
    curv = curvature(m, c)
    assert np.all(curv.riemann == 0) and np.all(curv.gaussian == 0)


def test_calabi_christoffel_matches_hand_value_and_differences():
    f = parse("-ln(x1)/4 + x2^2/2", ("x1", "x2"))
    r = calabi_invariants(f, [1.0, 0.3])
    assert r.christoffel.gamma[0, 0, 0] == pytest.approx(-1.0, abs=1e-13)
    # oracle: Gamma^1_11 = 1/2 G^11 d_1 G_11 with G_11 = f_11 differenced
    dG11 = fd_derivative(f, [1.0, 0.3], (3, 0))
    assert r.christoffel.gamma[0, 0, 0] == pytest.approx(0.5 * dG11 / r.G[0, 0], rel=1e-8)


@pytest.mark.parametrize("t", [0.0, 0.4, -1.1])
def test_warped_product_christoffels_and_curvature(t):
    m = metric_from_programs(WARPED, TU, np.array([t, 0.2]))
    c = christoffel(m)
    rho2 = 0.75 * math.cosh(t) ** 2
    assert c.gamma[0, 1, 1] == pytest.approx(-0.75 * math.sinh(t) * math.cosh(t), abs=1e-14)
    assert c.gamma[1, 0, 1] == pytest.approx(math.tanh(t), abs=1e-14)
    assert c.gamma[1, 1, 0] == c.gamma[1, 0, 1]
    curv = curvature(m, c)
    assert curv.gaussian == pytest.approx(-1.0, abs=1e-12)
    assert curv.scalar == pytest.approx(2 * curv.gaussian, abs=1e-12)
    assert m.G[1, 1] == pytest.approx(rho2)


def test_parabolic_log_surface_has_negative_curvature():
    f = parse("-(9/16)*ln(x1 - x2^2/2)", ("x1", "x2"))
    r = calabi_invariants(f, [2.0, 1.0])
    assert r.K == pytest.approx(-4 / 9, abs=1e-12)


def test_laplace_beltrami_examples():
    pts = np.array([[0.3, -0.7], [1.0, 2.0]])
    m = MetricJet.constant(np.broadcast_to(np.eye(2), (2, 2, 2)))
    c = christoffel(m)
    u = jet_eval(parse("u1^2 + u2^2", ("u1", "u2")), pts, 2)
    assert laplace_beltrami(u, m, c) == pytest.approx([4.0, 4.0])
    const = jet_eval(parse("5", ("u1", "u2")), pts, 2)
    assert laplace_beltrami(const, m, c) == pytest.approx([0.0, 0.0])
    hess = covariant_hessian(jet_eval(parse("u1^2", ("u1", "u2")), pts, 2), m, c)
    assert hess[0] == pytest.approx(np.diag([2.0, 0.0]))
    lin = covariant_hessian(jet_eval(parse("3*u1 - u2", ("u1", "u2")), pts, 2), m, c)
    assert np.all(lin == 0)


def test_log_det_hessian_is_harmonic_for_constant_norm_graph():
    f = parse("-ln(x1)/4 + x2^2/2", ("x1", "x2"))
    r = calabi_invariants(f, [1.0, 0.0])
    assert r.lnD_laplacian == pytest.approx(0.0, abs=1e-12)


def _random_convex(a, b, c, d):
    return parse(f"exp({a!r}*x + {b!r}*y) + {c!r}*x^2 + {d!r}*y^2 + x*y/4 + x^4/12", ("x", "y"))


coef = st.floats(-1.0, 1.0, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(coef, coef, st.floats(0.5, 2.0), st.floats(0.5, 2.0), st.floats(-1, 1), st.floats(-1, 1))
def test_riemannian_identities_on_hessian_metrics(a, b, c, d, x, y):
    f = _random_convex(a, b, c, d)
    r = calabi_invariants(f, [x, y])
    m, ch, curv = r.metric, r.christoffel, r.curvature
    assert np.allclose(ch.gamma, np.swapaxes(ch.gamma, -1, -2), atol=1e-13)
    assert np.allclose(curv.riemann, -np.swapaxes(curv.riemann, -1, -2), atol=1e-12)
    assert np.allclose(curv.ricci, curv.ricci.T, atol=1e-10)
    assert curv.scalar == pytest.approx(2 * curv.gaussian, abs=1e-9)
    assert compatibility_residual(m, ch) <= 1e-9
    assert bianchi_residual(curv) <= 1e-9
    u = jet_eval(f, [x, y], 2)
    lap = laplace_beltrami(u, m, ch)
    tr = np.einsum("ij,ij->", ch.Ginv, covariant_hessian(u, m, ch))
    assert lap == pytest.approx(tr, rel=1e-10, abs=1e-12)


def test_positive_definiteness_threshold():
    assert positive_definite_mask(np.eye(2))
    assert not positive_definite_mask(np.diag([1.0, 1e-14]))
    assert not positive_definite_mask(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(SingularMetric):
        christoffel(MetricJet.constant(np.diag([1.0, -1.0])))


def test_geodesic_in_euclidean_chart_is_straight():
    field = lambda p: MetricJet.constant(np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2)))
    trace = geodesic_ray(field, [0.5, -1.0], [3.0, 4.0], 7.0)
    assert trace.status == "completed-budget"
    assert trace.endpoint == pytest.approx([0.5 + 4.2, -1.0 + 5.6], abs=1e-12)
    assert np.all(np.diff(trace.arclength) > 0)
    assert trace.speed_deviation <= 1e-12


def test_upper_half_plane_geodesics():
    field = field_from_programs(UPPER_HALF_PLANE, ("x", "y"))
    down = geodesic_ray(field, [0.0, 1.0], [0.0, -1.0], 5.0)
    assert down.status == "completed-budget"
    assert down.endpoint == pytest.approx([0.0, math.exp(-5.0)], rel=1e-8, abs=1e-12)
    s = down.arclength
    assert down.points[:, 1] == pytest.approx(np.exp(-s), rel=1e-8)
    # the horizontal start traces the unit semicircle (tanh s, 1/cosh s)
    arc = geodesic_ray(field, [0.0, 1.0], [1.0, 0.0], 2.0)
    assert arc.endpoint == pytest.approx([math.tanh(2.0), 1 / math.cosh(2.0)], abs=1e-8)
    assert max(down.speed_deviation, arc.speed_deviation) <= 1e-6


def test_geodesic_leaving_bounding_box():
    field = lambda p: MetricJet.constant(np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2)))
    trace = geodesic_ray(field, [0.0, 0.0], [1.0, 0.0], 10.0, bounds=([-1, -1], [1, 1]))
    assert trace.status == "left-chart"
    assert trace.endpoint[0] == pytest.approx(1.0, abs=1e-9)


def test_flat_maximal_geodesic_along_second_axis():
    trace = geodesic_probe(catalog_get("flat-maximal"), [0.0, 0.0], [0.0, 1.0], 10.0)
    assert trace.status == "completed-budget"
    assert trace.endpoint == pytest.approx([0.0, 10.0], abs=1e-8)


def test_flat_maximal_frame_degenerates_far_along_first_axis():
    # x3_u1u1 cancels against 2 u1 e^{u1^2} x3_u1 in double precision
    field = metric_field(catalog_get("flat-maximal"))
    assert np.allclose(field(np.array([[4.0, 0.0]])).G[0], np.eye(2), atol=1e-6)
    with pytest.raises(DegenerateFrame):
        field(np.array([[6.0, 0.0]]))


def test_step_cap_raises_step_failure():
    field = field_from_programs(UPPER_HALF_PLANE, ("x", "y"))
    with pytest.raises(StepFailure):
        geodesic_ray(field, [0.0, 1.0], [0.0, -1.0], 50.0, max_steps=5)


def test_integrate_density_examples():
    flat = lambda p: MetricJet.constant(np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2)))
    one = lambda p: np.ones(p.shape[0])
    assert integrate_density(one, flat, ((0, 1), (0, 1))).value == pytest.approx(1.0, abs=1e-12)
    f = parse("(x1^2 + x2^2)/2", ("x1", "x2"))
    hess = lambda p: calabi_invariants(f, p).metric
    assert integrate_density(one, hess, ((0, 1), (0, 1))).value == pytest.approx(1.0, abs=1e-12)
    bump = lambda p: (1 - p[:, 0] ** 2) ** 2 * (1 - p[:, 1] ** 2) ** 2
    res = integrate_density(bump, flat, ((-1, 1), (-1, 1)))
    assert res.value == pytest.approx((16 / 15) ** 2, abs=1e-13)
    assert res.error_estimate < 1e-12
