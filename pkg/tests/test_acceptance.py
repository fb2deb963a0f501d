"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test records its measured worst value as the ``measured`` property; the
terminal summary prints one PASS/FAIL line per criterion.
"""
import math
from functools import lru_cache

import numpy as np
import pytest
from scipy import integrate, special

from affgeo import centroaffine as cen
from affgeo.calabi import area_compare, nabla_T_norm2_stencil
from affgeo.catalog import catalog_get, catalog_list
from affgeo.errors import AffGeoError
from affgeo.evaluate import jet_eval
from affgeo.finite_diff import fd_derivative
from affgeo.harness import default_bump, emit_figure, geodesic_probe, run_second_variation, run_verify
from affgeo.jet import multi_indices
from affgeo.program import parse

SURFACES = [sid for sid, _, _ in catalog_list()]
THM62 = ["thm62-i", "thm62-ii", "thm62-iii", "thm62-iv", "thm62-v"]
FLAT_FAMILY_CONSTANTS = [{"c": 1.0, "c2": 1.0, "c3": 0.0},
                         {"c": 2.0, "c2": 0.0, "c3": 0.5},
                         {"c": 0.5, "c2": -0.3, "c3": 0.7}]


@lru_cache(maxsize=None)
def _verify(surface_id, constants=(), grid=None):
    report = run_verify(surface_id, grid=grid, constants=dict(constants))
    assert report.error is None, f"{surface_id}: {report.error} at {report.error_point}"
    return report


def verify(surface_id, grid=None, **constants):
    return _verify(surface_id, tuple(sorted(constants.items())), grid)


class Worst:
    """Tracks the largest residual seen against a bound, with its label."""

    def __init__(self):
        self.items = []

    def add(self, label, value, bound):
        self.items.append((float(value), float(bound), label))

    @property
    def failures(self):
        return [f"{label}: {v:.3g} > {b:g}" for v, b, label in self.items if not v <= b]

    def summary(self):
        v, b, label = max(self.items, key=lambda item: item[0] / item[1] if item[1] else math.inf)
        return f"worst {label} = {v:.3g} (bound {b:g})"

    def check(self, record_property):
        record_property("measured", self.summary())
        assert not self.failures, "; ".join(self.failures)


def add_check(worst, report, name, bound, label=None):
    worst.add(label or f"{report.surface_id}:{name}", report.check(name).residual, bound)


def test_criterion_01_jet_oracle(record_property):
    worst = Worst()
    for sid in SURFACES:
        for label, prog, pts in catalog_get(sid).program_samples():
            jets = jet_eval(prog, pts, 3)
            for alpha in multi_indices(prog.arity, 3):
                if sum(alpha) == 0:
                    continue
                jet = jets.derivative(alpha)
                fd = fd_derivative(prog, pts, alpha)
                rel = np.max(np.abs(jet - fd) / (1.0 + np.abs(jet)))
                worst.add(f"{sid}:{label}:d{alpha}", rel, 1e-6)
    worst.check(record_property)


def test_criterion_02_calabi_maximality(record_property):
    worst = Worst()
    for sid in ["thm44-i", "thm44-ii", "flat-maximal"]:
        add_check(worst, verify(sid), "maximality-residual", 1e-8)
    for consts in FLAT_FAMILY_CONSTANTS:
        report = verify("flat-family", **consts)
        add_check(worst, report, "maximality-residual", 1e-8, f"flat-family{consts}")
    worst.check(record_property)


def test_criterion_03_maximal_type_equation(record_property):
    worst = Worst()
    for sid, a in [("thm44-iii", -2 / 3), ("thm44-iv", -1 / 3)]:
        for c in [0.5, 1.0, 2.0]:
            report = verify(sid, c=c)
            for kind in ["pde", "trace"]:
                add_check(worst, report, f"maximal-type-{kind}(a={a:g})", 1e-8, f"{sid}(c={c}):{kind}")
    worst.check(record_property)


def test_criterion_04_constant_norms(record_property):
    worst = Worst()
    for sid in ["thm44-i", "thm44-ii", "thm44-iii", "thm44-iv"]:
        add_check(worst, verify(sid), "tchebychev-norm", 1e-9)
    flat = verify("flat-maximal")
    add_check(worst, flat, "tchebychev-norm", 1e-10)
    add_check(worst, flat, "metric", 1e-10)
    add_check(worst, flat, "nabla-tchebychev-norm", 1e-6)
    spec = catalog_get("flat-maximal")
    stencil = nabla_T_norm2_stencil(list(spec.components), spec.sample_grid())
    worst.add("flat-maximal:stencil |nabla T|^2 - 2", np.max(np.abs(stencil - 2.0)), 1e-6)
    worst.check(record_property)


def test_criterion_05_curvature(record_property):
    worst = Worst()
    for sid in ["thm44-i", "thm44-ii"]:
        add_check(worst, verify(sid), "gauss-curvature", 1e-8)
    for sid in ["thm44-iii", "thm44-iv"]:
        for c in [0.5, 1.0, 2.0]:
            add_check(worst, verify(sid, c=c), "gauss-curvature", 1e-8, f"{sid}(c={c})")
    for sid in THM62:
        add_check(worst, verify(sid), "gauss-curvature", 1e-8)
    worst.check(record_property)


def test_criterion_06_calabi_product(record_property):
    worst = Worst()
    report = verify("calabi-product-r4", grid=(7, 7, 7))
    assert report.check("type").grid == "7x7x7"
    assert report.check("type").passed
    add_check(worst, report, "metric", 1e-8)
    add_check(worst, report, "tchebychev-norm", 1e-8)
    add_check(worst, report, "extremal-residual", 1e-6)
    worst.check(record_property)


def test_criterion_07_warped_extremal_suite(record_property):
    worst = Worst()
    for sid in THM62:
        report = verify(sid)
        assert report.check("type").passed
        add_check(worst, report, "metric", 1e-9)
        add_check(worst, report, "difference-tensor-form", 1e-8)
        add_check(worst, report, "extremal-residual", 1e-6)
        add_check(worst, report, "implicit", 1e-9)
    add_check(worst, verify("thm62-i"), "graph-extremal-residual", 1e-8)
    worst.check(record_property)


IDENTITY_BOUNDS = {"gauss-equation": 1e-8, "codazzi-jet": 1e-6, "codazzi-stencil": 1e-6,
                   "scalar-identity": 1e-8, "metric-compatibility": 1e-9, "bianchi": 1e-9}


def test_criterion_08_identity_suite(record_property):
    worst = Worst()
    for sid in SURFACES:
        report = verify(sid)
        for name, bound in IDENTITY_BOUNDS.items():
            add_check(worst, report, name, bound)
    worst.check(record_property)


def test_criterion_09_second_variation(record_property):
    worst = Worst()
    cases = [("paraboloid", None), ("thm44-ii", ((1.0, 2.0), (1.0, 2.0)))]
    for sid, domain in cases:
        res = run_second_variation(sid, domain)
        gap = abs(res.second_variation - res.second_variation_tracefree)
        allowed = 10 * (res.error_estimate + res.error_estimate_tracefree)
        worst.add(f"{sid}:route-gap", gap, allowed)
        worst.add(f"{sid}:direct+1e-6", res.second_variation + 1e-6, 0.0)
        worst.add(f"{sid}:tracefree+1e-6", res.second_variation_tracefree + 1e-6, 0.0)
    record_property("measured", "; ".join(f"{label} = {v:.3g} (bound {b:.3g})" for v, b, label in worst.items))
    assert not worst.failures, "; ".join(worst.failures)


def test_criterion_10_area_comparison(record_property):
    rng = np.random.default_rng(20260310)
    spec = catalog_get("paraboloid")
    f = spec.graph
    bump = str(default_bump(spec.domain, spec.variables))
    margins = []
    for _ in range(5):
        eps = float(rng.uniform(0.01, 0.1))
        q = [float(v) for v in rng.uniform(-0.5, 0.5, size=6)]
        poly = (f"({q[0]!r} + {q[1]!r}*x1 + {q[2]!r}*x2 + {q[3]!r}*x1^2 "
                f"+ {q[4]!r}*x1*x2 + {q[5]!r}*x2^2)")
        f_sharp = parse(f"(x1^2 + x2^2)/2 + {eps!r}*{poly}*{bump}", spec.variables)
        cmp_ = area_compare(f, f_sharp, spec.domain)
        margin = (cmp_.area - cmp_.area_sharp) - (cmp_.error + cmp_.error_sharp)
        margins.append(margin)
    record_property("measured", f"smallest strict margin area - area_sharp - errors = {min(margins):.3g}")
    assert min(margins) > 0, margins


def test_criterion_11_isometry(record_property):
    spec = catalog_get("thm62-ii")
    pts = spec.sample_grid((9, 9)).reshape(-1, 2)

    def h(p):
        return cen.decompose_centroaffine(spec.components, p).h

    def upper_half_plane(p):
        return np.eye(2) / p[..., 1, None, None] ** 2

    chart_map = spec.blocks["isometry-map"]
    dev = cen.pullback_isometry_check(chart_map, h, upper_half_plane, pts)
    consts = spec.resolved_constants
    perturbed = [parse("exp(c4*u)*tanh(t) + 0.1*t*u", spec.variables, consts), chart_map[1]]
    control = cen.pullback_isometry_check(perturbed, h, upper_half_plane, pts)
    record_property("measured", f"pullback deviation {dev:.3g} (bound 1e-10); perturbed control {control:.3g}")
    assert dev <= 1e-10
    assert control > 1e-2


GEODESIC_STEP_CAP = 100  # a straight ray in a flat chart needs a few dozen steps


def test_criterion_12_geodesic_probes(record_property):
    spec = catalog_get("flat-maximal")
    start = np.zeros(2)
    lines = []
    straight_ok = True
    for direction in [(0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]:
        d = np.asarray(direction) / np.linalg.norm(direction)
        try:
            trace = geodesic_probe(spec, start, d, 10.0, max_steps=GEODESIC_STEP_CAP)
            err = float(np.linalg.norm(trace.endpoint - (start + 10.0 * d)))
            ok = trace.status == "completed-budget" and err <= 1e-8
            lines.append(f"dir {direction}: endpoint error {err:.3g}")
        except AffGeoError as exc:
            ok = False
            lines.append(f"dir {direction}: {type(exc).__name__} {str(exc).split(', x=')[0]}")
        straight_ok &= ok

    drift = Worst()
    for sid in SURFACES:
        s = catalog_get(sid)
        lo = np.array([a for a, _ in s.domain])
        hi = np.array([b for _, b in s.domain])
        trace = geodesic_probe(s, 0.5 * (lo + hi), np.ones(s.dimension), float(np.min(hi - lo)), bounds=(lo, hi))
        drift.add(sid, trace.speed_deviation, 1e-6)
    lines.append(f"speed drift {drift.summary()}")
    record_property("measured", "; ".join(lines))
    assert not drift.failures, drift.failures
    assert straight_ok, "; ".join(lines)


def _flat_maximal_oracle(u1, u2):
    half_sqrt_pi = 0.5 * math.sqrt(math.pi)
    x1 = half_sqrt_pi * special.erfi(u1)
    x2 = half_sqrt_pi * special.erf(u2)
    a = integrate.quad(lambda t: math.exp(t * t) * half_sqrt_pi * special.erf(t), 0.0, u1,
                       epsabs=1e-13, epsrel=1e-13)[0]
    b = integrate.quad(lambda t: math.exp(-t * t) * half_sqrt_pi * special.erfi(t), 0.0, u2,
                       epsabs=1e-13, epsrel=1e-13)[0]
    return np.array([x1, x2, a + b])


def _figure_residual(figure, rows):
    u, x = rows[:, :2], rows[:, 2:]
    if figure == 1:
        exact = np.array([_flat_maximal_oracle(*p) for p in u])
        return np.max(np.abs(x - exact) / (1.0 + np.abs(exact)), axis=-1)
    x1, x2, x3 = x.T
    if figure == 2:
        return x3 - 1.0 / x1 - 2.0 * x1 * (np.log(x1) - np.log(x2))
    if figure == 3:
        alpha = 1.0 / math.sqrt(1.0 + 4.0 * 0.75)
        return x2 ** (1 - alpha) * x3 ** (1 + alpha) - x1 ** 2 - 1.0
    if figure == 4:
        w = math.sqrt(4.0 * 1.25 - 1.0) / 2.0
        return x3 ** 2 - (x1 ** 2 + x2 ** 2) * np.exp(-np.arctan2(x2, x1) / w) - 1.0
    raise ValueError(figure)


def test_criterion_13_figures(record_property, tmp_path):
    worst = Worst()
    for figure in [1, 2, 3, 4]:
        first, second = tmp_path / f"fig{figure}-a.csv", tmp_path / f"fig{figure}-b.csv"
        mesh = emit_figure(figure, (41, 41), first)
        emit_figure(figure, (41, 41), second)
        assert first.read_bytes() == second.read_bytes(), f"figure {figure} not byte-identical"
        assert mesh.rows.shape == (41 * 41, 5)
        worst.add(f"figure {figure}", np.max(np.abs(_figure_residual(figure, mesh.rows))), 1e-9)
    worst.check(record_property)
