"""Verification suites, reports, figure meshes and completeness probes for catalog surfaces."""
from __future__ import annotations

import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import calabi as cal
from . import centroaffine as cen
from .catalog import SurfaceSpec, catalog_get
from .errors import AffGeoError, IoError
from .evaluate import eval_values
from .program import Program, parse
from .riemann import (GeodesicTrace, bianchi_residual, compatibility_residual, geodesic_ray)
from .structure import gauss_system_residual

SCHEMA_VERSION = 1
JET_TOL = 1e-8
STENCIL_TOL = 1e-6
TIGHT_TOL = 1e-9
THREADS_ENV = "AFFGEO_THREADS"

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_ERROR = 0, 1, 2, 3


# -- report types --------------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    """One verified quantity: the max absolute residual over the grid against its tolerance."""

    name: str
    reference: str
    grid: str
    residual: float
    tolerance: float
    passed: bool
    worst_point: Optional[tuple]
    tag: str


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of :func:`run_verify`; ``error`` is set when evaluation itself failed."""

    surface_id: str
    constants: Mapping[str, float]
    checks: tuple
    wall_time: float = 0.0
    error: Optional[str] = None
    error_point: Optional[tuple] = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    @property
    def exit_status(self) -> int:
        if self.error is not None:
            return EXIT_ERROR
        return EXIT_PASS if self.passed else EXIT_FAIL

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _clean(x: float) -> float:
    # normalize negative zero so repeated runs serialize identically
    return 0.0 if x == 0 else float(x)


def report_render(report: VerificationReport, fmt: str = "text") -> bytes:
    """Render a report as human-readable text or stable-keyed, versioned json."""
    if fmt == "json":
        doc = {
            "schema_version": SCHEMA_VERSION,
            "surface": report.surface_id,
            "constants": {k: _clean(v) for k, v in sorted(report.constants.items())},
            "passed": report.passed,
            "exit_status": report.exit_status,
            "error": report.error,
            "error_point": None if report.error_point is None else [_clean(v) for v in report.error_point],
            "checks": [{
                "name": c.name, "reference": c.reference, "tag": c.tag, "grid": c.grid,
                "residual": _clean(c.residual), "tolerance": c.tolerance, "passed": c.passed,
                "worst_point": None if c.worst_point is None else [_clean(v) for v in c.worst_point],
            } for c in report.checks],
        }
        return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    out = io.StringIO()
    consts = ", ".join(f"{k}={v:.12g}" for k, v in sorted(report.constants.items()))
    out.write(f"surface {report.surface_id}" + (f" ({consts})" if consts else "") + "\n")
    for c in report.checks:
        status = "PASS" if c.passed else "FAIL"
        where = "" if c.passed or c.worst_point is None else \
            " at (" + ", ".join(f"{v:.6g}" for v in c.worst_point) + ")"
        out.write(f"  {status} {c.name:<34} {c.residual:10.3e} <= {c.tolerance:.1e}  [{c.grid}]{where}\n")
    if report.error is not None:
        where = "" if report.error_point is None else \
            " at (" + ", ".join(f"{v:.6g}" for v in report.error_point) + ")"
        out.write(f"  ERROR {report.error}{where}\n")
    verdict = "PASS" if report.passed else ("ERROR" if report.error else "FAIL")
    out.write(f"{verdict}: {sum(c.passed for c in report.checks)}/{len(report.checks)} checks, "
              f"{report.wall_time:.2f}s\n")
    return out.getvalue().encode()


# -- per-chunk evaluation ------------------------------------------------------------

def _maxabs(a: np.ndarray, keep: int = 1) -> np.ndarray:
    a = np.abs(np.asarray(a, dtype=float))
    return a.reshape(a.shape[:keep] + (-1,)).max(axis=-1)


def _expected(value, pts: np.ndarray) -> np.ndarray:
    if isinstance(value, Program):
        return eval_values(value, pts)
    if isinstance(value, tuple):
        return np.stack([_expected(v, pts) for v in value], axis=-1)
    raise TypeError(value)


class _Context:
    """Lazily computed quantities shared by the checks of one chunk of points."""

    def __init__(self, spec: SurfaceSpec, pts: np.ndarray):
        self.spec, self.pts = spec, pts
        self._cache = {}

    def _get(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    # Calabi
    def source(self):
        s = self.spec
        return s.graph if s.kind == "graph" and s.graph is not None else list(s.components)

    def immersion(self):
        return self._get("immersion", lambda: cal.decompose_calabi_immersion(self.spec.components, self.pts))

    def report(self):
        if self.spec.kind == "graph" and self.spec.graph is not None:
            return self._get("report", lambda: cal.calabi_invariants(self.spec.graph, self.pts))
        return self.immersion().report

    def calabi_stencil(self):
        def build():
            field = cal.report_field(self.source())
            n = self.spec.dimension
            flat = cal.stencil_partials(lambda p: _pack_report(field(p)), self.pts)
            dA = flat[..., : n ** 3, :].reshape(self.pts.shape[:-1] + (n, n, n, n))
            dT = flat[..., n ** 3:, :]
            return dA, dT
        return self._get("cstencil", build)

    # centroaffine
    def decomposition(self):
        return self._get("decomp", lambda: cen.decompose_centroaffine(self.spec.components, self.pts))

    def centro_stencil(self):
        def build():
            comps = self.spec.components
            n = self.spec.dimension

            def packed(p):
                d = cen.decompose_centroaffine(comps, p)
                return _pack(d.C, d.T)
            flat = cal.stencil_partials(packed, self.pts)
            dC = flat[..., : n ** 3, :].reshape(self.pts.shape[:-1] + (n, n, n, n))
            dT = flat[..., n ** 3:, :]
            return dC, dT
        return self._get("xstencil", build)

    def image(self):
        return self._get("image", lambda: np.stack([eval_values(c, self.pts) for c in self.spec.components], -1))


def _pack(tensor, vector):
    lead = vector.shape[:-1]
    return np.concatenate([tensor.reshape(lead + (-1,)), vector], axis=-1)


def _pack_report(r):
    return _pack(r.A_up, r.T)


@dataclass(frozen=True)
class _Probe:
    name: str
    reference: str
    tolerance: float
    tag: str
    compute: Callable  # _Context -> per-point residual (m,)
    finalize: Optional[Callable] = None  # full per-point array -> per-point residual


def _expectation_probe(spec: SurfaceSpec, e) -> _Probe:
    name = e.name
    if e.params:
        name += "(" + ",".join(f"{k}={v:.6g}" for k, v in sorted(e.params.items())) + ")"
    stencil = name.startswith(("nabla-tchebychev-norm", "extremal-residual")) and e.name != "extremal-residual-jet"
    tol = e.tol if e.tol is not None else (STENCIL_TOL if stencil else JET_TOL)
    ref = e.ref
    fn = _EXPECTATIONS[spec.geometry][e.name]

    def compute(ctx):
        return fn(ctx, e)
    finalize = _dtf_finalize if e.name == "difference-tensor-form" else None
    return _Probe(name, ref, tol, e.tag, compute, finalize)


def _diff(actual, e, ctx):
    return _maxabs(actual - _expected(e.value, ctx.pts)) if e.shape != "scalar" else \
        np.abs(actual - _expected(e.value, ctx.pts))


_CALABI = {
    "metric": lambda ctx, e: _diff(ctx.report().G, e, ctx),
    "tchebychev": lambda ctx, e: _diff(ctx.report().T, e, ctx),
    "tchebychev-norm": lambda ctx, e: _diff(ctx.report().T_norm2, e, ctx),
    "gauss-curvature": lambda ctx, e: _diff(ctx.report().K, e, ctx),
    "riemann-norm": lambda ctx, e: _diff(_maxabs(ctx.report().curvature.riemann), e, ctx),
    "maximality-residual": lambda ctx, e: _diff(ctx.report().lnD_laplacian, e, ctx),
    "nabla-tchebychev-norm": lambda ctx, e: _diff(
        cal.nabla_T_norm2(ctx.report(), ctx.calabi_stencil()[1]), e, ctx),
    "maximal-type-pde": lambda ctx, e: _diff(
        cal.maximal_type_residual(_require_graph(ctx), e.params["a"], ctx.pts)[0], e, ctx),
    "maximal-type-trace": lambda ctx, e: _diff(
        cal.maximal_type_residual(_require_graph(ctx), e.params["a"], ctx.pts)[1], e, ctx),
}


def _require_graph(ctx):
    if ctx.spec.graph is None or ctx.spec.kind != "graph":
        raise AffGeoError("maximal-type checks need a graph entry")
    return ctx.spec.graph


def _type_mismatch(ctx, e):
    return (ctx.decomposition().types != e.value).astype(float)


def _difference_form(ctx, e):
    C = ctx.decomposition().C
    s = C[..., 1, 1, 1]
    others = np.stack([C[..., 0, 0, 0], C[..., 1, 0, 0], C[..., 0, 0, 1], C[..., 1, 0, 1],
                       C[..., 0, 1, 1]], axis=-1)
    # scale and normalized off-form part; the spread of the scale is added after the reduction
    return np.stack([s, np.abs(others).max(axis=-1) / np.abs(s)], axis=-1)


def _dtf_finalize(values: np.ndarray) -> np.ndarray:
    s, ratio = values[..., 0], values[..., 1]
    scale = np.mean(s)
    return ratio + np.abs(s - scale) / abs(scale)


def _graph_extremal(ctx, e):
    img = ctx.image()[..., : ctx.spec.dimension]
    return _diff(cen.extremal_residual_graph(ctx.spec.graph, img).residual, e, ctx)


def _implicit(ctx, e):
    return _diff(cen.implicit_residual(ctx.spec.implicit, ctx.image()), e, ctx)


def _isometry(ctx, e):
    spec = ctx.spec
    chart_map = spec.blocks["isometry-map"]
    target = spec.blocks["target-metric"]
    k = len(chart_map)

    def target_metric(p):
        vals = np.stack([eval_values(q, p) for q in target], axis=-1)
        return vals.reshape(p.shape[:-1] + (k, k))

    dev = cen.pullback_deviation(chart_map, lambda p: cen.decompose_centroaffine(spec.components, p).h,
                                 target_metric, ctx.pts)
    return _diff(dev, e, ctx)


_CENTROAFFINE = {
    "type": _type_mismatch,
    "metric": lambda ctx, e: _diff(ctx.decomposition().h, e, ctx),
    "tchebychev": lambda ctx, e: _diff(ctx.decomposition().T, e, ctx),
    "tchebychev-norm": lambda ctx, e: _diff(ctx.decomposition().T_norm2, e, ctx),
    "gauss-curvature": lambda ctx, e: _diff(ctx.decomposition().K, e, ctx),
    "riemann-norm": lambda ctx, e: _diff(_maxabs(ctx.decomposition().curvature.riemann), e, ctx),
    "difference-tensor-norm": lambda ctx, e: _diff(_maxabs(ctx.decomposition().C), e, ctx),
    "difference-tensor-form": _difference_form,
    "extremal-residual": lambda ctx, e: _diff(
        cen.divergence_T(ctx.decomposition(), ctx.centro_stencil()[1]), e, ctx),
    "extremal-residual-jet": lambda ctx, e: _diff(cen.divergence_T(ctx.decomposition()), e, ctx),
    "graph-extremal-residual": _graph_extremal,
    "implicit": _implicit,
    "isometry": _isometry,
}
_EXPECTATIONS = {"calabi": _CALABI, "centroaffine": _CENTROAFFINE}


def _identity_probes(spec: SurfaceSpec) -> list:
    probes = []
    n = spec.dimension
    if spec.geometry == "calabi":
        probes += [
            _Probe("gauss-equation", "curvature equals the commutator of the cubic form", JET_TOL, "identity",
                   lambda ctx: cal.gauss_residual(ctx.report())),
            _Probe("codazzi-jet", "cubic form covariant derivative is totally symmetric", JET_TOL, "identity",
                   lambda ctx: cal.codazzi_residual(ctx.report())),
            _Probe("codazzi-stencil", "same, with stencil derivatives of the cubic form", STENCIL_TOL, "identity",
                   lambda ctx: cal.codazzi_residual(ctx.report(), ctx.calabi_stencil()[0])),
            _Probe("scalar-identity", "R = n(n-1)J - n^2|T|^2", JET_TOL, "identity",
                   lambda ctx: np.abs(cal.scalar_identity_residual(ctx.report()))),
            _Probe("tchebychev-identity", "T is a multiple of the gradient of ln det Hess", JET_TOL, "identity",
                   lambda ctx: np.abs(cal.tchebychev_identity_residual(ctx.report()))),
            _Probe("divergence-identity", "Laplacian of ln det Hess equals -2n div T", JET_TOL, "identity",
                   lambda ctx: np.abs(ctx.report().lnD_laplacian + 2 * n * cal.divergence_T(ctx.report()))),
            _Probe("metric-compatibility", "Levi-Civita connection preserves the metric", TIGHT_TOL, "identity",
                   lambda ctx: compatibility_residual(ctx.report().metric, ctx.report().christoffel)),
            _Probe("bianchi", "first Bianchi identity", TIGHT_TOL, "identity",
                   lambda ctx: bianchi_residual(ctx.report().curvature)),
        ]
        if not (spec.kind == "graph" and spec.graph is not None):
            probes.append(_Probe("structure-solve", "relative residual of the structure equation solve",
                                 1e-10, "identity", lambda ctx: ctx.immersion().residual))
    else:
        probes += [
            _Probe("gauss-equation", "curvature from h against the difference tensor", JET_TOL, "identity",
                   lambda ctx: cen.gauss_residual(ctx.decomposition())),
            _Probe("codazzi-jet", "difference tensor covariant derivative is totally symmetric", JET_TOL,
                   "identity", lambda ctx: cen.codazzi_residual(ctx.decomposition())),
            _Probe("codazzi-stencil", "same, with stencil derivatives of the difference tensor", STENCIL_TOL,
                   "identity", lambda ctx: cen.codazzi_residual(ctx.decomposition(), ctx.centro_stencil()[0])),
            _Probe("scalar-identity", "R = eps n(n-1) + |C|^2 - n^2|T|^2", JET_TOL, "identity",
                   lambda ctx: np.abs(cen.scalar_identity_residual(ctx.decomposition()))),
            _Probe("metric-compatibility", "Levi-Civita connection preserves the metric", TIGHT_TOL, "identity",
                   lambda ctx: compatibility_residual(ctx.decomposition().metric, ctx.decomposition().christoffel)),
            _Probe("bianchi", "first Bianchi identity", TIGHT_TOL, "identity",
                   lambda ctx: bianchi_residual(ctx.decomposition().curvature)),
            _Probe("structure-solve", "relative residual of the structure equation solve", 1e-10, "identity",
                   lambda ctx: ctx.decomposition().residual),
            _Probe("type-stable", "elliptic or hyperbolic type is constant over the grid", 0.0, "identity",
                   lambda ctx: ctx.decomposition().epsilon, _type_spread),
        ]
    for g in spec.gauss:
        label = f"structure-equations[{spec.variables[g.i]},{spec.variables[g.j]}]"
        probes.append(_Probe(label, g.ref, TIGHT_TOL, g.tag,
                             lambda ctx, g=g: gauss_system_residual(ctx.spec.components, ctx.pts, g.i, g.j,
                                                                    g.tangent, g.position, g.constant)))
    return probes


def _type_spread(eps: np.ndarray) -> np.ndarray:
    return (eps != eps[0]).astype(float)


def surface_probes(spec: SurfaceSpec) -> list:
    """Expected-invariant checks followed by the identity suite of the geometry."""
    return [_expectation_probe(spec, e) for e in spec.expectations] + _identity_probes(spec)


# -- driver -----------------------------------------------------------------------

def thread_count() -> int:
    """Worker threads: ``AFFGEO_THREADS`` if set, else the CPU count (at most 8)."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    return max(1, min(8, os.cpu_count() or 1))


def _run_chunk(probes, spec, pts):
    ctx = _Context(spec, pts)
    return [np.asarray(p.compute(ctx), dtype=float) for p in probes]


def _locate_failure(probes, spec, pts):
    for k in range(pts.shape[0]):
        try:
            _run_chunk(probes, spec, pts[k:k + 1])
        except AffGeoError as exc:
            return k, exc
    return None, None


def _point_of(exc) -> Optional[tuple]:
    p = getattr(exc, "point", None)
    return None if p is None else tuple(float(v) for v in np.ravel(p))


def run_verify(surface_id: str, grid: Optional[Sequence[int]] = None, tol: Optional[float] = None,
               constants: Optional[Mapping[str, float]] = None, threads: Optional[int] = None,
               spec: Optional[SurfaceSpec] = None) -> VerificationReport:
    """Evaluate every expected invariant and identity of a catalog surface over its sample grid.

    ``tol`` replaces every tolerance. Raises :class:`~affgeo.errors.UnknownSurface`
    for unknown ids; evaluation failures are captured in the report (exit status 3).
    """
    start = time.perf_counter()
    spec = spec or catalog_get(surface_id, constants or {})
    counts = spec.default_counts() if grid is None else tuple(int(c) for c in grid)
    pts = spec.sample_grid(counts).reshape(-1, spec.dimension)
    grid_label = "x".join(str(c) for c in counts)
    probes = surface_probes(spec)
    consts = spec.resolved_constants
    workers = threads or thread_count()
    chunks = [c for c in np.array_split(pts, min(workers, pts.shape[0])) if c.shape[0]]

    try:
        if len(chunks) == 1:
            results = [_run_chunk(probes, spec, chunks[0])]
        else:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                results = list(pool.map(lambda c: _run_chunk(probes, spec, c), chunks))
    except AffGeoError as exc:
        where = _point_of(exc)
        message = f"{type(exc).__name__}: {exc}"
        if where is None:
            k, sub = _locate_failure(probes, spec, pts)
            if k is not None:
                where = tuple(float(v) for v in pts[k])
                message = f"{type(sub).__name__}: {sub}"
        return VerificationReport(spec.id, consts, (), time.perf_counter() - start, message, where)

    checks = []
    for q, probe in enumerate(probes):
        values = np.concatenate([r[q] for r in results], axis=0)
        resid = probe.finalize(values) if probe.finalize else values
        resid = np.abs(resid)
        if not np.all(np.isfinite(resid)):
            k = int(np.flatnonzero(~np.isfinite(resid))[0])
            return VerificationReport(spec.id, consts, tuple(checks), time.perf_counter() - start,
                                      f"non-finite residual in check {probe.name}", tuple(float(v) for v in pts[k]))
        k = int(np.argmax(resid))
        worst = float(resid[k])
        limit = probe.tolerance if tol is None else float(tol)
        checks.append(Check(probe.name, probe.reference, grid_label, worst, limit, worst <= limit,
                            tuple(float(v) for v in pts[k]), probe.tag))
    return VerificationReport(spec.id, consts, tuple(checks), time.perf_counter() - start)


# -- point invariants ---------------------------------------------------------------

def point_invariants(spec: SurfaceSpec, point) -> dict:
    """Invariants of a catalog surface at one chart point, as plain python values."""
    p = np.asarray(point, dtype=float).reshape(1, spec.dimension)
    out = {"surface": spec.id, "point": p[0].tolist()}
    if spec.geometry == "calabi":
        ctx = _Context(spec, p)
        r = ctx.report()
        out.update(metric=r.G[0].tolist(), tchebychev=r.T[0].tolist(), tchebychev_norm=float(r.T_norm2[0]),
                   pick_invariant=float(r.J[0]), gauss_curvature=float(r.K[0]),
                   hessian_determinant=float(r.D[0]), maximality_residual=float(r.lnD_laplacian[0]))
    else:
        d = cen.decompose_centroaffine(spec.components, p)
        out.update(type=str(d.types[0]), metric=d.h[0].tolist(), tchebychev=d.T[0].tolist(),
                   tchebychev_norm=float(d.T_norm2[0]), gauss_curvature=float(d.K[0]),
                   scalar_curvature=float(d.scalar[0]), extremal_residual=float(cen.divergence_T(d)[0]))
    return out


# -- figures ------------------------------------------------------------------------

@dataclass(frozen=True)
class FigureSetup:
    surface_id: str
    constants: Mapping[str, float]
    domain: tuple
    equation: str


FIGURES = {
    1: FigureSetup("flat-maximal", {}, ((-1.5, 1.5), (-1.5, 1.5)), "parametric integrals"),
    2: FigureSetup("thm62-i", {"c2": 1.0}, ((-1.0, 1.0), (-1.0, 1.0)), "implicit"),
    3: FigureSetup("thm62-ii", {"c4": math.sqrt(3) / 2}, ((-1.0, 1.0), (-1.0, 1.0)), "implicit"),
    # omega = 1 here, so |u| < pi keeps atan2 on its principal branch
    4: FigureSetup("thm62-v", {"c5": math.sqrt(5) / 2}, ((0.1, 2.0), (-3.0, 3.0)), "implicit"),
}


@dataclass(frozen=True)
class MeshFile:
    """Chart coordinates and ambient points of a figure surface."""

    surface_id: str
    grid: tuple
    constants: Mapping[str, float]
    columns: tuple
    rows: np.ndarray

    def render(self) -> str:
        out = io.StringIO()
        consts = ",".join(f"{k}={v!r}" for k, v in sorted(self.constants.items()))
        out.write(f"# surface: {self.surface_id}\n")
        out.write(f"# constants: {consts}\n")
        out.write(f"# grid: {'x'.join(str(g) for g in self.grid)}\n")
        out.write(f"# columns: {','.join(self.columns)}\n")
        for row in self.rows:
            out.write(",".join(f"{_clean(v):.17g}" for v in row) + "\n")
        return out.getvalue()


def figure_spec(figure: int) -> tuple:
    """The catalog entry and chart rectangle drawn in a figure."""
    if figure not in FIGURES:
        raise ValueError(f"figure must be one of {sorted(FIGURES)}")
    setup = FIGURES[figure]
    return catalog_get(setup.surface_id, setup.constants), setup.domain


def emit_figure(figure: int, grid=(41, 41), path=None) -> MeshFile:
    """Mesh of a figure surface on an inclusive ``grid`` over its chart rectangle.

    Rows run over the first chart variable slowest. Writes the CSV rendering
    to ``path`` when given.
    """
    spec, domain = figure_spec(figure)
    grid = tuple(int(g) for g in grid)
    if len(grid) != 2 or min(grid) < 1:
        raise ValueError("figure grids are two positive counts")
    axes = [np.linspace(lo, hi, m) for (lo, hi), m in zip(domain, grid)]
    chart = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
    ambient = np.stack([eval_values(c, chart) for c in spec.components], axis=-1)
    rows = np.concatenate([chart, ambient], axis=-1)
    if not np.all(np.isfinite(rows)):
        raise AffGeoError("non-finite mesh values")
    mesh = MeshFile(spec.id, grid, spec.resolved_constants, spec.variables + spec.ambient, rows)
    if path is not None:
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(mesh.render())
        except OSError as exc:
            raise IoError(f"cannot write mesh to {path}: {exc}") from exc
    return mesh


# -- geodesics and variations -------------------------------------------------------

def metric_field(spec: SurfaceSpec) -> Callable:
    """``points -> MetricJet`` of the relative metric of a catalog surface."""
    if spec.geometry == "centroaffine":
        return lambda p: cen.decompose_centroaffine(spec.components, p).metric
    if spec.kind == "graph" and spec.graph is not None:
        return lambda p: cal.calabi_invariants(spec.graph, p).metric
    return lambda p: cal.decompose_calabi_immersion(spec.components, p).report.metric


def geodesic_probe(spec: SurfaceSpec, start, direction, length: float, bounds=None, **kw) -> GeodesicTrace:
    """Unit-speed geodesic ray in the chart of a catalog surface (bounded by its chart box)."""
    if bounds is None:
        bounds = (np.array([lo for lo, _ in spec.chart]), np.array([hi for _, hi in spec.chart]))
    return geodesic_ray(metric_field(spec), start, direction, length, bounds, **kw)


def default_bump(domain, variables=("x1", "x2")) -> Program:
    """``prod (4 (x - a)(b - x)/(b - a)^2)^3`` over a rectangle; vanishes to second order on its boundary."""
    factors = []
    for (a, b), v in zip(domain, variables):
        factors.append(f"(4*({v} - ({a!r}))*(({b!r}) - {v})/({(b - a) ** 2!r}))^3")
    return parse("*".join(factors), variables)


def run_second_variation(surface_id: str, domain=None, bump: str = "default", grid=(32, 32),
                         constants: Optional[Mapping[str, float]] = None) -> cal.VariationResult:
    """Second variation of the Calabi area of a catalog graph along a bump."""
    spec = catalog_get(surface_id, constants or {})
    if spec.geometry != "calabi" or spec.kind != "graph" or spec.graph is None:
        raise ValueError("second variation is defined for Calabi graph entries")
    domain = spec.domain if domain is None else tuple(tuple(map(float, d)) for d in domain)
    phi = default_bump(domain, spec.variables) if bump == "default" else parse(bump, spec.variables)
    return cal.second_variation(spec.graph, phi, domain, grid)
