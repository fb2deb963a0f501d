"""Calabi-normalized geometry of graphs and parametric immersions.

All functions are batched over chart points: ``points`` may have shape
``(n,)`` or ``(..., n)`` and every returned array carries the same leading
batch axes. Index conventions follow :mod:`affgeo.riemann`; in particular
``A_up[..., l, i, j] = A^l_ij`` and a trailing axis holds partial derivatives.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BoundaryViolation, NonConvex, NotMaximal, SingularMetric, ZeroCubicForm
from .evaluate import jet_eval
from .jet import Jet
from .program import Add, Program
from .riemann import (ChristoffelData, CurvatureData, DensityIntegral, MetricJet, christoffel,
                      curvature, integrate_rule, laplace_beltrami, positive_definite_mask,
                      require_positive_definite)
from .structure import solve_structure

STENCIL_STEP = 1e-4
STENCIL_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
STENCIL_WEIGHTS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
MAXIMAL_GATE = 1e-7
BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class CalabiReport:
    """Calabi invariants at a batch of chart points.

    ``lnD_laplacian`` is the maximality residual ``Delta_G ln det(Hess f)`` and
    ``lnD_gradient`` the partials of ``ln det(Hess f)``; both come from jets of
    ``ln D`` and are independent of the cubic-form path that yields ``T``.
    """

    point: np.ndarray
    G: np.ndarray
    Ginv: np.ndarray
    A: np.ndarray
    A_up: np.ndarray
    dA_up: np.ndarray
    T: np.ndarray
    T_low: np.ndarray
    dT: np.ndarray
    T_norm2: np.ndarray
    J: np.ndarray
    R: np.ndarray
    K: Optional[np.ndarray]
    D: np.ndarray
    lnD_gradient: np.ndarray
    lnD_laplacian: np.ndarray
    metric: MetricJet
    christoffel: ChristoffelData
    curvature: CurvatureData

    @property
    def dim(self) -> int:
        return self.G.shape[-1]


@dataclass(frozen=True)
class ImmersionDecomposition:
    G: np.ndarray
    connection: np.ndarray
    A_up: np.ndarray
    residual: np.ndarray
    report: CalabiReport


@dataclass(frozen=True)
class EjiriFrame:
    """Frame maximizing ``F(u) = A(u, u, u)`` on the unit circle of ``G``."""

    angle: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    theta: np.ndarray


@dataclass(frozen=True)
class VariationResult:
    second_variation: float
    second_variation_tracefree: float
    LL: float
    AA: float
    error_estimate: float
    error_estimate_tracefree: float


@dataclass(frozen=True)
class AreaComparison:
    area: float
    area_sharp: float
    error: float
    error_sharp: float

    @property
    def holds(self) -> bool:
        return self.area_sharp <= self.area + self.error + self.error_sharp


# -- shared assembly -------------------------------------------------------------

def _points(points) -> np.ndarray:
    return np.asarray(points, dtype=float)


def jet_det(entries) -> Jet:
    """Determinant of a square matrix of jets by permutation expansion."""
    n = len(entries)
    total = None
    for perm in itertools.permutations(range(n)):
        sign = np.linalg.det(np.eye(n)[list(perm)])
        term = entries[0][perm[0]]
        for i in range(1, n):
            term = term * entries[i][perm[i]]
        term = term * float(round(sign))
        total = term if total is None else total + term
    return total


def _assemble(pts, metric: MetricJet, A_up, dA_up, lnD: Jet, D) -> CalabiReport:
    n = metric.dim
    ch = christoffel(metric, check=False)
    curv = curvature(metric, ch)
    G, Ginv, dG = metric.G, ch.Ginv, metric.dG
    A_low = np.einsum("...lij,...lk->...ijk", A_up, G)
    T = np.einsum("...ij,...lij->...l", Ginv, A_up) / n
    T_low = np.einsum("...lk,...k->...l", G, T)
    dGinv = -np.einsum("...ia,...abm,...bj->...ijm", Ginv, dG, Ginv)
    dT = (np.einsum("...ijm,...lij->...lm", dGinv, A_up)
          + np.einsum("...ij,...lijm->...lm", Ginv, dA_up)) / n
    T_norm2 = np.einsum("...l,...l->...", T, T_low)
    if n > 1:
        J = np.einsum("...il,...jp,...kq,...ijk,...lpq->...", Ginv, Ginv, Ginv, A_low, A_low) / (n * (n - 1))
    else:
        J = np.zeros(G.shape[:-2])
    return CalabiReport(
        point=pts, G=G, Ginv=Ginv, A=A_low, A_up=A_up, dA_up=dA_up, T=T, T_low=T_low, dT=dT,
        T_norm2=T_norm2, J=J, R=curv.scalar, K=curv.gaussian, D=D,
        lnD_gradient=lnD.tensor(1), lnD_laplacian=laplace_beltrami(lnD, metric, ch),
        metric=metric, christoffel=ch, curvature=curv)


def calabi_invariants(f: Program, points, tol=None) -> CalabiReport:
    """Calabi invariants of the graph ``x_{n+1} = f(x)``.

    Uses order-4 jets of ``f``: ``G = Hess f``, ``A_ijk = -f_ijk / 2``.
    """
    pts = _points(points)
    kw = {} if tol is None else {"tol": tol}
    jf = jet_eval(f, pts, 4, **kw)
    n = f.arity
    G = jf.tensor(2)
    require_positive_definite(G, "Hessian", points=pts, exc=NonConvex)
    metric = MetricJet(G, jf.tensor(3), jf.tensor(4))
    Ginv = np.linalg.inv(G)
    A_low = -0.5 * metric.dG
    dA_low = -0.5 * metric.d2G
    dGinv = -np.einsum("...ia,...abm,...bj->...ijm", Ginv, metric.dG, Ginv)
    A_up = np.einsum("...lk,...ijk->...lij", Ginv, A_low)
    dA_up = (np.einsum("...lkm,...ijk->...lijm", dGinv, A_low)
             + np.einsum("...lk,...ijkm->...lijm", Ginv, dA_low))
    hess = [[jf.partial(i).partial(j) for j in range(n)] for i in range(n)]
    Djet = jet_det(hess)
    lnD = Djet.apply("ln")
    return _assemble(pts, metric, A_up, dA_up, lnD, Djet.value)


def decompose_calabi_immersion(components: Sequence[Program], points, tol=None) -> ImmersionDecomposition:
    """Solve ``x_{u_i u_j} = c^k_ij x_{u_k} + G_ij Y`` with ``Y = (0, ..., 0, 1)``.

    ``ln det(Hess f)`` of the underlying graph is obtained as
    ``ln det G - 2 ln |det(d x_a / d u_i)|`` (``a <= n``) from jets.
    """
    pts = _points(points)
    sol = solve_structure(components, pts, "calabi", tol)
    n = components[0].arity
    metric = MetricJet(sol.b, sol.db, sol.d2b)
    if not np.all(positive_definite_mask(sol.b)):
        require_positive_definite(sol.b, "Calabi metric", points=pts, exc=SingularMetric)
    ch = christoffel(metric, check=False)
    A_up = sol.c - ch.gamma
    dA_up = sol.dc - ch.dgamma
    jac = [[sol.position_jets[a].partial(i).truncate(2) for i in range(n)] for a in range(n)]
    detJ = jet_det(jac)
    detG = jet_det(sol.b_jets)
    lnD = detG.apply("ln") - (detJ * detJ).apply("ln")
    D = detG.value / detJ.value**2
    report = _assemble(pts, metric, A_up, dA_up, lnD, D)
    return ImmersionDecomposition(sol.b, sol.c, A_up, sol.residual, report)


def graph_components(f: Program) -> list:
    """Programs ``(x_1, ..., x_n, f)`` of the graph immersion of ``f``."""
    from .program import Var
    return [Program(Var(i), f.variables) for i in range(f.arity)] + [f]


# -- scalar checks ------------------------------------------------------------------

def maximal_residual(f: Program, points) -> np.ndarray:
    """``Delta_G ln det(Hess f)`` of a graph from order-4 jets."""
    return calabi_invariants(f, points).lnD_laplacian


def divergence_T(r: CalabiReport) -> np.ndarray:
    """``div T = d_l T^l + Gamma^l_lm T^m`` from the jet derivatives of ``A``."""
    return np.einsum("...ll->...", r.dT) + np.einsum("...llm,...m->...", r.christoffel.gamma, r.T)


def covariant_T(r: CalabiReport, dT: Optional[np.ndarray] = None) -> np.ndarray:
    """``T^l_{,m} = d_m T^l + Gamma^l_mk T^k``."""
    dT = r.dT if dT is None else dT
    return dT + np.einsum("...lmk,...k->...lm", r.christoffel.gamma, r.T)


def nabla_T_norm2(r: CalabiReport, dT: Optional[np.ndarray] = None) -> np.ndarray:
    """``|nabla T|^2 = G_ab G^mn T^a_{,m} T^b_{,n}``."""
    cov = covariant_T(r, dT)
    return np.einsum("...ab,...mn,...am,...bn->...", r.G, r.Ginv, cov, cov)


def maximal_type_residual(f: Program, a: float, points):
    """Residuals of ``f^{ij} d_i d_j (D^a) = 0`` and ``div T = n(2a+1)|T|^2``."""
    if a == 0:
        raise ValueError("exponent a must be nonzero")
    pts = _points(points)
    r = calabi_invariants(f, pts)
    jf = jet_eval(f, pts, 4)
    n = f.arity
    Djet = jet_det([[jf.partial(i).partial(j) for j in range(n)] for i in range(n)])
    Da = Djet ** a
    pde = np.einsum("...ij,...ij->...", r.Ginv, Da.tensor(2))
    trace = divergence_T(r) - n * (2 * a + 1) * r.T_norm2
    return pde, trace


def gauss_residual(r: CalabiReport) -> np.ndarray:
    """Max of ``|R^l_kij - (A^m_ik A^l_jm - A^m_jk A^l_im)|``."""
    A = r.A_up
    rhs = np.einsum("...mik,...ljm->...lkij", A, A)
    rhs = rhs - np.swapaxes(rhs, -1, -2)
    d = np.abs(r.curvature.riemann - rhs)
    return d.reshape(d.shape[:-4] + (-1,)).max(axis=-1)


def scalar_identity_residual(r: CalabiReport) -> np.ndarray:
    n = r.dim
    return r.R - n * (n - 1) * r.J + n * n * r.T_norm2


def tchebychev_identity_residual(r: CalabiReport) -> np.ndarray:
    """Max of ``|T_k + d_k ln D / (2n)|``: cubic-form path against the ln-det path."""
    d = np.abs(r.T_low + r.lnD_gradient / (2 * r.dim))
    return d.max(axis=-1)


def covariant_A(r: CalabiReport, dA_up: np.ndarray) -> np.ndarray:
    """``A^k_{ij,l}`` from partials ``dA_up[..., k, i, j, l]``."""
    g, A = r.christoffel.gamma, r.A_up
    return (dA_up + np.einsum("...klm,...mij->...kijl", g, A)
            - np.einsum("...mli,...kmj->...kijl", g, A)
            - np.einsum("...mlj,...kim->...kijl", g, A))


def codazzi_residual(r: CalabiReport, dA_up: Optional[np.ndarray] = None) -> np.ndarray:
    """Max of ``|A^k_{ij,l} - A^k_{il,j}|``; jets by default, or supplied partials."""
    cov = covariant_A(r, r.dA_up if dA_up is None else dA_up)
    d = np.abs(cov - np.swapaxes(cov, -1, -2))
    return d.reshape(d.shape[:-4] + (-1,)).max(axis=-1)


def stencil_partials(evaluate: Callable, points, step: float = STENCIL_STEP) -> np.ndarray:
    """Five-point central differences of an array-valued point function.

    ``evaluate`` maps points (..., n) to values (..., *shape); returns
    (..., *shape, n) with the derivative axis last. Step ``step * (1 + |x_i|)``.
    """
    pts = _points(points)
    n = pts.shape[-1]
    h = step * (1.0 + np.abs(pts))  # (..., n)
    shifted = np.repeat(pts[..., None, None, :], 4, axis=-2)
    shifted = np.repeat(shifted, n, axis=-3)  # (..., n, 4, n)
    eye = np.eye(n)
    shifted = shifted + (STENCIL_OFFSETS[None, :, None] * eye[:, None, :]) * h[..., :, None, None]
    vals = np.asarray(evaluate(shifted))  # (..., n, 4, *shape)
    tail = vals.ndim - pts.ndim - 1
    w = STENCIL_WEIGHTS.reshape((4,) + (1,) * tail)
    deriv = np.sum(vals * w, axis=pts.ndim) / h.reshape(h.shape + (1,) * tail)
    # deriv: (..., n, *shape) -> move derivative axis last
    return np.moveaxis(deriv, pts.ndim - 1, -1)


def report_field(source) -> Callable:
    """Normalize a graph program or component list into ``points -> CalabiReport``."""
    if isinstance(source, Program):
        return lambda p: calabi_invariants(source, p)
    if callable(source):
        return source
    return lambda p: decompose_calabi_immersion(source, p).report


def codazzi_residual_stencil(source, points) -> np.ndarray:
    field = report_field(source)
    r = field(points)
    dA = stencil_partials(lambda p: field(p).A_up, points)
    return codazzi_residual(r, dA)


def nabla_T_norm2_stencil(source, points) -> np.ndarray:
    field = report_field(source)
    r = field(points)
    dT = stencil_partials(lambda p: field(p).T, points)
    return nabla_T_norm2(r, dT)


# -- Ejiri frame -----------------------------------------------------------------------

def _orthonormal_basis(G):
    """G-orthonormal ``(b1, b2)`` with ``b1`` along the first coordinate direction."""
    b1 = np.zeros(G.shape[:-1])
    b1[..., 0] = 1.0
    b1 = b1 / np.sqrt(G[..., 0, 0])[..., None]
    e2 = np.zeros_like(b1)
    e2[..., 1] = 1.0
    e2 = e2 - np.einsum("...i,...ij,...j->...", e2, G, b1)[..., None] * b1
    b2 = e2 / np.sqrt(np.einsum("...i,...ij,...j->...", e2, G, e2))[..., None]
    return b1, b2


def ejiri_frame(report: CalabiReport, zero_tol: float = 1e-12, newton_tol: float = 1e-12,
                tie_tol: float = 1e-9) -> EjiriFrame:
    """Maximize ``F(theta) = A(u, u, u)``, ``u = cos(theta) b1 + sin(theta) b2``.

    A 360-angle scan brackets every local maximum of the degree-3 trigonometric
    polynomial; Newton steps on ``F'`` polish each, and the largest value wins
    (ties within ``tie_tol`` go to the smallest angle in ``[0, 2 pi)``).
    """
    if report.dim != 2:
        raise ValueError("Ejiri frames are defined for surfaces (n = 2)")
    G, A = report.G, report.A
    b1, b2 = _orthonormal_basis(G)
    # cubic form in the orthonormal basis
    B = np.stack([b1, b2], axis=-1)  # (..., i, a)
    a = np.einsum("...ijk,...ia,...jb,...kc->...abc", A, B, B, B)
    scale = np.sqrt(np.sum(a**2, axis=(-3, -2, -1)))
    if np.any(scale <= zero_tol):
        raise ZeroCubicForm("cubic form vanishes; the maximizing direction is undefined")

    def F(th):
        u = np.stack([np.cos(th), np.sin(th)], axis=-1)
        up = np.stack([-np.sin(th), np.cos(th)], axis=-1)
        f0 = np.einsum("...abc,...a,...b,...c->...", a[..., None, :, :, :], u, u, u)
        f1 = 3 * np.einsum("...abc,...a,...b,...c->...", a[..., None, :, :, :], u, u, up)
        f2 = 6 * np.einsum("...abc,...a,...b,...c->...", a[..., None, :, :, :], u, up, up) - 3 * f0
        return f0, f1, f2

    grid = np.arange(360) * (2 * np.pi / 360)
    th = np.broadcast_to(grid, a.shape[:-3] + (360,)).copy()
    f0, _, _ = F(th)
    local = (f0 >= np.roll(f0, 1, axis=-1)) & (f0 >= np.roll(f0, -1, axis=-1))
    for _ in range(60):
        _, f1, f2 = F(th)
        step = np.where(local & (f2 < 0), -f1 / np.where(f2 < 0, f2, -1.0), 0.0)
        step = np.clip(step, -np.pi / 180, np.pi / 180)
        th = th + step
        if np.all(np.abs(np.where(local, f1, 0.0)) <= newton_tol * (1 + scale[..., None])):
            break
    th = np.mod(th, 2 * np.pi)
    th = np.where(th > 2 * np.pi - 1e-12, 0.0, th)
    f0, _, _ = F(th)
    f0 = np.where(local, f0, -np.inf)
    best = f0.max(axis=-1, keepdims=True)
    cand = np.where(f0 >= best - tie_tol, th, np.inf)
    angle = cand.min(axis=-1)
    u = np.stack([np.cos(angle), np.sin(angle)], axis=-1)
    v = np.stack([-np.sin(angle), np.cos(angle)], axis=-1)
    lam = np.einsum("...abc,...a,...b,...c->...", a, u, u, u)
    mu = np.einsum("...abc,...a,...b,...c->...", a, u, v, v)
    e1 = np.einsum("...ia,...a->...i", B, u)
    e2 = np.einsum("...ia,...a->...i", B, v)
    if np.any(lam < 2 * mu - 1e-9):
        raise ArithmeticError("frame maximization failed: lambda < 2 mu")
    return EjiriFrame(angle, e1, e2, lam, mu, lam)


# -- variational functionals -------------------------------------------------------

def rectangle_grid(domain, counts, shrink: float = 0.0) -> np.ndarray:
    """Tensor grid of points (..., n) in ``domain``, optionally shrunk toward the center."""
    axes = []
    for (lo, hi), m in zip(domain, counts):
        pad = 0.5 * shrink * (hi - lo)
        axes.append(np.linspace(lo + pad, hi - pad, int(m)))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def boundary_samples(domain, per_edge: int) -> np.ndarray:
    """Points on the boundary of a 2-D rectangle, ``per_edge`` per edge."""
    (a0, a1), (b0, b1) = domain
    s = np.linspace(0.0, 1.0, per_edge)
    xs = a0 + (a1 - a0) * s
    ys = b0 + (b1 - b0) * s
    edges = [np.stack([xs, np.full_like(xs, b0)], -1), np.stack([xs, np.full_like(xs, b1)], -1),
             np.stack([np.full_like(ys, a0), ys], -1), np.stack([np.full_like(ys, a1), ys], -1)]
    return np.concatenate(edges, axis=0)


def check_boundary(programs, domain, per_edge: int, tol: float, what: str):
    """Every program and its gradient vanish on boundary samples to ``tol``."""
    pts = boundary_samples(domain, per_edge)
    for p in programs:
        j = jet_eval(p, pts, 1)
        worst = max(float(np.max(np.abs(j.value))), float(np.max(np.abs(j.tensor(1)))))
        if worst > tol:
            raise BoundaryViolation(f"{what}: boundary value or gradient {worst:.3g} exceeds {tol:g}")


def _variation_densities(f: Program, phi: Program, pts):
    r = calabi_invariants(f, pts)
    n = r.dim
    jp = jet_eval(phi, pts, 2)
    grad = jp.tensor(1)
    hess_cov = jp.tensor(2) - np.einsum("...kij,...k->...ij", r.christoffel.gamma, grad)
    lap = np.einsum("...ij,...ij->...", r.Ginv, hess_cov)
    gT = np.einsum("...k,...k->...", grad, r.T)
    # partial derivatives of the lowered Tchebychev field: dT_low[i, j] = d_j T_i
    dT_low = np.einsum("...ilj,...l->...ij", r.metric.dG, r.T) + np.einsum("...il,...lj->...ij", r.G, r.dT)
    quad = np.einsum("...ik,...lj,...ij,...k,...l->...", r.Ginv, r.Ginv, dT_low, grad, grad)
    e32 = lap**2 - n * n * gT**2 - 2 * n * lap * gT - 2 * n * quad
    L = hess_cov - 0.5 * lap[..., None, None] * r.G
    Ah = np.einsum("...hij,...h->...ij", r.A_up, grad) - gT[..., None, None] * r.G
    LL = np.einsum("...ij,...kl,...ik,...jl->...", L, L, r.Ginv, r.Ginv)
    AA = np.einsum("...ij,...kl,...ik,...jl->...", Ah, Ah, r.Ginv, r.Ginv)
    vol = np.sqrt(np.linalg.det(r.G))
    return np.stack([e32, LL, AA], axis=-1) * vol[..., None]


def second_variation(f: Program, phi: Program, domain, grid=(32, 32),
                     check_grid=(11, 11), gate: float = MAXIMAL_GATE) -> VariationResult:
    """Second variation of the Calabi area functional along ``phi``, two ways.

    The direct form integrates the four-term density; the trace-free form
    integrates ``|L phi|^2`` and ``|A phi|^2``. Raises :class:`NotMaximal` if
    the maximality residual on the check grid exceeds ``gate`` and
    :class:`BoundaryViolation` if ``phi`` or its gradient does not vanish on
    the boundary.
    """
    sample = rectangle_grid(domain, check_grid, shrink=0.1)
    resid = float(np.max(np.abs(maximal_residual(f, sample))))
    if resid > gate:
        raise NotMaximal(f"maximality residual {resid:.3g} exceeds {gate:g}")
    check_boundary([phi], domain, 4 * max(grid), BOUNDARY_TOL, "variation")
    parts = integrate_rule_multi(lambda p: _variation_densities(f, phi, p), domain, grid)
    I32, ILL, IAA = parts
    return VariationResult(
        second_variation=-0.25 * I32.value,
        second_variation_tracefree=-0.5 * (ILL.value + IAA.value),
        LL=ILL.value, AA=IAA.value,
        error_estimate=0.25 * I32.error_estimate,
        error_estimate_tracefree=0.5 * (ILL.error_estimate + IAA.error_estimate))


def integrate_rule_multi(integrand: Callable, domain, panels) -> list:
    """Like :func:`affgeo.riemann.integrate_rule` for integrands with several columns."""
    from .riemann import tensor_rule
    panels = tuple(int(p) for p in panels)
    cp, cw = tensor_rule(domain, panels)
    fp, fw = tensor_rule(domain, tuple(2 * p for p in panels))
    fc, ff = np.asarray(integrand(cp)), np.asarray(integrand(fp))
    Ic, If = cw @ fc, fw @ ff
    roundoff = 64 * np.finfo(float).eps * (fw @ np.abs(ff))
    nodes = cp.shape[0] + fp.shape[0]
    return [DensityIntegral(float(If[q]), float(max(abs(If[q] - Ic[q]), roundoff[q])), nodes)
            for q in range(ff.shape[-1])]


def calabi_area(f: Program, domain, grid=(32, 32)) -> DensityIntegral:
    """``int sqrt(det Hess f)`` over a rectangle."""
    def density(p):
        G = jet_eval(f, p, 2).tensor(2)
        require_positive_definite(G, "Hessian", points=p, exc=NonConvex)
        return np.sqrt(np.linalg.det(G))
    return integrate_rule(density, domain, grid)


def area_compare(f: Program, f_sharp: Program, domain, grid=(32, 32), boundary_tol: float = 1e-10) -> AreaComparison:
    """Calabi areas of ``f`` and a competitor with the same boundary data."""
    diff = Program(Add(f_sharp.root, _negate(f.root)), f.variables)
    check_boundary([diff], domain, 4 * max(grid), boundary_tol, "area comparison")
    a = calabi_area(f, domain, grid)
    b = calabi_area(f_sharp, domain, grid)
    return AreaComparison(a.value, b.value, a.error_estimate, b.error_estimate)


def _negate(node):
    from .program import Const, Mul
    return Mul(Const(-1.0), node)
