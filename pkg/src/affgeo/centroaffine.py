"""Centroaffine geometry: the position vector as transversal field.

Solving ``x_{u_i u_j} = c^k_ij x_{u_k} + b_ij x`` gives the metric up to sign;
the type is read off from which of ``-b`` (elliptic) or ``+b`` (hyperbolic)
is positive definite. The difference tensor is called ``C`` here
(``C^k_ij = c^k_ij - Gamma^k_ij`` of the metric ``h``); the letter ``K`` is
kept for Gaussian curvature.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .calabi import graph_components, jet_det, stencil_partials
from .errors import IndefiniteType, NonConvex, ZeroSupport
from .evaluate import eval_values, jet_eval
from .jet import Jet
from .program import Call, Mul, Add, Program, Var, substitute
from .riemann import (ChristoffelData, CurvatureData, MetricJet, christoffel, curvature,
                      laplace_beltrami, positive_definite_mask, require_positive_definite)
from .structure import solve_structure

ELLIPTIC = "elliptic"
HYPERBOLIC = "hyperbolic"
ZERO_SUPPORT_TOL = 1e-10


@dataclass(frozen=True)
class CentroaffineDecomposition:
    """Centroaffine invariants at a batch of parameter points.

    ``epsilon`` is ``+1`` (elliptic, ``h = -b``) or ``-1`` (hyperbolic,
    ``h = b``) per point; ``C[..., k, i, j] = C^k_ij`` with partials ``dC``.
    """

    point: np.ndarray
    h: np.ndarray
    epsilon: np.ndarray
    C: np.ndarray
    dC: np.ndarray
    T: np.ndarray
    dT: np.ndarray
    T_norm2: np.ndarray
    K: np.ndarray
    scalar: np.ndarray
    residual: np.ndarray
    metric: MetricJet
    christoffel: ChristoffelData
    curvature: CurvatureData
    h_jets: list

    @property
    def dim(self) -> int:
        return self.h.shape[-1]

    @property
    def types(self) -> np.ndarray:
        return np.where(self.epsilon > 0, ELLIPTIC, HYPERBOLIC)


@dataclass(frozen=True)
class GraphCentroaffineData:
    support: np.ndarray
    det_hessian: np.ndarray
    w: np.ndarray
    residual: np.ndarray
    epsilon: np.ndarray


def decompose_centroaffine(components: Sequence[Program], points, tol=None) -> CentroaffineDecomposition:
    """Metric, type, difference tensor and Tchebychev field of ``x``."""
    pts = np.asarray(points, dtype=float)
    sol = solve_structure(components, pts, "position", tol)
    n = components[0].arity
    elliptic = positive_definite_mask(-sol.b)
    hyperbolic = positive_definite_mask(sol.b)
    if not np.all(elliptic | hyperbolic):
        bad = int(np.flatnonzero(~(elliptic | hyperbolic).ravel())[0])
        raise IndefiniteType(f"neither b nor -b is positive definite at {pts.reshape(-1, n)[bad].tolist()}")
    eps = np.where(elliptic, 1.0, -1.0)
    s = -eps  # h = -eps * b
    metric = MetricJet(s[..., None, None] * sol.b, s[..., None, None, None] * sol.db,
                       s[..., None, None, None, None] * sol.d2b)
    ch = christoffel(metric, check=False)
    curv = curvature(metric, ch)
    C = sol.c - ch.gamma
    dC = sol.dc - ch.dgamma
    hinv = ch.Ginv
    T = np.einsum("...ij,...kij->...k", hinv, C) / n
    dhinv = -np.einsum("...ia,...abm,...bj->...ijm", hinv, metric.dG, hinv)
    dT = (np.einsum("...ijm,...kij->...km", dhinv, C) + np.einsum("...ij,...kijm->...km", hinv, dC)) / n
    T_norm2 = np.einsum("...k,...kl,...l->...", T, metric.G, T)
    K = curv.gaussian if n == 2 else np.full(pts.shape[:-1], np.nan)
    h_jets = [[jt * s for jt in row] for row in sol.b_jets]
    return CentroaffineDecomposition(pts, metric.G, eps, C, dC, T, dT, T_norm2, K, curv.scalar,
                                     sol.residual, metric, ch, curv, h_jets)


def divergence_T(d: CentroaffineDecomposition, dT=None) -> np.ndarray:
    """``div_h T = d_l T^l + Gamma^l_lm T^m``."""
    dT = d.dT if dT is None else dT
    return np.einsum("...ll->...", dT) + np.einsum("...llm,...m->...", d.christoffel.gamma, d.T)


def extremal_residual_parametric(components: Sequence[Program], points, method: str = "stencil") -> np.ndarray:
    """Trace of the Tchebychev operator, ``div_h T``.

    ``method="stencil"`` differences ``T`` with a five-point stencil (step
    ``1e-4 (1 + |u_i|)``); ``method="jet"`` uses the exact partials of the
    order-2 jet solve.
    """
    d = decompose_centroaffine(components, points)
    if method == "jet":
        return divergence_T(d)
    if method != "stencil":
        raise ValueError(f"unknown method {method!r}")
    dT = stencil_partials(lambda p: decompose_centroaffine(components, p).T, points)
    return divergence_T(d, dT)


def gauss_residual(d: CentroaffineDecomposition) -> np.ndarray:
    """Max of ``|R^l_kij - eps (d^l_i h_jk - d^l_j h_ik) + C^l_im C^m_jk - C^l_jm C^m_ik|``."""
    n = d.dim
    eye = np.eye(n)
    e = d.epsilon[..., None, None, None, None]
    const = np.einsum("li,...jk->...lkij", eye, d.h)
    const = const - np.swapaxes(const, -1, -2)
    comm = np.einsum("...lim,...mjk->...lkij", d.C, d.C)
    comm = comm - np.swapaxes(comm, -1, -2)
    r = np.abs(d.curvature.riemann - e * const + comm)
    return r.reshape(r.shape[:-4] + (-1,)).max(axis=-1)


def scalar_identity_residual(d: CentroaffineDecomposition) -> np.ndarray:
    """``R - eps n(n-1) - |C|^2 + n^2 |T|^2``."""
    n = d.dim
    hinv = d.christoffel.Ginv
    C_low = np.einsum("...lij,...lk->...ijk", d.C, d.h)
    C2 = np.einsum("...il,...jp,...kq,...ijk,...lpq->...", hinv, hinv, hinv, C_low, C_low)
    return d.scalar - d.epsilon * n * (n - 1) - C2 + n * n * d.T_norm2


def codazzi_residual(d: CentroaffineDecomposition, dC=None) -> np.ndarray:
    """Max of ``|C^k_{ij,l} - C^k_{il,j}|``."""
    g, C = d.christoffel.gamma, d.C
    dC = d.dC if dC is None else dC
    cov = (dC + np.einsum("...klm,...mij->...kijl", g, C)
           - np.einsum("...mli,...kmj->...kijl", g, C)
           - np.einsum("...mlj,...kim->...kijl", g, C))
    r = np.abs(cov - np.swapaxes(cov, -1, -2))
    return r.reshape(r.shape[:-4] + (-1,)).max(axis=-1)


def codazzi_residual_stencil(components, points) -> np.ndarray:
    d = decompose_centroaffine(components, points)
    dC = stencil_partials(lambda p: decompose_centroaffine(components, p).C, points)
    return codazzi_residual(d, dC)


def warped_metric_residual(d: CentroaffineDecomposition, rho) -> np.ndarray:
    """Max of ``|h - diag(1, rho^2)|`` for a surface in ``(t, u)`` coordinates."""
    rho = np.asarray(rho, dtype=float)
    target = np.zeros(d.h.shape)
    target[..., 0, 0] = 1.0
    target[..., 1, 1] = rho**2
    r = np.abs(d.h - target)
    return r.reshape(r.shape[:-2] + (-1,)).max(axis=-1)


def difference_tensor_form(d: CentroaffineDecomposition):
    """Scale ``s = C^u_uu`` and the residual of ``C(dt,dt) = C(dt,du) = 0``, ``C(du,du) = s du``.

    Returns ``(scale, residual)``; the residual is measured after dividing ``C``
    by ``s`` and includes the spread of ``s`` across the batch.
    """
    C = d.C
    s = C[..., 1, 1, 1]
    others = np.stack([C[..., 0, 0, 0], C[..., 1, 0, 0], C[..., 0, 0, 1], C[..., 1, 0, 1],
                       C[..., 0, 1, 1]], axis=-1)
    scale = float(np.mean(s))
    resid = np.abs(others).max(axis=-1) / abs(scale) + np.abs(s - scale) / abs(scale)
    return scale, resid


# -- graphs --------------------------------------------------------------------------

def extremal_residual_graph(f: Program, points) -> GraphCentroaffineData:
    """``Delta_h ln(det Hess f / rho_s^(n+2))`` for the graph ``x_{n+1} = f(x)``."""
    pts = np.asarray(points, dtype=float)
    n = f.arity
    jf = jet_eval(f, pts, 4)
    hess = [[jf.partial(i).partial(j) for j in range(n)] for i in range(n)]
    require_positive_definite(np.stack([np.stack([h.value for h in row], -1) for row in hess], -2),
                              "Hessian", points=pts, exc=NonConvex)
    D = jet_det(hess)
    fv = jf.truncate(2)
    rho = fv
    for i in range(n):
        rho = rho - Jet.variable(pts[..., i], i, n, 2) * jf.partial(i).truncate(2)
    bad = np.abs(rho.value) <= ZERO_SUPPORT_TOL * (1.0 + np.abs(fv.value))
    if np.any(bad):
        where = pts.reshape(-1, n)[int(np.flatnonzero(bad.ravel())[0])]
        raise ZeroSupport(f"support quantity vanishes at {where.tolist()}")
    sign = np.sign(rho.value)
    lnw = D.apply("ln") - (rho * sign).apply("ln") * (n + 2)
    d = decompose_centroaffine(graph_components(f), pts)
    resid = laplace_beltrami(lnw, d.metric, d.christoffel)
    w = D.value / rho.value ** (n + 2)
    return GraphCentroaffineData(rho.value, D.value, w, resid, d.epsilon)


# -- constructions -----------------------------------------------------------------

def calabi_product_components(base: Sequence[Program], t_name: str = "t") -> list:
    """``y(t, p) = e^t (1, phi_1(p), ..., phi_{n-1}(p), phi_n(p) + t)`` as programs.

    ``base`` holds the ``n`` components of a Calabi hypersurface in ``n - 1``
    parameters; the product has parameters ``(t, p)``.
    """
    names = (t_name,) + tuple(base[0].variables)
    shift = [Var(i + 1) for i in range(len(base[0].variables))]
    et = Call("exp", Var(0))
    comps = [Program(et, names)]
    for a, phi in enumerate(base):
        body = substitute(phi.root, shift)
        if a == len(base) - 1:
            body = Add(body, Var(0))
        comps.append(Program(Mul(et, body), names))
    return comps


def calabi_product(base: Sequence[Program], t: float, p, order: int = 1):
    """Ambient point and component jets of the type-II Calabi product at ``(t, p)``."""
    comps = calabi_product_components(base)
    pt = np.concatenate([[float(t)], np.atleast_1d(np.asarray(p, dtype=float))])
    jets = [jet_eval(c, pt, order) for c in comps]
    return np.array([j.value for j in jets]), jets


def _metric_array(field: Callable, pts) -> np.ndarray:
    m = field(pts)
    return m.G if isinstance(m, MetricJet) else np.asarray(m, dtype=float)


def pullback_deviation(chart_map: Sequence[Program], source_metric: Callable,
                       target_metric: Callable, samples) -> np.ndarray:
    """Per-sample max over entries of ``|J^T g(map(p)) J - h(p)|``.

    ``chart_map`` lists one program per target coordinate; the metric
    callables map points (m, n) to metric arrays (m, n, n) or a MetricJet.
    """
    pts = np.asarray(samples, dtype=float).reshape(-1, chart_map[0].arity)
    jets = [jet_eval(c, pts, 1) for c in chart_map]
    image = np.stack([j.value for j in jets], axis=-1)
    Jm = np.stack([j.gradient() for j in jets], axis=-2)  # (m, target, source)
    g = _metric_array(target_metric, image)
    h = _metric_array(source_metric, pts)
    pulled = np.einsum("mai,mab,mbj->mij", Jm, g, Jm)
    return np.abs(pulled - h).reshape(pts.shape[0], -1).max(axis=-1)


def pullback_isometry_check(chart_map: Sequence[Program], source_metric: Callable,
                            target_metric: Callable, samples) -> float:
    """Max over samples of :func:`pullback_deviation`."""
    return float(np.max(pullback_deviation(chart_map, source_metric, target_metric, samples)))


def implicit_residual(F: Program, points) -> np.ndarray:
    """Value of an implicit defining function at ambient points."""
    return eval_values(F, points)
