"""Pointwise Riemannian geometry for metrics delivered with two derivatives.

Every array carries optional leading batch axes; index axes come last. Index
conventions:

* ``dG[..., i, j, k] = d_k G_ij`` and ``d2G[..., i, j, k, l] = d_k d_l G_ij``
* ``gamma[..., k, i, j] = Gamma^k_ij`` and ``dgamma[..., k, i, j, l] = d_l Gamma^k_ij``
* ``riemann[..., l, k, i, j] = R^l_kij`` with ``R(d_i, d_j) d_k = R^l_kij d_l``
* ``ricci[..., k, j] = R^l_klj``
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import RK45

from .errors import AffGeoError, SingularMetric, StepFailure
from .jet import Jet

PD_THRESHOLD = 1e-12


@dataclass(frozen=True)
class MetricJet:
    """Metric components and their first and second partials at chart points."""

    G: np.ndarray
    dG: np.ndarray
    d2G: np.ndarray

    @property
    def dim(self) -> int:
        return self.G.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.G.shape[:-2]

    def take(self, index) -> "MetricJet":
        return MetricJet(self.G[index], self.dG[index], self.d2G[index])

    @classmethod
    def from_jets(cls, entries) -> "MetricJet":
        """Build from an ``n x n`` nested list of jets of order >= 2."""
        n = len(entries)
        G = np.stack([np.stack([entries[i][j].value for j in range(n)], -1) for i in range(n)], -2)
        dG = np.stack([np.stack([entries[i][j].tensor(1) for j in range(n)], -2) for i in range(n)], -3)
        d2G = np.stack([np.stack([entries[i][j].tensor(2) for j in range(n)], -3) for i in range(n)], -4)
        return cls(G, dG, d2G)

    @classmethod
    def constant(cls, G) -> "MetricJet":
        G = np.asarray(G, dtype=float)
        n = G.shape[-1]
        return cls(G, np.zeros(G.shape + (n,)), np.zeros(G.shape + (n, n)))


@dataclass(frozen=True)
class ChristoffelData:
    gamma: np.ndarray
    dgamma: np.ndarray
    Ginv: np.ndarray


@dataclass(frozen=True)
class CurvatureData:
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    gaussian: Optional[np.ndarray]


def positive_definite_mask(G: np.ndarray) -> np.ndarray:
    """Cholesky pivots all exceed ``1e-12 * trace(G)``; batched, returns bool mask."""
    G = np.asarray(G, dtype=float)
    n = G.shape[-1]
    L = np.zeros_like(G)
    tol = PD_THRESHOLD * np.abs(np.trace(G, axis1=-2, axis2=-1))
    ok = np.ones(G.shape[:-2], dtype=bool)
    for j in range(n):
        piv = G[..., j, j] - np.sum(L[..., j, :j] ** 2, axis=-1)
        ok &= piv > tol
        d = np.sqrt(np.where(piv > 0, piv, 1.0))
        L[..., j, j] = d
        for i in range(j + 1, n):
            L[..., i, j] = (G[..., i, j] - np.sum(L[..., i, :j] * L[..., j, :j], axis=-1)) / d
    return ok


def require_positive_definite(G: np.ndarray, what: str = "metric", points=None, exc=SingularMetric):
    ok = positive_definite_mask(G)
    if not np.all(ok):
        bad = np.unravel_index(int(np.flatnonzero(~ok.ravel())[0]), ok.shape) if ok.ndim else ()
        point = None if points is None else np.asarray(points)[bad]
        raise exc(f"{what} is not positive definite" + (f" at {point.tolist()}" if point is not None else ""))


def christoffel(m: MetricJet, check: bool = True) -> ChristoffelData:
    """Levi-Civita Christoffel symbols and their first partials."""
    if check:
        require_positive_definite(m.G)
    Ginv = np.linalg.inv(m.G)
    dG, d2G = m.dG, m.d2G
    # first kind: G1[l,i,j] = 1/2 (d_i G_lj + d_j G_il - d_l G_ij)
    G1 = 0.5 * (np.einsum("...lji->...lij", dG) + np.einsum("...ilj->...lij", dG)
                - np.einsum("...ijl->...lij", dG))
    dG1 = 0.5 * (np.einsum("...ljim->...lijm", d2G) + np.einsum("...iljm->...lijm", d2G)
                 - np.einsum("...ijlm->...lijm", d2G))
    gamma = np.einsum("...kl,...lij->...kij", Ginv, G1)
    dGinv = -np.einsum("...ka,...abm,...bl->...klm", Ginv, dG, Ginv)
    dgamma = (np.einsum("...klm,...lij->...kijm", dGinv, G1)
              + np.einsum("...kl,...lijm->...kijm", Ginv, dG1))
    return ChristoffelData(gamma, dgamma, Ginv)


def curvature(m: MetricJet, c: ChristoffelData) -> CurvatureData:
    """Riemann, Ricci and scalar curvature; Gaussian curvature when n = 2."""
    g, dg = c.gamma, c.dgamma
    # R^l_kij = d_i Gamma^l_jk - d_j Gamma^l_ik + Gamma^l_im Gamma^m_jk - Gamma^l_jm Gamma^m_ik
    term = np.einsum("...ljki->...lkij", dg) + np.einsum("...lim,...mjk->...lkij", g, g)
    R = term - np.swapaxes(term, -1, -2)
    ricci = np.einsum("...lklj->...kj", R)
    scalar = np.einsum("...kj,...kj->...", c.Ginv, ricci)
    K = None
    if m.dim == 2:
        R1212 = np.einsum("...l,...l->...", m.G[..., 0, :], R[..., :, 1, 0, 1])
        K = R1212 / np.linalg.det(m.G)
    return CurvatureData(R, ricci, scalar, K)


def _derivs(u):
    if isinstance(u, Jet):
        return u.tensor(1), u.tensor(2)
    grad, hess = u
    return np.asarray(grad, float), np.asarray(hess, float)


def covariant_hessian(u, m: MetricJet, c: ChristoffelData) -> np.ndarray:
    """``u_{,ij} = d_i d_j u - Gamma^k_ij d_k u``; ``u`` is a jet (order >= 2) or (grad, hess)."""
    grad, hess = _derivs(u)
    return hess - np.einsum("...kij,...k->...ij", c.gamma, grad)


def laplace_beltrami(u, m: MetricJet, c: ChristoffelData) -> np.ndarray:
    return np.einsum("...ij,...ij->...", c.Ginv, covariant_hessian(u, m, c))


def compatibility_residual(m: MetricJet, c: ChristoffelData) -> np.ndarray:
    """Max over indices of ``|d_k G_ij - Gamma^l_ki G_lj - Gamma^l_kj G_il|``."""
    r = (np.einsum("...ijk->...kij", m.dG)
         - np.einsum("...lki,...lj->...kij", c.gamma, m.G)
         - np.einsum("...lkj,...il->...kij", c.gamma, m.G))
    return _maxabs(r, 3)


def bianchi_residual(curv: CurvatureData) -> np.ndarray:
    """Max of ``|R^l_kij + R^l_ijk + R^l_jki|``."""
    R = curv.riemann
    r = R + np.einsum("...lijk->...lkij", R) + np.einsum("...ljki->...lkij", R)
    return _maxabs(r, 4)


def _maxabs(a, k):
    a = np.abs(a)
    return a.reshape(a.shape[:-k] + (-1,)).max(axis=-1)


# -- geodesics ----------------------------------------------------------------

@dataclass(frozen=True)
class GeodesicTrace:
    """Samples ``(arclength, point, velocity)`` of a unit-speed geodesic."""

    arclength: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    status: str
    speed_deviation: float

    @property
    def samples(self):
        return list(zip(self.arclength.tolist(), self.points, self.velocities))

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]


def _metric_at(metric_field, x) -> MetricJet:
    return metric_field(np.asarray(x, dtype=float)[None, :]).take(0)


_REJECT_SLOPE = 1e100


def geodesic_ray(metric_field: Callable, start, direction, length_budget: float,
                 bounds=None, rtol: float = 1e-11, atol: float = 1e-13,
                 max_step: float = np.inf, max_steps: int = 2000) -> GeodesicTrace:
    """Integrate a unit-speed geodesic with an embedded Runge-Kutta 4(5) scheme.

    Parameters
    ----------
    metric_field : callable
        Maps points of shape (m, n) to a batched :class:`MetricJet`.
    start, direction : array_like
        Initial chart point and (nonzero) initial direction.
    length_budget : float
        Arclength at which integration stops.
    bounds : (lo, hi), optional
        Chart bounding box; leaving it ends the trace with status ``left-chart``.
    max_steps : int
        Accepted-step cap; exceeding it raises :class:`StepFailure`.

    Raises
    ------
    StepFailure
        If the step size underflows (for instance because the metric cannot
        be evaluated ahead of the current point) or the step cap is hit.
    """
    x0 = np.asarray(start, dtype=float)
    d = np.asarray(direction, dtype=float)
    n = x0.size
    if not np.any(d):
        raise ValueError("direction must be nonzero")
    m0 = _metric_at(metric_field, x0)
    require_positive_definite(m0.G)
    v0 = d / np.sqrt(d @ m0.G @ d)
    lo, hi = (None, None) if bounds is None else (np.asarray(bounds[0], float), np.asarray(bounds[1], float))

    def inside(x):
        return bounds is None or bool(np.all(x > lo) and np.all(x < hi))

    def rhs(_, y):
        x, v = y[:n], y[n:]
        if not inside(x):
            # trial stage outside the chart; the step is rejected by the exit test below
            return np.concatenate([v, np.zeros(n)])
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                cd = christoffel(_metric_at(metric_field, x), check=False)
        except AffGeoError:
            # unevaluable trial stage: a huge finite slope forces a rejected, shrunk step
            # (NaN would poison the step-size update and loop forever)
            return np.full(2 * n, _REJECT_SLOPE)
        return np.concatenate([v, -np.einsum("kij,i,j->k", cd.gamma, v, v)])

    solver = RK45(rhs, 0.0, np.concatenate([x0, v0]), float(length_budget),
                  rtol=rtol, atol=atol, max_step=max_step)
    s_list, y_list = [0.0], [solver.y.copy()]
    status = "completed-budget"
    while solver.status == "running":
        try:
            msg = solver.step()
        except AffGeoError:
            status = "left-chart"
            break
        if solver.status == "failed":
            raise StepFailure(f"geodesic step failed at s={solver.t:.6g}, x={solver.y[:n].tolist()}: {msg}")
        if len(s_list) > max_steps:
            raise StepFailure(f"geodesic exceeded {max_steps} steps at s={solver.t:.6g}, x={solver.y[:n].tolist()}")
        if not inside(solver.y[:n]):
            dense = solver.dense_output()
            a, b = solver.t_old, solver.t
            for _ in range(60):
                mid = 0.5 * (a + b)
                a, b = (mid, b) if inside(dense(mid)[:n]) else (a, mid)
            s_list.append(a)
            y_list.append(dense(a))
            status = "left-chart"
            break
        s_list.append(solver.t)
        y_list.append(solver.y.copy())
    s = np.array(s_list)
    Y = np.array(y_list)
    pts, vel = Y[:, :n], Y[:, n:]
    G = metric_field(pts).G
    speed = np.einsum("mi,mij,mj->m", vel, G, vel)
    return GeodesicTrace(s, pts, vel, status, float(np.max(np.abs(speed - 1.0))))


# -- density quadrature -------------------------------------------------------

@dataclass(frozen=True)
class DensityIntegral:
    value: float
    error_estimate: float
    nodes: int


GL_NODES_PER_PANEL = 4


def composite_gauss_legendre(lo: float, hi: float, panels: int, per_panel: int = GL_NODES_PER_PANEL):
    x, w = np.polynomial.legendre.leggauss(per_panel)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def tensor_rule(domain, panels):
    """Nodes (m, n) and weights (m,) of a tensor-product composite Gauss-Legendre rule."""
    rules = [composite_gauss_legendre(lo, hi, p) for (lo, hi), p in zip(domain, panels)]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return pts, w


def integrate_rule(integrand: Callable, domain, panels=(32, 32)) -> DensityIntegral:
    """Integrate a batched integrand (points -> values) at ``panels`` and twice as many.

    The error estimate is the difference of the two levels, floored by the
    round-off bound of the finer sum; the finer value is returned.
    """
    panels = tuple(int(p) for p in panels)
    coarse_pts, coarse_w = tensor_rule(domain, panels)
    fine_pts, fine_w = tensor_rule(domain, tuple(2 * p for p in panels))
    fc = integrand(coarse_pts)
    ff = integrand(fine_pts)
    Ic, If = float(coarse_w @ fc), float(fine_w @ ff)
    roundoff = 64 * np.finfo(float).eps * float(fine_w @ np.abs(ff))
    return DensityIntegral(If, max(abs(If - Ic), roundoff), fine_pts.shape[0] + coarse_pts.shape[0])


def integrate_density(phi: Callable, m_field: Callable, domain, grid=(32, 32)) -> DensityIntegral:
    """Integral of ``phi * sqrt(det G)`` over a chart rectangle.

    ``phi`` maps points (m, n) to values (m,); ``m_field`` maps points to a
    batched :class:`MetricJet` (or a metric array of shape (m, n, n)).
    """
    def density(pts):
        m = m_field(pts)
        G = m.G if isinstance(m, MetricJet) else np.asarray(m)
        require_positive_definite(G, points=pts)
        return np.asarray(phi(pts), float) * np.sqrt(np.linalg.det(G))

    return integrate_rule(density, domain, grid)
