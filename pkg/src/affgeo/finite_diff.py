"""Central finite differences, used as an oracle independent of the jet arithmetic.

The default estimate extrapolates second-order central differences to zero
step; fixed-step policies remain available for comparison.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import DomainError
from .evaluate import eval_values
from .program import Program

EPS = np.finfo(float).eps
FD_QUAD_TOL = 1e-14
EXTRAPOLATION_H0 = 0.1
EXTRAPOLATION_RATIO = 1.4
EXTRAPOLATION_LEVELS = 10

# offsets of the 1-D central stencils, per (policy, derivative order)
_OFFSETS = {
    "classic": {0: (0,), 1: (-1, 0, 1), 2: (-1, 0, 1), 3: (-2, -1, 0, 1, 2)},
    "balanced": {0: (0,), 1: (-2, -1, 0, 1, 2), 2: (-2, -1, 0, 1, 2), 3: (-3, -2, -1, 0, 1, 2, 3)},
}


@lru_cache(maxsize=None)
def stencil_weights(offsets: tuple, m: int) -> np.ndarray:
    """Weights ``w`` with ``sum_k w_k f(x + o_k h) ~ h^m f^(m)(x)``."""
    o = np.asarray(offsets, dtype=float)
    V = np.vander(o, len(o), increasing=True).T
    rhs = np.zeros(len(o))
    rhs[m] = math.factorial(m)
    return np.linalg.solve(V, rhs)


def step_size(policy: str, order: int, coordinate):
    """Step for a derivative of total ``order`` along one coordinate (array-valued for arrays).

    ``classic`` balances second-order truncation against round-off
    (cube root of epsilon up to order 2, fourth root for order 3).
    ``balanced`` pairs fourth-order stencils with ``eps^(1/(order+4))``.
    """
    scale = 1.0 + np.abs(coordinate)
    if policy == "classic":
        return (EPS ** (1 / 3) if order <= 2 else EPS ** 0.25) * scale
    if policy == "balanced":
        return EPS ** (1.0 / (order + 4)) * scale
    raise ValueError(f"unknown step policy {policy!r}")


def _stencil(offsets_per_axis, index):
    """Unit tensor stencil ``(s, n)`` and its flattened weights."""
    offs = [np.asarray(o, float) for o in offsets_per_axis]
    grids = np.meshgrid(*offs, indexing="ij")
    unit = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.ones(grids[0].shape)
    for k, (o, a) in enumerate(zip(offsets_per_axis, index)):
        shape = [1] * len(index)
        shape[k] = -1
        weights = weights * stencil_weights(tuple(o), a).reshape(shape)
    return unit, weights.ravel()


def _values(program, pts, tol, tolerate_domain):
    try:
        return eval_values(program, pts, tol)
    except DomainError:
        if not tolerate_domain:
            raise
    out = np.full(pts.shape[:-1], np.nan)
    for i in range(pts.shape[0]):
        try:
            out[i] = eval_values(program, pts[i], tol)
        except DomainError:
            pass
    return out


def _central(program, flat, index, offsets_per_axis, h, tol, tolerate_domain=False):
    unit, weights = _stencil(offsets_per_axis, index)
    pts = flat[:, None, :] + unit[None, :, :] * h[:, None, :]
    vals = _values(program, pts, tol, tolerate_domain)
    return (vals @ weights) / np.prod(h ** np.asarray(index, float), axis=-1)


def fd_extrapolated(program: Program, points, index, h0: float = EXTRAPOLATION_H0,
                    ratio: float = EXTRAPOLATION_RATIO, levels: int = EXTRAPOLATION_LEVELS,
                    tol: float = FD_QUAD_TOL):
    """Second-order central differences extrapolated to zero step (Ridders' scheme).

    Steps shrink geometrically from ``h0 (1 + |x|)``; a Neville tableau in
    ``h^2`` removes the leading truncation terms and, per point, the entry
    whose successive differences are smallest is returned. Stencils that leave
    the program's domain only discard the affected tableau entries.

    Parameters
    ----------
    points : array_like, shape (m, n)
    index : sequence of int
        Multi-index, total order at most 3.

    Returns
    -------
    value, error_estimate : ndarray, shape (m,)
    """
    flat = np.asarray(points, dtype=float)
    offsets = [_OFFSETS["classic"][a] for a in index]
    scale = 1.0 + np.abs(flat)
    fac = ratio ** 2
    best = np.full(flat.shape[0], np.nan)
    err = np.full(flat.shape[0], np.inf)
    prev = None
    for i in range(levels):
        row = [_central(program, flat, index, offsets, h0 * ratio ** -i * scale, tol, True)]
        f = fac
        for j in range(1, i + 1):
            row.append((row[j - 1] * f - prev[j - 1]) / (f - 1.0))
            f *= fac
            with np.errstate(invalid="ignore"):
                e = np.maximum(np.abs(row[j] - row[j - 1]), np.abs(row[j] - prev[j - 1]))
                better = e < err
            err = np.where(better, e, err)
            best = np.where(better, row[j], best)
        prev = row
    return best, err


def fd_derivative(program: Program, point, index, step_policy: str = "extrapolated",
                  tol: float = FD_QUAD_TOL):
    """Central-difference estimate of ``d^index program`` at ``point``.

    Parameters
    ----------
    point : array_like, shape (n,) or (..., n)
        A single point gives a float, a batch gives an array of the batch shape.
    index : sequence of int
        Multi-index, total order at most 3.
    step_policy : {"extrapolated", "balanced", "classic"}
        ``extrapolated`` uses :func:`fd_extrapolated`; the fixed-step rules
        are described in :func:`step_size`.
    """
    x = np.asarray(point, dtype=float)
    index = tuple(int(a) for a in index)
    if len(index) != program.arity or x.ndim == 0 or x.shape[-1] != program.arity:
        raise ValueError("point and index must match the program arity")
    total = sum(index)
    if total > 3 or min(index) < 0:
        raise ValueError("finite differences support multi-indices of order <= 3")
    batch = x.shape[:-1]
    flat = x.reshape(-1, program.arity)
    if step_policy == "extrapolated":
        out, _ = fd_extrapolated(program, flat, index, tol=tol)
        if np.any(np.isnan(out)):
            raise DomainError("every finite-difference stencil leaves the domain",
                              point=flat[int(np.flatnonzero(np.isnan(out))[0])])
    else:
        table = _OFFSETS[step_policy]
        h = step_size(step_policy, total, flat)
        try:
            out = _central(program, flat, index, [table[a] for a in index], h, tol)
        except DomainError as exc:
            raise DomainError(f"finite-difference stencil leaves the domain: {exc}",
                              point=exc.point if exc.point is not None else (x if not batch else None)) from exc
    return float(out[0]) if not batch else out.reshape(batch)
