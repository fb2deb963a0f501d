"""Jet-valued solve of the structure equations of an immersion.

For an immersion ``x`` of ``n`` parameters into ``R^(n+1)`` and a transversal
field ``xi`` (a constant vector or the position vector itself) we solve

    x_{u_i u_j} = c^k_ij x_{u_k} + b_ij xi

for ``c`` and ``b`` as order-2 jets, so their first and second partials are
exact (not differenced). Needs order-4 jets of the components.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFrame
from .evaluate import jet_eval
from .jet import Jet, coeff_tensor, jet_matmul, jet_solve, stack_matrix

CONDITION_LIMIT = 1e12
SOLVE_ORDER = 2


@dataclass(frozen=True)
class StructureSolution:
    """Coefficients of the structure equations at a batch of parameter points.

    ``c[..., k, i, j]`` and ``b[..., i, j]`` with partials ``dc``, ``db``
    (trailing derivative axis) and ``d2b``; ``position_jets`` are the order-4
    jets of the components, ``residual`` the relative residual of the solve
    and ``condition`` the Skeel condition number of the frame.
    """

    c: np.ndarray
    dc: np.ndarray
    b: np.ndarray
    db: np.ndarray
    d2b: np.ndarray
    b_jets: list
    position_jets: list
    residual: np.ndarray
    condition: np.ndarray


def _frame_condition(M0: np.ndarray) -> np.ndarray:
    """Skeel condition number ``|| |M^-1| |M| ||_inf`` (invariant under row scaling)."""
    with np.errstate(all="ignore"):
        try:
            inv = np.linalg.inv(M0)
        except np.linalg.LinAlgError:
            return np.full(M0.shape[:-2], np.inf)
        prod = np.abs(inv) @ np.abs(M0)
    cond = prod.sum(axis=-1).max(axis=-1)
    return np.where(np.isfinite(cond), cond, np.inf)


def solve_structure(components, points, transversal="calabi", tol=None) -> StructureSolution:
    """Solve the structure equations.

    Parameters
    ----------
    components : sequence of Program
        The ``n + 1`` ambient coordinates as programs of ``n`` parameters.
    points : array_like, shape (..., n)
    transversal : {"calabi", "position"}
        ``"calabi"`` uses the constant vector ``(0, ..., 0, 1)``,
        ``"position"`` uses the position vector ``x`` (centroaffine).
    """
    pts = np.asarray(points, dtype=float)
    n = components[0].arity
    N = n + 1
    if len(components) != N:
        raise ValueError(f"expected {N} components for a hypersurface of dimension {n}")
    kw = {} if tol is None else {"tol": tol}
    jets = [jet_eval(p, pts, 4, **kw) for p in components]
    first = [[jets[a].partial(k) for k in range(n)] for a in range(N)]
    if transversal == "calabi":
        last = [Jet.constant(np.full(pts.shape[:-1], 1.0 if a == n else 0.0), n, SOLVE_ORDER)
                for a in range(N)]
    elif transversal == "position":
        last = [j.truncate(SOLVE_ORDER) for j in jets]
    else:
        raise ValueError(f"unknown transversal {transversal!r}")
    rows = [[first[a][k].truncate(SOLVE_ORDER) for k in range(n)] + [last[a]] for a in range(N)]
    rhs = [[first[a][i].partial(j) for i in range(n) for j in range(n)] for a in range(N)]
    M = stack_matrix(rows)
    R = stack_matrix(rhs)
    cond = _frame_condition(M[..., 0, :, :])
    if np.any(~(cond <= CONDITION_LIMIT)):
        bad = int(np.flatnonzero(~(cond <= CONDITION_LIMIT).ravel())[0])
        where = pts.reshape(-1, n)[bad]
        raise DegenerateFrame(f"frame condition number {cond.ravel()[bad]:.3g} exceeds "
                              f"{CONDITION_LIMIT:g} at {where.tolist()}")
    S = jet_solve(M, R, n, SOLVE_ORDER)
    res = jet_matmul(M, S, n, SOLVE_ORDER) - R
    scale = 1.0 + np.abs(R).max(axis=(-3, -2, -1))
    residual = np.abs(res).max(axis=(-3, -2, -1)) / scale

    S = S.reshape(S.shape[:-1] + (n, n))  # (..., nc, N, i, j)
    c_coeffs = S[..., :n, :, :]
    b_coeffs = 0.5 * (S[..., n, :, :] + np.swapaxes(S[..., n, :, :], -1, -2))
    c = coeff_tensor(c_coeffs, n, SOLVE_ORDER, 0, 3)
    dc = coeff_tensor(c_coeffs, n, SOLVE_ORDER, 1, 3)
    b = coeff_tensor(b_coeffs, n, SOLVE_ORDER, 0, 2)
    db = coeff_tensor(b_coeffs, n, SOLVE_ORDER, 1, 2)
    d2b = coeff_tensor(b_coeffs, n, SOLVE_ORDER, 2, 2)
    b_jets = [[Jet(b_coeffs[..., :, i, j], n, SOLVE_ORDER) for j in range(n)] for i in range(n)]
    return StructureSolution(c, dc, b, db, d2b, b_jets, jets, residual, cond)


def gauss_system_residual(components, points, i: int, j: int, tangent_coeffs, position_coeff=None,
                          constant_coeff=None) -> np.ndarray:
    """Max over ambient axes of ``|x_ij - sum_k a_k x_k - p x - q Y|``.

    Coefficients are programs over the parameters (or ``None`` for zero);
    ``Y = (0, ..., 0, 1)``.
    """
    pts = np.asarray(points, dtype=float)
    N = len(components)
    jets = [jet_eval(p, pts, 2) for p in components]

    def coeff(prog):
        return None if prog is None else jet_eval(prog, pts, 0).value

    a = [coeff(p) for p in tangent_coeffs]
    pc, qc = coeff(position_coeff), coeff(constant_coeff)
    worst = np.zeros(pts.shape[:-1])
    for comp in range(N):
        jt = jets[comp]
        r = jt.hessian()[..., i, j]
        grad = jt.gradient()
        for k, ak in enumerate(a):
            if ak is not None:
                r = r - ak * grad[..., k]
        if pc is not None:
            r = r - pc * jt.value
        if qc is not None and comp == N - 1:
            r = r - qc
        worst = np.maximum(worst, np.abs(r))
    return worst
