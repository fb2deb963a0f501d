"""Evaluate expression programs as batched Taylor jets."""
from __future__ import annotations

import numpy as np

from .errors import DomainError
from .jet import MAX_ORDER, Jet, atan2
from .program import (Add, Atan2, Call, Const, Div, Integral, Mul, Node, Pow, Program,
                      Sub, Var)
from .quadrature import DEFAULT_TOL, inner_tolerance, integrate_many


class _Evaluator:
    def __init__(self, dim: int, order: int, tol: float):
        self.dim = dim
        self.order = order
        self.tol = tol
        self.memo = {}

    def run(self, node: Node, env) -> Jet:
        key = id(node)
        hit = self.memo.get(key)
        if hit is not None:
            return hit[1]
        out = self._eval(node, env)
        # keep the node alive so its id cannot be recycled during this pass
        self.memo[key] = (node, out)
        return out

    def _eval(self, node, env) -> Jet:
        if isinstance(node, Var):
            return env[node.index]
        if isinstance(node, Const):
            return Jet.constant(node.value, self.dim, self.order)
        if isinstance(node, Add):
            return self.run(node.left, env) + self.run(node.right, env)
        if isinstance(node, Sub):
            return self.run(node.left, env) - self.run(node.right, env)
        if isinstance(node, Mul):
            return self.run(node.left, env) * self.run(node.right, env)
        if isinstance(node, Div):
            den = self.run(node.right, env)
            if np.any(den.value == 0):
                raise DomainError("division by zero")
            return self.run(node.left, env) / den
        if isinstance(node, Pow):
            base = self.run(node.base, env)
            r = node.exponent
            if self.order == 0:
                v = base.value
                if not float(r).is_integer() and np.any(v < 0):
                    raise DomainError(f"non-integer power {r} of negative base")
                if r < 0 and np.any(v == 0):
                    raise DomainError(f"negative power {r} of zero")
                return Jet(np.power(v, r)[..., None], self.dim, 0)
            return base ** r
        if isinstance(node, Call):
            return self.run(node.arg, env).apply(node.fn)
        if isinstance(node, Atan2):
            return atan2(self.run(node.y, env), self.run(node.x, env))
        if isinstance(node, Integral):
            return self._integral(node, env)
        raise TypeError(f"unknown node {node!r}")

    def _integral(self, node: Integral, env) -> Jet:
        upper = self.run(node.upper, env)
        u0 = upper.value
        inner = inner_tolerance(self.tol)
        values, _, _ = integrate_many(lambda t: values_1d(node.integrand, t, inner),
                                      node.lower, u0, self.tol)
        if self.order == 0:
            return Jet(values[..., None], self.dim, 0)
        # antiderivative series: F(u0 + s) = value + sum_k g_k s^(k+1) / (k+1)
        g = _Evaluator(1, self.order - 1, inner).run(
            node.integrand, [Jet.variable(u0, 0, 1, self.order - 1)])
        k = np.arange(1, self.order + 1, dtype=float)
        series = np.concatenate([values[..., None], g.coeffs / k], axis=-1)
        return upper.compose(series)


def values_1d(node: Node, t, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Values of a univariate node at an array of abscissae."""
    t = np.asarray(t, dtype=float)
    return _Evaluator(1, 0, tol).run(node, [Jet(t[..., None], 1, 0)]).value


def _as_points(program: Program, point) -> np.ndarray:
    pts = np.asarray(point, dtype=float)
    if pts.ndim == 0 or pts.shape[-1] != program.arity:
        raise ValueError(f"points must have trailing dimension {program.arity}")
    return pts


def jet_eval(program: Program, point, order: int, tol: float = DEFAULT_TOL) -> Jet:
    """Taylor jet of ``program`` at ``point`` (shape (n,) or (..., n)).

    Integral nodes get their value from adaptive quadrature and their
    derivatives from the integrand jet at the upper limit.
    """
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in [0, {MAX_ORDER}]")
    pts = _as_points(program, point)
    n = program.arity
    env = [Jet.variable(pts[..., i], i, n, order) for i in range(n)]
    out = _Evaluator(n, order, tol).run(program.root, env)
    if out.batch_shape != pts.shape[:-1]:
        out = Jet(np.broadcast_to(out.coeffs, pts.shape[:-1] + out.coeffs.shape[-1:]).copy(), n, order)
    if not np.all(np.isfinite(out.coeffs)):
        raise DomainError("non-finite jet coefficient")
    return out


def eval_values(program: Program, point, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Plain values of ``program`` at points of shape (..., n)."""
    return jet_eval(program, point, 0, tol).value


def jet_eval_all(programs, point, order: int, tol: float = DEFAULT_TOL) -> list:
    return [jet_eval(p, point, order, tol) for p in programs]
