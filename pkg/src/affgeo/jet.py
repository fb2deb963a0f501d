"""Truncated multivariate Taylor jets, batched over evaluation points.

A :class:`Jet` of dimension ``n`` and order ``p`` stores the normalized Taylor
coefficients ``d^alpha f(x0) / alpha!`` for every multi-index ``|alpha| <= p``.
Coefficients live on the last axis of ``coeffs``; all leading axes are a batch
of independent expansion points, so one jet object carries a whole grid.

Multi-indices are ordered by total degree first, which makes truncation a
prefix slice.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from .errors import DomainError

MAX_ORDER = 4


@lru_cache(maxsize=None)
def multi_indices(dim: int, order: int) -> tuple:
    """All multi-indices of length ``dim`` with total degree ``<= order``.

    Graded ordering: degree 0 first, then degree 1, ...; within a degree the
    order is reverse-lexicographic so ``(1, 0)`` precedes ``(0, 1)``.
    """
    out = []
    for deg in range(order + 1):
        grade = [a for a in itertools.product(range(deg, -1, -1), repeat=dim) if sum(a) == deg]
        out.extend(grade)
    return tuple(out)


def n_coeffs(dim: int, order: int) -> int:
    return math.comb(dim + order, order)


@lru_cache(maxsize=None)
def _position(dim: int, order: int) -> dict:
    return {a: i for i, a in enumerate(multi_indices(dim, order))}


@lru_cache(maxsize=None)
def _product_table(dim: int, order: int):
    idx = multi_indices(dim, order)
    pos = _position(dim, order)
    triples = []
    for i, a in enumerate(idx):
        for j, b in enumerate(idx):
            c = tuple(x + y for x, y in zip(a, b))
            if sum(c) <= order:
                triples.append((pos[c], i, j))
    triples.sort()
    k, i, j = (np.array(t, dtype=np.intp) for t in zip(*triples))
    starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
    return i, j, starts


@lru_cache(maxsize=None)
def _partial_table(dim: int, order: int, axis: int):
    pos = _position(dim, order)
    src, fac = [], []
    for b in multi_indices(dim, order - 1):
        a = list(b)
        a[axis] += 1
        src.append(pos[tuple(a)])
        fac.append(b[axis] + 1)
    return np.array(src, dtype=np.intp), np.array(fac, dtype=float)


@lru_cache(maxsize=None)
def _tensor_table(dim: int, order: int, k: int):
    """Gather positions and alpha! factors for the k-th derivative tensor."""
    pos = _position(dim, order)
    src, fac = [], []
    for combo in itertools.product(range(dim), repeat=k):
        alpha = [0] * dim
        for c in combo:
            alpha[c] += 1
        src.append(pos[tuple(alpha)])
        fac.append(math.prod(math.factorial(a) for a in alpha))
    return np.array(src, dtype=np.intp), np.array(fac, dtype=float)


def alpha_factorial(alpha) -> int:
    return math.prod(math.factorial(a) for a in alpha)


class Jet:
    """Batched truncated Taylor expansion of a scalar function.

    Parameters
    ----------
    coeffs : ndarray, shape (..., n_coeffs(dim, order))
        Normalized Taylor coefficients in :func:`multi_indices` order.
    dim : int
        Number of independent variables.
    order : int
        Truncation order, at most :data:`MAX_ORDER`.
    """

    __slots__ = ("coeffs", "dim", "order")
    __array_priority__ = 100

    def __init__(self, coeffs, dim: int, order: int):
        coeffs = np.asarray(coeffs, dtype=float)
        if order > MAX_ORDER or order < 0:
            raise ValueError(f"jet order must be in [0, {MAX_ORDER}], got {order}")
        if coeffs.shape[-1] != n_coeffs(dim, order):
            raise ValueError("coefficient count does not match dimension and order")
        self.coeffs = coeffs
        self.dim = dim
        self.order = order

    # -- construction -----------------------------------------------------
    @classmethod
    def constant(cls, value, dim: int, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (n_coeffs(dim, order),))
        c[..., 0] = value
        return cls(c, dim, order)

    @classmethod
    def variable(cls, value, index: int, dim: int, order: int) -> "Jet":
        """Jet of the coordinate function ``x_index`` expanded at ``value``."""
        j = cls.constant(value, dim, order)
        if order >= 1:
            j.coeffs[..., 1 + index] = 1.0
        return j

    # -- accessors ----------------------------------------------------------
    @property
    def value(self) -> np.ndarray:
        return self.coeffs[..., 0]

    @property
    def batch_shape(self) -> tuple:
        return self.coeffs.shape[:-1]

    def coeff(self, alpha) -> np.ndarray:
        return self.coeffs[..., _position(self.dim, self.order)[tuple(alpha)]]

    def derivative(self, alpha) -> np.ndarray:
        """Partial derivative ``d^alpha f`` at the expansion point."""
        return self.coeff(alpha) * alpha_factorial(alpha)

    def tensor(self, k: int) -> np.ndarray:
        """Symmetric array of all k-th partial derivatives, shape (..., n, ..., n)."""
        if k > self.order:
            raise ValueError(f"jet of order {self.order} has no derivatives of order {k}")
        src, fac = _tensor_table(self.dim, self.order, k)
        flat = self.coeffs[..., src] * fac
        return flat.reshape(self.batch_shape + (self.dim,) * k)

    def gradient(self) -> np.ndarray:
        return self.tensor(1)

    def hessian(self) -> np.ndarray:
        return self.tensor(2)

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError("cannot raise the order of a jet")
        return Jet(self.coeffs[..., : n_coeffs(self.dim, order)], self.dim, order)

    def partial(self, axis: int) -> "Jet":
        """Exact jet of ``d f / d x_axis``, one order lower."""
        if self.order == 0:
            raise ValueError("order-0 jet carries no derivative information")
        src, fac = _partial_table(self.dim, self.order, axis)
        return Jet(self.coeffs[..., src] * fac, self.dim, self.order - 1)

    def __repr__(self):
        return f"Jet(dim={self.dim}, order={self.order}, batch={self.batch_shape})"

    # -- arithmetic -------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.dim != self.dim:
                raise ValueError("jet dimensions differ")
            if other.order != self.order:
                lo = min(self.order, other.order)
                return self.truncate(lo), other.truncate(lo)
            return self, other
        return self, Jet.constant(other, self.dim, self.order)

    def __add__(self, other):
        a, b = self._coerce(other)
        return Jet(a.coeffs + b.coeffs, a.dim, a.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs, self.dim, self.order)

    def __sub__(self, other):
        a, b = self._coerce(other)
        return Jet(a.coeffs - b.coeffs, a.dim, a.order)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coeffs * np.asarray(other, dtype=float)[..., None], self.dim, self.order)
        a, b = self._coerce(other)
        i, j, starts = _product_table(a.dim, a.order)
        prod = a.coeffs[..., i] * b.coeffs[..., j]
        return Jet(np.add.reduceat(prod, starts, axis=-1), a.dim, a.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, r):
        return self.compose(power_series(self.value, float(r), self.order))

    def reciprocal(self) -> "Jet":
        return self.compose(power_series(self.value, -1.0, self.order))

    def compose(self, series: np.ndarray) -> "Jet":
        """Evaluate ``g(self)`` from the Taylor coefficients of ``g`` at ``self.value``.

        ``series[..., k]`` is ``g^(k)(x0)/k!`` for ``k = 0..order``.
        """
        h = Jet(self.coeffs.copy(), self.dim, self.order)
        h.coeffs[..., 0] = 0.0
        p = self.order
        out = Jet.constant(series[..., p], self.dim, p)
        for k in range(p - 1, -1, -1):
            out = out * h
            out.coeffs[..., 0] += series[..., k]
        return out

    def apply(self, fname: str) -> "Jet":
        return self.compose(SERIES[fname](self.value, self.order))


# -- univariate Taylor series of elementary functions ---------------------

def _first_bad(mask):
    return int(np.flatnonzero(np.ravel(mask))[0])


def _check(mask, message):
    mask = np.asarray(mask)
    if mask.any():
        raise DomainError(f"{message} (batch element {_first_bad(mask)})")


def _inv_factorials(p):
    return np.array([1.0 / math.factorial(k) for k in range(p + 1)])


def exp_series(x0, p):
    return np.exp(x0)[..., None] * _inv_factorials(p)


def log_series(x0, p):
    x0 = np.asarray(x0, dtype=float)
    _check(~(x0 > 0), "ln of non-positive argument")
    out = np.empty(x0.shape + (p + 1,))
    out[..., 0] = np.log(x0)
    for k in range(1, p + 1):
        out[..., k] = (-1.0) ** (k + 1) / (k * x0**k)
    return out


def power_series(x0, r, p):
    """Series of ``x**r``: generalized binomial coefficients times ``x0**(r-k)``."""
    x0 = np.asarray(x0, dtype=float)
    integral = float(r).is_integer()
    if not integral:
        _check(~(x0 > 0), f"non-integer power {r} of non-positive base")
    elif r < 0:
        _check(x0 == 0, f"negative power {r} of zero")
    out = np.zeros(x0.shape + (p + 1,))
    binom = 1.0
    for k in range(p + 1):
        if binom != 0.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                out[..., k] = binom * x0 ** (r - k)
        binom *= (r - k) / (k + 1)
    if p > 0 and not (integral and r >= 0):
        _check(~np.isfinite(out), f"power {r} not analytic at argument")
    return out


def sqrt_series(x0, p):
    x0 = np.asarray(x0, dtype=float)
    _check(~(x0 > 0) if p > 0 else x0 < 0, "sqrt of non-positive argument")
    if p == 0:
        return np.sqrt(x0)[..., None]
    return power_series(x0, 0.5, p)


def _cyclic(values, p):
    out = np.stack([values[k % len(values)] for k in range(p + 1)], axis=-1)
    return out * _inv_factorials(p)


def sin_series(x0, p):
    s, c = np.sin(x0), np.cos(x0)
    return _cyclic([s, c, -s, -c], p)


def cos_series(x0, p):
    s, c = np.sin(x0), np.cos(x0)
    return _cyclic([c, -s, -c, s], p)


def sinh_series(x0, p):
    return _cyclic([np.sinh(x0), np.cosh(x0)], p)


def cosh_series(x0, p):
    return _cyclic([np.cosh(x0), np.sinh(x0)], p)


def tanh_series(x0, p):
    # y' = 1 - y^2, solved term by term
    x0 = np.asarray(x0, dtype=float)
    y = np.zeros(x0.shape + (p + 1,))
    y[..., 0] = np.tanh(x0)
    for k in range(p):
        sq = sum(y[..., i] * y[..., k - i] for i in range(k + 1))
        y[..., k + 1] = ((1.0 if k == 0 else 0.0) - sq) / (k + 1)
    return y


def atan_series(x0, p):
    # atan' = 1/P with P(s) = (1 + x0^2) + 2 x0 s + s^2
    x0 = np.asarray(x0, dtype=float)
    P0, P1 = 1.0 + x0 * x0, 2.0 * x0
    q = np.zeros(x0.shape + (max(p, 1),))
    q[..., 0] = 1.0 / P0
    for k in range(1, p):
        acc = P1 * q[..., k - 1]
        if k >= 2:
            acc = acc + q[..., k - 2]
        q[..., k] = -acc / P0
    out = np.zeros(x0.shape + (p + 1,))
    out[..., 0] = np.arctan(x0)
    for k in range(1, p + 1):
        out[..., k] = q[..., k - 1] / k
    return out


SERIES = {
    "exp": exp_series,
    "ln": log_series,
    "sqrt": sqrt_series,
    "sin": sin_series,
    "cos": cos_series,
    "sinh": sinh_series,
    "cosh": cosh_series,
    "tanh": tanh_series,
    "atan": atan_series,
}


def atan2(y: Jet, x: Jet) -> Jet:
    """Continuous two-argument angle.

    Uses ``atan2(y, x) - atan2(y0, x0) = atan((x0*y - y0*x) / (x0*x + y0*y))``,
    whose argument vanishes at the expansion point. At the origin only the
    value (defined as 0) is available.
    """
    y, x = y._coerce(x)
    y0, x0 = y.value, x.value
    theta0 = np.arctan2(y0, x0)
    if y.order == 0:
        return Jet(theta0[..., None], y.dim, 0)
    _check((x0 == 0) & (y0 == 0), "atan2 is not differentiable at the origin")
    w = (y * x0 - x * y0) / (x * x0 + y * y0)
    return w.apply("atan") + theta0


# -- jet-valued linear algebra -------------------------------------------

def stack_matrix(rows) -> np.ndarray:
    """Stack a nested list of same-shaped jets into (..., n_coeffs, m, k)."""
    return np.stack([np.stack([j.coeffs for j in row], axis=-1) for row in rows], axis=-2)


def jet_matmul(A: np.ndarray, B: np.ndarray, dim: int, order: int) -> np.ndarray:
    """Truncated product of jet-valued matrices laid out as (..., n_coeffs, m, k)."""
    i, j, starts = _product_table(dim, order)
    prod = np.matmul(A[..., i, :, :], B[..., j, :, :])
    return np.add.reduceat(prod, starts, axis=-3)


def jet_solve(M: np.ndarray, R: np.ndarray, dim: int, order: int) -> np.ndarray:
    """Solve ``M S = R`` with jet-valued entries, exactly through ``order``.

    Splits ``M = M0 + N`` (``N`` has no constant term) and iterates
    ``S <- M0^{-1} (R - N S)``; each sweep fixes one more Taylor degree.
    """
    M0 = M[..., 0, :, :]
    N = M.copy()
    N[..., 0, :, :] = 0.0
    M0inv = np.linalg.inv(M0)[..., None, :, :]
    S = np.matmul(M0inv, R)
    for _ in range(order):
        S = np.matmul(M0inv, R - jet_matmul(N, S, dim, order))
    return S


def coeff_tensor(coeffs: np.ndarray, dim: int, order: int, k: int, tail_ndim: int) -> np.ndarray:
    """k-th derivative tensor of jet coefficients laid out as (..., n_coeffs, *tail).

    Result shape is (..., *tail, dim, ..., dim), derivative axes last.
    """
    src, fac = _tensor_table(dim, order, k)
    c = np.moveaxis(coeffs, -1 - tail_ndim, -1)
    flat = c[..., src] * fac
    return flat.reshape(c.shape[:-1] + (dim,) * k)
