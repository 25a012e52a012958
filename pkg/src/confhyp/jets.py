"""Truncated multivariate Taylor series (jets) at the coordinate origin.

A :class:`Jet` stores the coefficients of a polynomial in ``d`` variables
truncated at total degree ``order``.  Jets are *batched*: the coefficient
array has shape ``batch + (n,)`` so a whole tensor of jets is one object and
index contractions run through :func:`numpy.einsum`.

Monomials are kept in graded lexicographic order, so the monomials of degree
at most ``k`` form a prefix of the coefficient vector and truncation is a
slice.  Optional formal parameters ``eps_1..eps_p`` can be carried alongside
the spatial variables; they are truncated at joint degree one and never
differentiated.  They exist to extract first-order sensitivities exactly.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from gmpy2 import mpq

from .surd import QuadraticSurd, exact_sqrt, to_mpq

MODES = ("float", "exact")


class JetError(ValueError):
    """Raised for invalid jet operations."""


class OrderUnderflow(JetError):
    """Raised when an operation needs more jet order than is available."""

    def __init__(self, message: str = "order underflow"):
        super().__init__(message)


@dataclass(frozen=True)
class JetContext:
    """Number of variables, truncation order and coefficient field."""

    dimension: int
    order: int
    mode: str = "float"
    params: int = 0

    def __post_init__(self):
        if self.dimension < 2:
            raise JetError("jet dimension must be at least 2")
        if self.order < 0:
            raise JetError("jet order must be non-negative")
        if self.mode not in MODES:
            raise JetError(f"unknown coefficient mode {self.mode!r}")
        if self.params < 0:
            raise JetError("parameter count must be non-negative")

    @property
    def tables(self) -> "_Tables":
        return _tables(self.dimension, self.order, self.params)

    @property
    def exact(self) -> bool:
        return self.mode == "exact"

    @property
    def dtype(self):
        return object if self.exact else np.float64

    def size(self, order: int | None = None) -> int:
        return self.tables.count[self.order if order is None else order]

    def scalar(self, value):
        if self.exact:
            if isinstance(value, (QuadraticSurd, mpq)):
                return value
            return to_mpq(value)
        return float(value)

    def restricted(self) -> "JetContext":
        """Context of the slice ``x_d = 0`` (one variable fewer)."""
        return JetContext(self.dimension - 1, self.order, self.mode, self.params)

    def with_params(self, params: int) -> "JetContext":
        return JetContext(self.dimension, self.order, self.mode, params)

    def with_order(self, order: int) -> "JetContext":
        return JetContext(self.dimension, order, self.mode, self.params)

    # constructors ---------------------------------------------------------

    def zeros(self, shape: tuple[int, ...] = (), order: int | None = None) -> "Jet":
        order = self.order if order is None else order
        return Jet(self, np.zeros(tuple(shape) + (self.size(order),), dtype=self.dtype), order)

    def constant(self, value, shape: tuple[int, ...] = ()) -> "Jet":
        out = np.zeros(tuple(shape) + (self.size(),), dtype=self.dtype)
        out[..., 0] = self.scalar(value)
        return Jet(self, out, self.order)

    def constant_array(self, values) -> "Jet":
        """Constant jets from an array of base-point values."""
        values = np.asarray(values, dtype=object if self.exact else np.float64)
        out = np.zeros(values.shape + (self.size(),), dtype=self.dtype)
        if self.exact:
            out[..., 0] = np.vectorize(self.scalar, otypes=[object])(values) if values.size else values
        else:
            out[..., 0] = values
        return Jet(self, out, self.order)

    def coordinate(self, axis: int) -> "Jet":
        """The coordinate function ``x_axis`` (0-based)."""
        if not 0 <= axis < self.dimension:
            raise JetError(f"axis {axis} out of range")
        e = [0] * self.dimension
        e[axis] = 1
        return self.from_terms({tuple(e): 1})

    def coordinates(self) -> "Jet":
        return stack([self.coordinate(i) for i in range(self.dimension)])

    def param(self, i: int) -> "Jet":
        """The formal parameter ``eps_i`` (0-based)."""
        if not 0 <= i < self.params:
            raise JetError(f"parameter {i} out of range")
        out = np.zeros(self.size(), dtype=self.dtype)
        out[self.tables.param_index[i]] = self.scalar(1)
        return Jet(self, out, self.order)

    def from_terms(self, terms: Mapping[tuple[int, ...], object], order: int | None = None) -> "Jet":
        """Jet from a mapping ``exponent tuple -> coefficient``.

        Terms above the truncation order are dropped.
        """
        order = self.order if order is None else order
        t = self.tables
        out = np.zeros(self.size(order), dtype=self.dtype)
        for e, c in terms.items():
            e = tuple(int(v) for v in e)
            if len(e) != self.dimension:
                raise JetError(f"exponent {e} has wrong length for dimension {self.dimension}")
            if sum(e) > order:
                continue
            out[t.index[(e, 0)]] += self.scalar(c)
        return Jet(self, out, order)


@dataclass
class _Tables:
    dimension: int
    order: int
    params: int
    monomials: list          # list of (exponent tuple, param slot); slot 0 = none
    index: dict
    xdeg: np.ndarray
    count: list              # count[o] = number of monomials with x-degree <= o
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_count: list         # pairs whose target has x-degree <= o
    starts: np.ndarray       # first pair index for each target monomial
    deriv: list              # per axis: (src, tgt, factor) sorted by tgt
    param_index: list


@functools.lru_cache(maxsize=None)
def _tables(d: int, K: int, p: int) -> _Tables:
    exps = []
    for deg in range(K + 1):
        level = [e for e in itertools.product(range(deg + 1), repeat=d) if sum(e) == deg]
        # graded lexicographic: x1 > x2 > ... within a degree
        level.sort(key=lambda e: tuple(-v for v in e))
        exps.append(level)
    monomials = []
    for deg in range(K + 1):
        for slot in range(p + 1):
            for e in exps[deg]:
                monomials.append((e, slot))
    index = {m: i for i, m in enumerate(monomials)}
    xdeg = np.array([sum(e) for e, _ in monomials], dtype=np.int64)
    count = [int(np.searchsorted(xdeg, o, side="right")) for o in range(K + 1)]

    pairs = []
    for k, (e, slot) in enumerate(monomials):
        # all factorizations x^a eps^s * x^b eps^t = x^e eps^slot
        for a in itertools.product(*(range(v + 1) for v in e)):
            b = tuple(v - w for v, w in zip(e, a))
            if slot == 0:
                pairs.append((index[(a, 0)], index[(b, 0)], k))
            else:
                pairs.append((index[(a, slot)], index[(b, 0)], k))
                pairs.append((index[(a, 0)], index[(b, slot)], k))
    pairs.sort(key=lambda t: (t[2], t[0], t[1]))
    arr = np.array(pairs, dtype=np.int64).reshape(-1, 3)
    tgt = arr[:, 2]
    starts = np.searchsorted(tgt, np.arange(len(monomials)), side="left")
    pair_count = [int(np.searchsorted(tgt, count[o], side="left")) for o in range(K + 1)]

    deriv = []
    for axis in range(d):
        rows = []
        for i, (e, slot) in enumerate(monomials):
            if e[axis] > 0:
                f = list(e)
                f[axis] -= 1
                rows.append((i, index[(tuple(f), slot)], e[axis]))
        rows.sort(key=lambda r: r[1])
        rows = np.array(rows, dtype=np.int64).reshape(-1, 3)
        deriv.append((rows[:, 0], rows[:, 1], rows[:, 2]))
    zero = tuple([0] * d)
    param_index = [index[(zero, s)] for s in range(1, p + 1)]
    return _Tables(d, K, p, monomials, index, xdeg, count, arr[:, 0].copy(), arr[:, 1].copy(),
                   pair_count, starts, deriv, param_index)


def _fit(coeffs: np.ndarray, n: int) -> np.ndarray:
    """Truncate or zero-pad the last axis to length ``n``."""
    m = coeffs.shape[-1]
    if m == n:
        return coeffs
    if m > n:
        return coeffs[..., :n]
    out = np.zeros(coeffs.shape[:-1] + (n,), dtype=coeffs.dtype)
    out[..., :m] = coeffs
    return out


def _is_zero_array(a: np.ndarray) -> np.ndarray:
    if a.dtype == object:
        return np.frompyfunc(lambda v: not isinstance(v, QuadraticSurd) and v == 0, 1, 1)(a).astype(bool)
    return a == 0


class Jet:
    """A (batched) truncated Taylor series.

    ``order`` is the degree through which the coefficients are trustworthy;
    every operation propagates it.  Products use the sharper rule
    ``min(order_a + val_b, order_b + val_a)`` where ``val`` is the lowest
    degree carrying a nonzero coefficient.
    """

    __slots__ = ("ctx", "coeffs", "order", "_val", "_nz")

    def __init__(self, ctx: JetContext, coeffs: np.ndarray, order: int):
        if order > ctx.order:
            raise JetError("jet order exceeds context order")
        if coeffs.shape[-1] != ctx.size(order):
            coeffs = _fit(coeffs, ctx.size(order))
        self.ctx = ctx
        self.coeffs = coeffs
        self.order = order
        self._val = -1
        self._nz = None

    # shape handling --------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-1]

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        if Ellipsis in idx or len(idx) > len(self.shape):
            raise JetError("jet indexing must address batch axes only")
        return Jet(self.ctx, self.coeffs[idx], self.order)

    def transpose(self, *axes: int) -> "Jet":
        return Jet(self.ctx, np.transpose(self.coeffs, tuple(axes) + (len(axes),)), self.order)

    def sum(self, axis=None) -> "Jet":
        if axis is None:
            axis = tuple(range(len(self.shape)))
        return Jet(self.ctx, self.coeffs.sum(axis=axis), self.order)

    def reshape(self, *shape: int) -> "Jet":
        return Jet(self.ctx, self.coeffs.reshape(tuple(shape) + (self.coeffs.shape[-1],)), self.order)

    def trace(self, axis1: int = 0, axis2: int = 1) -> "Jet":
        diag = np.diagonal(self.coeffs, axis1=axis1, axis2=axis2)
        return Jet(self.ctx, diag.sum(axis=-1), self.order)

    # values --------------------------------------------------------------

    @property
    def base_value(self) -> np.ndarray:
        """Coefficient of the constant monomial (value at the base point)."""
        return self.coeffs[..., 0]

    def param_coefficient(self, i: int) -> np.ndarray:
        """Coefficient of ``eps_i`` at the base point."""
        return self.coeffs[..., self.ctx.tables.param_index[i]]

    def coefficient(self, exponent: Sequence[int], slot: int = 0):
        idx = self.ctx.tables.index.get((tuple(exponent), slot))
        if idx is None or idx >= self.coeffs.shape[-1]:
            raise OrderUnderflow(f"coefficient {tuple(exponent)} beyond jet order {self.order}")
        return self.coeffs[..., idx]

    def terms(self) -> dict:
        """Nonzero coefficients of a scalar jet keyed by exponent."""
        if self.shape:
            raise JetError("terms() needs a scalar jet")
        mons = self.ctx.tables.monomials
        zero = _is_zero_array(self.coeffs)
        return {mons[i][0] if self.ctx.params == 0 else mons[i]: self.coeffs[i]
                for i in range(self.coeffs.shape[-1]) if not zero[i]}

    @property
    def column_mask(self) -> np.ndarray:
        """Which monomials carry a nonzero coefficient in some batch entry."""
        if self._nz is None:
            nz = ~_is_zero_array(self.coeffs)
            if nz.ndim > 1:
                nz = nz.reshape(-1, nz.shape[-1]).any(axis=0)
            self._nz = nz
        return self._nz

    @property
    def valuation(self) -> float:
        if self._val == -1:
            hit = np.flatnonzero(self.column_mask)
            self._val = math.inf if hit.size == 0 else int(self.ctx.tables.xdeg[hit[0]])
        return self._val

    def is_zero(self) -> bool:
        return bool(_is_zero_array(self.coeffs).all())

    # conversions ----------------------------------------------------------

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise OrderUnderflow(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.ctx, self.coeffs[..., : self.ctx.size(order)], order)

    def to_context(self, ctx: JetContext) -> "Jet":
        """Re-home the coefficients in a context differing in order or params."""
        if ctx.dimension != self.ctx.dimension or ctx.mode != self.ctx.mode:
            raise JetError("incompatible jet contexts")
        if ctx.params == self.ctx.params:
            order = min(self.order, ctx.order)
            return Jet(ctx, self.coeffs[..., : ctx.size(order)], order)
        if ctx.params < self.ctx.params:
            raise JetError("cannot drop formal parameters")
        src = self.ctx.tables
        dst = ctx.tables
        order = min(self.order, ctx.order)
        out = np.zeros(self.shape + (ctx.size(order),), dtype=ctx.dtype)
        for i in range(self.ctx.size(order)):
            out[..., dst.index[src.monomials[i]]] = self.coeffs[..., i]
        return Jet(ctx, out, order)

    def astype_float(self) -> "Jet":
        ctx = JetContext(self.ctx.dimension, self.ctx.order, "float", self.ctx.params)
        c = np.vectorize(float, otypes=[np.float64])(self.coeffs) if self.coeffs.size else \
            np.zeros(self.coeffs.shape)
        return Jet(ctx, c, self.order)

    # arithmetic -----------------------------------------------------------

    def _check(self, other: "Jet"):
        if other.ctx != self.ctx:
            raise JetError("incompatible jet contexts")

    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            o = min(self.order, other.order)
            n = self.ctx.size(o)
            return Jet(self.ctx, self.coeffs[..., :n] + other.coeffs[..., :n], o)
        out = self.coeffs.copy()
        out[..., 0] = out[..., 0] + _scalarize(self.ctx, other)
        return Jet(self.ctx, out, self.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.ctx, -self.coeffs, self.order)

    def __sub__(self, other):
        if isinstance(other, Jet):
            return self + (-other)
        return self + (-_scalarize(self.ctx, other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return multiply(self, other)
        if isinstance(other, np.ndarray):
            return self.scale(other)
        return Jet(self.ctx, self.coeffs * _scalarize(self.ctx, other), self.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        o = _scalarize(self.ctx, other)
        if not isinstance(o, np.ndarray) and o == 0:
            raise ZeroDivisionError("jet divided by zero")
        if self.ctx.exact:
            return self * (mpq(1) / o)
        return Jet(self.ctx, self.coeffs / o, self.order)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise JetError("jet powers must be non-negative integers")
        out = self.ctx.constant(1, self.shape)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def scale(self, values) -> "Jet":
        """Multiply each batch entry by a scalar from ``values`` (batch-shaped)."""
        v = np.asarray(values, dtype=self.coeffs.dtype)
        return Jet(self.ctx, self.coeffs * v[..., None], self.order)

    # calculus -------------------------------------------------------------

    def differentiate(self, axis: int) -> "Jet":
        return differentiate(self, axis)

    def gradient(self) -> "Jet":
        """Stack of partial derivatives; the new axis comes first."""
        return stack([differentiate(self, i) for i in range(self.ctx.dimension)])

    def restrict(self) -> "Jet":
        return restrict(self)

    def normal_coefficient(self, power: int) -> "Jet":
        return normal_coefficient(self, power)

    def __repr__(self):
        return f"Jet(shape={self.shape}, order={self.order}, ctx={self.ctx})"


def _scalarize(ctx: JetContext, value):
    if isinstance(value, np.ndarray):
        return value
    return ctx.scalar(value)


def stack(jets: Sequence[Jet], axis: int = 0) -> Jet:
    if not jets:
        raise JetError("cannot stack zero jets")
    ctx = jets[0].ctx
    for j in jets:
        if j.ctx != ctx:
            raise JetError("incompatible jet contexts")
    o = min(j.order for j in jets)
    n = ctx.size(o)
    return Jet(ctx, np.stack([j.coeffs[..., :n] for j in jets], axis=axis), o)


def product_order(a: Jet, b: Jet) -> int:
    va, vb = a.valuation, b.valuation
    o = min(a.order + vb, b.order + va, a.ctx.order)
    return int(o) if o != math.inf else a.ctx.order


def _live_pairs(t, P: int, a: Jet | None, b: Jet | None):
    """Pair indices (below ``P``) whose factors are not identically zero, or None."""
    if a is None or b is None:
        return None
    ma, mb = _fit(a.column_mask, t.count[-1]), _fit(b.column_mask, t.count[-1])
    keep = ma[t.pair_i[:P]] & mb[t.pair_j[:P]]
    if keep.sum() > 0.8 * P:
        return None
    return np.flatnonzero(keep)


def _segment_sum(prod: np.ndarray, t, n: int, P: int, live) -> np.ndarray:
    if live is None:
        return np.add.reduceat(prod, t.starts[:n], axis=-1)
    out = np.zeros(prod.shape[:-1] + (n,), dtype=prod.dtype)
    if live.size == 0:
        return out
    st = np.searchsorted(live, t.starts[:n], side="left")
    end = np.append(st[1:], live.size)
    full = st < end
    out[..., full] = np.add.reduceat(prod, st[full], axis=-1)
    return out


def _mul_coeffs(ctx: JetContext, A: np.ndarray, B: np.ndarray, order: int,
                a: Jet | None = None, b: Jet | None = None) -> np.ndarray:
    t = ctx.tables
    n = t.count[order]
    P = t.pair_count[order]
    A = _fit(A, n)
    B = _fit(B, n)
    live = _live_pairs(t, P, a, b)
    pi, pj = (t.pair_i[:P], t.pair_j[:P]) if live is None else (t.pair_i[live], t.pair_j[live])
    prod = A[..., pi] * B[..., pj]
    return _segment_sum(prod, t, n, P, live)


def multiply(a: Jet, b: Jet, order: int | None = None) -> Jet:
    """Elementwise (broadcast) product of two batched jets."""
    if a.ctx != b.ctx:
        raise JetError("incompatible jet contexts")
    o = product_order(a, b)
    if order is not None:
        o = min(o, order)
    return Jet(a.ctx, _mul_coeffs(a.ctx, a.coeffs, b.coeffs, o, a, b), o)


def contract(subscripts: str, a: Jet, b: Jet, order: int | None = None) -> Jet:
    """``einsum`` over batch axes with jet multiplication of the entries.

    ``subscripts`` names only the batch axes, e.g. ``"ij,jk->ik"``.
    """
    if a.ctx != b.ctx:
        raise JetError("incompatible jet contexts")
    ctx = a.ctx
    o = product_order(a, b)
    if order is not None:
        o = min(o, order)
    t = ctx.tables
    n = t.count[o]
    P = t.pair_count[o]
    live = _live_pairs(t, P, a, b)
    pi, pj = (t.pair_i[:P], t.pair_j[:P]) if live is None else (t.pair_i[live], t.pair_j[live])
    A = _fit(a.coeffs, n)[..., pi]
    B = _fit(b.coeffs, n)[..., pj]
    lhs, out = subscripts.replace(" ", "").split("->")
    sa, sb = lhs.split(",")
    prod = np.einsum(f"{sa}Z,{sb}Z->{out}Z", A, B)
    return Jet(ctx, _segment_sum(prod, t, n, P, live), o)


def differentiate(a: Jet, axis: int) -> Jet:
    """Formal partial derivative along ``axis`` (0-based); order drops by one."""
    ctx = a.ctx
    if not 0 <= axis < ctx.dimension:
        raise JetError(f"axis {axis} out of range")
    if a.order < 1:
        raise OrderUnderflow()
    o = a.order - 1
    n = ctx.size(o)
    src, tgt, fac = ctx.tables.deriv[axis]
    m = int(np.searchsorted(tgt, n, side="left"))
    out = np.zeros(a.shape + (n,), dtype=a.coeffs.dtype)
    vals = a.coeffs[..., src[:m]]
    out[..., tgt[:m]] = vals * (fac[:m].astype(object) if ctx.exact else fac[:m])
    return Jet(ctx, out, o)


def _power_series(a: Jet, coeff_fn) -> Jet:
    """Evaluate ``sum_n c_n (a - a0)^n`` with ``c_n = coeff_fn(a0, n)`` via Horner."""
    ctx = a.ctx
    a0 = a.base_value
    hc = a.coeffs.copy()
    hc[..., 0] = 0
    h = Jet(ctx, hc, a.order)
    steps = a.order + (1 if ctx.params else 0)
    r = ctx.zeros(a.shape, a.order)
    r.coeffs[..., 0] = coeff_fn(a0, steps)
    for n in range(steps - 1, -1, -1):
        r = multiply(h, r, order=a.order)
        rc = r.coeffs.copy()
        rc[..., 0] = rc[..., 0] + coeff_fn(a0, n)
        r = Jet(ctx, rc, a.order)
    return Jet(ctx, _fit(r.coeffs, ctx.size(a.order)), a.order)


def _elementwise(fn, arr):
    if arr.dtype == object:
        out = np.empty(arr.shape, dtype=object)
        for idx in np.ndindex(arr.shape):
            out[idx] = fn(arr[idx])
        return out
    return fn(arr)


def _require(a: Jet, predicate, message: str):
    bad = _elementwise(lambda v: not predicate(v), a.base_value)
    if np.asarray(bad, dtype=bool).any():
        raise JetError(message)


def reciprocal(a: Jet) -> Jet:
    """Truncated series of ``1/a``; needs a nonzero constant term."""
    _require(a, lambda v: v != 0, "jet not invertible at base point")
    one = a.ctx.scalar(1)

    def c(a0, n):
        return _elementwise(lambda v: (-1) ** n * one / v ** (n + 1), a0)

    return _power_series(a, c)


def sqrt(a: Jet) -> Jet:
    """Truncated series of ``sqrt(a)``; needs a positive constant term."""
    _require(a, lambda v: v > 0, "jet not positive at base point")
    exact = a.ctx.exact
    root = _elementwise(exact_sqrt if exact else np.sqrt, a.base_value)

    def c(a0, n):
        binom = math.prod((mpq(1, 2) - k for k in range(n)), start=mpq(1)) / math.factorial(n)
        if not exact:
            return root * float(binom) / a0 ** n
        return _elementwise_pair(lambda r, v: r * binom / v ** n, root, a0)

    return _power_series(a, c)


def _elementwise_pair(fn, x, y):
    out = np.empty(x.shape, dtype=object)
    for idx in np.ndindex(x.shape):
        out[idx] = fn(x[idx], y[idx])
    return out


def log(a: Jet) -> Jet:
    """Truncated series of ``log(a)``; needs a positive constant term.

    In exact mode the constant ``log(a0)`` is only representable when
    ``a0 == 1``.
    """
    _require(a, lambda v: v > 0, "jet not positive at base point")
    exact = a.ctx.exact
    if exact:
        _require(a, lambda v: v == 1, "exact log needs a unit constant term")

    def c(a0, n):
        if n == 0:
            return _elementwise(lambda v: mpq(0), a0) if exact else np.log(a0)
        sign = 1 if n % 2 else -1
        if exact:
            return _elementwise(lambda v: mpq(sign, n) / v ** n, a0)
        return sign / (n * a0 ** n)

    return _power_series(a, c)


def exp(a: Jet) -> Jet:
    """Truncated series of ``exp(a)``; exact mode needs a zero constant term."""
    exact = a.ctx.exact
    if exact:
        _require(a, lambda v: v == 0, "exact exp needs a zero constant term")

    def c(a0, n):
        if exact:
            return _elementwise(lambda v: mpq(1, math.factorial(n)), a0)
        return np.exp(a0) / math.factorial(n)

    return _power_series(a, c)


# restriction to the slice x_d = 0 ------------------------------------------

@functools.lru_cache(maxsize=None)
def _slice_maps(d: int, K: int, p: int):
    """Index maps between a d-variable context and its x_d = 0 slice."""
    big = _tables(d, K, p)
    small = _tables(d - 1, K, p)
    src = []
    dst = []
    for i, (e, slot) in enumerate(big.monomials):
        if e[-1] == 0:
            src.append(i)
            dst.append(small.index[(e[:-1], slot)])
    order = np.argsort(dst)
    return np.array(src)[order], np.array(dst)[order]


def restrict(a: Jet) -> Jet:
    """Set the last variable to zero; the result lives in ``ctx.restricted()``."""
    ctx = a.ctx
    small = ctx.restricted()
    src, dst = _slice_maps(ctx.dimension, ctx.order, ctx.params)
    n = small.size(a.order)
    m = int(np.searchsorted(dst, n, side="left"))
    out = np.zeros(a.shape + (n,), dtype=a.coeffs.dtype)
    out[..., dst[:m]] = a.coeffs[..., src[:m]]
    return Jet(small, out, a.order)


def extend(a: Jet, bulk: JetContext) -> Jet:
    """Inverse of :func:`restrict`: view a slice jet as independent of ``x_d``."""
    if bulk.restricted() != a.ctx:
        raise JetError("incompatible jet contexts")
    src, dst = _slice_maps(bulk.dimension, bulk.order, bulk.params)
    n_small = a.ctx.size(a.order)
    n_big = bulk.size(a.order)
    m = int(np.searchsorted(dst, n_small, side="left"))
    out = np.zeros(a.shape + (n_big,), dtype=a.coeffs.dtype)
    out[..., src[:m]] = a.coeffs[..., dst[:m]]
    return Jet(bulk, out, a.order)


@functools.lru_cache(maxsize=None)
def _normal_maps(d: int, K: int, p: int, power: int):
    big = _tables(d, K, p)
    small = _tables(d - 1, K, p)
    src = []
    dst = []
    for i, (e, slot) in enumerate(big.monomials):
        if e[-1] == power:
            src.append(i)
            dst.append(small.index[(e[:-1], slot)])
    order = np.argsort(dst)
    return np.array(src, dtype=np.int64)[order], np.array(dst, dtype=np.int64)[order]


def normal_coefficient(a: Jet, power: int) -> Jet:
    """Coefficient of ``x_d**power`` as a jet in the remaining variables."""
    if power > a.order:
        raise OrderUnderflow(f"coefficient of x_d^{power} beyond jet order {a.order}")
    ctx = a.ctx
    small = ctx.restricted()
    o = a.order - power
    src, dst = _normal_maps(ctx.dimension, ctx.order, ctx.params, power)
    n = small.size(o)
    m = int(np.searchsorted(dst, n, side="left"))
    out = np.zeros(a.shape + (n,), dtype=a.coeffs.dtype)
    out[..., dst[:m]] = a.coeffs[..., src[:m]]
    return Jet(small, out, o)


# composition and inversion --------------------------------------------------

@dataclass(frozen=True)
class JetMap:
    """A map between coordinate patches fixing the origin.

    ``components`` is a jet of shape ``(target_dim,)`` over the source
    context: the target coordinates as functions of the source ones.
    """

    components: Jet

    @property
    def ctx(self) -> JetContext:
        return self.components.ctx

    @property
    def target_dimension(self) -> int:
        return self.components.shape[0]

    @property
    def base_value(self) -> np.ndarray:
        return self.components.base_value

    @property
    def jacobian(self) -> np.ndarray:
        """Matrix ``d target_i / d source_j`` at the base point."""
        t = self.ctx.tables
        cols = []
        for j in range(self.ctx.dimension):
            e = [0] * self.ctx.dimension
            e[j] = 1
            cols.append(self.components.coeffs[..., t.index[(tuple(e), 0)]])
        return np.stack(cols, axis=-1)

    @property
    def order(self) -> int:
        return self.components.order

    @staticmethod
    def identity(ctx: JetContext) -> "JetMap":
        return JetMap(ctx.coordinates())

    def __call__(self, f: Jet) -> Jet:
        """Pull back ``f`` along the map: ``f o self``."""
        return compose(f, self)

    def then(self, other: "JetMap") -> "JetMap":
        """The map ``other o self``."""
        return JetMap(compose(other.components, self))

    def inverse(self) -> "JetMap":
        return invert_map(self)


def _monomial_table(m: JetMap, target: JetContext, order: int) -> np.ndarray:
    """Rows: every target monomial evaluated on the map's components."""
    src_ctx = m.ctx
    tt = target.tables
    n_t = target.size(order)
    n_s = src_ctx.size(order)
    comps = m.components.truncate(order) if m.order > order else m.components
    rows = np.zeros((n_t, n_s), dtype=src_ctx.dtype)
    rows[0, 0] = src_ctx.scalar(1)
    param_rows = {}
    for k in range(1, n_t):
        e, slot = tt.monomials[k]
        if slot:
            base = rows[tt.index[(e, 0)]]
            if slot not in param_rows:
                param_rows[slot] = src_ctx.param(slot - 1).truncate(order).coeffs
            rows[k] = _mul_coeffs(src_ctx, base, param_rows[slot], order)
            continue
        i = next(i for i, v in enumerate(e) if v)
        prev = list(e)
        prev[i] -= 1
        rows[k] = _mul_coeffs(src_ctx, rows[tt.index[(tuple(prev), 0)]], comps.coeffs[i], order)
    return rows


def compose(f: Jet, m: JetMap) -> Jet:
    """``f o m`` truncated at the common order."""
    target = f.ctx
    if m.target_dimension != target.dimension or m.ctx.params != target.params \
            or m.ctx.mode != target.mode:
        raise JetError("incompatible jet contexts")
    if not _is_zero_array(np.asarray(m.base_value)).all():
        raise JetError("map does not fix the base point")
    o = min(f.order, m.order, m.ctx.order)
    rows = _monomial_table(m, target, o)
    fc = f.coeffs[..., : target.size(o)]
    # a degree-k monomial of a base-point-fixing map has no terms below degree k
    tc, sc = target.tables.count, m.ctx.tables.count
    out = np.zeros(fc.shape[:-1] + (rows.shape[1],), dtype=rows.dtype)
    for k in range(o + 1):
        lo_t, hi_t = (tc[k - 1] if k else 0), tc[k]
        lo_s = sc[k - 1] if k else 0
        out[..., lo_s:] += np.tensordot(fc[..., lo_t:hi_t], rows[lo_t:hi_t, lo_s:], axes=([-1], [0]))
    return Jet(m.ctx, out, o)


def solve_linear(A: np.ndarray, B: np.ndarray, exact: bool) -> np.ndarray:
    """Solve ``A X = B`` for a small square system; raises on singular ``A``."""
    if not exact:
        A = np.asarray(A, dtype=np.float64)
        if abs(np.linalg.det(A)) < 1e-300 or np.linalg.cond(A) > 1e14:
            raise np.linalg.LinAlgError("singular matrix")
        return np.linalg.solve(A, np.asarray(B, dtype=np.float64))
    n = A.shape[0]
    M = np.array(A, dtype=object, copy=True)
    X = np.array(B, dtype=object, copy=True)
    if X.ndim == 1:
        X = X[:, None]
        squeeze = True
    else:
        squeeze = False
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r, col] != 0), None)
        if piv is None:
            raise np.linalg.LinAlgError("singular matrix")
        if piv != col:
            M[[col, piv]] = M[[piv, col]]
            X[[col, piv]] = X[[piv, col]]
        inv = mpq(1) / M[col, col] if not isinstance(M[col, col], QuadraticSurd) else 1 / M[col, col]
        M[col] = M[col] * inv
        X[col] = X[col] * inv
        for r in range(n):
            if r != col and M[r, col] != 0:
                f = M[r, col]
                M[r] = M[r] - f * M[col]
                X[r] = X[r] - f * X[col]
    return X[:, 0] if squeeze else X


def invert_map(m: JetMap) -> JetMap:
    """Local inverse of a square jet map by fixed-point iteration.

    Each sweep ``G <- G - A^{-1}(m o G - id)`` with ``A`` the Jacobian at the
    base point gains one order of accuracy.
    """
    ctx = m.ctx
    if m.target_dimension != ctx.dimension:
        raise JetError("only square maps can be inverted")
    A = m.jacobian
    try:
        Ainv = solve_linear(A, np.eye(ctx.dimension, dtype=np.int64).astype(object)
                            if ctx.exact else np.eye(ctx.dimension), ctx.exact)
    except np.linalg.LinAlgError:
        raise JetError("map not locally invertible") from None
    if ctx.exact:
        Ainv = np.vectorize(ctx.scalar, otypes=[object])(Ainv)
    o = m.order
    x = ctx.coordinates().truncate(o) if o < ctx.order else ctx.coordinates()
    ainv = ctx.constant_array(Ainv)
    G = contract("ij,j->i", ainv, x, order=o)
    # sweep j only needs to be right through degree j + 1
    for j in range(1, o + (1 if ctx.params else 0)):
        oj = min(j + 1, o)
        Gj = Jet(ctx, G.coeffs, oj)      # zero-padded guess for degree oj
        resid = compose(m.components.truncate(oj), JetMap(Gj)) - x.truncate(oj)
        G = Gj - contract("ij,j->i", ainv, resid, order=oj)
    return JetMap(G)


def polynomial(ctx: JetContext, terms: Iterable[tuple[Sequence[int], object]]) -> Jet:
    """Jet from an iterable of ``(exponent, coefficient)`` pairs (summed)."""
    acc: dict[tuple[int, ...], object] = {}
    for e, c in terms:
        e = tuple(int(v) for v in e)
        acc[e] = acc.get(e, 0) + ctx.scalar(c)
    return ctx.from_terms(acc)
