"""Tensor-valued jets and the handful of index operations built on them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .jets import Jet, JetContext, JetError, _fit, contract, solve_linear

COVARIANT = "l"
CONTRAVARIANT = "u"


@dataclass(frozen=True)
class TensorJet:
    """A tensor field jet in coordinate components.

    ``variance`` has one letter per slot, ``"l"`` (covariant) or ``"u"``
    (contravariant).  ``symmetric`` and ``antisymmetric`` optionally record
    slot pairs that :meth:`check_symmetries` can verify.
    """

    jet: Jet
    variance: str
    symmetric: tuple[tuple[int, int], ...] = field(default=())
    antisymmetric: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        if len(self.variance) != len(self.jet.shape):
            raise JetError("variance does not match tensor rank")
        if set(self.variance) - {COVARIANT, CONTRAVARIANT}:
            raise JetError(f"bad variance {self.variance!r}")
        d = self.jet.ctx.dimension
        if any(n != d for n in self.jet.shape):
            raise JetError("every tensor slot must have extent equal to the dimension")

    @property
    def ctx(self) -> JetContext:
        return self.jet.ctx

    @property
    def rank(self) -> int:
        return len(self.variance)

    @property
    def order(self) -> int:
        return self.jet.order

    @property
    def base_value(self) -> np.ndarray:
        return self.jet.base_value

    def check_symmetries(self) -> bool:
        c = self.jet.coeffs
        for i, j in self.symmetric:
            if not _all_zero(c - np.swapaxes(c, i, j)):
                return False
        for i, j in self.antisymmetric:
            if not _all_zero(c + np.swapaxes(c, i, j)):
                return False
        return True

    def truncate(self, order: int) -> "TensorJet":
        return TensorJet(self.jet.truncate(order), self.variance, self.symmetric, self.antisymmetric)


def _all_zero(a: np.ndarray) -> bool:
    if a.dtype == object:
        return all(v == 0 for v in a.ravel())
    return not np.any(a)


def max_abs(values) -> float:
    """Largest magnitude in an array of exact or float scalars."""
    arr = np.asarray(values, dtype=object).ravel()
    if arr.size == 0:
        return 0.0
    return max(abs(float(v)) for v in arr)


def is_exactly_zero(values) -> bool:
    arr = np.asarray(values, dtype=object).ravel()
    return all(v == 0 for v in arr)


def symmetrize(t: Jet, a: int = 0, b: int = 1) -> Jet:
    c = t.coeffs
    return Jet(t.ctx, (c + np.swapaxes(c, a, b)) * t.ctx.scalar(0.5 if not t.ctx.exact else "1/2"), t.order)


def constant_inverse(m: np.ndarray, exact: bool) -> np.ndarray:
    n = m.shape[0]
    eye = np.eye(n, dtype=np.int64).astype(object) if exact else np.eye(n)
    return solve_linear(m, eye, exact)


def matrix_inverse(m: Jet) -> Jet:
    """Inverse of a square matrix of jets with invertible base value.

    Solves ``X = M0^{-1} - M0^{-1} N X`` (``N = M - M0``) one block of target
    monomials at a time; a block only sees coefficients of earlier blocks, so
    the whole inverse costs about one jet product.
    """
    ctx = m.ctx
    if len(m.shape) != 2 or m.shape[0] != m.shape[1]:
        raise JetError("matrix_inverse needs a square matrix")
    m0 = m.base_value
    try:
        inv0 = constant_inverse(m0, ctx.exact)
    except np.linalg.LinAlgError:
        raise JetError("matrix not invertible at base point") from None
    o = m.order
    t = ctx.tables
    n = t.count[o]
    nc = _fit(m.coeffs, n).copy()
    nc[..., 0] = 0
    x = np.zeros(nc.shape, dtype=nc.dtype)
    x[..., 0] = inv0
    bounds = _blocks(t, n)
    for lo, hi in bounds[1:]:
        p0, p1 = t.starts[lo], (t.starts[hi] if hi < len(t.starts) else len(t.pair_i))
        prod = np.einsum("ijZ,jkZ->ikZ", nc[..., t.pair_i[p0:p1]], x[..., t.pair_j[p0:p1]])
        part = np.add.reduceat(prod, t.starts[lo:hi] - p0, axis=-1)
        x[..., lo:hi] = -np.einsum("ij,jkZ->ikZ", inv0, part)
    return Jet(ctx, x, o)


def _blocks(t, n: int) -> list[tuple[int, int]]:
    """Index ranges of equal (x-degree, param slot) among the first ``n`` monomials."""
    out = []
    lo = 0
    for i in range(1, n + 1):
        if i == n or (t.xdeg[i], t.monomials[i][1]) != (t.xdeg[lo], t.monomials[lo][1]):
            out.append((lo, i))
            lo = i
    return out


def trace_free(t: Jet, metric: Jet, inverse: Jet) -> Jet:
    """Trace-free part of a symmetric (0,2) jet with respect to ``metric``."""
    n = t.ctx.dimension
    tr = contract("ab,ab->", inverse, t)
    return t - contract(",ab->ab", tr, metric) * t.ctx.scalar(1) / n


def raise_index(t: Jet, inverse: Jet, slot: int) -> Jet:
    """Raise one covariant slot with the inverse metric."""
    letters = "abcdefgh"[: len(t.shape)]
    out = letters.replace(letters[slot], "z")
    return contract(f"z{letters[slot]},{letters}->{out}", inverse, t)
