"""Exact scalars for the rational coefficient mode.

Everything the library computes from rational input is rational except the
norm ``|ds|_g``, whose square root generally leaves ``Q``.  All such roots in
one computation share a single square class, so ``Q(sqrt(r))`` is enough.
"""

from __future__ import annotations

import math
from fractions import Fraction

import gmpy2
from gmpy2 import mpq

_SMALL_PRIMES = [p for p in range(2, 400) if all(p % q for q in range(2, int(p**0.5) + 1))]


def to_mpq(value) -> mpq:
    if isinstance(value, mpq):
        return value
    if isinstance(value, Fraction):
        return mpq(value.numerator, value.denominator)
    if isinstance(value, float):
        return mpq(Fraction(value))
    if isinstance(value, str):
        return mpq(Fraction(value.strip()))
    return mpq(value)


def _strip_squares(n: int) -> tuple[int, int]:
    """Return ``(f, r)`` with ``n == f*f*r`` after removing small square factors."""
    f = 1
    if gmpy2.is_square(n):
        return int(gmpy2.isqrt(n)), 1
    for p in _SMALL_PRIMES:
        pp = p * p
        if pp > n:
            break
        while n % pp == 0:
            n //= pp
            f *= p
    return f, n


class QuadraticSurd:
    """The number ``a + b*sqrt(r)`` with rational ``a, b`` and integer ``r > 1``.

    Instances are only created when ``b != 0``; arithmetic demotes results
    with vanishing irrational part back to ``mpq``.
    """

    __slots__ = ("a", "b", "r")

    def __init__(self, a, b, r: int):
        self.a = to_mpq(a)
        self.b = to_mpq(b)
        self.r = int(r)

    @staticmethod
    def make(a, b, r: int):
        a = to_mpq(a)
        b = to_mpq(b)
        if b == 0 or r == 1:
            return a + b if r == 1 else a
        return QuadraticSurd(a, b, r)

    # coercion -----------------------------------------------------------

    def _coerce(self, other):
        """Return ``(a, b)`` of ``other`` expressed over this radicand."""
        if isinstance(other, QuadraticSurd):
            if other.r == self.r:
                return other.a, other.b
            prod = self.r * other.r
            if gmpy2.is_square(prod):
                # sqrt(r2) = sqrt(r1*r2)/r1 * sqrt(r1)
                return other.a, other.b * mpq(int(gmpy2.isqrt(prod)), self.r)
            raise ArithmeticError(
                f"values from distinct quadratic fields sqrt({self.r}) and sqrt({other.r})"
            )
        if isinstance(other, (mpq, int, Fraction)) or type(other).__name__ == "mpz":
            return to_mpq(other), mpq(0)
        return None

    # arithmetic ---------------------------------------------------------

    def __add__(self, other):
        c = self._coerce(other)
        if c is None:
            return NotImplemented
        return QuadraticSurd.make(self.a + c[0], self.b + c[1], self.r)

    __radd__ = __add__

    def __sub__(self, other):
        c = self._coerce(other)
        if c is None:
            return NotImplemented
        return QuadraticSurd.make(self.a - c[0], self.b - c[1], self.r)

    def __rsub__(self, other):
        c = self._coerce(other)
        if c is None:
            return NotImplemented
        return QuadraticSurd.make(c[0] - self.a, c[1] - self.b, self.r)

    def __mul__(self, other):
        c = self._coerce(other)
        if c is None:
            return NotImplemented
        a, b = c
        if b == 0:
            return QuadraticSurd.make(self.a * a, self.b * a, self.r)
        return QuadraticSurd.make(
            self.a * a + self.b * b * self.r, self.a * b + self.b * a, self.r
        )

    __rmul__ = __mul__

    def _inverse(self):
        den = self.a * self.a - self.b * self.b * self.r
        return QuadraticSurd.make(self.a / den, -self.b / den, self.r)

    def __truediv__(self, other):
        c = self._coerce(other)
        if c is None:
            return NotImplemented
        a, b = c
        if b == 0:
            if a == 0:
                raise ZeroDivisionError("division by zero")
            return QuadraticSurd.make(self.a / a, self.b / a, self.r)
        return self * QuadraticSurd(a, b, self.r)._inverse()

    def __rtruediv__(self, other):
        c = self._coerce(other)
        if c is None:
            return NotImplemented
        return self._inverse() * QuadraticSurd.make(c[0], c[1], self.r)

    def __neg__(self):
        return QuadraticSurd(-self.a, -self.b, self.r)

    def __pos__(self):
        return self

    def __pow__(self, n):
        if not isinstance(n, int):
            return NotImplemented
        if n < 0:
            return (self._inverse()) ** (-n)
        out = mpq(1)
        base = self
        while n:
            if n & 1:
                out = base * out
            base = base * base
            n >>= 1
        return out

    # order and comparison ----------------------------------------------

    def sign(self) -> int:
        sa = (self.a > 0) - (self.a < 0)
        sb = (self.b > 0) - (self.b < 0)
        if sa == sb or sa == 0:
            return sb
        # opposite signs: compare a^2 with b^2 r
        return sa if self.a * self.a > self.b * self.b * self.r else sb

    def __abs__(self):
        return -self if self.sign() < 0 else self

    def __eq__(self, other):
        if isinstance(other, float):
            return float(self) == other
        try:
            c = self._coerce(other)
        except ArithmeticError:
            return False
        if c is None:
            return NotImplemented
        return self.a == c[0] and self.b == c[1]

    def __ne__(self, other):
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    def __lt__(self, other):
        return (self - other).sign() < 0

    def __le__(self, other):
        return (self - other).sign() <= 0

    def __gt__(self, other):
        return (self - other).sign() > 0

    def __ge__(self, other):
        return (self - other).sign() >= 0

    def __bool__(self):
        return True

    def __hash__(self):
        return hash((self.a, self.b, self.r))

    def __float__(self):
        return float(self.a) + float(self.b) * math.sqrt(self.r)

    def __repr__(self):
        return f"QuadraticSurd({self.a}, {self.b}, {self.r})"

    def __str__(self):
        return format_exact(self)


def exact_sqrt(value):
    """Square root of a non-negative rational, as ``mpq`` or :class:`QuadraticSurd`."""
    q = to_mpq(value)
    if q < 0:
        raise ValueError("square root of a negative number")
    n, m = int(q.numerator), int(q.denominator)
    if gmpy2.is_square(n) and gmpy2.is_square(m):
        return mpq(int(gmpy2.isqrt(n)), int(gmpy2.isqrt(m)))
    # sqrt(n/m) = sqrt(n*m)/m
    f, r = _strip_squares(n * m)
    return QuadraticSurd.make(0, mpq(f, m), r)


def format_exact(x) -> str:
    """Render an exact scalar as ``p/q`` or ``p/q+p/q*sqrt(r)``."""
    if isinstance(x, QuadraticSurd):
        b = format_exact(x.b)
        if x.a == 0:
            return f"{b}*sqrt({x.r})"
        sign = "" if x.b < 0 else "+"
        return f"{format_exact(x.a)}{sign}{b}*sqrt({x.r})"
    q = to_mpq(x)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def parse_exact(text: str):
    """Inverse of :func:`format_exact`."""
    text = text.strip()
    if "sqrt(" not in text:
        return to_mpq(text)
    head, _, rad = text.rpartition("*sqrt(")
    r = int(rad.rstrip(")"))
    # split head into rational part and coefficient at the last sign not leading
    cut = max(head.rfind("+"), head.rfind("-"))
    while cut > 0 and head[cut - 1] in "eE":
        cut = max(head.rfind("+", 0, cut), head.rfind("-", 0, cut))
    if cut <= 0:
        return QuadraticSurd.make(0, to_mpq(head), r)
    return QuadraticSurd.make(to_mpq(head[:cut]), to_mpq(head[cut:]), r)


def is_exact_zero(x) -> bool:
    return not isinstance(x, QuadraticSurd) and x == 0


def magnitude(x) -> float:
    return abs(float(x))
