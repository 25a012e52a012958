import math

import pytest
from gmpy2 import mpq
from hypothesis import given, strategies as st

from confhyp.surd import QuadraticSurd, exact_sqrt, format_exact, parse_exact

q = st.fractions(min_value=-20, max_value=20, max_denominator=12).map(
    lambda f: mpq(f.numerator, f.denominator))


def test_perfect_squares_stay_rational():
    assert exact_sqrt(mpq(9, 4)) == mpq(3, 2)
    assert isinstance(exact_sqrt(mpq(9, 4)), type(mpq(1)))


def test_sqrt_two():
    r = exact_sqrt(2)
    assert isinstance(r, QuadraticSurd)
    assert r * r == 2
    assert math.isclose(float(r), math.sqrt(2))


def test_square_factors_are_pulled_out():
    r = exact_sqrt(mpq(12, 5))       # sqrt(60)/5 = 2 sqrt(15)/5
    assert (r.b, r.r) == (mpq(2, 5), 15)


def test_negative_rejected():
    with pytest.raises(ValueError):
        exact_sqrt(-1)


@given(q, q, q, q)
def test_field_operations(a, b, c, e):
    x = QuadraticSurd.make(a, b, 7)
    y = QuadraticSurd.make(c, e, 7)
    xf, yf = float(x), float(y)
    assert math.isclose(float(x * y), xf * yf, rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose(float(x + y), xf + yf, rel_tol=1e-9, abs_tol=1e-9)
    if y != 0:
        assert (x / y) * y == x
    assert (x - x) == 0


@given(q, q)
def test_ordering_matches_float(a, b):
    x = QuadraticSurd.make(a, b, 3)
    assert (x > 0) == (float(x) > 0) or abs(float(x)) < 1e-12


@given(q, q)
def test_format_roundtrip(a, b):
    x = QuadraticSurd.make(a, b, 5)
    assert parse_exact(format_exact(x)) == x
