import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from confhyp.jets import (JetContext, JetError, JetMap, OrderUnderflow, compose, differentiate,
                          exp, extend, invert_map, log, normal_coefficient, polynomial, reciprocal,
                          restrict, sqrt, stack)

from conftest import as_fractions, poly_mul, random_poly


def jet(ctx, terms):
    return ctx.from_terms(terms)


def x(ctx, i):
    return ctx.coordinate(i)


# spec examples ------------------------------------------------------------------

def test_difference_of_squares():
    ctx = JetContext(2, 2, "exact")
    out = (1 + x(ctx, 0)) * (1 - x(ctx, 0))
    assert as_fractions(out.terms()) == {(0, 0): 1, (2, 0): -1}


def test_product_beyond_order_truncates():
    ctx = JetContext(2, 2, "exact")
    xy = x(ctx, 0) * x(ctx, 1)
    assert (xy * xy).is_zero()


def test_square_matches_expansion_oracle():
    ctx = JetContext(2, 2, "exact")
    f = {(0, 0): 1, (1, 0): 1, (0, 1): 1}
    got = as_fractions((jet(ctx, f) * jet(ctx, f)).terms())
    assert got == poly_mul(f, f, 2)
    assert got == {(0, 0): 1, (1, 0): 2, (0, 1): 2, (2, 0): 1, (1, 1): 2, (0, 2): 1}


def test_derivative_examples():
    ctx = JetContext(2, 3, "exact")
    f = jet(ctx, {(2, 1): 1})
    d1 = differentiate(f, 0)
    assert as_fractions(d1.terms()) == {(1, 1): 2}
    assert d1.order == 2
    assert differentiate(ctx.constant(5), 1).is_zero()


def test_geometric_series():
    ctx = JetContext(2, 2, "exact")
    r = reciprocal(1 + x(ctx, 0))
    assert as_fractions(r.terms()) == {(0, 0): 1, (1, 0): -1, (2, 0): 1}


def test_sqrt_of_square():
    ctx = JetContext(3, 2, "exact")
    assert as_fractions(sqrt(ctx.constant(1)).terms()) == {(0, 0, 0): 1}
    a = 1 + 2 * x(ctx, 0) + x(ctx, 0) * x(ctx, 0)
    assert as_fractions(sqrt(a).terms()) == {(0, 0, 0): 1, (1, 0, 0): 1}


def test_compose_with_identity():
    ctx = JetContext(3, 3, "exact")
    assert as_fractions(compose(x(ctx, 0), JetMap.identity(ctx)).terms()) == {(1, 0, 0): 1}


def test_reversion_oracle():
    # y = x + x^2  =>  x = y - y^2 + 2 y^3 - 5 y^4 (Catalan numbers with signs)
    ctx = JetContext(2, 4, "exact")
    m = JetMap(stack([x(ctx, 0) + x(ctx, 0) ** 2, x(ctx, 1)]))
    inv = invert_map(m).components[0]
    assert as_fractions(inv.terms()) == {(1, 0): 1, (2, 0): -1, (3, 0): 2, (4, 0): -5}


def test_singular_map_rejected():
    ctx = JetContext(2, 2, "exact")
    m = JetMap(stack([x(ctx, 0) ** 2, x(ctx, 1)]))
    with pytest.raises(JetError, match="map not locally invertible"):
        invert_map(m)


def test_context_mismatch():
    a = JetContext(2, 2, "exact").constant(1)
    b = JetContext(2, 3, "exact").constant(1)
    with pytest.raises(JetError, match="incompatible jet contexts"):
        a + b
    with pytest.raises(JetError, match="incompatible jet contexts"):
        a * b


def test_bad_constant_terms():
    ctx = JetContext(2, 2, "exact")
    with pytest.raises(JetError, match="not invertible"):
        reciprocal(x(ctx, 0))
    with pytest.raises(JetError, match="not positive"):
        sqrt(ctx.constant(-1) + x(ctx, 0))
    with pytest.raises(JetError, match="not positive"):
        log(ctx.constant(0))


def test_differentiate_lowers_order():
    ctx = JetContext(2, 3, "exact")
    f = jet(ctx, {(3, 0): 1})
    g = differentiate(differentiate(f, 0), 0)
    assert g.order == 1
    with pytest.raises(OrderUnderflow):
        differentiate(differentiate(g, 0), 0)


def test_effective_order_of_products():
    ctx = JetContext(3, 4, "exact")
    a = jet(ctx, {(1, 0, 0): 1}).truncate(2)  # trusted through degree 2, valuation 1
    b = jet(ctx, {(0, 1, 0): 1, (0, 0, 0): 1})
    assert (a * b).order == 2
    c = jet(ctx, {(0, 0, 2): 1})               # valuation 2
    assert (a * c).order == 4


def test_normal_coefficient_and_extend():
    ctx = JetContext(3, 3, "exact")
    f = jet(ctx, {(1, 0, 0): 2, (1, 0, 1): 3, (0, 1, 2): 5})
    assert as_fractions(normal_coefficient(f, 1).terms()) == {(1, 0): 3}
    assert as_fractions(normal_coefficient(f, 2).terms()) == {(0, 1): 5}
    r = restrict(f)
    assert as_fractions(r.terms()) == {(1, 0): 2}
    back = extend(r, ctx)
    assert as_fractions(back.terms()) == {(1, 0, 0): 2}


def test_formal_parameters():
    ctx = JetContext(2, 2, "exact", params=2)
    e0, e1 = ctx.param(0), ctx.param(1)
    assert (e0 * e1).is_zero()           # joint degree at most one
    f = (1 + x(ctx, 0)) * (1 + 3 * e1)
    assert f.param_coefficient(1)[()] == 3
    assert f.param_coefficient(0)[()] == 0


def test_float_matches_exact():
    rng = np.random.default_rng(0)
    d, K = 3, 3
    a, b = random_poly(rng, d, K, lo=0), random_poly(rng, d, K, lo=0)
    ea, eb = JetContext(d, K, "exact"), JetContext(d, K, "float")
    pe = (jet(ea, a) * jet(ea, b)).astype_float().coeffs
    pf = (jet(eb, a) * jet(eb, b)).coeffs
    assert np.allclose(pe, pf, rtol=0, atol=1e-12)


def test_exp_log_inverse():
    ctx = JetContext(2, 4, "exact")
    f = jet(ctx, {(1, 0): 1, (0, 1): Fraction(1, 2), (1, 1): -2})
    back = log(exp(f))
    assert (back - f).is_zero()


# properties ------------------------------------------------------------------------

coeff = st.fractions(min_value=-4, max_value=4, max_denominator=6)


@st.composite
def exact_jets(draw, d=2, K=3, unit=False):
    ctx = JetContext(d, K, "exact")
    terms = {}
    for e in itertools.product(range(K + 1), repeat=d):
        if sum(e) <= K:
            terms[e] = draw(coeff)
    if unit:
        terms[(0,) * d] = 1 + abs(terms[(0,) * d])
    return ctx.from_terms(terms)


@given(exact_jets(), exact_jets(), exact_jets())
def test_ring_axioms(a, b, c):
    assert ((a * b) * c - a * (b * c)).is_zero()
    assert (a * (b + c) - (a * b + a * c)).is_zero()
    assert (a * b - b * a).is_zero()
    assert (a + b - (b + a)).is_zero()


@given(exact_jets(K=4), exact_jets(K=4))
def test_truncation_consistency(a, b):
    low = JetContext(2, 2, "exact")
    lhs = (a * b).truncate(2).to_context(low)
    rhs = a.truncate(2).to_context(low) * b.truncate(2).to_context(low)
    assert (lhs - rhs).is_zero()


@given(exact_jets(d=3, K=4))
def test_partials_commute(f):
    for i, j in itertools.combinations(range(3), 2):
        assert (differentiate(differentiate(f, i), j) - differentiate(differentiate(f, j), i)).is_zero()


@given(exact_jets(unit=True))
def test_reciprocal_sqrt_log(a):
    one = a.ctx.constant(1)
    assert (a * reciprocal(a) - one).is_zero()
    r = sqrt(a)
    assert (r * r - a).is_zero()
    u = a / a.base_value[()]                # unit constant term for exact log
    v = a * a / (a.base_value[()] ** 2)
    assert (log(u * v) - log(u) - log(v)).is_zero()


@given(st.integers(0, 2**32 - 1))
def test_compose_inverse_roundtrip(seed):
    rng = np.random.default_rng(seed)
    d, K = 3, 3
    ctx = JetContext(d, K, "exact")
    comps = []
    for i in range(d):
        terms = random_poly(rng, d, K, lo=2, density=0.4)
        terms[tuple(int(k == i) for k in range(d))] = Fraction(int(rng.integers(1, 4)))
        comps.append(ctx.from_terms(terms))
    m = JetMap(stack(comps))
    inv = invert_map(m)
    f = ctx.from_terms(random_poly(rng, d, K, lo=0))
    assert (compose(compose(f, m), inv) - f).is_zero()
    assert (compose(m.components, inv) - ctx.coordinates()).is_zero()
    assert (compose(inv.components, m) - ctx.coordinates()).is_zero()


def test_polynomial_helper_sums_duplicates():
    ctx = JetContext(2, 2, "exact")
    p = polynomial(ctx, [((1, 0), 1), ((1, 0), Fraction(1, 2))])
    assert as_fractions(p.terms()) == {(1, 0): Fraction(3, 2)}
