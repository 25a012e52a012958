import itertools
import sys
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from confhyp.jets import JetContext, polynomial, stack
from confhyp.curvature import MetricJet
from confhyp.hypersurface import DefiningFunction
from confhyp.scenario import generate_random

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def scenario(d, K, seed, mode="exact"):
    """(metric, defining function, conformal scale) of a seeded random scenario."""
    spec = generate_random(d, K, seed=seed, mode=mode)
    ctx = spec.context()
    return spec.metric_jet(ctx), spec.defining_jet(ctx), spec.conformal_scale(ctx)


def flat(ctx):
    d = ctx.dimension
    eye = np.eye(d, dtype=np.int64).astype(object) if ctx.exact else np.eye(d)
    return MetricJet.from_jet(ctx.constant_array(eye))


def conformally_flat(ctx, omega):
    d = ctx.dimension
    one = ctx.constant(1)
    zero = ctx.constant(0)
    rows = [stack([omega * omega if i == j else zero * one for j in range(d)]) for i in range(d)]
    return MetricJet.from_jet(stack(rows))


def coordinate_s(ctx, coeff=1):
    d = ctx.dimension
    return DefiningFunction(polynomial(ctx, [(tuple(int(i == d - 1) for i in range(d)), coeff)]))


# independent dictionary polynomials, used as a brute-force oracle ----------------

def poly_mul(a: dict, b: dict, K: int) -> dict:
    out: dict = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            if sum(e) <= K:
                out[e] = out.get(e, 0) + ca * cb
    return {e: c for e, c in out.items() if c != 0}


def random_poly(rng, d, K, lo=1, density=0.7, const=None):
    out = {}
    for e in itertools.product(range(K + 1), repeat=d):
        if lo <= sum(e) <= K and rng.random() < density:
            c = Fraction(int(rng.integers(-6, 7)), int(rng.integers(1, 5)))
            if c:
                out[e] = c
    if const is not None:
        out[(0,) * d] = Fraction(const)
    return out


def as_fractions(terms: dict) -> dict:
    return {e: Fraction(int(c.numerator), int(c.denominator)) for e, c in terms.items()}


@pytest.fixture
def ctx4():
    return JetContext(4, 4, "exact")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
