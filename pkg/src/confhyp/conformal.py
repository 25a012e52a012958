"""Conformal rescaling, weight laws and transverse-order probes."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .curvature import MetricJet, compute_curvature_pack
from .hypersurface import (DefiningFunction, HypersurfaceChart, _relative, _tangential,
                           adapt_coordinates, conormal_and_projector, contract_normal, fourth_form,
                           normal_derivative, pull_back_scalar, second_fundamental_form, third_form)
from .jets import Jet, JetError, OrderUnderflow, contract, reciprocal, restrict, stack
from .tensor import TensorJet, is_exactly_zero, matrix_inverse, max_abs

PROBE_TOLERANCE = 1e-8
DEFAULT_TRIALS = 8


@dataclass(frozen=True)
class ConformalScale:
    """A conformal factor ``Omega`` with positive value at the base point."""

    omega: Jet

    def __post_init__(self):
        if self.omega.shape:
            raise JetError("conformal factor must be a scalar jet")
        if not self.omega.base_value[()] > 0:
            raise JetError("conformal factor not positive at base point")

    @property
    def base_value(self):
        return self.omega.base_value[()]

    @property
    def upsilon(self) -> TensorJet:
        """``d log Omega = d Omega / Omega``."""
        g = self.omega.gradient()
        return TensorJet(contract(",a->a", reciprocal(self.omega), g), "l")


def rescale(m: MetricJet, scale: ConformalScale) -> MetricJet:
    om = scale.omega
    return MetricJet.from_jet(contract(",ab->ab", om * om, m.components))


# invariant extractors ---------------------------------------------------------

def _n_hat(chart):
    return conormal_and_projector(chart)[0]


def _H(chart):
    return second_fundamental_form(chart)[1]


def _II(chart):
    return second_fundamental_form(chart)[0].jet


def _II_tf(chart):
    return second_fundamental_form(chart)[2].jet


def _III(chart):
    return third_form(chart, compute_curvature_pack(chart.metric_adapted, cotton=False)).jet


def _IV(chart):
    return fourth_form(chart).jet


@dataclass(frozen=True)
class Invariant:
    name: str
    consumption: int                    # metric derivatives needed at the base point
    extract: Callable[[HypersurfaceChart], Jet]
    weight: Fraction | None = None      # conformal weight if covariant
    transverse_order: int | None = None  # expected probe outcome


INVARIANTS = {
    "n_hat": Invariant("n_hat", 0, _n_hat, None, 0),
    "H": Invariant("H", 1, _H, None, 1),
    "II": Invariant("II", 1, _II, None, 1),
    "II_tf": Invariant("II_tf", 1, _II_tf, Fraction(1), 1),
    "III": Invariant("III", 2, _III, Fraction(0), 2),
    "IV": Invariant("IV", 3, _IV, Fraction(-1), 3),
}


def get_invariant(name: str) -> Invariant:
    try:
        return INVARIANTS[name]
    except KeyError:
        raise JetError(f"unknown invariant {name!r}; choose from {sorted(INVARIANTS)}") from None


# weight laws ----------------------------------------------------------------------

@dataclass(frozen=True)
class WeightLawReport:
    name: str
    weight: Fraction
    residual: object
    mode: str

    @property
    def passed(self) -> bool:
        if self.mode == "exact":
            return self.residual == 0
        return float(self.residual) < 1e-8


def _working(chart: HypersurfaceChart, order: int) -> HypersurfaceChart:
    if chart.order < order:
        raise OrderUnderflow(f"needs adapted metric jet order >= {order}")
    return chart.truncate(order) if chart.order > order else chart


def _adapt(m: MetricJet, s: DefiningFunction, order: int) -> HypersurfaceChart:
    """Adapted chart whose metric has exactly ``order`` (source needs ``order + 1``)."""
    k = order + 1
    if m.order < k or s.s.order < k:
        raise OrderUnderflow(f"needs source jet order >= {k}")
    if m.order > k:
        m = m.truncate(k)
    if s.s.order > k:
        s = DefiningFunction(s.s.truncate(k))
    return _working(adapt_coordinates(m, s), order)


def check_weight_law(name: str, m: MetricJet, s: DefiningFunction, scale: ConformalScale,
                     weight=None) -> WeightLawReport:
    """``|I[Omega^2 g] - Omega^w I[g]|`` at the base point, same ``s`` for both."""
    inv = get_invariant(name)
    w = Fraction(weight) if weight is not None else inv.weight
    if w is None:
        raise JetError(f"{name} has no declared weight; pass one explicitly")
    a = _adapt(m, s, inv.consumption)
    b = _adapt(rescale(m, scale), s, inv.consumption)
    va = inv.extract(a).base_value
    vb = inv.extract(b).base_value
    ctx = m.ctx
    if w.denominator != 1:
        raise JetError("only integer weights are supported")
    om = ctx.scalar(scale.base_value)
    factor = om ** w.numerator if w.numerator >= 0 else ctx.scalar(1) / om ** (-w.numerator)
    return WeightLawReport(name, w, _relative(vb, va * factor), ctx.mode)


def _upsilon_adapted(chart: HypersurfaceChart, scale: ConformalScale) -> Jet:
    om = pull_back_scalar(chart, scale.omega)
    return contract(",a->a", reciprocal(om), om.gradient())


def check_h_j_laws(m: MetricJet, s: DefiningFunction, scale: ConformalScale):
    """Residuals of the mean-curvature and ``J`` transformation laws."""
    ctx = m.ctx
    d = m.dimension
    a = _adapt(m, s, 1)
    b = _adapt(rescale(m, scale), s, 1)
    om = ctx.scalar(scale.base_value)
    Ha = _H(a).base_value[()]
    Hb = _H(b).base_value[()]
    ups = _upsilon_adapted(a, scale)
    n_ups = contract("a,a->", a.normal_raw, ups) * a.nu
    h_res = _relative(np.array([Hb]), np.array([(Ha + n_ups.base_value[()]) / om]))

    m2 = m.truncate(2) if m.order > 2 else m
    pa = compute_curvature_pack(m2, cotton=False)
    pb = compute_curvature_pack(rescale(m2, scale), cotton=False)
    U = scale.upsilon.jet
    ginv = m2.inverse
    dU = U.gradient()
    gam_tr = contract("ab,cab->c", ginv, pa.christoffel.gamma)
    div = contract("ab,ab->", ginv, dU) - contract("c,c->", gam_tr, U)
    u2 = contract("a,a->", U, contract("ab,b->a", ginv, U))
    one = ctx.scalar(1)
    pred = (pa.J - div + u2 * (one - ctx.scalar(d) / 2)).base_value[()] / (om * om)
    j_res = _relative(np.array([pb.J.base_value[()]]), np.array([pred]))
    return (WeightLawReport("H_law", Fraction(-1), h_res, ctx.mode),
            WeightLawReport("J_law", Fraction(-2), j_res, ctx.mode))


def naive_h_check(m: MetricJet, s: DefiningFunction, scale: ConformalScale) -> WeightLawReport:
    """``|H[Omega^2 g] - H[g]/Omega|``; generically nonzero since H is not covariant."""
    a = _adapt(m, s, 1)
    b = _adapt(rescale(m, scale), s, 1)
    om = m.ctx.scalar(scale.base_value)
    res = _relative(_H(b).base_value.reshape(1), _H(a).base_value.reshape(1) / om)
    return WeightLawReport("H_naive", Fraction(-1), res, m.ctx.mode)


# transverse-order probe -------------------------------------------------------------

@dataclass(frozen=True)
class ProbeReport:
    """Per-order maxima of first-order sensitivities.

    ``detected_order`` is the largest probed ``k`` with a nonzero sensitivity,
    or ``-1`` when the invariant does not respond at any probed order.
    """

    invariant: str
    detected_order: int
    sensitivities: tuple[float, ...]
    nonzero: tuple[bool, ...]
    trials: int
    seed: int
    mode: str
    work_order: int = 0

    @property
    def max_order(self) -> int:
        return len(self.sensitivities) - 1


def _random_h(ctx, rng, k: int) -> Jet:
    """Random symmetric matrix of polynomials in ``y`` (degree <= 2) times ``t^k``."""
    d = ctx.dimension
    exps = [e for e in itertools.product(range(3), repeat=d - 1) if sum(e) <= 2]
    rows = [[None] * d for _ in range(d)]
    for i in range(d):
        for j in range(i, d):
            terms = {}
            for e in exps:
                c = int(rng.integers(-3, 4))
                if c:
                    terms[e + (k,)] = Fraction(c, 2)
            rows[i][j] = rows[j][i] = ctx.from_terms(terms)
    return stack([stack(r) for r in rows])


def _perturbed_chart(chart: HypersurfaceChart, work_order: int, k: int, trials: int,
                     rng) -> HypersurfaceChart:
    base = chart.metric_adapted.components.truncate(work_order)
    pctx = base.ctx.with_order(work_order).with_params(trials)
    g = base.to_context(pctx)
    for i in range(trials):
        g = g + contract(",ab->ab", pctx.param(i), _random_h(pctx, rng, k))
    g = Jet(pctx, g.coeffs, work_order)
    return HypersurfaceChart.from_adapted_metric(MetricJet.from_jet(g))


def _sensitivity(values: Jet, trials: int, exact: bool):
    """Per-trial maxima and a nonzero flag for one probed order."""
    base = values.base_value
    scale = max(1.0, max_abs(base)) if base.size else 1.0
    mags = []
    hit = False
    for i in range(trials):
        c = values.param_coefficient(i)
        if exact:
            nz = not is_exactly_zero(c)
        else:
            nz = max_abs(c) > PROBE_TOLERANCE * scale
        hit = hit or nz
        mags.append(max_abs(c) if c.size else 0.0)
    return max(mags) if mags else 0.0, hit


def _probe_many(chart: HypersurfaceChart, extract: Callable[[HypersurfaceChart], dict],
                consumption: int, max_order: int | None, trials: int, seed: int):
    if trials < 1:
        raise JetError("trials must be positive")
    if max_order is None:
        max_order = chart.order
    if max_order < 0:
        raise JetError("max order must be non-negative")
    if max_order > chart.order:
        raise OrderUnderflow(f"probe order {max_order} exceeds adapted metric order {chart.order}")
    if consumption > chart.order:
        raise OrderUnderflow(f"invariant needs adapted metric order {consumption}, have {chart.order}")
    work = consumption
    exact = chart.ctx.exact
    seeds = np.random.SeedSequence(seed).spawn(max_order + 1)
    results: dict[str, list] = {}
    for k in range(max_order + 1):
        if k > work:
            # t^k vanishes in a jet truncated at the working order; the base
            # value provably cannot see it (effective order would underflow).
            for name in results:
                results[name].append((0.0, False))
            continue
        rng = np.random.default_rng(seeds[k])
        values = extract(_perturbed_chart(chart, work, k, trials, rng))
        for name, v in values.items():
            results.setdefault(name, []).append(_sensitivity(v, trials, exact))
    return results, work, max_order


def _report(name, rows, trials, seed, mode, work):
    sens = tuple(r[0] for r in rows)
    nz = tuple(r[1] for r in rows)
    detected = max((k for k, f in enumerate(nz) if f), default=-1)
    return ProbeReport(name, detected, sens, nz, trials, seed, mode, work)


def transverse_order_probe(name: str, chart: HypersurfaceChart, max_order: int | None = None,
                           trials: int = DEFAULT_TRIALS, seed: int = 0) -> ProbeReport:
    """Perturb the adapted metric by ``eps_i h_i(y) t^k`` and watch the invariant."""
    inv = get_invariant(name)
    results, work, _ = _probe_many(chart, lambda c: {name: inv.extract(c)}, inv.consumption,
                                   max_order, trials, seed)
    return _report(name, results[name], trials, seed, chart.ctx.mode, work)


# reduce-to combinations -----------------------------------------------------------

REDUCE_NAMES = ("R_tan", "R_n_tan", "R_nn_tan", "Ric_tan", "Ric_n_tan", "Ric_nn", "Sc")


def _tf_sigma(T: Jet, g_bar: Jet, g_bar_inv: Jet) -> Jet:
    n = g_bar.shape[0]
    tr = contract("ab,ab->", g_bar_inv, T)
    return T - contract(",ab->ab", tr, g_bar) / n


def reduce_combinations(chart: HypersurfaceChart, m: int) -> dict[str, Jet]:
    """The seven left-minus-right combinations, as jets on the hypersurface."""
    d = chart.dimension
    pack = compute_curvature_pack(chart.metric_adapted, cotton=False)
    D = lambda t: normal_derivative(t, chart, pack, m).jet  # noqa: E731
    R = D(pack.riemann)
    Ric = D(pack.ricci)
    P = D(pack.schouten)
    J = D(TensorJet(pack.J, ""))
    Sc = D(TensorJet(pack.scalar, ""))
    gb_bulk = _tangential(chart.metric_adapted.components, 2)
    gb_inv = matrix_inverse(gb_bulk)
    P_tf = _tf_sigma(_tangential(P, 2), gb_bulk, gb_inv)
    gJ = contract(",ab->ab", J, gb_bulk)
    out = {
        "R_tan": _tangential(R, 4),
        "R_n_tan": _tangential(contract_normal(chart, R, (0,)), 3),
        "R_nn_tan": _tangential(contract_normal(chart, R, (0, 3)), 2) + P_tf * (d - 2) + gJ,
        "Ric_tan": _tangential(Ric, 2) - P_tf * (d - 2) - gJ,
        "Ric_n_tan": _tangential(contract_normal(chart, Ric, (1,)), 1),
        "Ric_nn": contract_normal(chart, Ric, (0, 1)) - J * (d - 1),
        "Sc": Sc - J * (2 * (d - 1)),
    }
    return {k: restrict(v) for k, v in out.items()}


def reduce_to_bounds(chart: HypersurfaceChart, m: int, trials: int = DEFAULT_TRIALS,
                     seed: int = 0) -> dict[str, ProbeReport]:
    """Probe all seven combinations up to ``t^{m+2}``; each should stop at ``m + 1``."""
    if m < 0:
        raise JetError("m must be non-negative")
    results, work, _ = _probe_many(chart, lambda c: reduce_combinations(c, m), m + 2, m + 2,
                                   trials, seed)
    return {k: _report(k, results[k], trials, seed, chart.ctx.mode, work) for k in REDUCE_NAMES}


# candidate enumeration ------------------------------------------------------------

@dataclass(frozen=True, order=True)
class CandidateSolution:
    """Exponents of ``g^{-1}, nabla_bar, II, n_hat, :nabla_n:, R`` in a candidate term."""

    exponents: tuple[int, int, int, int, int, int]

    @property
    def shape(self) -> str:
        a1, a2, a3, a4, a5, a6 = self.exponents
        if (a1, a2, a3, a4, a6) == (1, 0, 0, 0, 1):
            return f":nabla_n^{a5}: Ric_ab"
        if (a1, a2, a3, a4, a6) == (2, 0, 0, 2, 1):
            return f"n^c n^d :nabla_n^{a5}: R_cabd"
        return "other"


@dataclass(frozen=True)
class Enumeration:
    m: int
    solutions: frozenset
    extras: frozenset = field(default=frozenset())   # a4 > 2, outside the side condition


def weight_constraint(a, m: int) -> bool:
    a1, a2, a3, a4, a5, a6 = a
    return -2 * a1 + a3 + a4 - a5 + 2 * a6 == 3 - m


def structure_constraint(a, rank: int = 2) -> bool:
    a1, a2, a3, a4, a5, a6 = a
    return -2 * a1 + a2 + 2 * a3 + a4 + 4 * a6 == rank


def enumerate_form_candidates(m: int, rank: int = 2, bound: int = 12) -> Enumeration:
    """Leading-term solutions with ``a5 = m - 3``, ``a6 = 1`` over ``0 <= a1..a4 <= bound``.

    Solutions with ``a4 <= 2`` are returned in ``solutions``; those violating
    only the contraction side condition are listed in ``extras``.
    """
    if m < 3:
        raise JetError("candidate enumeration needs m >= 3")
    sols = set()
    extras = set()
    for a1, a2, a3, a4 in itertools.product(range(bound + 1), repeat=4):
        a = (a1, a2, a3, a4, m - 3, 1)
        if weight_constraint(a, m) and structure_constraint(a, rank):
            (sols if a4 <= 2 else extras).add(CandidateSolution(a))
    return Enumeration(m, frozenset(sols), frozenset(extras))
