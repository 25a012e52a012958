"""Extrinsic geometry of a hypersurface given by a defining function.

Everything is computed in adapted coordinates ``u = (y, t)`` where the
defining function is the last coordinate ``t``.  The hypersurface is the
slice ``t = 0`` and tangential components are the first ``d - 1`` indices.

The unit conormal carries a factor ``nu = 1/|ds|_g``.  Quantities even in
``nu`` only ever see ``nu**2 = 1/g^{tt}``, so in exact mode they stay
rational; odd ones pick up a single quadratic surd.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .curvature import (CurvaturePack, MetricJet, compute_christoffel, compute_curvature_pack,
                        covariant_derivative_jet, directional_derivative)
from .jets import (Jet, JetError, JetMap, OrderUnderflow, contract, extend, invert_map,
                   normal_coefficient, reciprocal, restrict, sqrt, stack)
from .tensor import TensorJet, is_exactly_zero, max_abs, symmetrize

FLOAT_DEGENERACY = 1e-12


@dataclass(frozen=True)
class DefiningFunction:
    """A scalar jet ``s`` with ``s(0) = 0`` and ``ds(0) != 0``."""

    s: Jet

    def __post_init__(self):
        if self.s.shape:
            raise JetError("defining function must be a scalar jet")
        if self.s.order < 1:
            raise OrderUnderflow("defining function needs jet order >= 1")
        if not is_exactly_zero(self.s.base_value):
            raise JetError("not a defining function: s does not vanish at the base point")
        grad = self.gradient_at_base()
        if self.s.ctx.exact:
            if is_exactly_zero(grad):
                raise JetError("not a defining function: ds vanishes at the base point")
        elif max_abs(grad) < FLOAT_DEGENERACY:
            raise JetError("not a defining function: ds vanishes at the base point")

    @property
    def ctx(self):
        return self.s.ctx

    def gradient_at_base(self) -> np.ndarray:
        return self.s.gradient().base_value


def _normal_axis(grad: np.ndarray) -> int:
    d = grad.shape[0]
    if grad[d - 1] != 0 and (not isinstance(grad[d - 1], float) or abs(grad[d - 1]) >= FLOAT_DEGENERACY):
        return d - 1
    mags = [abs(v) for v in grad]
    return int(max(range(d), key=lambda i: mags[i]))


@dataclass(frozen=True)
class HypersurfaceChart:
    """Adapted coordinates ``u = (y, t)`` with ``t = s``.

    ``adapted_map`` sends source coordinates to ``u``; ``inverse_map`` goes
    back.  ``metric_adapted`` is the pulled-back metric, which loses one jet
    order relative to the source metric.
    """

    adapted_map: JetMap
    inverse_map: JetMap
    metric_adapted: MetricJet
    normal_axis: int

    @classmethod
    def from_adapted_metric(cls, m: MetricJet) -> "HypersurfaceChart":
        """Chart for a metric already written in adapted coordinates."""
        ident = JetMap.identity(m.ctx)
        return cls(ident, ident, m, m.dimension - 1)

    @property
    def dimension(self) -> int:
        return self.metric_adapted.dimension

    @property
    def ctx(self):
        return self.metric_adapted.ctx

    @property
    def order(self) -> int:
        return self.metric_adapted.order

    @property
    def t(self) -> Jet:
        return self.ctx.coordinate(self.dimension - 1)

    @functools.cached_property
    def pack(self) -> CurvaturePack:
        return compute_curvature_pack(self.metric_adapted, christoffel=self.christoffel)

    @functools.cached_property
    def g_bar(self) -> MetricJet:
        """Induced metric in the tangential coordinates."""
        return MetricJet.from_jet(_on_sigma(self.metric_adapted.components, 2))

    @functools.cached_property
    def fundamental_form(self):
        return _second_fundamental_form(self)

    @functools.cached_property
    def christoffel(self):
        return compute_christoffel(self.metric_adapted)

    @functools.cached_property
    def normal_norm2(self) -> Jet:
        """``|ds|_g^2 = g^{tt}`` as a bulk jet."""
        return self.metric_adapted.inverse[self.dimension - 1, self.dimension - 1]

    @functools.cached_property
    def inv_norm2(self) -> Jet:
        return reciprocal(self.normal_norm2)

    @functools.cached_property
    def nu(self) -> Jet:
        """``1/|ds|_g`` as a bulk jet."""
        return sqrt(self.inv_norm2)

    @functools.cached_property
    def normal_raw(self) -> Jet:
        """``g^{at}``; the unit normal vector is ``nu`` times this."""
        return self.metric_adapted.inverse[:, self.dimension - 1]

    def normal_power(self, k: int) -> Jet:
        """``nu**k``; rational for even ``k``."""
        out = self.inv_norm2 ** (k // 2)
        return out * self.nu if k % 2 else out

    def truncate(self, order: int) -> "HypersurfaceChart":
        return HypersurfaceChart(self.adapted_map, self.inverse_map,
                                 self.metric_adapted.truncate(order), self.normal_axis)


def adapt_coordinates(m: MetricJet, s: DefiningFunction) -> HypersurfaceChart:
    """Build coordinates ``(y, s)``; ``y`` are the source coordinates minus one."""
    if m.ctx != s.ctx:
        raise JetError("incompatible jet contexts")
    d = m.dimension
    ctx = m.ctx
    p = _normal_axis(s.gradient_at_base())
    x = ctx.coordinates()
    comps = [x[i] for i in range(d) if i != p] + [s.s]
    F = JetMap(stack(comps))
    G = invert_map(F)
    dG = G.components.gradient()  # dG[a, c] = d_a G^c
    gG = G(m.components)
    tmp = contract("ac,cd->ad", dG, gG)
    g_adapted = contract("ad,bd->ab", tmp, dG)
    return HypersurfaceChart(F, G, MetricJet.from_jet(g_adapted), p)


def pull_back_scalar(chart: HypersurfaceChart, f: Jet) -> Jet:
    """A source-coordinate scalar jet rewritten in adapted coordinates."""
    return chart.inverse_map(f)


def push_forward_scalar(chart: HypersurfaceChart, f: Jet) -> Jet:
    """An adapted-coordinate scalar jet rewritten in source coordinates."""
    return chart.adapted_map(f)


def _tangential(a: Jet, rank: int) -> Jet:
    d = a.shape[0]
    idx = (slice(0, d - 1),) * rank
    return Jet(a.ctx, a.coeffs[idx], a.order)


def _on_sigma(a: Jet, rank: int) -> Jet:
    """Tangential block restricted to ``t = 0``."""
    return restrict(_tangential(a, rank))


def contract_normal(chart: HypersurfaceChart, a: Jet, slots: tuple[int, ...]) -> Jet:
    """Contract ``hat n^a`` into the listed slots of a covariant bulk jet."""
    if not slots:
        return a
    out = a
    n = chart.normal_raw
    for slot in sorted(slots, reverse=True):
        cur = "abcdfghij"[: len(out.shape)]
        out = contract(f"{cur[slot]},{cur}->{cur.replace(cur[slot], '')}", n, out)
    return out * chart.normal_power(len(slots))


@dataclass(frozen=True)
class ExtrinsicPack:
    """Extrinsic data on the hypersurface, as jets in the tangential coordinates."""

    n_hat: Jet
    projector: Jet
    g_bar: MetricJet
    II: TensorJet
    H: Jet
    II_tf: TensorJet
    III: TensorJet | None
    IV: TensorJet | None
    IIe: TensorJet | None
    conormal_source: np.ndarray

    @property
    def dimension(self) -> int:
        return self.n_hat.shape[0]


def conormal_and_projector(chart: HypersurfaceChart):
    """``(n_hat, projector, g_bar)`` on the hypersurface.

    ``n_hat`` is the covector ``dt/|dt|``; ``projector`` is
    ``delta^a_b - n^a n_b`` with the upper index first.
    """
    d = chart.dimension
    ctx = chart.ctx
    nu = chart.nu
    zeros = ctx.zeros((), nu.order)
    n_low = stack([zeros] * (d - 1) + [nu])
    n_up = contract(",a->a", nu, chart.normal_raw)
    eye = ctx.constant_array(np.eye(d, dtype=np.int64).astype(object) if ctx.exact else np.eye(d))
    proj = eye - contract("a,b->ab", n_up, n_low)
    g_bar = chart.g_bar
    return restrict(n_low), restrict(proj), g_bar


def conormal_in_source(chart: HypersurfaceChart, s: DefiningFunction, m: MetricJet) -> np.ndarray:
    """``ds/|ds|_g`` at the base point in source coordinates."""
    ds = s.gradient_at_base()
    ginv = m.inverse.base_value
    n2 = ds @ ginv @ ds if not m.ctx.exact else sum(ds[i] * ginv[i, j] * ds[j]
                                                    for i in range(len(ds)) for j in range(len(ds)))
    if m.ctx.exact:
        from .surd import exact_sqrt
        root = exact_sqrt(n2)
        return np.array([v / root for v in ds], dtype=object)
    return ds / np.sqrt(n2)


def second_fundamental_form(chart: HypersurfaceChart):
    """``(II, H, II_tf)``; ``II_ij = nabla_i n_j = -Gamma^t_ij / |ds|``."""
    return chart.fundamental_form


def _second_fundamental_form(chart: HypersurfaceChart):
    d = chart.dimension
    gam = chart.christoffel.gamma
    raw = Jet(gam.ctx, -gam.coeffs[d - 1], gam.order)
    II = _on_sigma(contract(",ab->ab", chart.nu, raw), 2)
    g_bar = chart.g_bar
    gb = g_bar.components
    H = contract("ab,ab->", g_bar.inverse, II) / (d - 1)
    II_tf = II - contract(",ab->ab", H, gb)
    return (TensorJet(II, "ll", symmetric=((0, 1),)), H,
            TensorJet(II_tf, "ll", symmetric=((0, 1),)))


def _require_weyl(chart: HypersurfaceChart):
    if chart.dimension < 4:
        raise JetError("Weyl conventions require d >= 4")


def third_form(chart: HypersurfaceChart, pack: CurvaturePack | None = None) -> TensorJet:
    """``III_ab = W_{n a b n}`` on the hypersurface."""
    _require_weyl(chart)
    pack = pack or chart.pack
    Wnn = contract_normal(chart, pack.weyl.jet, (0, 3))
    return TensorJet(_on_sigma(Wnn, 2), "ll", symmetric=((0, 1),))


def trace_free_on_sigma(T: Jet, g_bar: MetricJet) -> Jet:
    n = g_bar.dimension
    tr = contract("ab,ab->", g_bar.inverse, T)
    return T - contract(",ab->ab", tr, g_bar.components) / n


def fourth_form(chart: HypersurfaceChart, pack: CurvaturePack | None = None) -> TensorJet:
    """Trace-free part of ``C_{n(ab)} + H W_{nabn} + div(W_{c(ab)n})^T / (d-5)``.

    The divergence uses the induced connection acting on the projected Weyl
    tensor.  Undefined for ``d = 5``.
    """
    _require_weyl(chart)
    d = chart.dimension
    if d == 5:
        raise JetError("IV formula excluded for d=5")
    pack = pack or chart.pack
    if pack.cotton is None:
        raise OrderUnderflow("IV needs adapted metric jet order >= 3")
    ctx = chart.ctx
    g_bar = chart.g_bar
    _, H, _ = second_fundamental_form(chart)
    III = third_form(chart, pack).jet
    Cn = _on_sigma(contract_normal(chart, pack.cotton.jet, (0,)), 2)
    V = _on_sigma(contract_normal(chart, pack.weyl.jet, (3,)), 3)  # W_{c a b n}
    bar_gam = compute_christoffel(g_bar)
    dV = covariant_derivative_jet(V, "lll", bar_gam)  # [e, c, a, b]
    div = contract("ec,ecab->ab", g_bar.inverse, dV)
    total = symmetrize(Cn) + contract(",ab->ab", H, III) + symmetrize(div) * (ctx.scalar(1) / ctx.scalar(d - 5))
    return TensorJet(trace_free_on_sigma(total, g_bar), "ll", symmetric=((0, 1),))


def hessian(f: Jet, gam) -> Jet:
    df = f.gradient()
    ddf = df.gradient()
    return ddf - contract("cab,c->ab", gam.gamma, df)


def extended_ff(chart: HypersurfaceChart, pack: CurvaturePack | None = None,
                s: Jet | None = None) -> TensorJet:
    """``tf(nabla nabla s) + s tf(P)`` as a bulk tensor in adapted coordinates.

    ``s`` defaults to the chart's own defining function ``t``.
    """
    pack = pack or chart.pack
    s = chart.t if s is None else s
    g = chart.metric_adapted.components
    ginv = chart.metric_adapted.inverse
    d = chart.dimension
    hs = hessian(s, chart.christoffel)
    hs = symmetrize(hs)
    hs_tf = hs - contract(",ab->ab", contract("ab,ab->", ginv, hs), g) / d
    P = pack.schouten.jet
    P_tf = P - contract(",ab->ab", pack.J, g) / d
    return TensorJet(hs_tf + contract(",ab->ab", s, P_tf), "ll", symmetric=((0, 1),))


def normal_derivative(t: TensorJet, chart: HypersurfaceChart, pack: CurvaturePack | None = None,
                      times: int = 1) -> TensorJet:
    """``hat n^{a_1} ... hat n^{a_m} nabla_{a_1} ... nabla_{a_m} t`` as a bulk jet.

    The conormal is extended off the hypersurface as ``ds/|ds|_g`` and is
    contracted in after differentiating, never differentiated itself.
    """
    if times < 0:
        raise JetError("derivative count must be non-negative")
    if times == 0:
        return t
    gam = (pack.christoffel if pack is not None else chart.christoffel)
    if t.order < times:
        raise OrderUnderflow()
    D = t.jet
    variance = t.variance
    for _ in range(times - 1):
        D = covariant_derivative_jet(D, variance, gam)
        variance = "l" + variance
    D = directional_derivative(D, variance, gam, chart.normal_raw)
    letters = "abcdfghij"[: len(D.shape)]
    for _ in range(times - 1):
        D = contract(f"a,{letters[:len(D.shape)]}->{letters[1:len(D.shape)]}", chart.normal_raw, D)
    D = D * chart.normal_power(times)
    return TensorJet(D, t.variance)


# identities ------------------------------------------------------------------

def _residual(x):
    """Exact zero in exact mode, otherwise the largest magnitude."""
    arr = np.asarray(x, dtype=object)
    if arr.size and all(isinstance(v, float) for v in arr.ravel()):
        return max_abs(arr)
    return 0 if is_exactly_zero(arr) else max_abs(arr)


def _scale(*arrays) -> float:
    return max([1.0] + [max_abs(a) for a in arrays])


def _relative(lhs, rhs):
    diff = np.asarray(lhs, dtype=object) - np.asarray(rhs, dtype=object)
    r = _residual(diff)
    if r == 0:
        return 0
    return r / _scale(lhs, rhs)


@dataclass(frozen=True)
class IdentityResidual:
    name: str
    residual: object
    informational: bool = False

    @property
    def passed(self) -> bool:
        return self.informational or self.residual == 0 or (
            isinstance(self.residual, float) and self.residual < 1e-8)


def _sigma_data(chart: HypersurfaceChart):
    II, H, II_tf = second_fundamental_form(chart)
    g_bar = chart.g_bar
    return II.jet, H, II_tf.jet, g_bar


def gauss_residual(chart: HypersurfaceChart, pack: CurvaturePack | None = None):
    pack = pack or chart.pack
    II, _, _, g_bar = _sigma_data(chart)
    bar = compute_curvature_pack(g_bar, cotton=False)
    lhs = _tangential(pack.riemann.jet, 4).base_value
    ii = II.base_value
    quad = np.einsum("ac,bd->abcd", ii, ii)
    rhs = bar.riemann.base_value - quad + np.transpose(quad, (0, 1, 3, 2))
    return _relative(lhs, rhs)


def codazzi_residual(chart: HypersurfaceChart, pack: CurvaturePack | None = None):
    pack = pack or chart.pack
    II, _, _, g_bar = _sigma_data(chart)
    Rn = contract_normal(chart, pack.riemann.jet, (3,))
    lhs = _tangential(Rn, 3).base_value
    dII = covariant_derivative_jet(II, "ll", compute_christoffel(g_bar)).base_value
    rhs = dII - np.transpose(dII, (1, 0, 2))
    return _relative(lhs, rhs)


def _ric_nn(chart, pack):
    return contract_normal(chart, pack.ricci.jet, (0, 1)).base_value[()]


def _theorema_sides(chart, pack):
    II, _, _, g_bar = _sigma_data(chart)
    bar = compute_curvature_pack(g_bar, cotton=False)
    ginv = g_bar.inverse.base_value
    ii = II.base_value
    ii_up = np.einsum("ac,cd,db->ab", ginv, ii, ginv)
    norm2 = np.einsum("ab,ab->", ii_up, ii)
    tr = np.einsum("ab,ab->", ginv, ii)
    rhs = bar.scalar.base_value[()] + norm2 - tr * tr
    return pack.scalar.base_value[()], _ric_nn(chart, pack), rhs


def theorema_residual(chart: HypersurfaceChart, pack: CurvaturePack | None = None):
    """``Sc - 2 Ric_nn`` against ``Sc_bar + |II|^2 - (tr II)^2``."""
    sc, rnn, rhs = _theorema_sides(chart, pack or chart.pack)
    return _relative(np.array([sc - 2 * rnn], dtype=object), np.array([rhs], dtype=object))


def theorema_variant_residual(chart: HypersurfaceChart, pack: CurvaturePack | None = None):
    """Same with a single ``Ric_nn`` on the left; generically nonzero."""
    sc, rnn, rhs = _theorema_sides(chart, pack or chart.pack)
    return _relative(np.array([sc - rnn], dtype=object), np.array([rhs], dtype=object))


def _fialkow_sides(chart, pack, hii_sign, h2_sign):
    d = chart.dimension
    ctx = chart.ctx
    II, H, II_tf, g_bar = _sigma_data(chart)
    bar = compute_curvature_pack(g_bar, cotton=False)
    W = third_form(chart, pack).jet.base_value
    Pt = _tangential(pack.schouten.jet, 2).base_value
    one = ctx.scalar(1)
    lhs = W + Pt * (d - 3)
    ginv = g_bar.inverse.base_value
    gb = g_bar.components.base_value
    tf = II_tf.base_value
    sq = np.einsum("ac,cd,db->ab", tf, ginv, tf)
    full = np.einsum("ab,ab->", sq, ginv)
    h = H.base_value[()]
    half = one / 2
    rhs = sq - gb * (full * (one / (2 * (d - 2)))) + (bar.schouten.base_value + tf * (hii_sign * h)
                                                     + gb * (h2_sign * half * h * h)) * (d - 3)
    return lhs, rhs


def fialkow_residual(chart: HypersurfaceChart, pack: CurvaturePack | None = None):
    """Fialkow-Gauss with bracket ``P_bar - H II_tf - H^2 g_bar / 2``."""
    lhs, rhs = _fialkow_sides(chart, pack or chart.pack, -1, -1)
    return _relative(lhs, rhs)


def fialkow_variant_residual(chart: HypersurfaceChart, pack: CurvaturePack | None = None):
    """Same with bracket ``P_bar + H II_tf + H^2 g_bar / 2``; generically nonzero."""
    lhs, rhs = _fialkow_sides(chart, pack or chart.pack, +1, +1)
    return _relative(lhs, rhs)


def iie_residual(chart: HypersurfaceChart, pack: CurvaturePack | None = None):
    """``tf_sigma(IIe^T)`` against ``|ds| II_tf`` at the base point."""
    IIe = extended_ff(chart, pack).jet
    g_bar = chart.g_bar
    lhs = trace_free_on_sigma(_on_sigma(IIe, 2), g_bar).base_value
    _, _, II_tf = second_fundamental_form(chart)
    norm = restrict(sqrt(chart.normal_norm2)).base_value[()]
    return _relative(lhs, II_tf.jet.base_value * norm)


IDENTITIES = {
    "gauss": gauss_residual,
    "codazzi": codazzi_residual,
    "theorema_egregium": theorema_residual,
    "fialkow_gauss": fialkow_residual,
}

INFORMATIONAL = {
    "theorema_egregium_variant": theorema_variant_residual,
    "fialkow_gauss_variant": fialkow_variant_residual,
}


def identity_residuals(chart: HypersurfaceChart, include_informational: bool = True) -> list[IdentityResidual]:
    """All identity residuals; needs adapted metric order >= 2."""
    if chart.order < 2:
        raise OrderUnderflow("identities need adapted metric jet order >= 2")
    work = chart.truncate(2) if chart.order > 2 else chart
    pack = compute_curvature_pack(work.metric_adapted, cotton=False)
    out = [IdentityResidual(k, f(work, pack)) for k, f in IDENTITIES.items()]
    if include_informational:
        out += [IdentityResidual(k, f(work, pack), True) for k, f in INFORMATIONAL.items()]
    return out


def extrinsic_pack(chart: HypersurfaceChart, s: DefiningFunction | None = None,
                   source_metric: MetricJet | None = None) -> ExtrinsicPack:
    """Everything the chart's jet order allows; unavailable forms are ``None``."""
    d = chart.dimension
    n_hat, proj, g_bar = conormal_and_projector(chart)
    II, H, II_tf = second_fundamental_form(chart)
    III = IV = IIe = None
    if d >= 4 and chart.order >= 2:
        III = third_form(chart)
        IIe = extended_ff(chart)
        if d != 5 and chart.order >= 3:
            IV = fourth_form(chart)
    if s is not None and source_metric is not None:
        source = conormal_in_source(chart, s, source_metric)
    else:
        source = n_hat.base_value
    return ExtrinsicPack(n_hat, proj, g_bar, II, H, II_tf, III, IV, IIe, source)


# defining-function normalization ------------------------------------------------

def _t_power(chart: HypersurfaceChart, k: int) -> Jet:
    return chart.t ** k


def _norm2_of(chart: HypersurfaceChart, f: Jet) -> Jet:
    df = f.gradient()
    return contract("a,a->", df, contract("ab,b->a", chart.metric_adapted.inverse, df))


def _unit_start(chart: HypersurfaceChart) -> tuple[Jet, Jet]:
    """``U0 = 1/|dt|`` on the hypersurface, extended constantly in ``t``."""
    U0 = extend(restrict(chart.nu), chart.ctx)
    return U0, chart.t * U0


def normalize_geodesic_adapted(chart: HypersurfaceChart) -> Jet:
    """``s~ = t u`` with ``|ds~|^2 = 1`` through the available order."""
    U0, S = _unit_start(chart)
    j = 1
    while True:
        F = _norm2_of(chart, S) - 1
        if j > F.order:
            return S
        Fj = extend(normal_coefficient(F, j), chart.ctx)
        delta = Fj * U0 * (chart.ctx.scalar(-1) / (2 * (j + 1)))
        S = S + delta * _t_power(chart, j + 1)
        j += 1


def normalize_geodesic(m: MetricJet, s: DefiningFunction) -> DefiningFunction:
    chart = adapt_coordinates(m, s)
    S = normalize_geodesic_adapted(chart)
    return DefiningFunction(push_forward_scalar(chart, S))


def laplacian(f: Jet, chart: HypersurfaceChart) -> Jet:
    return contract("ab,ab->", chart.metric_adapted.inverse, hessian(f, chart.christoffel))


def asymptotic_residual(chart: HypersurfaceChart, S: Jet, J: Jet | None = None) -> Jet:
    """``|dS|^2 - (2/d)(S lap S + J S^2) - 1`` in adapted coordinates."""
    d = chart.dimension
    if J is None:
        J = chart.pack.J
    two_d = chart.ctx.scalar(2) / chart.ctx.scalar(d)
    return _norm2_of(chart, S) - (S * laplacian(S, chart) + J * S * S) * two_d - 1


def t_valuation(chart: HypersurfaceChart, f: Jet) -> int:
    """Lowest power of ``t`` with a nonzero coefficient, capped at the jet order + 1."""
    for k in range(f.order + 1):
        if not normal_coefficient(f, k).is_zero():
            return k
    return f.order + 1


@dataclass(frozen=True)
class ImprovementResult:
    S: Jet                      # improved defining function, adapted coordinates
    residual: Jet               # residual jet, adapted coordinates
    orders: tuple[int, ...]     # t-valuation of the residual after each sweep
    obstruction: object         # base value of the t^d coefficient, if available


def improve_adapted(chart: HypersurfaceChart) -> ImprovementResult:
    d = chart.dimension
    if d < 4:
        raise JetError("asymptotic normalization needs d >= 4")
    ctx = chart.ctx
    U0, S = _unit_start(chart)
    J = chart.pack.J
    rho = asymptotic_residual(chart, S, J)
    if rho.order < d:
        raise OrderUnderflow(f"asymptotic normalization needs residual order >= {d}")
    orders = [t_valuation(chart, rho)]
    for k in range(1, d):
        rk = extend(normal_coefficient(rho, k), ctx)
        denom = ctx.scalar(2 * (k + 1)) * (ctx.scalar(1) - ctx.scalar(k) / ctx.scalar(d))
        lam = rk * reciprocal(U0 ** k) * (ctx.scalar(-1) / denom)
        S = S * (1 + lam * S ** k)
        rho = asymptotic_residual(chart, S, J)
        orders.append(t_valuation(chart, rho))
    obstruction = normal_coefficient(rho, d).base_value[()] if rho.order >= d else None
    return ImprovementResult(S, rho, tuple(orders), obstruction)


def normalize_asymptotic_unit(m: MetricJet, s: DefiningFunction) -> DefiningFunction:
    chart = adapt_coordinates(m, s)
    return DefiningFunction(push_forward_scalar(chart, improve_adapted(chart).S))

