"""Levi-Civita connection and the Riemannian curvature stack.

Conventions: ``R_ab^c_d z^d = [nabla_a, nabla_b] z^c``, ``Ric_ab = R_ca^c_b``,
``P = (Ric - Sc g / (2(d-1))) / (d-2)``, ``J = tr P``,
``R_abcd = W_abcd + g_ac P_bd - g_bc P_ad - g_ad P_bc + g_bd P_ac`` and
``C_abc = nabla^d W_dcab / (d-3)``.  Array axis order follows the index order.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .jets import Jet, JetError, OrderUnderflow, contract
from .tensor import TensorJet, matrix_inverse, max_abs, is_exactly_zero

# Relative sign between C_abc = div W / (d-3) and nabla_a P_bc - nabla_b P_ac.
# Calibrated once against a seeded random metric; see tests/test_curvature.py.
COTTON_SIGN = 1


@dataclass(frozen=True)
class MetricJet:
    """A Riemannian metric jet ``g_ab`` with cached inverse."""

    g: TensorJet

    def __post_init__(self):
        if self.g.variance != "ll":
            raise JetError("metric must be a (0,2) tensor")

    @classmethod
    def from_jet(cls, g: Jet) -> "MetricJet":
        return cls(TensorJet(g, "ll", symmetric=((0, 1),)))

    @property
    def ctx(self):
        return self.g.ctx

    @property
    def dimension(self) -> int:
        return self.g.ctx.dimension

    @property
    def order(self) -> int:
        return self.g.order

    @property
    def components(self) -> Jet:
        return self.g.jet

    @functools.cached_property
    def inverse(self) -> Jet:
        return matrix_inverse(self.g.jet)

    @property
    def g_inv(self) -> TensorJet:
        return TensorJet(self.inverse, "uu", symmetric=((0, 1),))

    def truncate(self, order: int) -> "MetricJet":
        return MetricJet(self.g.truncate(order))

    def is_positive_definite(self) -> bool:
        m = self.g.base_value
        if self.ctx.exact:
            # Sylvester: leading principal minors
            for k in range(1, m.shape[0] + 1):
                if _exact_det(m[:k, :k]) <= 0:
                    return False
            return True
        return bool(np.all(np.linalg.eigvalsh(np.asarray(m, dtype=float)) > 0))


def _exact_det(m: np.ndarray):
    m = np.array(m, dtype=object, copy=True)
    n = m.shape[0]
    det = 1
    for c in range(n):
        piv = next((r for r in range(c, n) if m[r, c] != 0), None)
        if piv is None:
            return 0
        if piv != c:
            m[[c, piv]] = m[[piv, c]]
            det = -det
        det = det * m[c, c]
        for r in range(c + 1, n):
            f = m[r, c] / m[c, c]
            m[r] = m[r] - f * m[c]
    return det


@dataclass(frozen=True)
class Christoffel:
    """``gamma[a, b, c] = Gamma^a_bc``; a plain array, deliberately not a tensor."""

    gamma: Jet

    @property
    def order(self) -> int:
        return self.gamma.order


def compute_christoffel(m: MetricJet) -> Christoffel:
    if m.order < 1:
        raise OrderUnderflow()
    g = m.components
    dg = g.gradient()  # dg[c, a, b] = d_c g_ab
    # first kind: G_dbc = (d_b g_dc + d_c g_bd - d_d g_bc) / 2
    c = dg.coeffs
    first = (np.transpose(c, (1, 0, 2, 3)) + np.transpose(c, (1, 2, 0, 3)) - c)
    first = Jet(g.ctx, first * g.ctx.scalar("1/2" if g.ctx.exact else 0.5), dg.order)
    return Christoffel(contract("ad,dbc->abc", m.inverse, first, order=dg.order))


@dataclass(frozen=True)
class CurvaturePack:
    metric: MetricJet
    christoffel: Christoffel
    riemann: TensorJet
    ricci: TensorJet
    scalar: Jet
    schouten: TensorJet
    J: Jet
    weyl: TensorJet
    cotton: TensorJet | None

    @property
    def dimension(self) -> int:
        return self.metric.dimension


def _riemann_up(gam: Christoffel) -> Jet:
    """``R_ab^c_d`` as an array ``[a, b, c, d]``."""
    G = gam.gamma
    dG = G.gradient()  # dG[a, c, b, d] = d_a Gamma^c_bd
    lin = dG.transpose(0, 2, 1, 3) - dG.transpose(2, 0, 1, 3)
    # Gamma^c_ae Gamma^e_bd - Gamma^c_be Gamma^e_ad
    quad = contract("cae,ebd->abcd", G, G, order=dG.order)
    return lin + quad - quad.transpose(1, 0, 2, 3)


def _kulkarni_nomizu_p(g: Jet, P: Jet, order: int) -> Jet:
    """``g_ac P_bd - g_bc P_ad - g_ad P_bc + g_bd P_ac``."""
    gp = contract("ac,bd->abcd", g, P, order=order)
    return gp - gp.transpose(1, 0, 2, 3) - gp.transpose(0, 1, 3, 2) + gp.transpose(1, 0, 3, 2)


def compute_curvature_pack(m: MetricJet, cotton: bool | None = None,
                           christoffel: Christoffel | None = None) -> CurvaturePack:
    """Christoffel symbols through Cotton tensor.

    ``cotton=None`` computes the Cotton tensor whenever ``d >= 4`` and the
    metric has order at least 3; ``cotton=True`` makes it mandatory.
    """
    d = m.dimension
    if m.order < 2:
        raise OrderUnderflow("curvature needs metric jet order >= 2")
    if cotton and d < 4:
        raise JetError("Cotton undefined below d=4")
    if cotton and m.order < 3:
        raise OrderUnderflow("Cotton tensor needs metric jet order >= 3")
    ctx = m.ctx
    gam = christoffel if christoffel is not None else compute_christoffel(m)
    Rup = _riemann_up(gam)
    o = Rup.order
    g = m.components.truncate(o) if m.order > o else m.components
    ginv = m.inverse
    R = contract("ce,abed->abcd", g, Rup, order=o)
    ric = Rup.trace(0, 2)  # R_ca^c_b summed over c -> [a, b]
    sc = contract("ab,ab->", ginv, ric, order=o)
    half = ctx.scalar("1/2") if ctx.exact else 0.5
    P = (ric - contract(",ab->ab", sc, g, order=o) * (half / ctx.scalar(d - 1))) \
        * (ctx.scalar(1) / ctx.scalar(d - 2))
    J = contract("ab,ab->", ginv, P, order=o)
    W = R - _kulkarni_nomizu_p(g, P, o)
    want_cotton = cotton if cotton is not None else (d >= 4 and m.order >= 3)
    C = None
    if want_cotton:
        div = weyl_divergence(W, ginv, gam)  # [c, a, b]
        C = TensorJet(div.transpose(1, 2, 0) * (ctx.scalar(1) / ctx.scalar(d - 3)), "lll",
                      antisymmetric=((0, 1),))
    return CurvaturePack(
        metric=m,
        christoffel=gam,
        riemann=TensorJet(R, "llll", symmetric=(), antisymmetric=((0, 1), (2, 3))),
        ricci=TensorJet(ric, "ll", symmetric=((0, 1),)),
        scalar=sc,
        schouten=TensorJet(P, "ll", symmetric=((0, 1),)),
        J=J,
        weyl=TensorJet(W, "llll", antisymmetric=((0, 1), (2, 3))),
        cotton=C,
    )


def covariant_derivative_jet(t: Jet, variance: str, gam: Christoffel) -> Jet:
    """``nabla_e t`` with the new slot first."""
    if t.order < 1:
        raise OrderUnderflow()
    G = gam.gamma
    out = t.gradient()
    o = out.order
    letters = "abcdfghij"[: len(variance)]
    for slot, v in enumerate(variance):
        s = letters[slot]
        moved = letters.replace(s, "z")
        if v == "l":
            # - Gamma^z_{e s} t_{..z..}
            out = out - contract(f"zy{s},{moved}->y{letters}", G, t, order=o)
        else:
            # + Gamma^s_{e z} t^{..z..}
            out = out + contract(f"{s}yz,{moved}->y{letters}", G, t, order=o)
    return out


def weyl_divergence(W: Jet, ginv: Jet, gam: Christoffel) -> Jet:
    """``g^{ed} nabla_e W_dcab`` as ``[c, a, b]`` without forming ``nabla W``."""
    if W.order < 1:
        raise OrderUnderflow()
    G = gam.gamma
    dW = W.gradient()
    o = dW.order
    trace_gamma = contract("ed,zed->z", ginv, G, order=o)
    U = contract("ed,dxyw->exyw", ginv, W, order=o)
    return (contract("ed,edcab->cab", ginv, dW, order=o)
            - contract("z,zcab->cab", trace_gamma, W, order=o)
            - contract("zec,ezab->cab", G, U, order=o)
            - contract("zea,eczb->cab", G, U, order=o)
            - contract("zeb,ecaz->cab", G, U, order=o))


def directional_derivative(t: Jet, variance: str, gam: Christoffel, v: Jet) -> Jet:
    """``v^e nabla_e t``; cheaper than contracting :func:`covariant_derivative_jet`."""
    if t.order < 1:
        raise OrderUnderflow()
    G = gam.gamma
    o = min(t.order - 1, G.order)
    out = contract("e,e...->...".replace("...", "abcdfghij"[: len(variance)]), v, t.gradient(), order=o)
    M = contract("e,zes->zs", v, G, order=o)  # v^e Gamma^z_es
    letters = "abcdfghij"[: len(variance)]
    for slot, kind in enumerate(variance):
        s = letters[slot]
        moved = letters.replace(s, "z")
        if kind == "l":
            out = out - contract(f"z{s},{moved}->{letters}", M, t, order=o)
        else:
            out = out + contract(f"{s}z,{moved}->{letters}", M, t, order=o)
    return out


def covariant_derivative(t: TensorJet, connection) -> TensorJet:
    """Covariant derivative; ``connection`` is a :class:`CurvaturePack` or :class:`Christoffel`."""
    gam = connection.christoffel if isinstance(connection, CurvaturePack) else connection
    if t.ctx != gam.gamma.ctx:
        raise JetError("incompatible jet contexts")
    return TensorJet(covariant_derivative_jet(t.jet, t.variance, gam), "l" + t.variance)


def schouten_cotton(pack: CurvaturePack) -> Jet:
    """``nabla_a P_bc - nabla_b P_ac`` as an array ``[a, b, c]``."""
    dP = covariant_derivative_jet(pack.schouten.jet, "ll", pack.christoffel)
    return dP - dP.transpose(1, 0, 2)


def cotton_crosscheck(pack: CurvaturePack, sign: int = COTTON_SIGN):
    """Base-point residual between the divergence and Schouten forms of Cotton."""
    if pack.dimension < 4:
        raise JetError("Cotton undefined below d=4")
    if pack.cotton is None:
        raise OrderUnderflow("Cotton tensor needs metric jet order >= 3")
    diff = pack.cotton.base_value - sign * schouten_cotton(pack).base_value
    return 0 if is_exactly_zero(diff) else max_abs(diff)


def reassemble_riemann(pack: CurvaturePack) -> Jet:
    """``W + g (KN) P``, which should reproduce the Riemann tensor."""
    o = pack.weyl.order
    g = pack.metric.components.truncate(o)
    return pack.weyl.jet + _kulkarni_nomizu_p(g, pack.schouten.jet, o)


def weyl_traces(pack: CurvaturePack) -> list[Jet]:
    """All single metric traces of the Weyl tensor."""
    W = pack.weyl.jet
    ginv = pack.metric.inverse
    out = []
    for a, b in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]:
        letters = list("abcd")
        letters[a] = "y"
        letters[b] = "z"
        rest = "".join(l for i, l in enumerate("abcd") if i not in (a, b))
        out.append(contract(f"yz,{''.join(letters)}->{rest}", ginv, W, order=W.order))
    return out


def riemann_symmetry_residuals(pack: CurvaturePack) -> dict[str, np.ndarray]:
    """Antisymmetry, pair symmetry and first Bianchi residual arrays."""
    c = pack.riemann.jet.coeffs
    return {
        "antisym_12": c + np.transpose(c, (1, 0, 2, 3, 4)),
        "antisym_34": c + np.transpose(c, (0, 1, 3, 2, 4)),
        "pair_exchange": c - np.transpose(c, (2, 3, 0, 1, 4)),
        "bianchi_1": c + np.transpose(c, (1, 2, 0, 3, 4)) + np.transpose(c, (2, 0, 1, 3, 4)),
    }


def second_bianchi(pack: CurvaturePack) -> Jet:
    """``nabla_a R_bcde + nabla_b R_cade + nabla_c R_abde``."""
    dR = covariant_derivative_jet(pack.riemann.jet, "llll", pack.christoffel)
    return dR + dR.transpose(1, 2, 0, 3, 4) + dR.transpose(2, 0, 1, 3, 4)


def lower_all(t: Jet, g: Jet) -> Jet:
    """Lower every index of a fully contravariant array."""
    out = t
    letters = "abcdfghij"[: len(t.shape)]
    for s in letters:
        moved = letters.replace(s, "z")
        out = contract(f"{s}z,{moved}->{letters}", g, out)
    return out

