"""Scenario files, seeded random scenarios and residual reports.

Scenario grammar (one item per line, ``#`` starts a comment)::

    [meta]
    dimension = 4
    order = 4
    mode = exact            # or float
    seed = 1
    label = free text
    [metric]
    i j e1 ... ed coeff     # 1-based component indices, i <= j or both given consistently
    [defining_function]
    e1 ... ed coeff
    [conformal_factor]      # optional
    e1 ... ed coeff

Coefficients are ``p/q`` rationals, integers or decimals.  Exponents are
monomial powers at the base point (the origin), total degree at most ``order``.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from gmpy2 import mpq

from .conformal import ConformalScale
from .curvature import MetricJet
from .hypersurface import DefiningFunction
from .jets import JetContext, stack
from .surd import QuadraticSurd, format_exact, parse_exact

MODES = ("float", "exact")
SECTIONS = ("meta", "metric", "defining_function", "conformal_factor")
META_KEYS = ("dimension", "order", "mode", "seed", "label")
MAX_SEED = 2**64 - 1


class ScenarioError(ValueError):
    """Malformed or invalid scenario text; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.message = message
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


Exponent = tuple[int, ...]


@dataclass(frozen=True)
class ScenarioSpec:
    dimension: int
    order: int
    mode: str
    metric: tuple[tuple[int, int, Exponent, Fraction], ...]
    defining_function: tuple[tuple[Exponent, Fraction], ...]
    conformal_factor: tuple[tuple[Exponent, Fraction], ...] | None = None
    seed: int = 0
    label: str = ""

    def __post_init__(self):
        validate(self)

    def context(self, mode: str | None = None) -> JetContext:
        return JetContext(self.dimension, self.order, mode or self.mode)

    def with_mode(self, mode: str) -> "ScenarioSpec":
        return ScenarioSpec(self.dimension, self.order, mode, self.metric, self.defining_function,
                            self.conformal_factor, self.seed, self.label)

    def metric_jet(self, ctx: JetContext | None = None) -> MetricJet:
        ctx = ctx or self.context()
        d = self.dimension
        terms = [[{} for _ in range(d)] for _ in range(d)]
        for i, j, e, c in self.metric:
            terms[i][j][e] = c
            terms[j][i][e] = c
        rows = [stack([ctx.from_terms(terms[i][j]) for j in range(d)]) for i in range(d)]
        return MetricJet.from_jet(stack(rows))

    def defining_jet(self, ctx: JetContext | None = None) -> DefiningFunction:
        ctx = ctx or self.context()
        return DefiningFunction(ctx.from_terms(dict(self.defining_function)))

    def conformal_scale(self, ctx: JetContext | None = None) -> ConformalScale | None:
        if self.conformal_factor is None:
            return None
        ctx = ctx or self.context()
        return ConformalScale(ctx.from_terms(dict(self.conformal_factor)))


# validation -------------------------------------------------------------------

def _leading_minors_positive(a: list[list[Fraction]]) -> bool:
    n = len(a)
    m = [row[:] for row in a]
    # Gaussian elimination without pivoting: all pivots positive iff positive definite
    for k in range(n):
        if m[k][k] <= 0:
            return False
        for r in range(k + 1, n):
            f = m[r][k] / m[k][k]
            for c in range(k, n):
                m[r][c] -= f * m[k][c]
    return True


def validate(spec: ScenarioSpec) -> None:
    d, K = spec.dimension, spec.order
    if not isinstance(d, int) or d < 2:
        raise ScenarioError("dimension must be an integer >= 2")
    if not isinstance(K, int) or K < 0:
        raise ScenarioError("order must be a non-negative integer")
    if spec.mode not in MODES:
        raise ScenarioError(f"mode must be one of {', '.join(MODES)}")
    if not 0 <= spec.seed <= MAX_SEED:
        raise ScenarioError("seed must be an unsigned 64-bit integer")
    if "#" in spec.label or "\n" in spec.label or spec.label != spec.label.strip():
        raise ScenarioError("label must be one line without '#' or surrounding blanks")

    def check_exp(e, what):
        if len(e) != d or any(v < 0 for v in e):
            raise ScenarioError(f"{what}: exponent needs {d} non-negative entries")
        if sum(e) > K:
            raise ScenarioError(f"{what}: monomial degree {sum(e)} exceeds order {K}")

    seen = set()
    base = [[Fraction(0)] * d for _ in range(d)]
    for i, j, e, c in spec.metric:
        if not (0 <= i < d and 0 <= j < d):
            raise ScenarioError("metric: component index out of range")
        if i > j:
            raise ScenarioError("metric: entries must be stored with i <= j")
        check_exp(e, "metric")
        if (i, j, e) in seen:
            raise ScenarioError("metric: duplicate entry")
        seen.add((i, j, e))
        if sum(e) == 0:
            base[i][j] = base[j][i] = c
    if not _leading_minors_positive(base):
        raise ScenarioError("metric not positive definite at base point")

    grad = False
    exps = set()
    for e, c in spec.defining_function:
        check_exp(e, "defining_function")
        if e in exps:
            raise ScenarioError("defining_function: duplicate entry")
        exps.add(e)
        if sum(e) == 0 and c != 0:
            raise ScenarioError("defining_function: constant term must vanish")
        if sum(e) == 1 and c != 0:
            grad = True
    if not grad:
        raise ScenarioError("defining_function: gradient vanishes at base point")

    if spec.conformal_factor is not None:
        const = Fraction(0)
        exps = set()
        for e, c in spec.conformal_factor:
            check_exp(e, "conformal_factor")
            if e in exps:
                raise ScenarioError("conformal_factor: duplicate entry")
            exps.add(e)
            if sum(e) == 0:
                const = c
        if const <= 0:
            raise ScenarioError("conformal factor not positive at base point")


# parsing ----------------------------------------------------------------------

_SECTION = re.compile(r"^\[([A-Za-z_]+)\]$")


def parse_coefficient(token: str) -> Fraction:
    try:
        value = Fraction(token)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"bad coefficient {token!r}") from None
    return value


def _ints(tokens, what):
    try:
        values = [int(t) for t in tokens]
    except ValueError:
        raise ValueError(f"{what} must be integers") from None
    if any(v < 0 for v in values):
        raise ValueError(f"{what} must be non-negative")
    return values


def parse_scenario(text: str) -> ScenarioSpec:
    """Parse and validate scenario text; raises :class:`ScenarioError`."""
    section = None
    meta: dict[str, str] = {}
    metric_raw: list[tuple[int, int, int, Exponent, Fraction]] = []
    sfun_raw: list[tuple[int, Exponent, Fraction]] = []
    omega_raw: list[tuple[int, Exponent, Fraction]] | None = None
    seen_sections = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1)
            if section not in SECTIONS:
                raise ScenarioError(f"unknown section [{section}]", lineno)
            if section in seen_sections:
                raise ScenarioError(f"repeated section [{section}]", lineno)
            seen_sections.add(section)
            if section == "conformal_factor":
                omega_raw = []
            continue
        if section is None:
            raise ScenarioError("content before first section", lineno)
        if section == "meta":
            if "=" not in line:
                raise ScenarioError("expected key = value", lineno)
            key, value = (p.strip() for p in line.split("=", 1))
            if key not in META_KEYS:
                raise ScenarioError(f"unknown meta key {key!r}", lineno)
            if key in meta:
                raise ScenarioError(f"repeated meta key {key!r}", lineno)
            meta[key] = value
            continue
        if "dimension" not in meta:
            raise ScenarioError("meta dimension must precede data sections", lineno)
        d = _meta_int(meta, "dimension", lineno)
        tokens = line.split()
        try:
            if section == "metric":
                if len(tokens) != d + 3:
                    raise ValueError(f"metric entry needs {d + 3} fields, got {len(tokens)}")
                i, j, *e = _ints(tokens[:-1], "indices and exponents")
                if not (1 <= i <= d and 1 <= j <= d):
                    raise ValueError(f"component index out of range 1..{d}")
                metric_raw.append((lineno, i - 1, j - 1, tuple(e), parse_coefficient(tokens[-1])))
            else:
                if len(tokens) != d + 1:
                    raise ValueError(f"{section} entry needs {d + 1} fields, got {len(tokens)}")
                e = tuple(_ints(tokens[:-1], "exponents"))
                entry = (lineno, e, parse_coefficient(tokens[-1]))
                (sfun_raw if section == "defining_function" else omega_raw).append(entry)
        except ValueError as exc:
            raise ScenarioError(str(exc), lineno) from None

    for key in ("dimension", "order"):
        if key not in meta:
            raise ScenarioError(f"meta: missing {key}")
    d = _meta_int(meta, "dimension", None)
    K = _meta_int(meta, "order", None)
    seed = _meta_int(meta, "seed", None) if "seed" in meta else 0
    mode = meta.get("mode", "float")
    if "metric" not in seen_sections:
        raise ScenarioError("missing [metric] section")
    if "defining_function" not in seen_sections:
        raise ScenarioError("missing [defining_function] section")

    # an off-diagonal component may be listed once or mirrored as (j, i) with the same value
    metric: dict[tuple[int, int, Exponent], Fraction] = {}
    listed: dict[tuple[int, int, Exponent], int] = {}
    for lineno, i, j, e, c in metric_raw:
        _check_entry_degree(e, d, K, lineno)
        key = (min(i, j), max(i, j), e)
        if (i, j, e) in listed or (key in metric and (i == j or metric[key] != c)):
            raise ScenarioError("metric entry conflicts with an earlier one", lineno)
        listed[(i, j, e)] = lineno
        metric[key] = c
    entries = tuple(sorted((i, j, e, c) for (i, j, e), c in metric.items() if c != 0))

    def collect(raw, what):
        out: dict[Exponent, Fraction] = {}
        for lineno, e, c in raw:
            _check_entry_degree(e, d, K, lineno)
            if e in out:
                raise ScenarioError(f"{what}: duplicate exponent", lineno)
            out[e] = c
        return tuple(sorted((e, c) for e, c in out.items() if c != 0))

    sfun = collect(sfun_raw, "defining_function")
    omega = collect(omega_raw, "conformal_factor") if omega_raw is not None else None
    return ScenarioSpec(d, K, mode, entries, sfun, omega, seed, meta.get("label", ""))


def _check_entry_degree(e, d, K, lineno):
    if len(e) != d:
        raise ScenarioError(f"exponent needs {d} entries", lineno)
    if sum(e) > K:
        raise ScenarioError(f"monomial degree {sum(e)} exceeds order {K}", lineno)


def _meta_int(meta, key, lineno) -> int:
    try:
        return int(meta[key])
    except ValueError:
        raise ScenarioError(f"meta {key} must be an integer", lineno) from None


def format_fraction(c: Fraction) -> str:
    return f"{c.numerator}/{c.denominator}"


def serialize(spec: ScenarioSpec) -> str:
    lines = ["[meta]", f"dimension = {spec.dimension}", f"order = {spec.order}",
             f"mode = {spec.mode}", f"seed = {spec.seed}"]
    if spec.label:
        lines.append(f"label = {spec.label}")
    lines.append("[metric]")
    for i, j, e, c in spec.metric:
        lines.append(" ".join([str(i + 1), str(j + 1), *map(str, e), format_fraction(c)]))
    lines.append("[defining_function]")
    for e, c in spec.defining_function:
        lines.append(" ".join([*map(str, e), format_fraction(c)]))
    if spec.conformal_factor is not None:
        lines.append("[conformal_factor]")
        for e, c in spec.conformal_factor:
            lines.append(" ".join([*map(str, e), format_fraction(c)]))
    return "\n".join(lines) + "\n"


# random scenarios -------------------------------------------------------------

def _monomials(d: int, lo: int, hi: int) -> list[Exponent]:
    out = []
    for deg in range(lo, hi + 1):
        level = [e for e in itertools.product(range(deg + 1), repeat=d) if sum(e) == deg]
        level.sort(key=lambda e: tuple(-v for v in e))
        out.extend(level)
    return out


def generate_random(d: int, K: int, seed: int = 0, mode: str = "exact",
                    amplitude: Fraction | int | str = Fraction(1, 4), label: str | None = None
                    ) -> ScenarioSpec:
    """Seeded random scenario: identity plus a small symmetric polynomial perturbation.

    Coefficients are multiples of ``amplitude/8`` in ``[-amplitude, amplitude]``.
    Off-diagonal constant terms are further divided by ``d - 1`` so the base
    matrix stays diagonally dominant in every dimension.
    """
    if d < 4:
        raise ScenarioError("random scenarios need d >= 4")
    if K < 2:
        raise ScenarioError("random scenarios need order >= 2")
    amp = Fraction(amplitude)
    if not 0 <= amp <= Fraction(1, 4):
        raise ScenarioError("amplitude must lie in [0, 1/4]")
    rng = np.random.default_rng(seed)
    step = amp / 8

    def draw() -> Fraction:
        return step * int(rng.integers(-8, 9))

    mons = _monomials(d, 0, K)
    metric = []
    for i in range(d):
        for j in range(i, d):
            for e in mons:
                c = draw()
                if sum(e) == 0:
                    c = 1 + c if i == j else c / (d - 1)
                if c:
                    metric.append((i, j, e, c))
    sfun = [(tuple(1 if k == d - 1 else 0 for k in range(d)), Fraction(1))]
    sfun += [(e, c) for e in _monomials(d, 2, K) if (c := draw())]
    omega = [(e, (1 + c) if sum(e) == 0 else c) for e in mons if (c := draw()) or sum(e) == 0]
    return ScenarioSpec(d, K, mode, tuple(sorted(metric)), tuple(sorted(sfun)),
                        tuple(sorted(omega)), int(seed),
                        label if label is not None else f"random d={d} K={K} seed={seed}")


# reports ----------------------------------------------------------------------

@dataclass
class ResidualReport:
    """Header fields plus named sections of scalar values."""

    label: str
    seed: int
    mode: str
    sections: dict[str, dict[str, object]] = field(default_factory=dict)
    timestamp: str | None = None
    elapsed: float | None = None

    def section(self, name: str) -> dict[str, object]:
        return self.sections.setdefault(name, {})


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (Fraction, type(mpq(0)))):
        f = Fraction(int(v.numerator), int(v.denominator))
        return format_fraction(f)
    if isinstance(v, QuadraticSurd):
        return format_exact(v)
    if isinstance(v, (float, np.floating)):
        x = float(v)
        if not math.isfinite(x):
            raise ValueError("report values must be finite")
        return format(x, ".17g")
    if isinstance(v, str):
        if "\n" in v:
            raise ValueError("report strings must be single-line")
        return v
    raise TypeError(f"cannot format {type(v).__name__}")


_RAT = re.compile(r"^-?\d+/\d+$")
_INT = re.compile(r"^-?\d+$")


def parse_value(text: str):
    if text in ("true", "false"):
        return text == "true"
    if _INT.match(text):
        return int(text)
    if _RAT.match(text):
        return Fraction(text)
    if "*sqrt(" in text:
        try:
            return parse_exact(text)
        except ValueError:
            return text
    try:
        return float(text)
    except ValueError:
        return text


def write_report(report: ResidualReport) -> str:
    lines = ["[report]", f"label = {format_value(report.label)}", f"mode = {report.mode}",
             f"seed = {report.seed}"]
    if report.timestamp is not None:
        lines.append(f"timestamp = {report.timestamp}")
    if report.elapsed is not None:
        lines.append(f"elapsed = {format_value(float(report.elapsed))}")
    for name in sorted(report.sections):
        if not report.sections[name]:
            continue
        lines.append(f"[{name}]")
        for key in sorted(report.sections[name]):
            lines.append(f"{key} = {format_value(report.sections[name][key])}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> ResidualReport:
    header: dict[str, str] = {}
    sections: dict[str, dict[str, object]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            current = m.group(1)
            if current != "report":
                sections[current] = {}
            continue
        if current is None or "=" not in line:
            raise ScenarioError("malformed report line", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if current == "report":
            header[key] = value
        else:
            sections[current][key] = parse_value(value)
    elapsed = float(header["elapsed"]) if "elapsed" in header else None
    return ResidualReport(header.get("label", ""), int(header.get("seed", 0)),
                          header.get("mode", "float"), sections, header.get("timestamp"), elapsed)
