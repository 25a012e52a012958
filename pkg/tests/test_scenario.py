from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from confhyp.scenario import (ResidualReport, ScenarioError, ScenarioSpec, format_value,
                              generate_random, parse_report, parse_scenario, parse_value,
                              serialize, write_report)
from confhyp.surd import exact_sqrt

FIXTURES = Path(__file__).parent / "fixtures"


def flat_text():
    return (FIXTURES / "flat.scn").read_text()


def test_flat_fixture():
    spec = parse_scenario(flat_text())
    assert (spec.dimension, spec.order, spec.mode) == (4, 4, "exact")
    assert spec.metric == tuple((i, i, (0, 0, 0, 0), Fraction(1)) for i in range(4))
    assert spec.defining_function == (((0, 0, 0, 1), Fraction(1)),)
    assert spec.conformal_factor == (((0, 0, 0, 0), Fraction(1)), ((1, 0, 0, 0), Fraction(1, 3)))
    g = spec.metric_jet()
    assert np.array_equal(g.components.base_value.astype(int), np.eye(4, dtype=int))


def test_zero_diagonal_is_not_positive_definite():
    text = flat_text().replace("1 1  0 0 0 0  1", "1 1  0 0 0 0  0")
    with pytest.raises(ScenarioError, match="metric not positive definite at base point"):
        parse_scenario(text)


def test_indefinite_off_diagonal():
    text = flat_text().replace("[metric]", "[metric]\n1 2 0 0 0 0 2")
    with pytest.raises(ScenarioError, match="metric not positive definite"):
        parse_scenario(text)


def test_mirrored_entries():
    base = flat_text().replace("[metric]", "[metric]\n1 2 0 0 0 1 1/5")
    spec = parse_scenario(base)
    assert parse_scenario(base.replace("[metric]", "[metric]\n2 1 0 0 0 1 1/5")) == spec
    with pytest.raises(ScenarioError, match="conflicts"):
        parse_scenario(base.replace("[metric]", "[metric]\n2 1 0 0 0 1 1/7"))


def line_of(text, needle):
    return next(i for i, ln in enumerate(text.splitlines(), 1) if needle in ln)


@pytest.mark.parametrize("old, new, message", [
    ("[meta]", "dimension = 4\n[meta]", "content before first section"),
    ("label = flat plane", "colour = red", "unknown meta key"),
    ("[metric]", "[tensor]", "unknown section"),
    ("4 4  0 0 0 0  1", "4 4  0 0 0 0", "needs 7 fields"),
    ("4 4  0 0 0 0  1", "4 4  0 0 0 0  x", "coefficient"),
    ("4 4  0 0 0 0  1", "5 4  0 0 0 0  1", "out of range"),
    ("0 0 0 1  1", "0 0 0 5  1", "exceeds order"),
])
def test_syntax_errors_carry_line_numbers(old, new, message):
    text = flat_text().replace(old, new, 1)
    line = line_of(text, new.split("\n")[0])
    with pytest.raises(ScenarioError, match=message) as info:
        parse_scenario(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_invariant_errors():
    with pytest.raises(ScenarioError, match="constant term must vanish"):
        parse_scenario(flat_text().replace("0 0 0 1  1", "0 0 0 1  1\n0 0 0 0  1"))
    with pytest.raises(ScenarioError, match="gradient vanishes"):
        parse_scenario(flat_text().replace("0 0 0 1  1", "0 0 0 2  1"))
    with pytest.raises(ScenarioError, match="conformal factor not positive at base point"):
        parse_scenario(flat_text().replace("0 0 0 0  1\n1 0 0 0", "0 0 0 0  -1\n1 0 0 0"))
    with pytest.raises(ScenarioError, match="missing \\[defining_function\\]"):
        parse_scenario(flat_text().split("[defining_function]")[0])


def test_decimal_coefficients():
    spec = parse_scenario(flat_text().replace("1/3", "0.25"))
    assert spec.conformal_factor[1][1] == Fraction(1, 4)


def test_direct_construction_validates():
    with pytest.raises(ScenarioError):
        ScenarioSpec(4, 2, "exact", (), (((0, 0, 0, 1), Fraction(1)),), None, 0, "")


# generation ------------------------------------------------------------------------

def test_generation_is_deterministic():
    assert generate_random(4, 4, seed=9) == generate_random(4, 4, seed=9)
    assert generate_random(4, 4, seed=9) != generate_random(4, 4, seed=10)


@pytest.mark.parametrize("d", [4, 5, 6, 8])
def test_generated_metric_positive_definite(d):
    for seed in range(10):
        spec = generate_random(d, 3, seed=seed, mode="float")
        g0 = spec.metric_jet().components.base_value
        assert np.linalg.eigvalsh(g0).min() > 0


def test_zero_amplitude_is_flat():
    spec = generate_random(5, 3, seed=4, amplitude=0)
    assert spec.metric == tuple((i, i, (0,) * 5, Fraction(1)) for i in range(5))
    assert spec.defining_function == (((0, 0, 0, 0, 1), Fraction(1)),)
    assert spec.conformal_factor == (((0,) * 5, Fraction(1)),)


def test_generation_guards():
    with pytest.raises(ScenarioError):
        generate_random(3, 3)
    with pytest.raises(ScenarioError):
        generate_random(4, 1)
    with pytest.raises(ScenarioError):
        generate_random(4, 3, amplitude=1)


@given(st.integers(4, 6), st.integers(2, 4), st.integers(0, 2**64 - 1),
       st.sampled_from(["exact", "float"]), st.fractions(0, Fraction(1, 4), max_denominator=16))
def test_roundtrip(d, K, seed, mode, amp):
    spec = generate_random(d, K, seed=seed, mode=mode, amplitude=amp)
    assert parse_scenario(serialize(spec)) == spec


def test_mode_override():
    spec = parse_scenario(flat_text())
    assert spec.with_mode("float").context().mode == "float"
    assert spec.context().mode == "exact"


# fuzzing -------------------------------------------------------------------------

TOKENS = ["[meta]", "[metric]", "[defining_function]", "[conformal_factor]", "[x]", "=",
          "dimension", "order", "mode", "seed", "label", "exact", "float", "#", "0", "1", "-1",
          "4", "1/2", "1/0", "0.5", "nan", "inf", "1e400", "-", "x", "\n", "\n", "\n", " "]


@given(st.lists(st.sampled_from(TOKENS), max_size=60))
def test_token_fuzz_never_crashes(tokens):
    try:
        parse_scenario(" ".join(tokens))
    except ScenarioError:
        pass


@given(st.data())
def test_mutation_fuzz_never_crashes(data):
    lines = flat_text().splitlines()
    for _ in range(data.draw(st.integers(1, 4))):
        i = data.draw(st.integers(0, len(lines) - 1))
        op = data.draw(st.sampled_from(["drop", "dup", "token"]))
        if op == "drop":
            lines.pop(i)
        elif op == "dup":
            lines.insert(i, lines[i])
        else:
            parts = lines[i].split() or [""]
            j = data.draw(st.integers(0, len(parts) - 1))
            parts[j] = data.draw(st.sampled_from(TOKENS + ["99", "-3", "2/3", "0/1", "1 2"]))
            lines[i] = " ".join(parts)
        if not lines:
            break
    try:
        parse_scenario("\n".join(lines))
    except ScenarioError:
        pass


@given(st.text(max_size=200))
def test_arbitrary_text_never_crashes(text):
    try:
        parse_scenario(text)
    except ScenarioError:
        pass


# reports -------------------------------------------------------------------------

def test_empty_report_is_header_only():
    text = write_report(ResidualReport("empty", 3, "exact"))
    assert text == "[report]\nlabel = empty\nmode = exact\nseed = 3\n"


def test_single_residual_gives_one_line():
    r = ResidualReport("one", 0, "exact")
    r.section("identities")["gauss"] = Fraction(0)
    body = write_report(r).splitlines()[4:]
    assert body == ["[identities]", "gauss = 0/1"]


def test_value_formats():
    assert format_value(Fraction(-3, 4)) == "-3/4"
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(True) == "true"
    r = exact_sqrt(2)
    assert parse_value(format_value(r)) == r
    with pytest.raises(ValueError):
        format_value(float("nan"))


@given(st.dictionaries(st.from_regex(r"[a-z][a-z_.0-9]{0,10}", fullmatch=True),
                       st.one_of(st.fractions(max_denominator=50),
                                 st.floats(allow_nan=False, allow_infinity=False),
                                 st.booleans(), st.integers(-10**6, 10**6)),
                       max_size=8))
def test_report_roundtrip(values):
    r = ResidualReport("label x", 7, "float", {"checks": dict(values)}, "2026-01-01T00:00:00", 0.5)
    back = parse_report(write_report(r))
    expected = {k: (Fraction(v) if isinstance(v, Fraction) else v) for k, v in values.items()}
    assert back.sections.get("checks", {}) == expected
    assert (back.label, back.seed, back.mode, back.timestamp, back.elapsed) == (
        "label x", 7, "float", "2026-01-01T00:00:00", 0.5)


def test_report_sections_sorted():
    r = ResidualReport("s", 0, "exact")
    r.section("b")["z"] = 1
    r.section("b")["a"] = 2
    r.section("a")["k"] = 3
    assert write_report(r).splitlines()[4:] == ["[a]", "k = 3", "[b]", "a = 2", "z = 1"]
