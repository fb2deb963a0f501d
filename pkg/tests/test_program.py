import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affgeo.errors import DomainError, ParseError
from affgeo.evaluate import eval_values, jet_eval
from affgeo.program import Const, Integral, Var, compose, parse, serialize

VARS = ("x", "y")


def _expressions():
    leaves = st.one_of(
        st.sampled_from(["x", "y", "pi"]),
        st.floats(-5, 5, allow_nan=False).map(lambda v: repr(v) if v >= 0 else f"({v!r})"),
    )

    def extend(children):
        binary = st.tuples(children, st.sampled_from(["+", "-", "*", "/"]), children).map(
            lambda t: f"({t[0]} {t[1]} {t[2]})")
        calls = st.tuples(st.sampled_from(["exp", "sin", "cos", "atan", "tanh", "sinh"]), children).map(
            lambda t: f"{t[0]}({t[1]})")
        power = st.tuples(children, st.integers(0, 3)).map(lambda t: f"({t[0]})^{t[1]}")
        return st.one_of(binary, calls, power)

    return st.recursive(leaves, extend, max_leaves=8)


@settings(max_examples=150, deadline=None)
@given(_expressions())
def test_parse_serialize_round_trip(text):
    prog = parse(text, VARS)
    again = parse(serialize(prog), VARS)
    assert again == prog
    assert serialize(again) == serialize(prog)


def test_precedence_and_unary_minus():
    p = parse("-x^2 + 2*y/4 - 1", VARS)
    assert eval_values(p, [3.0, 2.0]) == pytest.approx(-9 + 1 - 1)
    assert eval_values(parse("2^3^2", VARS), [0, 0]) == pytest.approx(2 ** 9)


def test_constants_log_alias_and_atan2():
    p = parse("c*log(x) + atan2(y, x)", VARS, {"c": 2.0})
    assert eval_values(p, [math.e, 1.0]) == pytest.approx(2 + math.atan2(1, math.e))
    assert parse("pi", VARS).root == Const(math.pi)


def test_integral_node_structure_and_nesting():
    p = parse("int(exp(t^2)*int(exp(-s^2), s, 0, t), t, 0, x)", ("x",))
    assert isinstance(p.root, Integral)
    assert isinstance(p.root.upper, Var)
    assert p.root.lower == 0.0
    assert parse(serialize(p), ("x",)) == p


@pytest.mark.parametrize("text", [
    "x +", "foo(x)", "x ^ y", "int(exp(x), t, 0, x)", "int(t, t, x, 1)", "(x", "x $ y", "z",
])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse(text, VARS)


def test_domain_errors_for_elementary_functions():
    with pytest.raises(DomainError):
        eval_values(parse("ln(x)", VARS), [-1.0, 0.0])
    with pytest.raises(DomainError):
        eval_values(parse("x^0.5", VARS), [-1.0, 0.0])
    with pytest.raises(DomainError):
        eval_values(parse("1/x", VARS), [0.0, 0.0])


def test_compose_substitutes_arguments():
    outer = parse("x*y + 1", VARS)
    inner = [parse("sin(u)", ("u", "v")), parse("u + v", ("u", "v"))]
    composed = compose(outer, inner)
    pt = np.array([0.3, 0.8])
    assert eval_values(composed, pt) == pytest.approx(math.sin(0.3) * 1.1 + 1)
    with pytest.raises(ValueError):
        compose(outer, inner[:1])


def test_programs_are_hashable_and_immutable():
    p = parse("x*y", VARS)
    assert hash(p) == hash(parse("x*y", VARS))
    with pytest.raises(AttributeError):
        p.variables = ("a", "b")


def test_jet_eval_batches_constant_programs():
    j = jet_eval(parse("3", VARS), np.zeros((4, 2)), 2)
    assert j.value.shape == (4,)
    assert np.all(j.value == 3.0)
