import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convexo.errors import (
    DimensionError,
    EvalError,
    ExprSyntaxError,
    UnknownIdentifier,
)
from convexo.expr import EvalEnv, evaluate, parse, to_source


def ev(src, dims=(1, 1), x=(0.0,), u=(0.0,), t=0.0):
    return float(evaluate(parse(src, dims), EvalEnv(np.atleast_1d(x), np.atleast_1d(u), t)))


def test_basic_arithmetic():
    assert ev("x1^2 - u1^2", x=2.0, u=1.0) == 3.0
    assert ev("x1^2 - u1^2", x=0.5, u=1.0) == -0.75


def test_piecewise_branches():
    src = "if(x1 >= 0, (x1-1)^2, (x1+1)^2)"
    assert ev(src, dims=(1, 0), u=(), x=0.0) == 1.0
    assert ev(src, dims=(1, 0), u=(), x=2.0) == 1.0
    assert ev(src, dims=(1, 0), u=(), x=-2.0) == 1.0
    assert ev(src, dims=(1, 0), u=(), x=-0.5) == 0.25


def test_removable_singularity_guard():
    assert ev("x1 * sin(1/x1) + u1", x=0.0, u=0.0) == 0.0
    # general zero-factor absorption, either side
    assert ev("sin(1/x1) * x1", x=0.0) == 0.0
    val = ev("x1 * sin(1/x1)", dims=(1, 0), u=(), x=0.5)
    assert val == pytest.approx(0.5 * math.sin(2.0))


def test_division_by_zero_errors_outside_guard():
    with pytest.raises(EvalError):
        ev("1 / x1", x=0.0)
    with pytest.raises(EvalError):
        ev("u1 + 1/x1", x=0.0, u=1.0)


def test_precedence_and_associativity():
    assert ev("2 + 3 * 4") == 14.0
    assert ev("-2^2") == -4.0
    assert ev("(-2)^2") == 4.0
    assert ev("2^3^2") == 512.0
    assert ev("(2 + 3) * 4") == 20.0
    assert ev("2 - 3 - 4") == -5.0
    assert ev("12 / 3 / 2") == 2.0


def test_power_domain_rules():
    assert ev("(-2)^3") == -8.0
    with pytest.raises(EvalError):
        ev("(-2)^0.5")
    with pytest.raises(EvalError):
        ev("(0 - 2)^(1/3)")


def test_log_sqrt_domains():
    with pytest.raises(EvalError):
        ev("log(-1)")
    with pytest.raises(EvalError):
        ev("sqrt(0 - 1)")
    assert ev("log(exp(1))") == pytest.approx(1.0)
    assert ev("sqrt(9)") == 3.0


def test_untaken_branch_is_guarded():
    assert ev("if(x1 > 0, 1/x1, 5)", x=0.0) == 5.0
    with pytest.raises(EvalError):
        ev("if(x1 >= 0, 1/x1, 5)", x=0.0)


def test_functions():
    assert ev("min(3, 1, 2)") == 1.0
    assert ev("max(3, 1, 2)") == 3.0
    assert ev("sign(0 - 7)") == -1.0
    assert ev("sign(0)") == 0.0
    assert ev("abs(0 - 2.5)") == 2.5
    assert ev("cos(0)") == 1.0
    assert ev("t + 1", t=2.0) == 3.0


def test_comparison_operators():
    for op, expected in ((">=", 1.0), (">", 0.0), ("<=", 1.0), ("<", 0.0), ("==", 1.0)):
        assert ev(f"if(x1 {op} 0, 1, 0)", x=0.0) == expected


def test_parse_errors():
    with pytest.raises(ExprSyntaxError):
        parse("", (1, 1))
    with pytest.raises(ExprSyntaxError):
        parse("1 +", (1, 1))
    with pytest.raises(ExprSyntaxError) as err:
        parse("(1 + 2", (1, 1))
    assert err.value.position == 6
    with pytest.raises(UnknownIdentifier):
        parse("y1 + 1", (1, 1))
    with pytest.raises(UnknownIdentifier):
        parse("foo(1)", (1, 1))
    with pytest.raises(DimensionError):
        parse("x2", (1, 0))
    with pytest.raises(DimensionError):
        parse("u1", (1, 0))
    with pytest.raises(ExprSyntaxError):
        parse("if(x1, 1, 2)", (1, 0))  # missing comparison


def test_vectorised_evaluation():
    e = parse("x1^2 - u1^2", (1, 1))
    xs = np.array([[0.0, 1.0, 2.0]])
    us = np.array([[1.0, 1.0, 1.0]])
    out = evaluate(e, EvalEnv(xs, us))
    np.testing.assert_allclose(out, [-1.0, 0.0, 3.0])


def test_vectorised_guard():
    e = parse("x1 * sin(1/x1)", (1, 0))
    xs = np.array([[0.0, 2 / math.pi]])
    out = evaluate(e, EvalEnv(xs, np.empty((0, 2))))
    np.testing.assert_allclose(out, [0.0, 2 / math.pi * math.sin(math.pi / 2)])


# ---------------------------------------------------------------------------
# Round-trip property
# ---------------------------------------------------------------------------

_numbers = st.one_of(
    st.integers(min_value=0, max_value=99).map(float),
    st.floats(min_value=0.0, max_value=1e3, allow_nan=False, allow_infinity=False),
)


def _leaf():
    return st.one_of(
        _numbers.map(lambda v: f"{v!r}"),
        st.sampled_from(["x1", "x2", "u1", "t"]),
    )


def _combine(children):
    binop = st.tuples(children, st.sampled_from(["+", "-", "*", "/", "^"]), children).map(
        lambda t: f"({t[0]} {t[1]} {t[2]})"
    )
    neg = children.map(lambda s: f"(-{s})")
    call1 = st.tuples(st.sampled_from(["sin", "cos", "exp", "abs", "sign"]), children).map(
        lambda t: f"{t[0]}({t[1]})"
    )
    call2 = st.tuples(st.sampled_from(["min", "max"]), children, children).map(
        lambda t: f"{t[0]}({t[1]}, {t[2]})"
    )
    cond = st.tuples(
        children, st.sampled_from([">=", ">", "<=", "<", "=="]), children, children, children
    ).map(lambda t: f"if({t[0]} {t[1]} {t[2]}, {t[3]}, {t[4]})")
    return st.one_of(binop, neg, call1, call2, cond)


expr_sources = st.recursive(_leaf(), _combine, max_leaves=12)


@settings(max_examples=120, deadline=None)
@given(expr_sources)
def test_pretty_print_round_trip(src):
    ast = parse(src, (2, 1))
    printed = to_source(ast)
    assert parse(printed, (2, 1)) == ast


@settings(max_examples=40, deadline=None)
@given(expr_sources)
def test_evaluation_is_deterministic(src):
    ast = parse(src, (2, 1))
    env = EvalEnv(np.array([0.7, -1.3]), np.array([0.2]), 0.9)
    first = evaluate(ast, env, strict=False)
    second = evaluate(ast, env, strict=False)
    np.testing.assert_array_equal(first, second)
