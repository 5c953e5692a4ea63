import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from underact.errors import EvaluationError, ParseError
from underact.expr import parse_expression


@pytest.mark.parametrize("src, env, expected", [
    ("1 + 0.1*y^2", {"y": 2.0}, 1.4),
    ("cos(x1)", {"x1": 0.0}, 1.0),
    ("2^3^2", {}, 512.0),
    ("-2^2", {}, -4.0),
    ("(-2)^2", {}, 4.0),
    ("2*-3", {}, -6.0),
    ("8/4/2", {}, 1.0),
    ("1 - 2 - 3", {}, -4.0),
    ("pi", {}, math.pi),
    ("e^1", {}, math.e),
    ("sqrt(abs(-16)) + ln(e)", {}, 5.0),
    ("1.5e2 + .5", {}, 150.5),
    ("x1*x2 + v1 - v2", {"x1": 2, "x2": 3, "v1": 1, "v2": 4}, 3.0),
])
def test_evaluates(src, env, expected):
    assert parse_expression(src)(**env) == pytest.approx(expected, rel=1e-15)


def test_vectorised():
    e = parse_expression("sin(y)^2 + cos(y)^2")
    y = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(e(y=y), np.ones(7), atol=1e-15)


@pytest.mark.parametrize("src, offset", [
    ("1 +", 3), ("1 + * 2", 4), ("foo(1)", 0), ("z + 1", 0), ("(1 + 2", 6),
    ("1 $ 2", 2), ("sin 2", 4), ("2 3", 2), ("", 0),
])
def test_parse_error_offsets(src, offset):
    with pytest.raises(ParseError) as info:
        parse_expression(src)
    assert info.value.offset == offset


@pytest.mark.parametrize("src, env, offset", [
    ("1/(y-1)", {"y": 1.0}, 1), ("ln(y)", {"y": 0.0}, 0), ("sqrt(y)", {"y": -1.0}, 0),
    ("y^0.5", {"y": -4.0}, 1), ("x1 + 1", {}, 0),
])
def test_evaluation_errors(src, env, offset):
    with pytest.raises(EvaluationError) as info:
        parse_expression(src)(**env)
    assert info.value.offset == offset


def test_variables():
    assert parse_expression("x1*sin(x2) + pi").variables() == {"x1", "x2"}


_sym = {"x1": sp.Symbol("x1", real=True), "x2": sp.Symbol("x2", real=True)}
_srcs = ["x1^3*x2 - 2*x2", "sin(x1)*exp(x2)", "x1/(2 + x2^2)", "sqrt(1 + x1^2)*cos(x2)",
         "ln(3 + x1) - tan(x2/4)", "x1^x2", "abs(x1 - 0.1)*x2"]


@pytest.mark.parametrize("src", _srcs)
@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.2, 1.5), b=st.floats(-1.5, 1.5))
def test_symbolic_derivative_matches_sympy(src, a, b):
    e = parse_expression(src)
    ref = sp.sympify(src.replace("^", "**").replace("ln", "log"), locals=_sym)
    for var in ("x1", "x2"):
        want = float(sp.diff(ref, _sym[var]).subs({_sym["x1"]: a, _sym["x2"]: b}))
        got = float(e.diff(var)(x1=a, x2=b))
        assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-9, 9), min_size=1, max_size=6),
       st.lists(st.sampled_from(["+", "-", "*"]), min_size=5, max_size=5))
def test_integer_arithmetic_agrees_with_python(nums, ops):
    src = str(nums[0])
    for n, op in zip(nums[1:], ops):
        src += f" {op} {n}"
    assert parse_expression(src)() == eval(src)  # noqa: S307 - integers and + - * only
