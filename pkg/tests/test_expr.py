import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netmeas.errors import ConfigurationError, ExpressionError
from netmeas.expr import Expression, evaluate


@pytest.mark.parametrize("src, env, expected", [
    ("X1+X2", {"X1": 2, "X2": 3}, 5),
    ("2*3+4", {}, 10),
    ("2*(3+4)", {}, 14),
    ("8/4/2", {}, 1),
    ("10-4-3", {}, 3),
    ("2^3^2", {}, 512),
    ("-x^2", {"x": 3}, -9),
    ("(-x)^2", {"x": 3}, 9),
    ("2^-1", {}, 0.5),
    ("exp(0)+ln(1)+sin(0)+cos(0)", {}, 2),
    ("1.5e2 + .5", {}, 150.5),
    ("a*b/c", {"a": 6, "b": 2, "c": 4}, 3),
])
def test_values(src, env, expected):
    assert math.isclose(evaluate(src, **env), expected)


@pytest.mark.parametrize("src, pos", [("X1*", 3), ("(1+2", 4), ("1+$", 2), ("3 4", 2), ("sin 2", 4), ("", 0)])
def test_error_positions(src, pos):
    with pytest.raises(ExpressionError) as info:
        Expression(src)
    assert info.value.position == pos
    assert f"position {pos}" in str(info.value)


def test_expression_error_is_configuration_error():
    assert issubclass(ExpressionError, ConfigurationError)


def test_unknown_name():
    with pytest.raises(ExpressionError) as info:
        Expression("X1 + Y", names=["X1"])
    assert info.value.position == 5


def test_names_and_rows():
    e = Expression("b*exp(a)", names=["a", "b"])
    assert e.names == ("b", "a")
    X = np.array([[0.0, 2.0], [1.0, 1.0]])
    assert np.allclose(e.evaluate_rows(X), [2.0, math.e])


def test_constant_broadcasts_over_rows():
    assert np.array_equal(Expression("4", names=["x"]).evaluate_rows(np.zeros((3, 1))), [4, 4, 4])


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0.1, 1e3))
def test_matches_python(a, b, c):
    assert math.isclose(evaluate("a - b*c + a/c", a=a, b=b, c=c), a - b * c + a / c, rel_tol=1e-12, abs_tol=1e-9)
