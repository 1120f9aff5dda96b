import numpy as np
import pytest
from hypothesis import given, strategies as st

from halfsphere.errors import ExpressionNameError, ParseError, PositivityError
from halfsphere.fields import (
    FieldSpec,
    as_field,
    differentiate,
    evaluate,
    normal_derivative,
    parse_expression,
    to_string,
)
from halfsphere.geometry import random_half_sphere_points

EXPRS = [
    "6+x3-2*x3*x4",
    "2-x3/(1+x4)",
    "exp(x1)*cos(x2)+sqrt(2+x3)",
    "(1+x1^2)^-1",
    "atan(x2*x3)-log(3+x4)",
    "-x1^2^1",
]


@pytest.mark.parametrize("text", EXPRS)
def test_print_round_trip(text):
    assert to_string(parse_expression(text)).replace(" ", "") == text


@pytest.mark.parametrize("text", EXPRS)
def test_derivatives_match_differences(text, rng):
    ast = parse_expression(text)
    X = random_half_sphere_points(rng, 50) * 0.5
    h = 1e-6
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        fd = (evaluate(ast, X + e) - evaluate(ast, X - e)) / (2 * h)
        assert np.allclose(evaluate(differentiate(ast, i), X), fd, atol=1e-6, rtol=1e-6)


@given(st.integers(-5, 5), st.integers(-5, 5), st.floats(-3, 3))
def test_linear_fields(a, b, c):
    f = as_field(f"{a}*x1 + {b}*x3 + {c!r}", "half-sphere")
    X = np.array([[0.6, 0.0, 0.8, 0.0]])
    assert f.value(X)[0] == pytest.approx(0.6 * a + 0.8 * b + c, abs=1e-12)
    assert np.allclose(f.gradient(X)[0], [a, 0, b, 0])


def test_parse_error_offset():
    with pytest.raises(ParseError) as e:
        parse_expression("x1 + * 2")
    assert e.value.offset == 5
    with pytest.raises(ParseError):
        parse_expression("")
    with pytest.raises(ParseError):
        parse_expression("(x1")


def test_unknown_name():
    with pytest.raises(ExpressionNameError) as e:
        parse_expression("x1 + y")
    assert e.value.name == "y" and e.value.offset == 5


def test_boundary_field_ignores_x4():
    H = as_field("x1 + x4", "boundary")
    X = np.array([[1.0, 0.0, 0.0, 0.0], [0.6, 0.0, 0.0, 0.8]])
    assert np.allclose(H.value(X), [1.0, 0.6])
    assert H.gradient(X)[0, 3] == 0.0
    assert not H.is_constant
    assert as_field("3 + x4", "boundary").is_constant
    assert not as_field("3 + x4", "half-sphere").is_constant


def test_normal_derivative_is_outward():
    K = as_field("6 + x4", "half-sphere")
    assert normal_derivative(K, [0, 0, 1, 0]) == pytest.approx(-1.0)


def test_positivity_witness():
    with pytest.raises(PositivityError) as e:
        FieldSpec.from_expression("x3", positive=True)
    assert e.value.value <= 0
    assert e.value.witness is not None


def test_sampled_field_reproduces_smooth_data(rng):
    X = random_half_sphere_points(rng, 4000)
    f = lambda X: 6 + X[:, 2] + 0.5 * X[:, 0] * X[:, 3]
    F = FieldSpec.from_samples(X, f(X))
    Q = random_half_sphere_points(rng, 20)
    assert np.allclose(F.value(Q), f(Q), atol=5e-3)
