import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halfsphere.bubbles import BoundaryBubble
from halfsphere.diagnostics import (
    ChartFunction,
    as_chart_function,
    boundary_term_limit,
    chart_sample,
    critical_prefactors,
    kazdan_warner_check,
    pohozaev_identity,
    radial_derivative,
    singular_plus_regular,
)
from halfsphere.errors import DomainError, UsageError
from halfsphere.fields import as_field
from halfsphere.geometry import inverse_stereographic

KTILDE = "2 - x3/(1 + x4)"


def test_prefactors_vanish_at_critical_exponent():
    assert critical_prefactors(5.0) == (0.0, 0.0)


@settings(max_examples=15)
@given(st.floats(0.5, 4.0), st.floats(-2.0, 2.0), st.floats(0.3, 2.0))
def test_balance_on_exact_bubbles(lam, H, sigma):
    b = BoundaryBubble.make(lam, 6.0, H)
    rep = pohozaev_identity(b, 6.0, H, 5.0, sigma, resolution=40)
    assert rep.relative_imbalance < 1e-8


def test_balance_terms_are_nontrivial():
    b = BoundaryBubble.make(2.0, 6.0, 1.0)
    rep = pohozaev_identity(b, 6.0, 1.0, 5.0, 1.0)
    assert abs(rep.rhs_B) > 0.1 and abs(rep.rhs_Kflux) > 0.01 and abs(rep.rhs_Hedge) > 0.1
    # the opposite sign of the hemisphere term would not balance
    assert abs(rep.imbalance + 2 * rep.rhs_B) > 0.1


def test_balance_with_variable_coefficients():
    """u = exact solution for K(y) chosen to make -8 Lap u = K u^p hold pointwise."""
    p = 4.0
    lam = 1.5
    b = BoundaryBubble.make(lam, 6.0, 0.0)
    # -8 Lap U = 6 U^5 = (6 U^{5-p}) U^p, and dU/dy3 = 0 on y3 = 0
    K = ChartFunction(lambda Y: 6.0 * b.value(Y) ** (5 - p))
    rep = pohozaev_identity(b, K, 0.0, p, 1.0, resolution=48)
    assert abs(rep.rhs_gradK) > 1e-2
    assert rep.relative_imbalance < 1e-6


def test_positivity_required():
    with pytest.raises(DomainError):
        pohozaev_identity(lambda Y: Y[:, 0], 6.0, 0.0, 5.0, 1.0)
    with pytest.raises(UsageError):
        pohozaev_identity(BoundaryBubble.make(1.0), 6.0, 0.0, 5.0, -1.0)


@pytest.mark.parametrize(
    "a,b,gb,expected",
    [
        (1.0, lambda Y: 1.0, lambda Y: 0.0, -np.pi),
        (2.0, lambda Y: 1 + Y[:, 0], lambda Y: np.array([1.0, 0.0, 0.0]), -2 * np.pi),
        (
            2.0,
            lambda Y: 1 + Y[:, 2] + Y[:, 0] ** 2,
            lambda Y: np.column_stack([2 * Y[:, 0], 0 * Y[:, 0], 1 + 0 * Y[:, 0]]),
            -2 * np.pi,
        ),
    ],
)
def test_boundary_term_limit(a, b, gb, expected):
    lim = boundary_term_limit(singular_plus_regular(a, b, gb), a, float(np.atleast_1d(b(np.zeros((1, 3))))[0]))
    assert lim.expected == pytest.approx(expected)
    assert lim.relative_error < 1e-2


def test_boundary_term_limit_checks_input():
    h = singular_plus_regular(1.0, lambda Y: 1.0)
    with pytest.raises(UsageError):
        boundary_term_limit(h, 1.0, 1.0, sigmas=(0.1, 0.2))


def test_sphere_field_pullback_weight():
    f = as_chart_function("6 + x3", tau=0.2)
    Y = np.array([[0.3, 0.1, 0.2]])
    W = np.sqrt(2 / (1 + np.sum(Y ** 2)))
    x = inverse_stereographic([0, 0, 1, 0], Y)
    assert f.value(Y)[0] == pytest.approx(W ** 0.2 * (6 + x[0, 2]))


def test_radial_derivative_matches_differences(rng):
    K = as_field("6 + x1*x3 - x4^2 + x2", "half-sphere")
    q = np.array([0.0, 0.0, 1.0, 0.0])
    Y = np.abs(rng.normal(size=(20, 3)))
    h = 1e-6
    f = lambda Y: K.value(inverse_stereographic(q, Y))
    fd = (f(Y * (1 + h)) - f(Y * (1 - h))) / (2 * h)
    assert np.allclose(radial_derivative(K, q, Y), fd, atol=1e-6)


def test_ktilde_closed_form_radial_derivative():
    # chart form 2 + (|x|^2 - 1)/|x + e3|^2 with the chart at e3
    Y = chart_sample(100)
    K = as_field(KTILDE, "half-sphere")
    s = np.sum(Y * Y, axis=1)
    D = Y[:, 0] ** 2 + Y[:, 1] ** 2 + (Y[:, 2] + 1) ** 2
    chart = 2 + (s - 1) / D
    x = inverse_stereographic([0, 0, 1, 0], Y)
    assert np.allclose(K.value(x), chart, atol=1e-12)
    expected = (2 * s * Y[:, 2] + 4 * s + 2 * Y[:, 2]) / D ** 2
    assert np.allclose(radial_derivative(K, [0, 0, 1, 0], Y), expected, atol=1e-9)


@pytest.mark.parametrize(
    "K,H,verdict",
    [
        (KTILDE, "0", "obstructed"),
        ("2 + x3", "0", "obstructed"),
        ("6", "0", "not obstructed"),
        ("6 + x4", "0", "not obstructed"),
        ("6 + x1*x2", "0", "not obstructed"),
        (KTILDE, "x1", "not applicable"),
        (KTILDE, "0.5", "not applicable"),
    ],
)
def test_obstruction_verdicts(K, H, verdict):
    assert kazdan_warner_check(K, H).verdict == verdict
