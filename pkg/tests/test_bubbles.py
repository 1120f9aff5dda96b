import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import fd_laplacian
from halfsphere.bubbles import (
    BoundaryBubble,
    InteriorBubble,
    SphereBubble,
    bubble_boundary_integral,
    bubble_volume_integral,
    fit_bubble,
    k_of,
    psi_closed,
    vertical_moment,
)
from halfsphere.errors import DomainError, FitError
from halfsphere.geometry import build_quadrature, conformal_factor, random_half_sphere_points, stereographic

Kbar = st.floats(1.0, 50.0)
Hbar = st.floats(-3.0, 3.0)
lam = st.floats(0.5, 4.0)


def test_k_constant():
    # -8 Lap U = K U^5 needs k = K / 24
    assert k_of(24.0) == 1.0


@given(lam, Kbar, Hbar)
def test_boundary_bubble_solves_limit_problem(l, K, H):
    b = BoundaryBubble.make(l, K, H)
    rng = np.random.default_rng(1)
    Y = rng.uniform(-1, 1, (30, 3)) / l
    Y[:, 2] = np.abs(Y[:, 2]) + 1e-3
    h = 1e-3 / l
    r = -8 * fd_laplacian(b.value, Y, h) - K * b.value(Y) ** 5
    assert np.max(np.abs(r)) < 1e-3 * np.max(K * b.value(Y) ** 5)
    Y[:, 2] = 0.0
    bc = -2 * b.gradient(Y)[:, 2] - H * b.value(Y) ** 3
    assert np.max(np.abs(bc)) < 1e-10 * max(1.0, np.max(b.value(Y) ** 3))


def test_interior_bubble_gradient(rng):
    b = InteriorBubble(2.0, (0.1, 0.2, 0.3), 7.0)
    Y = rng.normal(size=(20, 3))
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        assert np.allclose((b.value(Y + e) - b.value(Y - e)) / (2 * h), b.gradient(Y)[:, i], atol=1e-8)


def test_inconsistent_bubble_rejected():
    with pytest.raises(DomainError):
        BoundaryBubble(1.0, 0.5, (0.0, 0.0), 6.0, 0.0)
    with pytest.raises(DomainError):
        SphereBubble(np.array([0, 0, 1.0, 0]), 1.0, 6.0, 1.0)


def test_sphere_bubble_pulls_back_to_half_space_bubble(rng):
    q = np.array([0.0, 0.6, 0.8, 0.0])
    b = SphereBubble(q, 4.0, 10.0, 1.5)
    X = random_half_sphere_points(rng, 200)
    X = X[X @ q > -0.9]
    Y = stereographic(q, X)
    assert np.allclose(conformal_factor(Y) * b.value(X), b.to_boundary_bubble().value(Y), rtol=1e-12)


@pytest.mark.parametrize("K,H", [(6.0, 0.0), (10.0, 1.5), (3.0, -0.7)])
def test_closed_form_integrals(K, H):
    b = BoundaryBubble.make(1.0, K, H)
    vol = build_quadrature("truncated-half-ball", 96, R=2e3, scale=0.5)
    disc = build_quadrature("truncated-boundary-disc", 96, R=2e3, scale=0.5)
    assert vol.integrate(lambda Y: b.value(Y) ** 6) == pytest.approx(bubble_volume_integral(K, H), rel=1e-6)
    assert disc.integrate(lambda Y: b.value(Y) ** 4) == pytest.approx(bubble_boundary_integral(K, H), rel=1e-3)
    assert vol.integrate(lambda Y: Y[:, 2] * b.value(Y) ** 6) == pytest.approx(vertical_moment(K, H), rel=1e-2)


def test_psi_at_zero_H():
    assert psi_closed(6.0, 0.0) == 1.0


@pytest.mark.parametrize("l,H", [(1.0, 0.0), (3.0, 1.0), (2.0, -0.5)])
def test_fit_recovers_bubble(l, H):
    b = BoundaryBubble.make(l, 6.0, H, (0.2, -0.1))
    x = np.linspace(-2, 2, 21) / l
    z = np.linspace(0, 2, 11) / l
    G = np.array([[a + 0.2, c - 0.1, d] for a in x for c in x for d in z])
    fit = fit_bubble(G, b.value(G), window=1.5 / l)
    assert fit.is_bubble
    assert fit.residual < 1e-10
    assert fit.bubble.lam == pytest.approx(l, rel=1e-8)
    assert fit.bubble.Hbar == pytest.approx(H, abs=1e-8)
    assert fit.bubble.Kbar == pytest.approx(6.0, rel=1e-8)


def test_fit_refuses_window_edge_maximum():
    G = np.array([[a, 0.0, 0.0] for a in np.linspace(0, 1, 20)] + [[a, 0.0, 0.1] for a in np.linspace(0, 1, 20)])
    with pytest.raises(FitError):
        fit_bubble(G, 1 + G[:, 0], window=1.0, center_guess=np.zeros(3))
