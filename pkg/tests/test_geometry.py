import numpy as np
import pytest
from hypothesis import given, strategies as st

from halfsphere.errors import DomainError, UsageError
from halfsphere.geometry import (
    HalfSpacePoint,
    SpherePoint,
    boundary_frame,
    build_quadrature,
    cap_F,
    conformal_factor,
    fibonacci_sphere,
    geodesic_distance,
    greens_function,
    greens_function_chart,
    inverse_stereographic,
    pullback_iota,
    stereographic,
)

angle = st.floats(0.0, 2 * np.pi)
height = st.floats(-1.0, 1.0)


def _bpoint(z, a):
    r = np.sqrt(1 - z * z)
    return np.array([r * np.cos(a), r * np.sin(a), z, 0.0])


def _hpoint(u, v, w, s):
    x = np.array([u, v, w, abs(s)])
    return x / np.linalg.norm(x)


coord = st.floats(-1.0, 1.0).filter(lambda c: abs(c) > 1e-3)


@given(height, angle, coord, coord, coord, coord)
def test_chart_round_trip(z, a, u, v, w, s):
    q = _bpoint(z, a)
    x = _hpoint(u, v, w, s)
    if x @ q < -0.99:
        return
    y = stereographic(q, x)
    assert y[2] >= -1e-12
    assert np.allclose(inverse_stereographic(q, y), x, atol=1e-9)


@given(height, angle)
def test_frame_is_orthonormal(z, a):
    q = _bpoint(z, a)
    F = boundary_frame(q)
    full = np.vstack([q, F])
    assert np.allclose(full @ full.T, np.eye(4), atol=1e-12)
    assert np.allclose(F[:2, 3], 0.0)


def test_centre_maps_to_origin():
    q = np.array([0.6, 0.0, 0.8, 0.0])
    assert np.allclose(stereographic(q, q), 0.0)
    assert conformal_factor(np.zeros(3))[0] == pytest.approx(np.sqrt(2.0))


def test_pole_rejected():
    q = np.array([0.0, 0.0, 1.0, 0.0])
    with pytest.raises(DomainError):
        stereographic(q, -q)
    with pytest.raises(DomainError):
        greens_function(q, q)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.01, 3))
def test_green_chart_matches_ambient(a, b, c):
    q = np.array([0.0, 1.0, 0.0, 0.0])
    y = np.array([a, b, c])
    assert greens_function(q, inverse_stereographic(q, y)) == pytest.approx(greens_function_chart(y)[0], rel=1e-10)


@pytest.mark.parametrize(
    "region,kw,total",
    [
        ("half-sphere", {}, np.pi ** 2),
        ("boundary-sphere", {}, 4 * np.pi),
        ("cap", {"theta": 1.0}, 4 * np.pi * cap_F(1.0)),
        ("surface-cap", {"theta": np.pi / 2}, 2 * np.pi),
        ("truncated-half-ball", {"R": 2.0}, 2 * np.pi * 8 / 3),
        ("truncated-boundary-disc", {"R": 2.0}, 4 * np.pi),
    ],
)
def test_quadrature_totals(region, kw, total):
    rule = build_quadrature(region, 24, **kw)
    assert rule.total == pytest.approx(total, rel=1e-10)


def test_centered_rules_keep_total():
    q = fibonacci_sphere(5)[2]
    assert build_quadrature("half-sphere", 20, center=q, concentration=30.0).total == pytest.approx(np.pi ** 2, rel=1e-9)
    assert build_quadrature("boundary-sphere", 20, center=q, concentration=30.0).total == pytest.approx(4 * np.pi, rel=1e-9)


def test_half_sphere_second_moment():
    # int x4^2 over S^3_+ is a quarter of the volume
    rule = build_quadrature("half-sphere", 20)
    assert rule.integrate(lambda X: X[:, 3] ** 2) == pytest.approx(np.pi ** 2 / 4, rel=1e-10)


def test_pullback_preserves_critical_norm():
    # int_{S^3_+} 1 = int_{R^3_+} W^6
    q = np.array([1.0, 0.0, 0.0, 0.0])
    iv = pullback_iota(q, lambda X: np.ones(len(X)))
    rule = build_quadrature("truncated-half-ball", 64, R=1e3, scale=1.0)
    assert rule.integrate(lambda Y: iv(Y) ** 6) == pytest.approx(np.pi ** 2, rel=1e-6)


def test_fibonacci_points_on_boundary():
    X = fibonacci_sphere(200)
    assert np.allclose(np.linalg.norm(X, axis=1), 1.0)
    assert np.all(X[:, 3] == 0.0)


def test_geodesic_distance_antipodal():
    q = np.array([0.0, 0.0, 1.0, 0.0])
    assert geodesic_distance(q, -q) == pytest.approx(np.pi)


def test_point_types_validate():
    with pytest.raises(DomainError):
        SpherePoint(np.array([1.0, 1.0, 0.0, 0.0]))
    with pytest.raises(DomainError):
        HalfSpacePoint(np.array([0.0, 0.0, -1.0]))
    with pytest.raises(UsageError):
        build_quadrature("torus", 8)
