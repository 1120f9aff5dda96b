"""Coordinates, the stereographic chart, Green's function and quadrature.

Points of S^3 are ambient 4-vectors; the half-sphere is x4 >= 0 and its
boundary is the 2-sphere x4 = 0.  Arrays of points have shape (m, 4).
Chart coordinates y live in the closed upper half-space y3 >= 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from .errors import DomainError, UsageError

UNIT_TOL = 1e-12


@dataclass(frozen=True)
class SpherePoint:
    """A point of S^3 in ambient coordinates."""

    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(4)
        if abs(np.linalg.norm(x) - 1.0) > UNIT_TOL * 10:
            raise DomainError(f"point {x} is not on the unit sphere")
        object.__setattr__(self, "x", x)

    @property
    def on_boundary(self) -> bool:
        return abs(self.x[3]) <= UNIT_TOL

    @property
    def in_half_sphere(self) -> bool:
        return self.x[3] >= -UNIT_TOL


@dataclass(frozen=True)
class HalfSpacePoint:
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(3)
        if y[2] < -UNIT_TOL:
            raise DomainError("half-space point must have y3 >= 0")
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class CapSpec:
    """Spherical cap {x_{n+1} >= cos theta}."""

    theta: float

    def __post_init__(self):
        if not (1e-6 <= self.theta <= np.pi - 1e-6):
            raise DomainError("cap angle must lie in [1e-6, pi - 1e-6]")

    @property
    def mean_curvature(self) -> float:
        return float(np.cos(self.theta) / np.sin(self.theta))


@dataclass
class QuadratureRule:
    """Nodes and positive weights.  ``dim`` is 4 for sphere nodes, 3 for chart nodes."""

    nodes: np.ndarray
    weights: np.ndarray
    region: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.nodes.shape[0] != self.weights.shape[0]:
            raise UsageError("nodes and weights differ in length")
        if np.any(self.weights <= 0):
            raise UsageError("quadrature weights must be positive")

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


# ---------------------------------------------------------------------------
# points and frames


def as_points(x) -> np.ndarray:
    """Coerce to an (m, d) float array; SpherePoint is accepted."""
    if isinstance(x, SpherePoint):
        x = x.x
    elif isinstance(x, HalfSpacePoint):
        x = x.y
    return np.atleast_2d(np.asarray(x, dtype=float))


def _vec(q) -> np.ndarray:
    if isinstance(q, SpherePoint):
        return q.x
    return np.asarray(q, dtype=float).reshape(4)


def check_boundary_point(q) -> np.ndarray:
    q = _vec(q)
    if abs(np.linalg.norm(q) - 1.0) > 1e-10 or abs(q[3]) > 1e-10:
        raise DomainError(f"{q} is not a point of the boundary 2-sphere")
    return q


def boundary_point(v) -> np.ndarray:
    """Normalize a 3-vector (or 4-vector with x4 ignored) to a boundary point."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(4)
    out[:3] = v[:3]
    n = np.linalg.norm(out)
    if n == 0:
        raise DomainError("zero vector has no direction")
    return out / n


def boundary_frame(q) -> np.ndarray:
    """Orthonormal frame (f1, f2, e4) of the complement of q, as rows.

    f1, f2 span the tangent plane of the boundary 2-sphere at q.  The
    construction is deterministic so charts are reproducible.
    """
    q = check_boundary_point(q)
    k = int(np.argmin(np.abs(q[:3])))
    e = np.zeros(4)
    e[k] = 1.0
    f1 = e - np.dot(e, q) * q
    f1 /= np.linalg.norm(f1)
    f2 = np.zeros(4)
    f2[:3] = np.cross(q[:3], f1[:3])
    e4 = np.array([0.0, 0.0, 0.0, 1.0])
    return np.vstack([f1, f2, e4])


def tangent_basis(q) -> np.ndarray:
    """The two tangent vectors of the boundary 2-sphere at q (rows)."""
    return boundary_frame(q)[:2]


def geodesic_distance(x, y) -> np.ndarray:
    x = as_points(x)
    y = as_points(y)
    c = np.clip(np.sum(x * y, axis=1), -1.0, 1.0)
    out = np.arccos(c)
    return out if out.size > 1 else float(out[0])


def fibonacci_sphere(m: int) -> np.ndarray:
    """m nearly uniform points on the boundary 2-sphere (ambient 4-vectors)."""
    i = np.arange(m) + 0.5
    z = 1.0 - 2.0 * i / m
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = np.pi * (1.0 + 5.0 ** 0.5) * i
    out = np.zeros((m, 4))
    out[:, 0] = r * np.cos(phi)
    out[:, 1] = r * np.sin(phi)
    out[:, 2] = z
    return out


def random_boundary_points(rng: np.random.Generator, m: int) -> np.ndarray:
    v = rng.normal(size=(m, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.hstack([v, np.zeros((m, 1))])


def random_half_sphere_points(rng: np.random.Generator, m: int) -> np.ndarray:
    v = rng.normal(size=(m, 4))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    v[:, 3] = np.abs(v[:, 3])
    return v


# ---------------------------------------------------------------------------
# stereographic chart


def stereographic(q, x) -> np.ndarray:
    """Chart pi_q with pole -q: q goes to the origin, the half-sphere to y3 >= 0.

    Returns an array of shape (m, 3) (or (3,) for a single point).
    """
    q = check_boundary_point(q)
    single = np.ndim(x) == 1 or isinstance(x, SpherePoint)
    X = as_points(x)
    F = boundary_frame(q)
    a = X @ q
    if np.any(1.0 + a <= UNIT_TOL):
        raise DomainError("stereographic projection undefined at the pole -q")
    y = (X @ F.T) / (1.0 + a)[:, None]
    return y[0] if single else y


def inverse_stereographic(q, y) -> np.ndarray:
    q = check_boundary_point(q)
    single = np.ndim(y) == 1 or isinstance(y, HalfSpacePoint)
    Y = as_points(y)
    F = boundary_frame(q)
    s = np.sum(Y * Y, axis=1)
    a = (1.0 - s) / (1.0 + s)
    b = 2.0 * Y / (1.0 + s)[:, None]
    X = a[:, None] * q[None, :] + b @ F
    return X[0] if single else X


def conformal_factor(y) -> np.ndarray:
    """W(y) = (2 / (1 + |y|^2))^{1/2}, the n = 3 weight of the pullback."""
    Y = as_points(y)
    return np.sqrt(2.0 / (1.0 + np.sum(Y * Y, axis=1)))


def pullback_iota(q, v: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    """Return y -> W(y) v(pi_q^{-1}(y)) as a vectorized callable on (m, 3) arrays."""
    q = check_boundary_point(q)

    def iv(y):
        Y = as_points(y)
        return conformal_factor(Y) * np.asarray(v(inverse_stereographic(q, Y)), dtype=float)

    return iv


def greens_function(q, x) -> np.ndarray:
    """G_q(x) = ((1 + |y|^2)/2)^{1/2} / |y| with y = pi_q(x).

    Written in ambient form this is (1 - q.x)^{-1/2}.
    """
    q = check_boundary_point(q)
    X = as_points(x)
    d = 1.0 - X @ q
    if np.any(d <= UNIT_TOL):
        raise DomainError("Green's function evaluated at its pole")
    out = d ** -0.5
    return out if out.size > 1 else float(out[0])


def greens_function_chart(y) -> np.ndarray:
    Y = as_points(y)
    s = np.sum(Y * Y, axis=1)
    if np.any(s == 0):
        raise DomainError("Green's function evaluated at its pole")
    return np.sqrt((1.0 + s) / 2.0) / np.sqrt(s)


# ---------------------------------------------------------------------------
# quadrature


def cap_F(theta: float, n: int = 3) -> float:
    """F(theta) = int_0^theta sin^{n-1}(s) ds."""
    val, _ = quad(lambda s: np.sin(s) ** (n - 1), 0.0, theta, epsabs=1e-14, epsrel=1e-13, limit=200)
    return float(val)


def _gl(n: int, a: float, b: float):
    x, w = leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def _s2_polar_rule(n: int, cos_lo: float = -1.0, cos_hi: float = 1.0, n_az: Optional[int] = None):
    """Rule on {cos_lo <= z <= cos_hi} of the unit 2-sphere, as 3-vectors."""
    n_az = n_az or 2 * n
    z, wz = _gl(n, cos_lo, cos_hi)
    ph = 2.0 * np.pi * np.arange(n_az) / n_az
    wp = np.full(n_az, 2.0 * np.pi / n_az)
    Z, P = np.meshgrid(z, ph, indexing="ij")
    r = np.sqrt(np.maximum(0.0, 1.0 - Z ** 2))
    pts = np.stack([r * np.cos(P), r * np.sin(P), Z], axis=-1).reshape(-1, 3)
    w = np.outer(wz, wp).ravel()
    return pts, w


def _clustered_angle(n: int, upper: float, concentration: float):
    """Composite Gauss nodes in alpha on [0, upper], graded towards 0.

    Panels double in length from about 1/(4 g) up to ``upper``, which
    resolves profiles of width ~1/g while staying exact-ish for smooth
    integrands over the whole range.
    """
    g = max(float(concentration), 1.0)
    edges = [upper]
    h = upper / 2.0
    while h > 0.25 / g:
        edges.append(h)
        h /= 2.0
    edges.append(0.0)
    edges = edges[::-1]
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = _gl(n, a, b)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def _half_sphere_rule(n: int, theta: float):
    # x4 = cos(chi), chi in [0, theta]; measure sin^2(chi) dchi dsigma_2
    chi, wc = _gl(2 * n, 0.0, theta)
    pts2, w2 = _s2_polar_rule(n)
    s = np.sin(chi)
    X = np.concatenate(
        [np.hstack([np.sin(c) * pts2, np.full((len(w2), 1), np.cos(c))]) for c in chi]
    )
    W = np.concatenate([wc[i] * s[i] ** 2 * w2 for i in range(len(chi))])
    return X, W


def _centered_half_sphere_rule(q, n: int, concentration: float):
    q = check_boundary_point(q)
    F = boundary_frame(q)
    alpha, wa = _clustered_angle(n, np.pi, concentration)
    om, wo = _s2_polar_rule(n, 0.0, 1.0)  # omega3 >= 0 is the x4 >= 0 side
    omA = om @ F
    X = np.concatenate([np.cos(a) * q[None, :] + np.sin(a) * omA for a in alpha])
    W = np.concatenate([wa[i] * np.sin(alpha[i]) ** 2 * wo for i in range(len(alpha))])
    keep = W > 0
    return X[keep], W[keep]


def _centered_boundary_rule(q, n: int, concentration: float):
    q = check_boundary_point(q)
    F = boundary_frame(q)
    alpha, wa = _clustered_angle(n, np.pi, concentration)
    ph = 2.0 * np.pi * np.arange(2 * n) / (2 * n)
    wp = np.full(2 * n, np.pi / n)
    X = []
    W = []
    for a, w in zip(alpha, wa):
        d = np.cos(ph)[:, None] * F[0] + np.sin(ph)[:, None] * F[1]
        X.append(np.cos(a) * q[None, :] + np.sin(a) * d)
        W.append(w * np.sin(a) * wp)
    X = np.concatenate(X)
    W = np.concatenate(W)
    keep = W > 0
    return X[keep], W[keep]


def _half_ball_rule(n: int, R: float, scale: float):
    s_hi = np.arctan(R / scale)
    s, ws = _gl(3 * n, 0.0, s_hi)
    r = scale * np.tan(s)
    wr = ws * scale / np.cos(s) ** 2
    dirs, wd = _s2_polar_rule(n, 0.0, 1.0)
    X = np.concatenate([ri * dirs for ri in r])
    W = np.concatenate([wr[i] * r[i] ** 2 * wd for i in range(len(r))])
    return X, W


def _disc_rule(n: int, R: float, scale: float):
    s_hi = np.arctan(R / scale)
    s, ws = _gl(3 * n, 0.0, s_hi)
    r = scale * np.tan(s)
    wr = ws * scale / np.cos(s) ** 2
    m = 2 * n
    ph = 2.0 * np.pi * np.arange(m) / m
    X = np.concatenate([np.stack([ri * np.cos(ph), ri * np.sin(ph), np.zeros(m)], axis=1) for ri in r])
    W = np.concatenate([np.full(m, wr[i] * r[i] * 2.0 * np.pi / m) for i in range(len(r))])
    return X, W


REGIONS = (
    "half-sphere",
    "boundary-sphere",
    "cap",
    "surface-cap",
    "truncated-half-ball",
    "truncated-boundary-disc",
)


def build_quadrature(
    region: str,
    resolution: int,
    *,
    theta: Optional[float] = None,
    R: Optional[float] = None,
    scale: float = 1.0,
    center=None,
    concentration: float = 1.0,
) -> QuadratureRule:
    """Product Gauss rules on the supported regions.

    region
        ``half-sphere``  S^3_+ (total pi^2).  With ``center`` (a boundary
        point) the polar axis is put at that point and nodes cluster with
        the given ``concentration``; use this for concentrated bubbles.
        ``boundary-sphere``  the 2-sphere x4 = 0 (total 4 pi); ``center``
        and ``concentration`` work as above.
        ``cap``  the cap {x4 >= cos theta} of S^3 (total 4 pi F(theta)).
        ``surface-cap``  the cap {z >= cos theta} of the unit 2-sphere in R^3
        (3-vector nodes); theta = pi/2 is the upper hemisphere.
        ``truncated-half-ball``  {|y| < R, y3 >= 0} in the chart, radial
        nodes r = scale * tan(s).
        ``truncated-boundary-disc``  {|y'| < R, y3 = 0}.
    """
    if region not in REGIONS:
        raise UsageError(f"unsupported region {region!r}; choose from {REGIONS}")
    n = int(resolution)
    if n < 4:
        raise UsageError("resolution must be at least 4")
    if region == "half-sphere":
        if center is not None:
            X, W = _centered_half_sphere_rule(center, n, concentration)
        else:
            X, W = _half_sphere_rule(n, np.pi / 2.0)
    elif region == "boundary-sphere":
        if center is not None:
            X, W = _centered_boundary_rule(center, n, concentration)
        else:
            P, W = _s2_polar_rule(n)
            X = np.hstack([P, np.zeros((len(W), 1))])
    elif region == "cap":
        if theta is None:
            raise UsageError("cap region needs theta")
        CapSpec(theta)
        X, W = _half_sphere_rule(n, float(theta))
    elif region == "surface-cap":
        th = np.pi / 2.0 if theta is None else float(theta)
        CapSpec(th)
        X, W = _s2_polar_rule(n, np.cos(th), 1.0)
    elif region == "truncated-half-ball":
        if R is None or R <= 0:
            raise UsageError("truncated-half-ball needs R > 0")
        X, W = _half_ball_rule(n, float(R), float(scale))
    else:
        if R is None or R <= 0:
            raise UsageError("truncated-boundary-disc needs R > 0")
        X, W = _disc_rule(n, float(R), float(scale))
    meta = {
        "resolution": n,
        "theta": theta,
        "R": R,
        "scale": scale,
        "center": None if center is None else check_boundary_point(center),
        "concentration": concentration,
    }
    return QuadratureRule(X, W, region, meta)
