"""Pohozaev balance on half-balls, the limit of its boundary term, and a Kazdan-Warner test.

Everything here lives in the half-space chart, n = 3, for
    -Lap u = (1/8) K u^p,   -du/dy3 = (1/2) H u^{(p+1)/2}.
Multiplying by y . grad u and integrating over (B_sigma)_+ gives

  (1/8)(1/2 - 3/(p+1)) int K u^{p+1} + (1/2)(1/2 - 4/(p+3)) int_flat H u^{(p+3)/2}
    = (1/8)/(p+1) int (y . grad K) u^{p+1} + 1/(p+3) int_flat (y' . grad' H) u^{(p+3)/2}
      - int_hemi B - (1/8)/(p+1) int_hemi K u^{p+1} y.nu - 1/(p+3) int_edge H u^{(p+3)/2} y'.nu'

with B = du/dnu y.grad u + (1/2) u du/dnu - |grad u|^2 y.nu / 2 and nu the
outward normal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.optimize import minimize

from .errors import DomainError, UsageError
from .fields import FieldSpec, as_field
from .geometry import (
    as_points,
    boundary_point,
    build_quadrature,
    conformal_factor,
    fibonacci_sphere,
    inverse_stereographic,
)

C_K = 1.0 / 8.0
C_H = 1.0 / 2.0


# ---------------------------------------------------------------------------
# chart functions with gradients


class ChartFunction:
    """y -> f(y) on the closed half-space with a gradient (analytic or central differences)."""

    def __init__(self, f: Callable, grad: Optional[Callable] = None, step: float = 1e-6):
        self._f = f
        self._g = grad
        self.step = step

    def value(self, y):
        return np.asarray(self._f(as_points(y)), dtype=float)

    __call__ = value

    def gradient(self, y):
        Y = as_points(y)
        if self._g is not None:
            return np.asarray(self._g(Y), dtype=float)
        G = np.empty_like(Y)
        for i in range(3):
            e = np.zeros(3)
            e[i] = self.step
            G[:, i] = (self._f(Y + e) - self._f(Y - e)) / (2 * self.step)
        return G


def as_chart_function(obj, tau: float = 0.0, center=(0.0, 0.0, 1.0, 0.0), boundary: bool = False) -> ChartFunction:
    """Chart version of a datum.

    Numbers are constants; callables act on chart points already; objects
    with value/gradient (bubbles, grid fields) pass through; sphere fields
    (FieldSpec or expression text) are pulled back with the weight W^tau
    (W^{tau/2} for boundary data).
    """
    if isinstance(obj, ChartFunction):
        return obj
    if isinstance(obj, (int, float, np.floating)):
        c = float(obj)
        return ChartFunction(lambda Y: np.full(len(Y), c), lambda Y: np.zeros_like(Y))
    if isinstance(obj, (str, FieldSpec)):
        F = as_field(obj, "boundary" if boundary else "half-sphere")
        q = boundary_point(center)
        w = tau / 2.0 if boundary else tau

        def f(Y):
            Z = Y.copy()
            if boundary:
                Z[:, 2] = 0.0
            return conformal_factor(Z) ** w * F.value(inverse_stereographic(q, Z))

        return ChartFunction(f)
    if hasattr(obj, "value") and hasattr(obj, "gradient"):
        return ChartFunction(obj.value, obj.gradient)
    if callable(obj):
        return ChartFunction(obj)
    raise UsageError(f"cannot use {type(obj).__name__} as a chart function")


def grid_function(grid) -> ChartFunction:
    """Bicubic interpolant of an axisymmetric grid solution u(r, z)."""
    x = grid.nodes
    S = RectBivariateSpline(x, x, grid.u, kx=3, ky=3)

    def f(Y):
        r = np.hypot(Y[:, 0], Y[:, 1])
        return S.ev(r, Y[:, 2])

    def g(Y):
        r = np.hypot(Y[:, 0], Y[:, 1])
        fr = S.ev(r, Y[:, 2], dx=1)
        fz = S.ev(r, Y[:, 2], dy=1)
        safe = np.where(r > 0, r, 1.0)
        c = np.where(r > 0, Y[:, 0] / safe, 0.0)
        s = np.where(r > 0, Y[:, 1] / safe, 0.0)
        return np.column_stack([fr * c, fr * s, fz])

    return ChartFunction(f, g)


# ---------------------------------------------------------------------------
# Pohozaev


@dataclass
class PohozaevReport:
    lhs_volume: float
    lhs_boundary: float
    rhs_gradK: float
    rhs_gradH: float
    rhs_B: float
    rhs_Kflux: float
    rhs_Hedge: float
    imbalance: float
    p: float = 5.0
    sigma: float = 1.0
    integrals: dict = field(default_factory=dict)

    @property
    def scale(self) -> float:
        return max(
            abs(v)
            for v in (self.lhs_volume, self.lhs_boundary, self.rhs_gradK, self.rhs_gradH, self.rhs_B, self.rhs_Kflux, self.rhs_Hedge)
        )

    @property
    def relative_imbalance(self) -> float:
        s = self.scale
        return abs(self.imbalance) / s if s > 0 else abs(self.imbalance)

    def as_dict(self):
        return {
            "lhs_volume": self.lhs_volume,
            "lhs_boundary": self.lhs_boundary,
            "rhs_gradK": self.rhs_gradK,
            "rhs_gradH": self.rhs_gradH,
            "rhs_B": self.rhs_B,
            "rhs_Kflux": self.rhs_Kflux,
            "rhs_Hedge": self.rhs_Hedge,
            "imbalance": self.imbalance,
            "relative_imbalance": self.relative_imbalance,
            "p": self.p,
            "sigma": self.sigma,
            "integrals": dict(self.integrals),
        }


def critical_prefactors(p: float, n: int = 3):
    """((n-2)/2 - n/(p+1), (n-2)/2 - 2(n-1)/(p+3)); both vanish at the critical exponent."""
    return (n - 2) / 2.0 - n / (p + 1.0), (n - 2) / 2.0 - 2.0 * (n - 1) / (p + 3.0)


def B_density(Y, u, G):
    """B(y, u, grad u) on the sphere |y| = sigma with outward normal y/|y|."""
    rr = np.linalg.norm(Y, axis=1)
    nu = Y / rr[:, None]
    dn = np.sum(G * nu, axis=1)
    xg = np.sum(Y * G, axis=1)
    return dn * xg + 0.5 * u * dn - 0.5 * np.sum(G * G, axis=1) * rr


def _rules(sigma, resolution, scale):
    vol = build_quadrature("truncated-half-ball", resolution, R=sigma, scale=scale)
    flat = build_quadrature("truncated-boundary-disc", resolution, R=sigma, scale=scale)
    hemi = build_quadrature("surface-cap", resolution, theta=np.pi / 2.0)
    m = 4 * resolution
    ph = 2 * np.pi * np.arange(m) / m
    edge = np.column_stack([np.cos(ph), np.sin(ph), np.zeros(m)])
    return vol, flat, hemi, edge, np.full(m, 2 * np.pi / m)


def pohozaev_identity(
    u,
    K,
    H,
    p: float,
    sigma: float,
    resolution: int = 48,
    scale: Optional[float] = None,
    center=(0.0, 0.0, 1.0, 0.0),
) -> PohozaevReport:
    """All seven terms of the balance on (B_sigma)_+ by quadrature.

    u: chart function (bubble, grid interpolant, callable); K, H: numbers,
    chart callables, or sphere fields (pulled back with the weights W^tau,
    W^{tau/2}, tau = 5 - p).  ``scale`` sets the radial clustering of the
    volume and disc rules (default sigma / 4).
    """
    if p < 1:
        raise UsageError("p must be at least 1")
    if not sigma > 0:
        raise UsageError("sigma must be positive")
    tau = 5.0 - p
    uf = as_chart_function(u)
    Kf = as_chart_function(K, tau, center)
    Hf = as_chart_function(H, tau, center, boundary=True)
    scale = sigma / 4.0 if scale is None else float(scale)
    vol, flat, hemi, edge, we = _rules(sigma, resolution, scale)
    # volume
    Y = vol.nodes
    uv = uf.value(Y)
    if np.any(uv <= 0):
        raise DomainError("u must be positive on the half-ball")
    Kv = Kf.value(Y)
    xgK = np.sum(Y * Kf.gradient(Y), axis=1)
    I_K = float(vol.weights @ (Kv * uv ** (p + 1)))
    I_xK = float(vol.weights @ (xgK * uv ** (p + 1)))
    # flat part
    Yf = flat.nodes
    uf0 = uf.value(Yf)
    if np.any(uf0 <= 0):
        raise DomainError("u must be positive on the flat boundary")
    Hv = Hf.value(Yf)
    GH = Hf.gradient(Yf)
    xgH = Yf[:, 0] * GH[:, 0] + Yf[:, 1] * GH[:, 1]
    e = (p + 3.0) / 2.0
    I_H = float(flat.weights @ (Hv * uf0 ** e))
    I_xH = float(flat.weights @ (xgH * uf0 ** e))
    # hemisphere |y| = sigma
    Yh = sigma * hemi.nodes
    wh = sigma ** 2 * hemi.weights
    uh = uf.value(Yh)
    Gh = uf.gradient(Yh)
    I_B = float(wh @ B_density(Yh, uh, Gh))
    I_Kflux = float(wh @ (Kf.value(Yh) * uh ** (p + 1) * sigma))
    # edge circle
    Ye = sigma * edge
    I_edge = float((sigma * we) @ (Hf.value(Ye) * uf.value(Ye) ** e * sigma))
    a1, a2 = critical_prefactors(p)
    lhs_v = C_K * a1 * I_K
    lhs_b = C_H * a2 * I_H
    r_gK = C_K / (p + 1) * I_xK
    r_gH = 2 * C_H / (p + 3) * I_xH
    r_B = -I_B
    r_Kf = -C_K / (p + 1) * I_Kflux
    r_He = -2 * C_H / (p + 3) * I_edge
    imb = (lhs_v + lhs_b) - (r_gK + r_gH + r_B + r_Kf + r_He)
    ints = {"K": I_K, "xgradK": I_xK, "H": I_H, "xgradH": I_xH, "B": I_B, "Kflux": I_Kflux, "Hedge": I_edge}
    return PohozaevReport(lhs_v, lhs_b, r_gK, r_gH, r_B, r_Kf, r_He, float(imb), float(p), float(sigma), ints)


# ---------------------------------------------------------------------------
# boundary term limit


@dataclass
class BoundaryLimit:
    limit: float
    expected: float
    sigmas: list
    values: list
    order: float

    def __float__(self):
        return float(self.limit)

    @property
    def relative_error(self) -> float:
        if self.expected == 0:
            return abs(self.limit)
        return abs(self.limit - self.expected) / abs(self.expected)


def hemisphere_B(h, sigma: float, resolution: int = 48) -> float:
    """int over {|y| = sigma, y3 > 0} of B(y, h, grad h)."""
    hf = as_chart_function(h)
    hemi = build_quadrature("surface-cap", resolution, theta=np.pi / 2.0)
    Y = sigma * hemi.nodes
    return float((sigma ** 2 * hemi.weights) @ B_density(Y, hf.value(Y), hf.gradient(Y)))


def boundary_term_limit(h, a: float, b0: float, sigmas: Sequence[float] = (0.1, 0.05, 0.025), resolution: int = 48) -> BoundaryLimit:
    """Extrapolate int_{hemisphere sigma} B(y, h, grad h) to sigma -> 0.

    The remainder is linear in sigma, so the last two values are combined
    as 2 I(sigma/2) - I(sigma) (general ratios handled the same way).  The
    expected limit for n = 3 is -pi a b0.
    """
    if not a > 0:
        raise UsageError("a must be positive")
    s = np.asarray(sigmas, dtype=float)
    if len(s) < 2 or np.any(np.diff(s) >= 0):
        raise UsageError("sigmas must be decreasing, at least two")
    vals = np.array([hemisphere_B(h, si, resolution) for si in s])
    s1, s2 = s[-2], s[-1]
    lim = (s1 * vals[-1] - s2 * vals[-2]) / (s1 - s2)
    order = float("nan")
    if len(s) >= 3:
        d1 = vals[-3] - vals[-2]
        d2 = vals[-2] - vals[-1]
        tiny = 1e-12 * max(1.0, np.max(np.abs(vals)))
        if abs(d1) > tiny and abs(d2) > tiny and d1 * d2 > 0:
            order = float(np.log(abs(d1 / d2)) / np.log(s[-3] / s[-2]))
        else:
            order = float("inf")
    return BoundaryLimit(float(lim), float(-np.pi * a * b0), s.tolist(), vals.tolist(), order)


def singular_plus_regular(a: float, b: Callable, grad_b: Optional[Callable] = None) -> ChartFunction:
    """h(y) = a / |y| + b(y)."""

    def f(Y):
        return a / np.linalg.norm(Y, axis=1) + np.asarray(b(Y), dtype=float) * np.ones(len(Y))

    g = None
    if grad_b is not None:

        def g(Y):
            r = np.linalg.norm(Y, axis=1)
            return -a * Y / r[:, None] ** 3 + np.asarray(grad_b(Y), dtype=float) * np.ones_like(Y)

    return ChartFunction(f, g, step=1e-7)


# ---------------------------------------------------------------------------
# Kazdan-Warner type obstruction


@dataclass
class KazdanWarnerReport:
    verdict: str
    min_radial_derivative: float
    max_radial_derivative: float
    center: Optional[list]
    n_samples: int
    constant: bool
    note: str = ""

    @property
    def obstructed(self) -> bool:
        return self.verdict == "obstructed"

    def as_dict(self):
        return {
            "verdict": self.verdict,
            "min_radial_derivative": self.min_radial_derivative,
            "max_radial_derivative": self.max_radial_derivative,
            "center": self.center,
            "n_samples": self.n_samples,
            "constant": self.constant,
            "note": self.note,
        }


def chart_sample(m_dirs: int = 400, radii: Optional[np.ndarray] = None) -> np.ndarray:
    """Dense sample of the closed half-space: Fibonacci directions with y3 >= 0 times geometric radii."""
    if radii is None:
        radii = np.concatenate([[0.0], np.geomspace(1e-3, 1e3, 61)])
    D = fibonacci_sphere(2 * m_dirs)[:, :3]
    D = D[D[:, 2] >= 0]
    ring = np.array([[np.cos(t), np.sin(t), 0.0] for t in np.linspace(0, 2 * np.pi, 24, endpoint=False)])
    D = np.vstack([D, ring])
    return np.concatenate([r * D for r in radii])


def radial_derivative(K: FieldSpec, q, Y) -> np.ndarray:
    """y . grad_y K(pi_q^{-1}(y)) by the chain rule through the inverse chart."""
    from .geometry import boundary_frame

    q = boundary_point(q)
    F = boundary_frame(q)
    Y = as_points(Y)
    s = np.sum(Y * Y, axis=1)
    X = inverse_stereographic(q, Y)
    da = -4.0 * s / (1.0 + s) ** 2
    db = 2.0 * Y * ((1.0 - s) / (1.0 + s) ** 2)[:, None]
    Xdot = da[:, None] * q[None, :] + db @ F
    return np.sum(K.gradient(X) * Xdot, axis=1)


def _boundary_minimum(K: FieldSpec) -> np.ndarray:
    X = fibonacci_sphere(2000)
    P = X[:, :3]
    i = int(np.argmin(K.value(X)))
    th0 = np.arccos(np.clip(P[i, 2], -1, 1))
    ph0 = np.arctan2(P[i, 1], P[i, 0])

    def pt(v):
        th, ph = v
        return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th), 0.0])

    res = minimize(lambda v: float(K.value(pt(v))[0]), [th0, ph0], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
    return pt(res.x)


def kazdan_warner_check(K, H, centers=None, tol: float = 1e-10, m_dirs: int = 400) -> KazdanWarnerReport:
    """Radial-monotonicity obstruction with H = 0.

    For each candidate chart centre (default: the boundary minimum of K)
    the sign of y . grad K is sampled over the half-space.  The verdict is
    "obstructed" when it is >= -tol everywhere for some centre and K is not
    constant; "not applicable" when H is not identically zero.
    """
    K = as_field(K, "half-sphere")
    H = as_field(H, "boundary")
    Y = chart_sample(m_dirs)
    if not H.is_constant or float(H.value(np.array([0.0, 0.0, 1.0, 0.0]))[0]) != 0.0:
        return KazdanWarnerReport("not applicable", float("nan"), float("nan"), None, len(Y), False, "H is not identically zero")
    if K.is_constant:
        return KazdanWarnerReport("not obstructed", 0.0, 0.0, None, len(Y), True, "constant K admits solutions")
    if centers is None:
        centers = [_boundary_minimum(K)]
    best = None
    for c in centers:
        c = boundary_point(c)
        d = radial_derivative(K, c, Y)
        rep = (float(np.min(d)), float(np.max(d)), c)
        if best is None or rep[0] > best[0]:
            best = rep
    lo, hi, c = best
    verdict = "obstructed" if lo >= -tol and hi > tol else "not obstructed"
    return KazdanWarnerReport(verdict, lo, hi, c.tolist(), len(Y), False)
