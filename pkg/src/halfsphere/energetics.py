"""Euler functionals, blow-up energies and the weights phi and psi.

The cap formulas are kept general in the dimension n; everything that
integrates over S^3_+ is n = 3.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gamma as gamma_fn

from .errors import DomainError, UsageError
from .fields import FieldSpec, as_field, value_at
from .geometry import CapSpec, QuadratureRule, as_points, build_quadrature, cap_F, check_boundary_point


def omega(d: int) -> float:
    """Volume of the unit d-sphere."""
    return float(2.0 * np.pi ** ((d + 1) / 2.0) / gamma_fn((d + 1) / 2.0))


# ---------------------------------------------------------------------------
# closed forms


def phi_closed(Kbar, Hbar):
    """4 pi sqrt(6/K) (pi/2 - arctan(H sqrt(6/K))), vectorized."""
    Kbar = np.asarray(Kbar, dtype=float)
    Hbar = np.asarray(Hbar, dtype=float)
    if np.any(Kbar <= 0):
        raise DomainError("phi needs K > 0")
    s = np.sqrt(6.0 / Kbar)
    out = 4.0 * np.pi * s * (np.pi / 2.0 - np.arctan(Hbar * s))
    return out if out.ndim else float(out)


def psi_closed(Kbar, Hbar):
    Kbar = np.asarray(Kbar, dtype=float)
    Hbar = np.asarray(Hbar, dtype=float)
    if np.any(Kbar <= 0):
        raise DomainError("psi needs K > 0")
    T = Hbar * np.sqrt(6.0 / Kbar)
    out = 1.0 + T * (np.arctan(T) - np.pi / 2.0)
    return out if out.ndim else float(out)


def psi_from_phi(Kbar, Hbar):
    """The second form 1 - H phi / (4 pi)."""
    return 1.0 - np.asarray(Hbar) * phi_closed(Kbar, Hbar) / (4.0 * np.pi)


def _KH_at(K, H, q):
    q = check_boundary_point(q)
    K = as_field(K, "half-sphere")
    H = as_field(H, "boundary")
    return value_at(K, q), value_at(H, q)


def phi(K, H, q) -> float:
    """Boundary blow-up energy at the boundary point q."""
    k, h = _KH_at(K, H, q)
    if not k > 0:
        raise DomainError(f"phi needs K(q) > 0, got {k}")
    return float(phi_closed(k, h))


def psi(K, H, q) -> float:
    k, h = _KH_at(K, H, q)
    if not k > 0:
        raise DomainError(f"psi needs K(q) > 0, got {k}")
    return float(psi_closed(k, h))


@dataclass(frozen=True)
class CapSolution:
    theta: float
    v_theta: float
    n: int

    def residuals(self, Kbar: float, Hbar: float):
        n = self.n
        r1 = Kbar * self.v_theta ** (4.0 / (n - 2)) - n * (n - 1)
        r2 = Hbar * np.sin(self.theta) - np.sqrt(Kbar / (n * (n - 1))) * np.cos(self.theta)
        return float(r1), float(r2)


def cap_angle(Kbar: float, Hbar: float, n: int = 3) -> CapSpec:
    """Unique theta in (0, pi) with H sin(theta) = sqrt(K/(n(n-1))) cos(theta)."""
    if not Kbar > 0:
        raise DomainError("cap angle needs K > 0")
    th = float(np.arctan2(np.sqrt(Kbar / (n * (n - 1))), Hbar))
    th = min(max(th, 1e-6), np.pi - 1e-6)
    return CapSpec(th)


def cap_solution(Kbar: float, Hbar: float, n: int = 3) -> CapSolution:
    th = cap_angle(Kbar, Hbar, n).theta
    v = (n * (n - 1) / Kbar) ** ((n - 2) / 4.0)
    return CapSolution(th, float(v), n)


def boundary_blowup_energy(Kbar: float, Hbar: float, n: int = 3) -> float:
    """omega_{n-1} (n(n-1)/K)^{n/2-1} [(n-1) F(theta) + cos(theta) sin^{n-2}(theta)]."""
    if not Kbar > 0 or n < 3:
        raise DomainError("need K > 0 and n >= 3")
    th = np.arctan2(np.sqrt(Kbar / (n * (n - 1))), Hbar)
    c = (n * (n - 1) / Kbar) ** (n / 2.0 - 1.0)
    return float(omega(n - 1) * c * ((n - 1) * cap_F(th, n) + np.cos(th) * np.sin(th) ** (n - 2)))


def boundary_blowup_energy_two_term(Kbar: float, Hbar: float, n: int = 3) -> float:
    """The unsimplified form: volume part plus the boundary part."""
    th = np.arctan2(np.sqrt(Kbar / (n * (n - 1))), Hbar)
    a = n * (n - 1) / Kbar
    w = omega(n - 1)
    return float(w / n * Kbar * cap_F(th, n) * a ** (n / 2.0) + Hbar * w * np.sin(th) ** (n - 1) * a ** ((n - 1) / 2.0))


def interior_blowup_energy(Kbar: float, n: int = 3) -> float:
    """(omega_n / n) (n(n-1))^{n/2} K^{-(n-2)/2}."""
    if not Kbar > 0:
        raise DomainError("need K > 0")
    return float(omega(n) / n * (n * (n - 1)) ** (n / 2.0) * Kbar ** (-(n - 2) / 2.0))


def comparison_margin(Kbar: float, Hbar: float, n: int = 3) -> float:
    """interior - boundary blow-up energy (positive by the cap comparison)."""
    return interior_blowup_energy(Kbar, n) - boundary_blowup_energy(Kbar, Hbar, n)


def cap_G_function(theta: float, n: int = 3) -> float:
    """G(theta) = F(theta) + sin^{n-2}(theta) cos(theta) / (n-1)."""
    return float(cap_F(theta, n) + np.sin(theta) ** (n - 2) * np.cos(theta) / (n - 1))


def cap_G_derivative(theta: float, n: int = 3) -> float:
    return float((n - 2) / (n - 1) * np.sin(theta) ** (n - 3))


def interior_energy_condition(phi_tilde: float, supK: float, n: int) -> bool:
    """Checkable predicate phi~ <= (omega_n/n)(n(n-1))^{n/2} (sup K)^{-(n-2)/2}.

    Exposed for general n; nothing in the package acts on it.
    """
    return bool(phi_tilde <= interior_blowup_energy(supK, n))


# ---------------------------------------------------------------------------
# functionals by quadrature


@dataclass(frozen=True)
class EnergyReport:
    quadratic_term: float
    volume_term: float
    boundary_term: float
    total: float

    def as_dict(self):
        return {
            "quadratic_term": self.quadratic_term,
            "volume_term": self.volume_term,
            "boundary_term": self.boundary_term,
            "total": self.total,
        }


def _tangential_fd_gradient(v: Callable, X: np.ndarray, h: float = 1e-6) -> np.ndarray:
    # gradient of the degree-0 extension x -> v(x/|x|) is the tangential gradient
    G = np.zeros_like(X)
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        Xp = X + e
        Xm = X - e
        Xp /= np.linalg.norm(Xp, axis=1, keepdims=True)
        Xm /= np.linalg.norm(Xm, axis=1, keepdims=True)
        G[:, i] = (v(Xp) - v(Xm)) / (2 * h)
    return G - np.sum(G * X, axis=1, keepdims=True) * X


def field_gradient(v, X) -> np.ndarray:
    """Tangential gradient of a sphere field (analytic if v has .gradient)."""
    if hasattr(v, "gradient"):
        G = np.asarray(v.gradient(X), dtype=float)
        return G - np.sum(G * X, axis=1, keepdims=True) * X
    return _tangential_fd_gradient(v, X)


def _default_boundary_rule(rule: QuadratureRule) -> QuadratureRule:
    m = rule.meta
    if m.get("center") is not None:
        return build_quadrature(
            "boundary-sphere", m["resolution"], center=m["center"], concentration=m.get("concentration", 1.0)
        )
    return build_quadrature("boundary-sphere", max(8, 2 * m.get("resolution", 16)))


def _check_rules(rule, boundary_rule):
    if rule.region != "half-sphere" or rule.dim != 4:
        raise UsageError("functional needs a half-sphere quadrature rule")
    if boundary_rule is None:
        boundary_rule = _default_boundary_rule(rule)
    if boundary_rule.region != "boundary-sphere":
        raise UsageError("boundary rule must cover the boundary sphere")
    return boundary_rule


@dataclass
class TermIntegrals:
    """Integrals that determine J_tau(t v) for every t >= 0."""

    grad2: float
    mass2: float
    volume: float
    boundary: float
    tau: float

    @property
    def quadratic(self):
        return 4.0 * self.grad2 + 3.0 * self.mass2

    def energy(self, t: float) -> float:
        tau = self.tau
        a = 6.0 - tau
        b = 4.0 - tau / 2.0
        return self.quadratic * t * t - self.volume * t ** a / a - 4.0 * self.boundary * t ** b / b


def term_integrals(K, H, v, tau: float, rule: QuadratureRule, boundary_rule: Optional[QuadratureRule] = None):
    if not (0.0 <= tau < 1.0):
        raise UsageError("tau must lie in [0, 1)")
    K = as_field(K, "half-sphere")
    H = as_field(H, "boundary")
    boundary_rule = _check_rules(rule, boundary_rule)
    X = rule.nodes
    w = rule.weights
    vals = np.asarray(v(X), dtype=float)
    G = field_gradient(v, X)
    grad2 = float(w @ np.sum(G * G, axis=1))
    mass2 = float(w @ vals ** 2)
    vol = float(w @ (K.value(X) * np.abs(vals) ** (6.0 - tau)))
    Xb = boundary_rule.nodes
    vb = np.asarray(v(Xb), dtype=float)
    bnd = float(boundary_rule.weights @ (H.value(Xb) * np.abs(vb) ** (4.0 - tau / 2.0)))
    return TermIntegrals(grad2, mass2, vol, bnd, float(tau))


def functional_J_tau(K, H, v, tau: float, rule: QuadratureRule, boundary_rule: Optional[QuadratureRule] = None) -> EnergyReport:
    """4 int|grad v|^2 + 3 int v^2 - int K|v|^{6-tau}/(6-tau) - 4 int_bd H|v|^{4-tau/2}/(4-tau/2)."""
    T = term_integrals(K, H, v, tau, rule, boundary_rule)
    q = T.quadratic
    vt = T.volume / (6.0 - tau)
    bt = 4.0 * T.boundary / (4.0 - tau / 2.0)
    return EnergyReport(q, vt, bt, q - vt - bt)


def functional_J(K, H, v, rule: QuadratureRule, boundary_rule: Optional[QuadratureRule] = None) -> EnergyReport:
    """1/2 int(8|grad v|^2 + 6 v^2) - (1/6) int K|v|^6 - int_bd H|v|^4."""
    return functional_J_tau(K, H, v, 0.0, rule, boundary_rule)


def sup_along_ray(T: TermIntegrals):
    """max over t > 0 of J_tau(t v) by golden-section search; returns (t*, value)."""
    f = T.energy
    if T.volume <= 0 and T.boundary <= 0:
        raise DomainError("J_tau(t v) is unbounded above along the ray")
    ts = 2.0 ** np.arange(-20.0, 40.0, 0.25)
    vals = np.array([f(t) for t in ts])
    i = int(np.argmax(vals))
    if i == 0 or i == len(ts) - 1:
        raise DomainError("no interior maximum along the ray")
    lo_b, hi_b = ts[i - 1], ts[i + 1]
    res = minimize_scalar(lambda t: -f(t), bracket=(lo_b, ts[i], hi_b), method="golden", tol=1e-12)
    return float(res.x), float(-res.fun)


def sup_J_tau_on_ray(K, H, v, tau: float, rule: QuadratureRule, boundary_rule: Optional[QuadratureRule] = None):
    return sup_along_ray(term_integrals(K, H, v, tau, rule, boundary_rule))


def bubble_rule_pair(q, resolution: int, concentration: float):
    """Matched half-sphere and boundary rules clustered at q."""
    q = check_boundary_point(q)
    r = build_quadrature("half-sphere", resolution, center=q, concentration=concentration)
    b = build_quadrature("boundary-sphere", resolution, center=q, concentration=concentration)
    return r, b
