"""Leading-order multi-bubble energy on the neighbourhood of sums of bubbles.

With mu_j = gamma_j^{-1/2} the interaction part is 4 pi sqrt(6) mu^T M mu,
where M is the matrix of ``morse_index`` evaluated at the centres a_j.
That is the self term 4 pi sqrt(6) M_jj / gamma_j plus 32 pi sqrt(3) per
ordered pair, which makes the gamma-gradient formula an exact
derivative.  The integrals of delta^6 and delta^4 are the gamma
independent closed forms.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq, root

from .bubbles import bubble_boundary_integral, bubble_volume_integral
from .energetics import phi_closed
from .errors import DomainError, InfeasibleError, UsageError
from .fields import as_field, normal_derivative
from .geometry import check_boundary_point, geodesic_distance
from .morse_index import least_eigenvalue, matrix_from_values, phi_jet

C_INT = 4.0 * np.pi * np.sqrt(6.0)


@dataclass
class BubbleConfiguration:
    centers: np.ndarray
    gammas: np.ndarray
    tau: float
    eps: float = 1e-6
    min_separation: float = 1e-3

    def __post_init__(self):
        self.centers = np.array([check_boundary_point(c) for c in np.atleast_2d(self.centers)])
        self.gammas = np.atleast_1d(np.asarray(self.gammas, dtype=float))
        if len(self.centers) != len(self.gammas) or len(self.gammas) == 0:
            raise UsageError("need one gamma per centre and N >= 1")
        if not self.tau > 0:
            raise DomainError("tau must be positive")

    @property
    def N(self) -> int:
        return len(self.gammas)

    def check_admissible(self):
        tg = self.tau * self.gammas
        if np.any(tg <= self.eps) or np.any(tg >= 1.0 / self.eps):
            raise DomainError(f"tau * gamma = {tg} outside ({self.eps}, {1 / self.eps})")
        for i in range(self.N):
            for j in range(i + 1, self.N):
                if geodesic_distance(self.centers[i], self.centers[j]) < self.min_separation:
                    raise DomainError("bubble centres closer than the separation bound")
        return True


@dataclass
class _Coefs:
    phi: np.ndarray
    KI6: np.ndarray
    HI4: np.ndarray
    M: np.ndarray


def _coefficients(cfg: BubbleConfiguration, K, H) -> _Coefs:
    K = as_field(K, "half-sphere")
    H = as_field(H, "boundary")
    C = cfg.centers
    kv = np.array([float(K.value(c)[0]) for c in C])
    hv = np.array([float(H.value(c)[0]) for c in C])
    if np.any(kv <= 0):
        raise DomainError("K must be positive at the centres")
    dn = np.array([normal_derivative(K, c) for c in C])
    try:
        M = matrix_from_values(C, kv, hv, dn)
    except UsageError as e:
        raise DomainError("coincident centres make the interaction singular") from e
    I6 = np.array([bubble_volume_integral(k, h) for k, h in zip(kv, hv)])
    I4 = np.array([bubble_boundary_integral(k, h) for k, h in zip(kv, hv)])
    return _Coefs(phi_closed(kv, hv) * np.ones(len(kv)), kv * I6, hv * I4, M)


def _energy(g, tau, co: _Coefs) -> float:
    mu = g ** -0.5
    e = np.sum(co.phi)
    e -= np.sum((g ** (-tau / 2.0) - 1.0) * co.KI6) / 6.0
    e -= np.sum((g ** (-tau / 4.0) - 1.0) * co.HI4)
    e += C_INT * mu @ co.M @ mu
    return float(e)


def _gamma_grad(g, tau, co: _Coefs, form: str = "exact") -> np.ndarray:
    mu = g ** -0.5
    if form == "exact":
        a = tau / 12.0 * g ** (-tau / 2.0 - 1.0) * co.KI6
        b = tau / 4.0 * g ** (-tau / 4.0 - 1.0) * co.HI4
    elif form == "printed":
        a = tau / 12.0 / g * co.KI6
        b = tau / 4.0 / g * co.HI4
    else:
        raise UsageError("form must be 'exact' or 'printed'")
    return a + b - C_INT * g ** -1.5 * (co.M @ mu)


def reduced_energy(cfg: BubbleConfiguration, K, H, check: bool = True) -> float:
    if check:
        cfg.check_admissible()
    return _energy(cfg.gammas, cfg.tau, _coefficients(cfg, K, H))


def reduced_gradient(cfg: BubbleConfiguration, K, H, form: str = "exact", check: bool = True):
    """(a-gradient, gamma-gradient).

    The a-gradient is the leading term, the boundary gradient of phi at
    each centre.  ``form="exact"`` differentiates the energy exactly;
    ``form="printed"`` drops the gamma^{-tau/2}, gamma^{-tau/4} factors,
    which is the same to leading order in tau.
    """
    if check:
        cfg.check_admissible()
    K = as_field(K, "half-sphere")
    H = as_field(H, "boundary")
    co = _coefficients(cfg, K, H)
    ag = np.array([phi_jet(K, H, c).grad for c in cfg.centers])
    return ag, _gamma_grad(cfg.gammas, cfg.tau, co, form)


def reduced_energy_fd_gradient(cfg: BubbleConfiguration, K, H, rel_step: float = 1e-5) -> np.ndarray:
    """Central differences of reduced_energy in each gamma_j (coefficients frozen)."""
    co = _coefficients(cfg, K, H)
    g0 = cfg.gammas
    out = np.empty(cfg.N)
    for j in range(cfg.N):
        h = rel_step * g0[j]
        gp = g0.copy()
        gm = g0.copy()
        gp[j] += h
        gm[j] -= h
        out[j] = (_energy(gp, cfg.tau, co) - _energy(gm, cfg.tau, co)) / (2 * h)
    return out


@dataclass
class ConcentrationPrediction:
    config: BubbleConfiguration
    lambdas: np.ndarray
    mus: np.ndarray
    M: np.ndarray
    rho: float
    peak_sphere: np.ndarray
    peak_chart: np.ndarray
    residual: float

    def as_dict(self):
        return {
            "gammas": self.config.gammas.tolist(),
            "lambdas": self.lambdas.tolist(),
            "mus": self.mus.tolist(),
            "rho": self.rho,
            "peak_sphere": self.peak_sphere.tolist(),
            "peak_chart": self.peak_chart.tolist(),
            "residual": self.residual,
        }


def _lambdas(g, tau, co):
    return g * (tau / 12.0 * g ** (-tau / 2.0) * co.KI6 + tau / 4.0 * g ** (-tau / 4.0) * co.HI4) / C_INT


def predict_concentration(points, K, H, tau: float, eps: float = 1e-6) -> ConcentrationPrediction:
    """Critical gammas of the reduced energy for bubbles at the given F^+ points.

    Returns the configuration together with lambda_j (from the balance
    sum_l M_lj mu_l = lambda_j mu_j) and the predicted peak heights
    peak^2 = lambda_j 16 pi K^{1/2} / ((K/6 + H+^2) phi tau).
    """
    pts = [getattr(p, "q", p) for p in points]
    K = as_field(K, "half-sphere")
    H = as_field(H, "boundary")
    cfg0 = BubbleConfiguration(np.array(pts), np.ones(len(pts)), tau, eps)
    co = _coefficients(cfg0, K, H)
    rho = least_eigenvalue(co.M)
    if rho <= 0:
        raise InfeasibleError(f"least eigenvalue rho = {rho:.6g} <= 0: no positive critical gammas")
    c = co.KI6 / 12.0 + co.HI4 / 4.0
    if np.any(c <= 0):
        raise InfeasibleError("non-positive bubble coefficients")
    N = len(pts)
    if N == 1:
        f = lambda lg: float(_gamma_grad(np.array([np.exp(lg)]), tau, co)[0] * np.exp(2 * lg))
        lo, hi = np.log(1e-8 / tau), np.log(1e8 / tau)
        if f(lo) * f(hi) > 0:
            raise InfeasibleError("no sign change of the gamma-gradient")
        g = np.array([np.exp(brentq(f, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=500))])
    else:
        w, V = np.linalg.eigh(co.M)
        v = np.abs(V[:, 0])
        s2 = tau * np.mean(c) / (C_INT * rho * np.mean(v ** 2))
        g0 = 1.0 / (s2 * v ** 2)
        # gamma^2 dE/dgamma scaled to O(1)
        F = lambda lg: _gamma_grad(np.exp(lg), tau, co) * np.exp(2 * lg) / (tau * c)
        sol = root(F, np.log(g0), method="hybr", tol=1e-13)
        # hybr reports slow progress once it sits at machine precision, so judge by the residual
        if np.max(np.abs(F(sol.x))) > 1e-10:
            raise InfeasibleError(f"gamma system did not converge: {sol.message}")
        g = np.exp(sol.x)
    cfg = BubbleConfiguration(np.array(pts), g, tau, eps)
    lam = _lambdas(g, tau, co)
    mu = g ** -0.5
    kv = np.array([float(K.value(p)[0]) for p in pts])
    hv = np.array([float(H.value(p)[0]) for p in pts])
    ph = phi_closed(kv, hv) * np.ones(N)
    hp = np.maximum(hv, 0.0)
    peak2 = lam * 16.0 * np.pi * np.sqrt(kv) / ((kv / 6.0 + hp ** 2) * ph * tau)
    peak = np.sqrt(np.maximum(peak2, 0.0))
    res = eigen_relation_check(co.M, mu, lam)
    if np.any(lam <= 0):
        raise InfeasibleError("a lambda_j is not positive")
    return ConcentrationPrediction(cfg, lam, mu, co.M, rho, peak, np.sqrt(2.0) * peak, res)


def eigen_relation_check(M, mus, lambdas) -> float:
    """max_j |sum_l M_lj mu_l - lambda_j mu_j|."""
    M = np.atleast_2d(np.asarray(getattr(M, "entries", M), dtype=float))
    mu = np.atleast_1d(np.asarray(mus, dtype=float))
    lam = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if M.shape != (len(mu), len(mu)) or len(lam) != len(mu):
        raise UsageError("dimension mismatch")
    return float(np.max(np.abs(M.T @ mu - lam * mu)))
