"""Explicit solutions of the limit problems and the sphere family delta_{q,gamma}.

Constants are the n = 3 ones:  -8 Lap u = K u^5 in the (half) space and
-2 du/dy3 = H u^3 on y3 = 0, with k = K / (4 n (n - 1)) = K / 24.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, FitError
from .geometry import as_points, cap_F, check_boundary_point

N_DIM = 3


def k_of(Kbar: float) -> float:
    return Kbar / (4.0 * N_DIM * (N_DIM - 1))


@dataclass(frozen=True)
class InteriorBubble:
    """U(y) = (lam / (1 + lam^2 k |y - c|^2))^{1/2}."""

    lam: float
    center: tuple = (0.0, 0.0, 0.0)
    Kbar: float = 6.0

    def __post_init__(self):
        if not self.lam > 0 or not self.Kbar > 0:
            raise DomainError("interior bubble needs lam > 0 and Kbar > 0")

    @property
    def k(self):
        return k_of(self.Kbar)

    def _d(self, y):
        return as_points(y) - np.asarray(self.center, dtype=float)

    def value(self, y):
        d = self._d(y)
        return np.sqrt(self.lam / (1.0 + self.lam ** 2 * self.k * np.sum(d * d, axis=1)))

    __call__ = value

    def gradient(self, y):
        d = self._d(y)
        u = self.value(y)
        return -(self.lam * self.k / 1.0) * (u ** 3)[:, None] * d


@dataclass(frozen=True)
class BoundaryBubble:
    """Half-space bubble centred at (c', -t) with 2 k t lam = Hbar."""

    lam: float
    t: float
    center_prime: tuple = (0.0, 0.0)
    Kbar: float = 6.0
    Hbar: float = 0.0

    def __post_init__(self):
        if not self.lam > 0 or not self.Kbar > 0:
            raise DomainError("boundary bubble needs lam > 0 and Kbar > 0")
        lhs = 2.0 * self.k * self.t * self.lam
        if abs(lhs - self.Hbar) > 1e-9 * max(1.0, abs(self.Hbar)):
            raise DomainError(f"inconsistent bubble: 2 k t lam = {lhs} but Hbar = {self.Hbar}")

    @classmethod
    def make(cls, lam: float, Kbar: float = 6.0, Hbar: float = 0.0, center_prime=(0.0, 0.0)):
        t = Hbar / (2.0 * k_of(Kbar) * lam)
        return cls(float(lam), float(t), tuple(float(c) for c in center_prime), float(Kbar), float(Hbar))

    @property
    def k(self):
        return k_of(self.Kbar)

    @property
    def center(self) -> np.ndarray:
        return np.array([self.center_prime[0], self.center_prime[1], -self.t])

    def _d(self, y):
        return as_points(y) - self.center

    def value(self, y):
        d = self._d(y)
        return np.sqrt(self.lam / (1.0 + self.lam ** 2 * self.k * np.sum(d * d, axis=1)))

    __call__ = value

    def gradient(self, y):
        d = self._d(y)
        u = self.value(y)
        return -(self.lam * self.k) * (u ** 3)[:, None] * d

    def rescaled(self, s: float) -> "BoundaryBubble":
        """The bubble y -> s^{1/2} U(s y), i.e. concentration s * lam."""
        return BoundaryBubble.make(self.lam * s, self.Kbar, self.Hbar, tuple(np.asarray(self.center_prime) / s))

    @property
    def peak(self) -> float:
        """Maximum over the closed half-space."""
        if self.t <= 0:
            return float(np.sqrt(self.lam))
        return float(np.sqrt(self.lam / (1.0 + self.lam ** 2 * self.k * self.t ** 2)))


def eval_interior_bubble(b: InteriorBubble, x) -> np.ndarray:
    return b.value(x)


def eval_boundary_bubble(b: BoundaryBubble, y) -> np.ndarray:
    return b.value(y)


@dataclass(frozen=True)
class SphereBubble:
    """delta(x) = (24/K)^{1/4} (gamma / (gamma^2 + 1 + (1 - gamma^2) cos d(x~, x)))^{1/2}."""

    qprime: np.ndarray
    gamma: float
    Kq: float = 6.0
    Hq: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "qprime", check_boundary_point(self.qprime))
        if not self.gamma > 0 or not self.Kq > 0:
            raise DomainError("sphere bubble needs gamma > 0 and K > 0")
        if self.Hq != 0 and abs(self.gamma - 1.0) < 1e-12:
            raise DomainError("gamma = 1 with H != 0 leaves the auxiliary centre undefined")
        if abs(self.s) > 1.0:
            raise DomainError(f"auxiliary centre off the sphere (x4 = {self.s:.6g}); increase gamma")

    @property
    def s(self) -> float:
        if self.Hq == 0:
            return 0.0
        g = self.gamma
        return -np.sqrt(24.0) * g / (g * g - 1.0) * self.Hq / np.sqrt(self.Kq)

    @property
    def center(self) -> np.ndarray:
        s = self.s
        c = np.sqrt(max(0.0, 1.0 - s * s)) * self.qprime
        c[3] = s
        return c

    def _c(self, x):
        return np.clip(as_points(x) @ self.center, -1.0, 1.0)

    def value(self, x):
        g = self.gamma
        c = self._c(x)
        A = (24.0 / self.Kq) ** 0.25
        return A * np.sqrt(g / (g * g + 1.0 + (1.0 - g * g) * c))

    __call__ = value

    def gradient(self, x):
        """Tangential gradient on S^3, shape (m, 4)."""
        X = as_points(x)
        g = self.gamma
        c = self._c(X)
        A = (24.0 / self.Kq) ** 0.25
        D = g * g + 1.0 + (1.0 - g * g) * c
        dc = -0.5 * A * np.sqrt(g) * D ** -1.5 * (1.0 - g * g)
        xt = self.center
        T = xt[None, :] - c[:, None] * X
        return dc[:, None] * T

    def chart_lambda(self) -> float:
        """Concentration of the pulled-back half-space bubble."""
        g = self.gamma
        B = g * g + 1.0 + (g * g - 1.0) * np.sqrt(max(0.0, 1.0 - self.s ** 2))
        return float(np.sqrt(24.0 / self.Kq) * B / (2.0 * g))

    def to_boundary_bubble(self) -> BoundaryBubble:
        """iota-pullback in the chart centred at qprime."""
        return BoundaryBubble.make(self.chart_lambda(), self.Kq, self.Hq)


def eval_sphere_bubble(b: SphereBubble, x) -> np.ndarray:
    return b.value(x)


# ---------------------------------------------------------------------------
# closed-form integrals


def cap_angle_nd(Kbar: float, Hbar: float, n: int = 3) -> float:
    return float(np.arctan2(np.sqrt(Kbar / (n * (n - 1))), Hbar))


def bubble_volume_integral(Kbar: float, Hbar: float) -> float:
    """int over S^3_+ of delta^6 (equivalently int over R^3_+ of U^6)."""
    th = cap_angle_nd(Kbar, Hbar)
    return 4.0 * np.pi * cap_F(th, 3) * (6.0 / Kbar) ** 1.5


def bubble_boundary_integral(Kbar: float, Hbar: float) -> float:
    """int over the boundary of delta^4."""
    th = cap_angle_nd(Kbar, Hbar)
    return 4.0 * np.pi * np.sin(th) ** 2 * (6.0 / Kbar)


def psi_closed(Kbar: float, Hbar: float) -> float:
    T = Hbar * np.sqrt(6.0 / Kbar)
    return float(1.0 + T * (np.arctan(T) - np.pi / 2.0))


def vertical_moment(Kbar: float, Hbar: float) -> float:
    """int over R^3_+ of y3 U_1^6 = 144 pi psi / K^2."""
    return 144.0 * np.pi / Kbar ** 2 * psi_closed(Kbar, Hbar)


# ---------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class NormalizationRule:
    """Gauge of the rescaled bubble: lam = 1 + k lam^2 t^2 if Hbar >= 0, else lam = 1."""

    sign_case: str
    lambda_value: float
    t_value: float = 0.0

    def residual(self, Kbar: float) -> float:
        k = k_of(Kbar)
        if self.sign_case == "H>=0":
            return abs(self.lambda_value - (1.0 + k * self.lambda_value ** 2 * self.t_value ** 2))
        return abs(self.lambda_value - 1.0)


@dataclass
class BubbleFit:
    bubble: BoundaryBubble
    center: np.ndarray
    residual: float
    normalization: NormalizationRule
    peak_value: float
    n_samples: int
    is_bubble: bool
    extra: dict = field(default_factory=dict)


def fit_bubble(
    points,
    values,
    window: float,
    center_guess=None,
    threshold: float = 0.05,
    p: float = 5.0,
) -> BubbleFit:
    """Fit a half-space bubble to samples of a positive field near a boundary peak.

    points are chart coordinates (m, 3) with y3 >= 0.  For an exact bubble
    u^{-2} is a quadratic a|y|^2 + b.y + c, so a weighted linear least
    squares (weights u^2) recovers lam, t, the boundary centre, Kbar and
    Hbar.  ``residual`` is the sup misfit in the window relative to the
    peak value.  The scale gauge follows the two-case rule of the
    rescaled blow-up sequence; ``p`` sets the rescaling exponent.
    """
    Y = as_points(points)
    u = np.asarray(values, dtype=float).ravel()
    if np.any(u <= 0):
        raise FitError("fit needs a positive field")
    bnd = np.abs(Y[:, 2]) <= 1e-12
    if not np.any(bnd):
        raise FitError("no boundary samples")
    if center_guess is None:
        ib = np.flatnonzero(bnd)[np.argmax(u[bnd])]
        c0 = Y[ib].copy()
    else:
        c0 = np.asarray(center_guess, dtype=float)
    r = np.linalg.norm(Y - c0, axis=1)
    inw = r <= window
    if np.sum(inw) < 6:
        raise FitError("fewer than six samples in the window")
    wb = inw & bnd
    if not np.any(wb):
        raise FitError("no boundary samples in the window")
    ib = np.flatnonzero(wb)[np.argmax(u[wb])]
    if r[ib] > 0.9 * window:
        raise FitError("boundary maximum lies on the window edge: no local max in window")
    Yw = Y[inw] - np.array([Y[ib, 0], Y[ib, 1], 0.0])
    uw = u[inw]
    A = np.column_stack([np.sum(Yw * Yw, axis=1), Yw[:, 0], Yw[:, 1], Yw[:, 2], np.ones(len(uw))])
    w = uw ** 2
    coef, *_ = np.linalg.lstsq(A * w[:, None], uw ** -2 * w, rcond=None)
    alpha, b1, b2, b3, cc = coef
    if alpha <= 0:
        raise FitError("fitted profile is not bubble shaped")
    cp = -np.array([b1, b2]) / (2.0 * alpha)
    t = b3 / (2.0 * alpha)
    inv_lam = cc - alpha * (cp @ cp + t * t)
    if inv_lam <= 0:
        raise FitError("fitted profile is not bubble shaped")
    lam = 1.0 / inv_lam
    k = alpha / lam
    Kbar = 24.0 * k
    Hbar = 2.0 * k * t * lam
    shift = np.array([Y[ib, 0], Y[ib, 1]])
    bub = BoundaryBubble(lam, t, tuple(cp + shift), Kbar, Hbar)
    fit_vals = bub.value(Y[inw])
    peak = float(np.max(uw))
    resid = float(np.max(np.abs(fit_vals - uw)) / peak)
    M = bub.peak
    lam_n = lam / M ** ((p - 1.0) / 2.0)
    t_n = t * M ** ((p - 1.0) / 2.0)
    case = "H>=0" if Hbar >= 0 else "H<0"
    rule = NormalizationRule(case, float(lam_n), float(t_n))
    return BubbleFit(
        bubble=bub,
        center=np.array([bub.center_prime[0], bub.center_prime[1], 0.0]),
        residual=resid,
        normalization=rule,
        peak_value=peak,
        n_samples=int(np.sum(inw)),
        is_bubble=resid <= threshold,
    )
