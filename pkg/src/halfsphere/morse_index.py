"""Critical points of phi on the boundary sphere, the matrix M, genericity and Index.

phi is a function of (K, H) restricted to the boundary 2-sphere.  Its
first and second derivatives come from the chain rule; the partial
derivatives of the closed form phi(K, H) are obtained by symbolic
differentiation of the expression below.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .energetics import phi_closed, psi_closed
from .errors import CombinatorialLimitError, GenericityError, UsageError, DomainError
from .fields import FieldSpec, as_field, differentiate, evaluate, parse_expression, normal_derivative
from .geometry import (
    boundary_frame,
    boundary_point,
    check_boundary_point,
    fibonacci_sphere,
    geodesic_distance,
    greens_function,
)

# phi as an expression in x1 = K, x2 = H
_PHI_AST = parse_expression("4*pi*sqrt(6/x1)*(pi/2 - atan(x2*sqrt(6/x1)))")
_PHI_D = [differentiate(_PHI_AST, i) for i in range(2)]
_PHI_DD = [[differentiate(_PHI_D[i], j) for j in range(2)] for i in range(2)]

GRAD_TOL = 1e-10
DEDUP_TOL = 1e-6
MAX_SUBSET_POINTS = 20


def phi_partials(k: float, h: float):
    """(phi, [phi_K, phi_H], [[phi_KK, phi_KH], [phi_HK, phi_HH]]) at K = k, H = h."""
    P = np.array([[k, h, 0.0, 0.0]])
    v = float(evaluate(_PHI_AST, P)[0])
    d = np.array([float(evaluate(a, P)[0]) for a in _PHI_D])
    dd = np.array([[float(evaluate(a, P)[0]) for a in row] for row in _PHI_DD])
    return v, d, dd


@dataclass
class PhiJet:
    value: float
    grad: np.ndarray  # ambient, projected to the boundary tangent plane
    hess2: np.ndarray  # Riemannian Hessian in the frame (f1, f2)
    frame: np.ndarray


def phi_jet(K: FieldSpec, H: FieldSpec, q) -> PhiJet:
    q = check_boundary_point(q)
    k = float(K.value(q)[0])
    if not k > 0:
        raise DomainError(f"K must be positive on the boundary, got {k} at {q}")
    h = float(H.value(q)[0])
    gK = K.gradient(q)[0].copy()
    gH = H.gradient(q)[0].copy()
    HK = K.hessian(q)[0].copy()
    HH = H.hessian(q)[0].copy()
    v, d, dd = phi_partials(k, h)
    g = d[0] * gK + d[1] * gH
    Hf = d[0] * HK + d[1] * HH + dd[0, 0] * np.outer(gK, gK) + dd[0, 1] * (np.outer(gK, gH) + np.outer(gH, gK)) + dd[1, 1] * np.outer(gH, gH)
    B = boundary_frame(q)[:2]
    radial = float(g @ q)
    hess2 = B @ Hf @ B.T - radial * np.eye(2)
    hess2 = 0.5 * (hess2 + hess2.T)
    gt = B.T @ (B @ g)
    return PhiJet(v, gt, hess2, B)


def phi_boundary_gradient(K, H, q) -> np.ndarray:
    K = as_field(K, "half-sphere")
    H = as_field(H, "boundary")
    return phi_jet(K, H, q).grad


@dataclass
class CriticalPointRecord:
    q: np.ndarray
    phi_value: float
    morse_index: int
    dK_dnu: float
    classification: str  # "Fplus", "Fminus" or "none" when dK/dnu = 0
    hessian_eigs: tuple
    grad_norm: float
    K_value: float = 0.0
    H_value: float = 0.0
    degenerate: bool = False

    def as_dict(self):
        return {
            "q": [float(c) for c in self.q],
            "phi": self.phi_value,
            "morse_index": self.morse_index,
            "dK_dnu": self.dK_dnu,
            "classification": self.classification,
            "hessian_eigs": [float(e) for e in self.hessian_eigs],
            "grad_norm": self.grad_norm,
            "K": self.K_value,
            "H": self.H_value,
            "degenerate": self.degenerate,
        }


def classify(dK_dnu: float, tol: float = 1e-12) -> str:
    if dK_dnu > tol:
        return "Fplus"
    if dK_dnu < -tol:
        return "Fminus"
    return "none"


def _newton(K, H, x0, maxit=60):
    x = x0.copy()
    for _ in range(maxit):
        J = phi_jet(K, H, x)
        g2 = J.frame @ J.grad
        gn = float(np.linalg.norm(g2))
        if gn < GRAD_TOL:
            return x, J, True
        try:
            step = -np.linalg.solve(J.hess2, g2)
        except np.linalg.LinAlgError:
            return x, J, False
        s = float(np.linalg.norm(step))
        if s > 0.5:
            step *= 0.5 / s
        x = x + step @ J.frame
        x[3] = 0.0
        x /= np.linalg.norm(x)
    J = phi_jet(K, H, x)
    return x, J, float(np.linalg.norm(J.frame @ J.grad)) < GRAD_TOL


def find_critical_points(K, H, seeds: int = 64, degeneracy_tol: float = 1e-8) -> List[CriticalPointRecord]:
    """Newton-refined critical points of phi from a Fibonacci set of seeds.

    A constant phi is reported as a single degenerate record so callers
    can see that the Morse condition fails.
    """
    if seeds < 32:
        raise UsageError("need at least 32 seeds")
    K = as_field(K, "half-sphere")
    H = as_field(H, "boundary")
    pts = fibonacci_sphere(seeds)
    found: List[CriticalPointRecord] = []
    failed = []
    for x0 in pts:
        x, J, ok = _newton(K, H, x0)
        if not ok:
            failed.append(x0[:3].tolist())
            continue
        if any(geodesic_distance(x, r.q) < DEDUP_TOL for r in found):
            continue
        eig = np.linalg.eigvalsh(J.hess2)
        scale = max(1.0, abs(J.value))
        degenerate = bool(np.min(np.abs(eig)) < degeneracy_tol * scale)
        dn = normal_derivative(K, x)
        found.append(
            CriticalPointRecord(
                q=x,
                phi_value=J.value,
                morse_index=int(np.sum(eig < 0)),
                dK_dnu=dn,
                classification=classify(dn),
                hessian_eigs=(float(eig[0]), float(eig[1])),
                grad_norm=float(np.linalg.norm(J.grad)),
                K_value=float(K.value(x)[0]),
                H_value=float(H.value(x)[0]),
                degenerate=degenerate,
            )
        )
        if degenerate and np.max(np.abs(eig)) < degeneracy_tol * scale:
            # phi is flat here; the whole sphere may be critical
            break
    if failed and len(failed) == len(pts):
        warnings.warn(f"Newton failed from every seed; possible missed critical points near {failed[:5]}")
    elif failed:
        warnings.warn(f"Newton failed from {len(failed)} seeds, e.g. {failed[:3]}", RuntimeWarning)
    found.sort(key=lambda r: (r.phi_value, tuple(np.round(r.q, 12))))
    return found


# ---------------------------------------------------------------------------
# interaction matrix


@dataclass
class InteractionMatrix:
    points: list
    entries: np.ndarray
    rho: float

    def as_dict(self):
        return {"entries": self.entries.tolist(), "rho": self.rho}


def matrix_from_values(points, Kvals, Hvals, dKdnu) -> np.ndarray:
    """M_jj = dK/dnu psi / K^{3/2};  M_lj = -4 sqrt(2) G_{q^l}(q^j) / (K_l K_j)^{1/4}."""
    P = np.array([check_boundary_point(p) for p in points])
    N = len(P)
    Kv = np.asarray(Kvals, dtype=float)
    Hv = np.asarray(Hvals, dtype=float)
    dn = np.asarray(dKdnu, dtype=float)
    M = np.empty((N, N))
    for j in range(N):
        M[j, j] = dn[j] * psi_closed(Kv[j], Hv[j]) / Kv[j] ** 1.5
        for l in range(j + 1, N):
            if geodesic_distance(P[l], P[j]) <= DEDUP_TOL:
                raise UsageError("coincident points in the interaction matrix")
            m = -4.0 * np.sqrt(2.0) * greens_function(P[l], P[j]) / (Kv[l] * Kv[j]) ** 0.25
            M[l, j] = M[j, l] = m
    return M


def least_eigenvalue(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def build_interaction_matrix(records: Sequence[CriticalPointRecord], K=None, H=None) -> InteractionMatrix:
    if len(records) == 0:
        raise UsageError("need at least one point")
    for r in records:
        if r.classification == "Fminus":
            raise UsageError("interaction matrix is defined on F minus F^-")
    pts = [r.q for r in records]
    if K is not None:
        K = as_field(K, "half-sphere")
        H = as_field(H if H is not None else 0.0, "boundary")
        Kv = [float(K.value(p)[0]) for p in pts]
        Hv = [float(H.value(p)[0]) for p in pts]
        dn = [normal_derivative(K, p) for p in pts]
    else:
        Kv = [r.K_value for r in records]
        Hv = [r.H_value for r in records]
        dn = [r.dK_dnu for r in records]
    M = matrix_from_values(pts, Kv, Hv, dn)
    return InteractionMatrix(list(pts), M, least_eigenvalue(M))


# ---------------------------------------------------------------------------
# Index


def index_from_data(morse_indices: Sequence[int], rho_of_subset) -> int:
    """-1 + sum over nonempty subsets S of F^+ with rho(S) > 0 of (-1)^{|S| + sum(2 - m)}.

    ``rho_of_subset`` takes a tuple of indices (increasing) and returns rho.
    Subsets are enumerated as bitmasks.
    """
    m = list(morse_indices)
    ell = len(m)
    if ell > MAX_SUBSET_POINTS:
        raise CombinatorialLimitError(f"{ell} points exceed the subset cap of {MAX_SUBSET_POINTS}")
    total = -1
    for mask in range(1, 1 << ell):
        S = tuple(i for i in range(ell) if mask >> i & 1)
        if rho_of_subset(S) > 0:
            e = len(S) + sum(2 - m[i] for i in S)
            total += 1 if e % 2 == 0 else -1
    return total


def index_from_matrix(morse_indices: Sequence[int], M: np.ndarray) -> int:
    M = np.asarray(M, dtype=float)

    def rho(S):
        return least_eigenvalue(M[np.ix_(S, S)])

    return index_from_data(morse_indices, rho)


@dataclass
class GenericityReport:
    morse: bool
    dKdnu_nonzero: bool
    rho_nonzero: bool
    records: list
    degenerate_points: list = field(default_factory=list)
    zero_normal_points: list = field(default_factory=list)
    zero_rho_subsets: list = field(default_factory=list)
    subset_rhos: list = field(default_factory=list)
    subset_count: int = 0

    @property
    def generic(self) -> bool:
        return self.morse and self.dKdnu_nonzero and self.rho_nonzero

    def as_dict(self):
        return {
            "generic": self.generic,
            "morse": self.morse,
            "dKdnu_nonzero": self.dKdnu_nonzero,
            "rho_nonzero": self.rho_nonzero,
            "degenerate_points": self.degenerate_points,
            "zero_normal_points": self.zero_normal_points,
            "zero_rho_subsets": self.zero_rho_subsets,
            "subset_count": self.subset_count,
            "subset_rhos": self.subset_rhos,
            "critical_points": [r.as_dict() for r in self.records],
        }


def check_genericity(K, H, seeds: int = 64, records=None, rho_tol: float = 1e-10, dn_tol: float = 1e-10) -> GenericityReport:
    K = as_field(K, "half-sphere")
    H = as_field(H, "boundary")
    if records is None:
        records = find_critical_points(K, H, seeds)
    if len(records) > MAX_SUBSET_POINTS:
        raise CombinatorialLimitError(f"|F| = {len(records)} exceeds {MAX_SUBSET_POINTS}")
    morse = len(records) > 0 and not any(r.degenerate for r in records)
    degenerate = [r.q[:3].tolist() for r in records if r.degenerate]
    zero_n = [r.q[:3].tolist() for r in records if abs(r.dK_dnu) <= dn_tol]
    cand = [r for r in records if r.classification != "Fminus"]
    Mfull = matrix_from_values([r.q for r in cand], [r.K_value for r in cand], [r.H_value for r in cand], [r.dK_dnu for r in cand]) if cand else np.zeros((0, 0))
    zero_rho = []
    rhos = []
    count = 0
    for size in range(1, len(cand) + 1):
        for S in combinations(range(len(cand)), size):
            count += 1
            rho = least_eigenvalue(Mfull[np.ix_(S, S)])
            rhos.append({"subset": list(S), "rho": rho})
            if abs(rho) <= rho_tol:
                zero_rho.append(list(S))
    return GenericityReport(
        morse=morse,
        dKdnu_nonzero=not zero_n,
        rho_nonzero=not zero_rho,
        records=records,
        degenerate_points=degenerate,
        zero_normal_points=zero_n,
        zero_rho_subsets=zero_rho,
        subset_rhos=rhos,
        subset_count=count,
    )


@dataclass
class IndexReport:
    index: int
    fplus: list
    genericity: GenericityReport

    def as_dict(self):
        return {"index": self.index, "fplus": [r.as_dict() for r in self.fplus], "genericity": self.genericity.as_dict()}


def index_report(K, H, seeds: int = 64, force: bool = False) -> IndexReport:
    K = as_field(K, "half-sphere")
    H = as_field(H, "boundary")
    rep = check_genericity(K, H, seeds)
    if not rep.generic and not force:
        raise GenericityError("(K, H) is not generic; Index is undefined", rep)
    fplus = [r for r in rep.records if r.classification == "Fplus"]
    if not fplus:
        return IndexReport(-1, [], rep)
    M = build_interaction_matrix(fplus).entries
    return IndexReport(index_from_matrix([r.morse_index for r in fplus], M), fplus, rep)


def index_formula(K, H, seeds: int = 64) -> int:
    return index_report(K, H, seeds).index


# ---------------------------------------------------------------------------
# homotopy H_t = t H keeping phi fixed


def solve_Kt(phi_value: float, h: float, t: float) -> float:
    """K_t > 0 with 4 pi sqrt(6/K_t)(pi/2 - arctan(t h sqrt(6/K_t))) = phi_value."""
    th = t * h
    if th == 0:
        return 24.0 * np.pi ** 4 / phi_value ** 2

    def f(logk):
        return float(phi_closed(np.exp(logk), th)) - phi_value

    lo, hi = np.log(24.0 * np.pi ** 4 / phi_value ** 2) - 1.0, np.log(24.0 * np.pi ** 4 / phi_value ** 2) + 1.0
    for _ in range(200):
        if f(lo) > 0:
            break
        lo -= 2.0
    for _ in range(200):
        if f(hi) < 0:
            break
        hi += 2.0
    if not (f(lo) > 0 > f(hi)):
        raise DomainError(f"could not bracket K_t for phi = {phi_value}, tH = {th}")
    return float(np.exp(brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)))


class _HomotopyBackend:
    def __init__(self, K, H, t):
        self.K, self.H, self.t = K, H, t

    def value(self, X):
        X = np.atleast_2d(X)
        kv = self.K.value(X)
        hv = self.H.value(X)
        ph = phi_closed(kv, hv)
        return np.array([solve_Kt(p, h, self.t) for p, h in zip(np.atleast_1d(ph), np.atleast_1d(hv))])


class HomotopyField:
    """Boundary values of K_t (value queries only)."""

    domain = "boundary"

    def __init__(self, K, H, t):
        self.backend = _HomotopyBackend(K, H, t)
        self.t = t

    def value(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float)).copy()
        X[:, 3] = 0.0
        return self.backend.value(X)

    __call__ = value


@dataclass
class HomotopyResult:
    t: float
    Kt: HomotopyField
    Ht_scale: float
    points: list
    Kt_values: np.ndarray
    dKt_dnu: np.ndarray
    K_values: np.ndarray
    H_values: np.ndarray
    dK_dnu: np.ndarray

    def phi_t(self, X):
        X = np.atleast_2d(X)
        Hf = self.Kt.backend.H
        return phi_closed(self.Kt.value(X), self.t * Hf.value(X))

    def matrix(self, subset=None) -> np.ndarray:
        S = list(range(len(self.points))) if subset is None else list(subset)
        return matrix_from_values(
            [self.points[i] for i in S], self.Kt_values[S], self.t * self.H_values[S], self.dKt_dnu[S]
        )


def homotopy_Kt(K, H, t: float, records=None, seeds: int = 64) -> HomotopyResult:
    """K_t on the boundary with phi_t = phi, H_t = t H, and the prescribed dK_t/dnu at F."""
    if not 0.0 <= t <= 1.0:
        raise UsageError("t must lie in [0, 1]")
    K = as_field(K, "half-sphere")
    H = as_field(H, "boundary")
    if records is None:
        records = find_critical_points(K, H, seeds)
    pts = [r.q for r in records]
    Kv = np.array([r.K_value for r in records])
    Hv = np.array([r.H_value for r in records])
    dn = np.array([r.dK_dnu for r in records])
    ph = phi_closed(Kv, Hv) if len(records) else np.zeros(0)
    Ktv = np.array([solve_Kt(p, h, t) for p, h in zip(np.atleast_1d(ph), Hv)])
    ratio = (4 * np.pi - Hv * ph) / (4 * np.pi - t * Hv * ph) if len(records) else np.zeros(0)
    dKt = Ktv / Kv * ratio * dn if len(records) else np.zeros(0)
    return HomotopyResult(float(t), HomotopyField(K, H, t), float(t), pts, Ktv, dKt, Kv, Hv, dn)


def homotopy_index(res: HomotopyResult, records) -> int:
    fp = [i for i, r in enumerate(records) if res.dKt_dnu[i] > 0]
    if not fp:
        return -1
    M = res.matrix(fp)
    return index_from_matrix([records[i].morse_index for i in fp], M)
