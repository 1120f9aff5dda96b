"""Axisymmetric finite-difference solver for the subcritical problem in the half-space chart.

Unknown u(r, z) on [0, R]^2 in the chart centred at q, with
    -8 Lap u = W^tau K u^p            in the half-space,
    -2 du/dz = W^{tau/2} H u^{(p+1)/2}  on z = 0,
p = 5 - tau.  Nodes are sinh-stretched towards the origin, ghost layers
carry the symmetry at r = 0, the nonlinear Neumann condition at z = 0 and
the Robin condition du/dn = -(x.n / |x|^2) u (harmonic 1/|x| tail) on the
outer edges.  The nonlinear system is solved by damped Newton with a
backtracking line search on the residual norm.
"""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .bubbles import SphereBubble, fit_bubble
from .energetics import bubble_rule_pair, phi, phi_closed, sup_along_ray, term_integrals
from .errors import ConvergenceError, DomainError, FitError, PositivityError, SymmetryError, UsageError
from .fields import FieldSpec, as_field, normal_derivative
from .geometry import HalfSpacePoint, boundary_point, geodesic_distance, inverse_stereographic

log = logging.getLogger(__name__)

DEFAULT_CENTER = (0.0, 0.0, 1.0, 0.0)


# ---------------------------------------------------------------------------
# grid


@dataclass
class AxisymmetricGrid:
    """Nodes r_i = z_i = R sinh(beta i/N) / sinh(beta), i = 0..N, and nodal values u."""

    R: float = 40.0
    N: int = 256
    beta: float = 12.0
    u: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.N < 4 or not self.R > 0 or self.beta < 0:
            raise UsageError("grid needs N >= 4, R > 0, beta >= 0")
        if self.u is not None:
            self.u = np.asarray(self.u, dtype=float).reshape(self.shape)

    @property
    def shape(self):
        return (self.N + 1, self.N + 1)

    @property
    def d(self) -> float:
        return 1.0 / self.N

    def mapping(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.beta < 1e-8:
            return self.R * xi, self.R * np.ones_like(xi)
        s = np.sinh(self.beta)
        return self.R * np.sinh(self.beta * xi) / s, self.R * self.beta * np.cosh(self.beta * xi) / s

    @property
    def nodes(self) -> np.ndarray:
        return self.mapping(np.arange(self.N + 1) * self.d)[0]

    @property
    def spacing(self) -> np.ndarray:
        """Local node spacing g'(xi) / N."""
        return self.mapping(np.arange(self.N + 1) * self.d)[1] * self.d

    def mesh(self):
        x = self.nodes
        return np.meshgrid(x, x, indexing="ij")

    def weight(self) -> np.ndarray:
        R, Z = self.mesh()
        return np.sqrt(2.0 / (1.0 + R * R + Z * Z))

    def quadrature_weights(self):
        """Trapezoid weights in the mapped variable: (volume 2 pi r dr dz, boundary 2 pi r dr)."""
        h = self.spacing.copy()
        h[0] *= 0.5
        h[-1] *= 0.5
        r = self.nodes
        wr = 2.0 * np.pi * r * h
        return np.outer(wr, h), wr

    def chart_points(self) -> np.ndarray:
        R, Z = self.mesh()
        return np.column_stack([R.ravel(), np.zeros(R.size), Z.ravel()])

    def interpolator(self):
        if self.u is None:
            raise UsageError("grid has no values")
        x = self.nodes
        return RegularGridInterpolator((x, x), self.u, bounds_error=False, fill_value=None)


# ---------------------------------------------------------------------------
# discrete operator


@dataclass
class _System:
    grid: AxisymmetricGrid
    A: sp.csr_matrix
    Kc: np.ndarray
    bidx: np.ndarray
    bcoef: np.ndarray
    p: float
    tau: float
    cell: np.ndarray

    @property
    def q(self):
        return (self.p + 1.0) / 2.0

    def residual(self, u):
        F = self.A @ u - self.Kc * u ** self.p
        F[self.bidx] += self.bcoef * u[self.bidx] ** self.q
        return F

    def jacobian(self, u):
        jd = -self.p * self.Kc * u ** (self.p - 1.0)
        jd[self.bidx] += self.bcoef * self.q * u[self.bidx] ** (self.q - 1.0)
        return (self.A + sp.diags(jd)).tocsc()

    def scaled_norm(self, F) -> float:
        return float(np.max(np.abs(F * self.cell)))


def _coefficients_1d(grid: AxisymmetricGrid):
    N = grid.N
    d = grid.d
    xi = np.arange(-1, N + 2) * d
    _, gp = grid.mapping(xi)
    gph = 0.5 * (gp[:-1] + gp[1:])
    a = np.arange(N + 1) + 1
    cm = 1.0 / (gph[a - 1] * d * d * gp[a])
    cp = 1.0 / (gph[a] * d * d * gp[a])
    dp = 1.0 / (2.0 * d * gp[a])
    return cm, -(cm + cp), cp, dp


def _operator(grid: AxisymmetricGrid) -> sp.csr_matrix:
    """Matrix of -8 Lap with the linear ghost conditions eliminated."""
    N = grid.N
    n = N + 1
    x = grid.nodes
    cm, c0, cp, dp = _coefficients_1d(grid)
    I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    I = I.ravel()
    J = J.ravel()
    k = I * n + J
    r = x[I]
    z = x[J]
    rho2 = r * r + z * z
    rows, cols, vals = [], [], []

    def put(mask, di, dj, v):
        rows.append(k[mask])
        cols.append((I[mask] + di) * n + J[mask] + dj)
        vals.append(v)

    # radial part
    m = I == 0
    put(m, 0, 0, 2.0 * c0[I[m]])
    put(m, 1, 0, 2.0 * (cm[I[m]] + cp[I[m]]))
    m = (I > 0) & (I < N)
    i = I[m]
    put(m, -1, 0, cm[i] - dp[i] / r[m])
    put(m, 0, 0, c0[i])
    put(m, 1, 0, cp[i] + dp[i] / r[m])
    m = I == N
    i = I[m]
    a = -(r[m] / rho2[m]) / dp[i]
    put(m, 0, 0, c0[i] + cp[i] * a + dp[i] * a / r[m])
    put(m, -1, 0, cm[i] + cp[i])
    # vertical part
    m = J == 0
    j = J[m]
    put(m, 0, 0, c0[j])
    put(m, 0, 1, cm[j] + cp[j])
    m = (J > 0) & (J < N)
    j = J[m]
    put(m, 0, -1, cm[j])
    put(m, 0, 0, c0[j])
    put(m, 0, 1, cp[j])
    m = J == N
    j = J[m]
    a = -(z[m] / rho2[m]) / dp[j]
    put(m, 0, 0, c0[j] + cp[j] * a)
    put(m, 0, -1, cm[j] + cp[j])
    A = sp.csr_matrix(
        (-8.0 * np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n * n, n * n)
    )
    A.sum_duplicates()
    return A


def chart_ambient(grid: AxisymmetricGrid, center=DEFAULT_CENTER) -> np.ndarray:
    return inverse_stereographic(boundary_point(center), grid.chart_points())


def check_axisymmetric(K: FieldSpec, H: FieldSpec, center=DEFAULT_CENTER, tol: float = 1e-10, m: int = 64):
    """Sample the azimuthal variation of K and H around the chart axis."""
    q = boundary_point(center)
    rng = np.random.default_rng(0)
    rr = rng.uniform(0.05, 5.0, m)
    zz = rng.uniform(0.0, 5.0, m)
    worst = 0.0
    for th in np.linspace(0.3, 2 * np.pi, 7):
        Y0 = np.column_stack([rr, np.zeros(m), zz])
        Y1 = np.column_stack([rr * np.cos(th), rr * np.sin(th), zz])
        k0 = K.value(inverse_stereographic(q, Y0))
        k1 = K.value(inverse_stereographic(q, Y1))
        Y0[:, 2] = 0.0
        Y1[:, 2] = 0.0
        h0 = H.value(inverse_stereographic(q, Y0))
        h1 = H.value(inverse_stereographic(q, Y1))
        worst = max(worst, float(np.max(np.abs(k0 - k1))), float(np.max(np.abs(h0 - h1))))
    if worst > tol:
        raise SymmetryError(f"data not axisymmetric about the chart axis (variation {worst:.3g})")
    return worst


def _system(grid: AxisymmetricGrid, K: FieldSpec, H: FieldSpec, tau: float, center) -> _System:
    n = grid.N + 1
    X = chart_ambient(grid, center)
    W = grid.weight().ravel()
    Kv = K.value(X)
    if np.any(Kv <= 0):
        raise DomainError("K must be positive on the grid")
    Kc = Kv * W ** tau
    bidx = np.arange(n) * n
    Hc = H.value(X[bidx]) * W[bidx] ** (tau / 2.0)
    cm, _, _, dp = _coefficients_1d(grid)
    bcoef = -8.0 * cm[0] * Hc / (2.0 * dp[0])
    h = grid.spacing
    cell = np.outer(h, h).ravel()
    return _System(grid, _operator(grid), Kc, bidx, bcoef, 5.0 - tau, tau, cell)


# ---------------------------------------------------------------------------
# Newton


@dataclass
class NewtonInfo:
    iterations: int
    residual: float
    raw_residual: float
    history: list = field(default_factory=list)
    converged: bool = False


def _newton(S: _System, u0: np.ndarray, tol: float, maxit: int) -> tuple:
    u = np.array(u0, dtype=float).ravel()
    if np.any(u <= 0):
        raise PositivityError("initial guess must be positive", witness=int(np.argmin(u)), value=float(u.min()))
    hist = []
    F = S.residual(u)
    for it in range(maxit + 1):
        res = S.scaled_norm(F)
        hist.append(res)
        if res < tol:
            return u, NewtonInfo(it, res, float(np.max(np.abs(F))), hist, True)
        if it == maxit:
            break
        du = spla.spsolve(S.jacobian(u), -F)
        if not np.all(np.isfinite(du)):
            break
        s = 1.0
        halvings = 0
        while np.any(u + s * du <= 0):
            s *= 0.5
            halvings += 1
            if halvings > 60:
                raise PositivityError("Newton step cannot keep u positive", witness=int(np.argmin(du)), value=float(du.min()))
        f0 = np.linalg.norm(F)
        while s > 1e-4:
            un = u + s * du
            Fn = S.residual(un)
            if np.linalg.norm(Fn) < (1.0 - 1e-4 * s) * f0:
                break
            s *= 0.5
        else:
            un = u + s * du
            Fn = S.residual(un)
        u, F = un, Fn
    info = NewtonInfo(len(hist) - 1, hist[-1], float(np.max(np.abs(F))), hist, False)
    raise ConvergenceError(f"Newton did not converge: residual {hist[-1]:.3g} after {info.iterations} steps", info=info)


# ---------------------------------------------------------------------------
# energies


def _nehari_terms(grid: AxisymmetricGrid, S: _System, u2: np.ndarray):
    wv, wb = grid.quadrature_weights()
    p = S.p
    A = float(np.sum(wv * S.Kc.reshape(grid.shape) * u2 ** (p + 1.0)))
    Hc = S.bcoef / (-8.0 * _coefficients_1d(grid)[0][0] / (2.0 * _coefficients_1d(grid)[3][0]))
    B = float(np.sum(wb * Hc * u2[:, 0] ** ((p + 3.0) / 2.0)))
    return A, B


def energy_terms(grid: AxisymmetricGrid, S: _System) -> dict:
    """Nehari form of the functional and a direct cross-check with a harmonic tail."""
    u2 = grid.u
    p = S.p
    A, B = _nehari_terms(grid, S, u2)
    nehari = (0.5 - 1.0 / (p + 1.0)) * A + (2.0 - 8.0 / (p + 3.0)) * B
    x = grid.nodes
    ur = np.gradient(u2, x, axis=0, edge_order=2)
    uz = np.gradient(u2, x, axis=1, edge_order=2)
    wv, _ = grid.quadrature_weights()
    G = float(np.sum(wv * (ur * ur + uz * uz)))
    # exterior energy of the harmonic tail: int (x.n / |x|^2) u^2 over the outer edges
    h = grid.spacing.copy()
    h[0] *= 0.5
    h[-1] *= 0.5
    L = grid.R
    rho2_r = L * L + x * x
    tail = float(np.sum(2 * np.pi * L * h * (L / rho2_r) * u2[-1, :] ** 2))
    tail += float(np.sum(2 * np.pi * x * h * (L / rho2_r) * u2[:, -1] ** 2))
    direct = 4.0 * (G + tail) - A / (p + 1.0) - 4.0 * B / ((p + 3.0) / 2.0)
    return {"volume": A, "boundary": B, "grad2": G + tail, "nehari": nehari, "direct": direct}


# ---------------------------------------------------------------------------
# results


@dataclass
class SolveResult:
    grid: AxisymmetricGrid
    energy: float
    sup_norm: float
    sup_location: HalfSpacePoint
    residual_norm: float
    mp_level: float
    iterations: int
    tau: float
    K_text: str = ""
    H_text: str = ""
    center: tuple = DEFAULT_CENTER
    energy_direct: float = float("nan")
    sphere_sup: float = float("nan")
    sphere_sup_point: Optional[np.ndarray] = None
    interior_sup: float = float("nan")
    raw_residual: float = float("nan")
    strategy: str = ""

    @property
    def p(self):
        return 5.0 - self.tau

    def sphere_values(self) -> np.ndarray:
        return self.grid.u / self.grid.weight()

    def peak_distance(self) -> float:
        """Geodesic distance from the sphere maximum to the chart centre."""
        return float(geodesic_distance(self.sphere_sup_point, boundary_point(self.center)))

    def as_dict(self) -> dict:
        return {
            "tau": self.tau,
            "p": self.p,
            "K": self.K_text,
            "H": self.H_text,
            "grid": {"R": self.grid.R, "N": self.grid.N, "beta": self.grid.beta},
            "energy": self.energy,
            "energy_direct": self.energy_direct,
            "sup_norm": self.sup_norm,
            "sup_location": self.sup_location.y.tolist(),
            "sphere_sup": self.sphere_sup,
            "sphere_sup_point": None if self.sphere_sup_point is None else list(map(float, self.sphere_sup_point)),
            "interior_sup": self.interior_sup,
            "residual_norm": self.residual_norm,
            "raw_residual": self.raw_residual,
            "mp_level": self.mp_level,
            "iterations": self.iterations,
            "strategy": self.strategy,
        }


def _refine_peak(x, v):
    """Quadratic refinement of a 1D maximum on a non-uniform grid; returns (position, value)."""
    i = int(np.argmax(v))
    if i == 0 or i == len(v) - 1:
        return float(x[i]), float(v[i])
    c = np.polyfit(x[i - 1 : i + 2] - x[i], v[i - 1 : i + 2], 2)
    if c[0] >= 0:
        return float(x[i]), float(v[i])
    t = -c[1] / (2 * c[0])
    return float(x[i] + t), float(np.polyval(c, t))


def _summarize(grid, S, K, H, tau, center, info, mp_level, strategy, interior_x4):
    u2 = grid.u
    e = energy_terms(grid, S)
    x = grid.nodes
    i, j = np.unravel_index(int(np.argmax(u2)), u2.shape)
    v = u2 / grid.weight()
    iv, jv = np.unravel_index(int(np.argmax(v)), v.shape)
    # the sphere maximum lies on the symmetry axis; refine its height
    if iv == 0:
        zpk, vpk = _refine_peak(x, v[0, :])
        zpk = max(zpk, 0.0)
        rpk = 0.0
    else:
        rpk, vpk = float(x[iv]), float(v[iv, jv])
        zpk = float(x[jv])
    q = boundary_point(center)
    Xpk = inverse_stereographic(q, np.array([rpk, 0.0, zpk]))
    Xall = chart_ambient(grid, center)
    deep = Xall[:, 3] > interior_x4
    interior = float(np.max(v.ravel()[deep])) if np.any(deep) else float("nan")
    return SolveResult(
        grid=grid,
        energy=e["nehari"],
        sup_norm=float(u2[i, j]),
        sup_location=HalfSpacePoint(np.array([x[i], 0.0, x[j]])),
        residual_norm=info.residual,
        mp_level=mp_level,
        iterations=info.iterations,
        tau=float(tau),
        K_text=K.text,
        H_text=H.text,
        center=tuple(map(float, q)),
        energy_direct=e["direct"],
        sphere_sup=max(vpk, float(v.max())),
        sphere_sup_point=Xpk,
        interior_sup=interior,
        raw_residual=info.raw_residual,
        strategy=strategy,
    )


# ---------------------------------------------------------------------------
# bubble paths


@dataclass
class BubblePath:
    q: np.ndarray
    gamma: float
    t_star: float
    level: float


def bubble_path_scan(K, H, tau: float, q_points=None, gammas=None, resolution: int = 20) -> List[BubblePath]:
    """sup_t J_tau(t delta_{q,gamma}) over a (q, gamma) grid."""
    K = as_field(K, "half-sphere")
    H = as_field(H, "boundary")
    if q_points is None:
        q_points = [DEFAULT_CENTER]
    if gammas is None:
        gammas = np.geomspace(1.0, max(10.0, 20.0 / tau), 25)
    out = []
    for q in q_points:
        q = boundary_point(q)
        Kq = float(K.value(q)[0])
        Hq = float(H.value(q)[0])
        for g in gammas:
            try:
                d = SphereBubble(q, float(g), Kq, Hq)
            except DomainError:
                continue
            rule, brule = bubble_rule_pair(q, resolution, max(1.0, float(g)))
            T = term_integrals(K, H, d, tau, rule, brule)
            try:
                ts, lv = sup_along_ray(T)
            except DomainError:
                continue
            out.append(BubblePath(q, float(g), ts, lv))
    if not out:
        raise DomainError("no admissible bubble path")
    return out


def mountain_pass_level(K, H, tau: float, q_points=None, gammas=None, resolution: int = 20) -> float:
    """Upper estimate of the mountain-pass level: the best bubble path on the (q, gamma) grid."""
    return min(b.level for b in bubble_path_scan(K, H, tau, q_points, gammas, resolution))


def _bubble_seed(grid, K, H, tau, center, path: Optional[BubblePath] = None, resolution: int = 20):
    if path is None:
        scan = bubble_path_scan(K, H, tau, [center], resolution=resolution)
        path = min(scan, key=lambda b: b.level)
    q = boundary_point(center)
    Kq = float(K.value(q)[0])
    Hq = float(H.value(q)[0])
    d = SphereBubble(q, path.gamma, Kq, Hq)
    X = chart_ambient(grid, center)
    return path.t_star * grid.weight().ravel() * d.value(X), path


# ---------------------------------------------------------------------------
# solve


def solve_subcritical(
    K,
    H,
    tau: float,
    N: int = 256,
    R: float = 40.0,
    beta: float = 12.0,
    strategy: str = "mountain-pass",
    previous: Optional[SolveResult] = None,
    rescale: float = 1.0,
    initial=None,
    center=DEFAULT_CENTER,
    tol: float = 1e-8,
    maxit: int = 60,
    mp_resolution: int = 20,
    interior_x4: float = 0.3,
    check_symmetry: bool = True,
) -> SolveResult:
    """Positive solution of the chart problem at p = 5 - tau.

    strategy "mountain-pass" seeds Newton with the best point t* delta_{q,gamma}
    of the bubble paths centred at the chart origin; "continuation" starts from
    ``previous`` (a solution at another tau), optionally concentrated by
    ``rescale`` via u(y) -> s^{1/2} u(s y).  ``initial`` overrides both.
    The residual norm is the discrete max norm of the equations scaled by the
    local cell area h_r h_z.
    """
    if not (0.0 < tau <= 0.5):
        raise DomainError("tau must lie in (0, 0.5]")
    K = as_field(K, "half-sphere")
    H = as_field(H, "boundary")
    if check_symmetry:
        check_axisymmetric(K, H, center)
    grid = AxisymmetricGrid(R, N, beta)
    S = _system(grid, K, H, tau, center)
    path = None
    if initial is not None:
        u0 = np.asarray(initial, dtype=float).ravel()
    elif strategy == "mountain-pass":
        u0, path = _bubble_seed(grid, K, H, tau, center, resolution=mp_resolution)
    elif strategy == "continuation":
        if previous is None:
            raise UsageError("continuation needs a previous solution")
        f = previous.grid.interpolator()
        Rm, Zm = grid.mesh()
        pts = np.column_stack([(rescale * Rm).ravel(), (rescale * Zm).ravel()])
        u0 = np.sqrt(rescale) * f(np.clip(pts, 0.0, previous.grid.R))
        u0 = np.maximum(u0, 1e-12)
    else:
        raise UsageError(f"unknown strategy {strategy!r}")
    u, info = _newton(S, u0, tol, maxit)
    if np.any(u <= 0):
        raise PositivityError("solution lost positivity", witness=int(np.argmin(u)), value=float(u.min()))
    grid.u = u.reshape(grid.shape)
    if path is None:
        scan = bubble_path_scan(K, H, tau, [center], resolution=mp_resolution)
        path = min(scan, key=lambda b: b.level)
    return _summarize(grid, S, K, H, tau, center, info, path.level, strategy if initial is None else "initial", interior_x4)


def manufactured_residual(N: int, R: float = 6.0, Kbar: float = 6.0, Hbar: float = 0.0, lam: float = 1.0) -> dict:
    """Truncation error of the scheme on an exact critical bubble (uniform grid, tau = 0).

    Interior rows use the discrete operator; on z = 0 the Neumann condition
    is checked with the centred difference through the exact ghost value.
    Outer Robin rows are excluded (the bubble is not exactly harmonic there).
    """
    from .bubbles import BoundaryBubble

    b = BoundaryBubble.make(lam, Kbar, Hbar)
    grid = AxisymmetricGrid(R, N, 0.0)
    x = grid.nodes
    h = x[1] - x[0]
    Rm, Zm = grid.mesh()
    U = b.value(np.column_stack([Rm.ravel(), np.zeros(Rm.size), Zm.ravel()]))
    A = _operator(grid)
    F = (A @ U - Kbar * U ** 5).reshape(grid.shape)
    n = grid.N
    interior = float(np.max(np.abs(F[: n - 1, 1 : n - 1])))
    up = b.value(np.column_stack([x, np.zeros_like(x), np.full_like(x, h)]))
    um = b.value(np.column_stack([x, np.zeros_like(x), np.full_like(x, -h)]))
    u0 = U.reshape(grid.shape)[:, 0]
    bc = -2.0 * (up - um) / (2 * h) - Hbar * u0 ** 3
    return {"h": h, "interior": interior, "boundary": float(np.max(np.abs(bc[: n - 1])))}


# ---------------------------------------------------------------------------
# snapshots


def write_snapshot(result: SolveResult, path) -> None:
    g = result.grid
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# halfsphere axisymmetric snapshot v1\n")
        fh.write(f"R = {g.R:.17g}\nN = {g.N}\nbeta = {g.beta:.17g}\n")
        fh.write(f"tau = {result.tau:.17g}\np = {result.p:.17g}\n")
        fh.write(f"K = {result.K_text}\nH = {result.H_text}\n")
        fh.write("center = " + " ".join(f"{c:.17g}" for c in result.center) + "\n")
        fh.write("layout = row-major u[i_r, j_z]\n")
        fh.write("data\n")
        for row in g.u:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_snapshot(path) -> dict:
    meta = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        in_data = False
        for line in fh:
            line = line.rstrip("\n")
            if in_data:
                if line.strip():
                    rows.append([float(t) for t in line.split()])
            elif line.startswith("#") or not line.strip():
                continue
            elif line == "data":
                in_data = True
            else:
                k, _, v = line.partition("=")
                meta[k.strip()] = v.strip()
    g = AxisymmetricGrid(float(meta["R"]), int(meta["N"]), float(meta["beta"]), np.array(rows))
    meta["grid"] = g
    return meta


# ---------------------------------------------------------------------------
# blow-up experiments


@dataclass
class BlowUpFit:
    tau_values: list
    sup_values: list
    fitted_exponent: float
    fitted_prefactor: float
    bubble_fits: list
    energies: list = field(default_factory=list)
    peak_distances: list = field(default_factory=list)
    interior_sups: list = field(default_factory=list)
    mp_levels: list = field(default_factory=list)
    results: list = field(default_factory=list)
    fit_residuals: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        t = np.asarray(self.tau_values, dtype=float)
        if len(t) and (np.any(t <= 0) or np.any(np.diff(t) >= 0)):
            raise UsageError("tau_values must be positive and strictly decreasing")

    @property
    def growth_factor(self) -> float:
        s = np.asarray(self.sup_values)
        return float(s.max() / s[0]) if len(s) else float("nan")

    def as_dict(self) -> dict:
        return {
            "tau_values": list(self.tau_values),
            "sup_values": list(self.sup_values),
            "fitted_exponent": self.fitted_exponent,
            "fitted_prefactor": self.fitted_prefactor,
            "growth_factor": self.growth_factor,
            "energies": list(self.energies),
            "peak_distances": list(self.peak_distances),
            "interior_sups": list(self.interior_sups),
            "mp_levels": list(self.mp_levels),
            "bubble_fits": [
                {"lam": b.lam, "t": b.t, "Kbar": b.Kbar, "Hbar": b.Hbar} if b is not None else None
                for b in self.bubble_fits
            ],
            "fit_residuals": list(self.fit_residuals),
            "warnings": list(self.warnings),
        }


def fit_peak_bubble(result: SolveResult, width: float = 3.0):
    """Half-space bubble fit around the chart maximum of a solution."""
    g = result.grid
    u = g.u
    k = 7.0 / 24.0
    window = width / (np.sqrt(k) * result.sup_norm ** 2)
    Rm, Zm = g.mesh()
    sel = (Rm <= 2 * window) & (Zm <= 2 * window)
    P = np.column_stack([Rm[sel], np.zeros(int(sel.sum())), Zm[sel]])
    return fit_bubble(P, u[sel], window)


def _loglog_fit(taus, sups):
    c = np.polyfit(np.log(taus), np.log(sups), 1)
    return float(c[0]), float(np.exp(c[1]))


def blowup_scan(
    K,
    H,
    taus: Sequence[float] = (0.2, 0.1, 0.05, 0.02),
    seed: str = "mountain-pass",
    N: int = 256,
    R: float = 40.0,
    beta: float = 12.0,
    jobs: int = 1,
    center=DEFAULT_CENTER,
    **kw,
) -> BlowUpFit:
    """Solve along a decreasing tau schedule and fit log sup u against log tau.

    seed "mountain-pass" seeds every tau independently from its best bubble
    path (so the solves can run concurrently); "continuation" starts each
    solve from the previous solution, concentrated by the ratio of the
    best-path gammas, and falls back to the bubble seed on failure.
    """
    taus = [float(t) for t in taus]
    if len(taus) < 4 or np.any(np.diff(taus) >= 0) or min(taus) <= 0:
        raise UsageError("schedule must be decreasing with at least four positive values")
    K = as_field(K, "half-sphere")
    H = as_field(H, "boundary")
    check_axisymmetric(K, H, center)
    notes = []

    def one(t, prev=None, s=1.0):
        if seed == "continuation" and prev is not None:
            try:
                return solve_subcritical(K, H, t, N, R, beta, "continuation", prev, s, center=center, check_symmetry=False, **kw)
            except (ConvergenceError, PositivityError) as e:
                notes.append(f"tau={t}: continuation failed ({e}); bubble seed used")
        return solve_subcritical(K, H, t, N, R, beta, "mountain-pass", center=center, check_symmetry=False, **kw)

    results: List[Optional[SolveResult]] = []
    if seed == "mountain-pass" and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            futs = [ex.submit(one, t) for t in taus]
            for t, f in zip(taus, futs):
                try:
                    results.append(f.result())
                except (ConvergenceError, PositivityError) as e:
                    notes.append(f"tau={t}: {e}")
                    results.append(None)
    elif seed in ("mountain-pass", "continuation"):
        prev = None
        prev_gamma = None
        for t in taus:
            s = 1.0
            if seed == "continuation" and prev is not None:
                g_now = min(bubble_path_scan(K, H, t, [center]), key=lambda b: b.level).gamma
                s = g_now / prev_gamma
            try:
                r = one(t, prev, s)
            except (ConvergenceError, PositivityError) as e:
                notes.append(f"tau={t}: {e}")
                r = None
            results.append(r)
            if r is not None:
                prev = r
                prev_gamma = min(bubble_path_scan(K, H, t, [center]), key=lambda b: b.level).gamma
    else:
        raise UsageError(f"unknown seed strategy {seed!r}")

    ok = [(t, r) for t, r in zip(taus, results) if r is not None]
    if len(ok) < len(taus):
        warnings.warn("continuation breakdown: partial blow-up fit", RuntimeWarning)
    if len(ok) < 2:
        raise ConvergenceError("fewer than two converged solves in the schedule", info=notes)
    ts = [t for t, _ in ok]
    rs = [r for _, r in ok]
    sups = [r.sphere_sup for r in rs]
    expo, pref = _loglog_fit(ts, sups)
    fits, fres = [], []
    for r in rs:
        try:
            f = fit_peak_bubble(r)
            fits.append(f.bubble)
            fres.append(f.residual)
        except FitError as e:
            fits.append(None)
            fres.append(float("nan"))
            notes.append(f"tau={r.tau}: bubble fit failed ({e})")
    return BlowUpFit(
        tau_values=ts,
        sup_values=sups,
        fitted_exponent=expo,
        fitted_prefactor=pref,
        bubble_fits=fits,
        energies=[r.energy for r in rs],
        peak_distances=[r.peak_distance() for r in rs],
        interior_sups=[r.interior_sup for r in rs],
        mp_levels=[r.mp_level for r in rs],
        results=rs,
        fit_residuals=fres,
        warnings=notes,
    )


@dataclass
class PeakSample:
    """Local maxima of a sphere solution at one tau: points (N, 4) and values (N,)."""

    tau: float
    points: np.ndarray
    values: np.ndarray


@dataclass
class BlowUpData:
    mus: list
    lambdas: list
    peak_points: list
    taus: list
    relation_residuals: list


def _as_sample(r) -> PeakSample:
    if isinstance(r, PeakSample):
        return r
    return PeakSample(r.tau, np.atleast_2d(r.sphere_sup_point), np.array([r.sphere_sup]))


def extract_blowup_data(results, K, H) -> BlowUpData:
    """Finite-tau estimates of mu_j (peak ratios) and lambda_j (tau * peak^2).

    mu_j = 2 (K/6 + H+^2)^{-1/2} K^{1/4} v(q^1) / v(q^j) and
    lambda_j = (K/6 + H+^2) phi / (16 pi K^{1/2}) tau v(q^j)^2, with K, H
    taken at the peak projected to the boundary.  The residual of
    sum_l M_lj mu_l = lambda_j mu_j is reported per tau.
    """
    from .morse_index import matrix_from_values
    from .reduced_energy import eigen_relation_check

    K = as_field(K, "half-sphere")
    H = as_field(H, "boundary")
    samples = [_as_sample(r) for r in results]
    if len(samples) < 2:
        raise UsageError("need at least two schedule points")
    mus, lams, pts, taus, rels = [], [], [], [], []
    for s in samples:
        P = np.atleast_2d(s.points).astype(float).copy()
        P[:, 3] = 0.0
        P /= np.linalg.norm(P, axis=1, keepdims=True)
        v = np.asarray(s.values, dtype=float)
        kv = K.value(P)
        hv = H.value(P)
        base = kv / 6.0 + np.maximum(hv, 0.0) ** 2
        mu = 2.0 * base ** -0.5 * kv ** 0.25 * v[0] / v
        ph = phi_closed(kv, hv) * np.ones(len(v))
        lam = base * ph / (16.0 * np.pi * np.sqrt(kv)) * s.tau * v ** 2
        dn = np.array([normal_derivative(K, p) for p in P])
        M = matrix_from_values(P, kv, hv, dn)
        mus.append(mu)
        lams.append(lam)
        pts.append(P)
        taus.append(s.tau)
        rels.append(eigen_relation_check(M, mu, lam) / float(np.linalg.norm(mu)))
    return BlowUpData(mus, lams, pts, taus, rels)

