import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def zonal_laplacian(F, t, h=1e-4):
    """Laplace-Beltrami on S^3 of x -> F(c.x), as a function of t = c.x."""
    F1 = (F(t + h) - F(t - h)) / (2 * h)
    F2 = (F(t + h) - 2 * F(t) + F(t - h)) / h ** 2
    return F2 * (1 - t * t) - 3 * t * F1, F1


def fd_laplacian(f, Y, h=1e-4):
    lap = np.zeros(len(Y))
    for i in range(Y.shape[1]):
        e = np.zeros(Y.shape[1])
        e[i] = h
        lap += (f(Y + e) - 2 * f(Y) + f(Y - e)) / h ** 2
    return lap


def oracle_matrix(P, Kv, Hv, dn):
    """Interaction matrix written out entry by entry."""
    N = len(P)
    M = np.zeros((N, N))
    for j in range(N):
        T = Hv[j] * np.sqrt(6.0 / Kv[j])
        M[j, j] = dn[j] * (1 + T * (np.arctan(T) - np.pi / 2)) / Kv[j] ** 1.5
        for l in range(N):
            if l != j:
                M[l, j] = -4 * np.sqrt(2) / np.sqrt(1 - P[l] @ P[j]) / (Kv[l] * Kv[j]) ** 0.25
    return M


def oracle_index(m, M):
    """-1 plus signed count over subsets with positive least eigenvalue, built recursively."""

    def subsets(items):
        if not items:
            yield ()
            return
        for rest in subsets(items[1:]):
            yield rest
            yield (items[0],) + rest

    total = -1
    for S in subsets(tuple(range(len(m)))):
        if not S:
            continue
        ev = np.sort(np.linalg.eigvals(M[np.ix_(S, S)]).real)
        if ev[0] > 0:
            sign = (-1) ** len(S)
            for i in S:
                sign *= (-1) ** (2 - m[i])
            total += sign
    return total


# criterion number -> list of (passed, detail), filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 13):
        parts = ACCEPTANCE.get(n)
        if not parts:
            terminalreporter.write_line(f"CRITERION {n}: FAIL (not run)")
            continue
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}")
