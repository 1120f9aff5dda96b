
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import oracle_index, oracle_matrix
from halfsphere.energetics import phi_closed
from halfsphere.errors import DomainError, GenericityError, UsageError
from halfsphere.fields import as_field
from halfsphere.geometry import fibonacci_sphere, random_boundary_points
from halfsphere.morse_index import (
    check_genericity,
    find_critical_points,
    homotopy_index,
    homotopy_Kt,
    index_formula,
    index_from_matrix,
    index_report,
    least_eigenvalue,
    matrix_from_values,
    phi_partials,
    solve_Kt,
)

FOUR_FPLUS = ("6 - x3^2 + 0.5*x1^2 - x4*(x3^2 - 0.5)", "0.2*x3")


def synthetic(seed, n):
    rng = np.random.default_rng(seed)
    P = random_boundary_points(rng, n)
    Kv = rng.uniform(1, 20, n)
    Hv = rng.uniform(-2, 2, n)
    dn = rng.uniform(0.01, 50, n)
    m = rng.integers(0, 3, n)
    return P, Kv, Hv, dn, m


@pytest.mark.parametrize("seed", range(25))
def test_matrix_matches_oracle(seed):
    P, Kv, Hv, dn, _ = synthetic(seed, 1 + seed % 6)
    assert np.allclose(matrix_from_values(P, Kv, Hv, dn), oracle_matrix(P, Kv, Hv, dn), rtol=1e-12)


@given(st.integers(0, 10 ** 6), st.integers(1, 6))
def test_index_matches_oracle(seed, n):
    P, Kv, Hv, dn, m = synthetic(seed, n)
    M = oracle_matrix(P, Kv, Hv, dn)
    assert index_from_matrix(list(m), matrix_from_values(P, Kv, Hv, dn)) == oracle_index(list(m), M)


def test_single_point_values():
    M = np.array([[0.3]])
    assert index_from_matrix([2], M) == -2
    assert index_from_matrix([1], M) == 0
    assert index_from_matrix([0], M) == -2
    assert index_from_matrix([0], -M) == -1


def test_empty_fplus():
    assert index_formula("6 + x3 + x4", "0") == -1


def test_phi_partials_against_differences():
    k, h = 7.0, 0.4
    v, d, dd = phi_partials(k, h)
    e = 1e-5
    assert v == pytest.approx(phi_closed(k, h))
    assert d[0] == pytest.approx((phi_closed(k + e, h) - phi_closed(k - e, h)) / (2 * e), rel=1e-7)
    assert d[1] == pytest.approx((phi_closed(k, h + e) - phi_closed(k, h - e)) / (2 * e), rel=1e-7)
    assert dd[0, 1] == pytest.approx(dd[1, 0])


def _grid_extrema(K, H, m=60000):
    X = fibonacci_sphere(m)
    ph = phi_closed(as_field(K, "half-sphere").value(X), as_field(H, "boundary").value(X))
    return X[np.argmin(ph)], X[np.argmax(ph)], ph.min(), ph.max()


@pytest.mark.parametrize(
    "K,H",
    [
        ("6 + x1 + 0.5*x2*x3", "0"),
        ("8 + x3 - 0.3*x1^2 + x4", "0.2*x2"),
        FOUR_FPLUS,
    ],
)
def test_critical_points_against_dense_grid(K, H):
    recs = find_critical_points(K, H)
    qmin, qmax, lo, hi = _grid_extrema(K, H)
    mins = [r for r in recs if r.morse_index == 0]
    maxs = [r for r in recs if r.morse_index == 2]
    saddles = [r for r in recs if r.morse_index == 1]
    assert len(mins) - len(saddles) + len(maxs) == 2
    best = min(mins, key=lambda r: r.phi_value)
    worst = max(maxs, key=lambda r: r.phi_value)
    assert best.phi_value <= lo + 1e-12 and best.phi_value == pytest.approx(lo, rel=1e-4)
    assert worst.phi_value >= hi - 1e-12 and worst.phi_value == pytest.approx(hi, rel=1e-4)
    # phi may have several minima at the same level (symmetric data)
    assert min(np.linalg.norm(r.q - qmin) for r in mins if r.phi_value <= lo + 1e-9 * abs(lo)) < 0.05
    for r in recs:
        assert r.grad_norm < 1e-10


@settings(max_examples=10)
@given(st.integers(0, 10 ** 6))
def test_euler_characteristic_random_data(seed):
    rng = np.random.default_rng(seed)
    a = [float(v) for v in rng.normal(size=6)]
    K = f"8 + {a[0]!r}*x1 + {a[1]!r}*x2*x3 + {a[2]!r}*x3^2 + {a[3]!r}*x1*x2 + x4*{a[4]!r}"
    H = f"{a[5]!r}*x1*0.2"
    rep = check_genericity(K, H)
    if not rep.morse:
        return
    c = [r.morse_index for r in rep.records]
    assert c.count(0) - c.count(1) + c.count(2) == 2


def test_genericity_failure_reported():
    with pytest.raises(GenericityError) as e:
        index_report("6 + x3", "0")
    assert not e.value.report.dKdnu_nonzero
    assert index_report("6 + x3", "0", force=True).index == -1


def test_fminus_rejected_in_matrix():
    from halfsphere.morse_index import build_interaction_matrix

    recs = find_critical_points("6 + x3 + x4", "0")
    with pytest.raises(UsageError):
        build_interaction_matrix(recs)


@given(st.floats(0.5, 60.0), st.floats(-3.0, 3.0), st.floats(0.0, 1.0))
def test_solve_Kt_keeps_phi(K, h, t):
    phi_value = phi_closed(K, h)
    Kt = solve_Kt(phi_value, h, t)
    assert phi_closed(Kt, t * h) == pytest.approx(phi_value, rel=1e-10)


def test_solve_Kt_out_of_range():
    # phi(K, h) < 4 pi / h for h > 0, whatever K is
    with pytest.raises(DomainError):
        solve_Kt(6.0, 3.0, 1.0)


def test_homotopy_relations():
    K, H = FOUR_FPLUS
    recs = find_critical_points(K, H)
    fp = [i for i, r in enumerate(recs) if r.dK_dnu > 0]
    assert len(fp) == 4
    X = fibonacci_sphere(300)
    ph = phi_closed(as_field(K, "half-sphere").value(X), as_field(H, "boundary").value(X))
    M = homotopy_Kt(K, H, 1.0, recs).matrix(fp)
    idx = set()
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        res = homotopy_Kt(K, H, t, recs)
        assert np.max(np.abs(res.phi_t(X) - ph)) < 1e-8 * ph.max()
        ratio = np.linalg.det(res.matrix(fp)) / np.linalg.det(M)
        expect = np.prod(np.sqrt(res.K_values[fp] / res.Kt_values[fp]))
        assert ratio == pytest.approx(expect, rel=1e-8)
        assert np.all(res.dKt_dnu[fp] > 0)
        idx.add(homotopy_index(res, recs))
    assert idx == {index_formula(K, H)}


def test_least_eigenvalue_symmetrizes():
    assert least_eigenvalue(np.array([[1.0, 2.0], [0.0, 1.0]])) == pytest.approx(0.0)
