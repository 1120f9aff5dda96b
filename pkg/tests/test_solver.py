import numpy as np
import pytest

from halfsphere.diagnostics import grid_function
from halfsphere.errors import ConvergenceError, DomainError, SymmetryError, UsageError
from halfsphere.solver import (
    AxisymmetricGrid,
    BlowUpFit,
    PeakSample,
    extract_blowup_data,
    manufactured_residual,
    mountain_pass_level,
    read_snapshot,
    solve_subcritical,
    write_snapshot,
)

CONST_LEVEL = np.pi ** 2 * (3 - 6 / 5.8)  # J_tau of v = 1 for K = 6, H = 0, tau = 0.2


@pytest.fixture(scope="module")
def round_solutions():
    return {N: solve_subcritical(6, 0, 0.2, N=N, R=40, beta=7) for N in (32, 64, 128)}


def _fitted_order(res, key):
    h = [r["h"] for r in res]
    e = [r[key] for r in res]
    return np.polyfit(np.log(h), np.log(e), 1)[0]


@pytest.mark.parametrize("H", [0.0, 1.0, -0.5])
def test_manufactured_solution_orders(H):
    res = [manufactured_residual(N, Hbar=H) for N in (32, 64, 128)]
    assert 1.8 <= _fitted_order(res, "interior") <= 2.2
    if H != 0:
        assert 1.8 <= _fitted_order(res, "boundary") <= 2.2
    else:
        assert max(r["boundary"] for r in res) < 1e-12


def test_round_sphere_solution(round_solutions):
    r = round_solutions[128]
    assert r.residual_norm < 1e-8
    assert r.raw_residual < 1e-6
    assert np.all(r.grid.u > 0)
    # v = 1 is a solution; the chart solution is the weight W itself
    assert np.max(np.abs(r.sphere_values() - 1.0)) < 1e-2
    assert r.energy == pytest.approx(CONST_LEVEL, rel=1e-3)
    assert r.mp_level >= r.energy - 1e-2
    assert r.mp_level <= 2 * np.pi ** 2


def test_energy_grid_convergence(round_solutions):
    E = [round_solutions[N].energy for N in (32, 64, 128)]
    order = np.log2(abs(E[0] - E[1]) / abs(E[1] - E[2]))
    assert order >= 1.7


def test_mountain_pass_level_constant_data():
    assert mountain_pass_level(6, 0, 0.1) <= 2 * np.pi ** 2 + 0.05
    levels = [mountain_pass_level(6, H, 0.1) for H in (0, 1, 2)]
    assert levels[0] > levels[1] > levels[2]


def test_continuation_reproduces_solution(round_solutions):
    r = round_solutions[32]
    c = solve_subcritical(6, 0, 0.2, N=32, R=40, beta=7, strategy="continuation", previous=r)
    assert np.max(np.abs(c.grid.u - r.grid.u)) < 1e-8
    with pytest.raises(UsageError):
        solve_subcritical(6, 0, 0.2, N=32, strategy="continuation")


def test_errors():
    with pytest.raises(SymmetryError):
        solve_subcritical("6 + x1", 0, 0.2, N=16)
    with pytest.raises(DomainError):
        solve_subcritical(6, 0, 0.7, N=16)
    with pytest.raises(ConvergenceError) as e:
        solve_subcritical("6 + 2*x3 - 3*x3*x4", 0, 0.05, N=32, beta=8, maxit=1)
    assert "iterations" in str(e.value) or e.value.info


def test_snapshot_round_trip(tmp_path, round_solutions):
    r = round_solutions[32]
    path = tmp_path / "snap.txt"
    write_snapshot(r, path)
    meta = read_snapshot(path)
    g = meta["grid"]
    assert g.N == 32 and g.R == 40 and g.beta == 7
    assert np.array_equal(g.u, r.grid.u)
    assert float(meta["tau"]) == 0.2


def test_grid_interpolant(round_solutions):
    r = round_solutions[128]
    f = grid_function(r.grid)
    Y = np.array([[0.3, 0.4, 0.2], [1.0, 0.0, 1.0]])
    W = np.sqrt(2 / (1 + np.sum(Y ** 2, axis=1)))
    assert np.allclose(f.value(Y), W, rtol=1e-2)


def test_grid_rejects_bad_parameters():
    with pytest.raises(UsageError):
        AxisymmetricGrid(R=40, N=2)


def test_blowup_fit_requires_decreasing_schedule():
    with pytest.raises(UsageError):
        BlowUpFit([0.1, 0.2], [1, 2], -0.5, 1.0, [])


def test_extract_symmetric_two_peaks():
    K = "6 + 0.5*x3^2 - 40*x4*x3^2"
    pts = np.array([[0, 0, 1.0, 0], [0, 0, -1.0, 0]])
    samples = [PeakSample(t, pts, np.array([v, v * (1 + 0.01 * t)])) for t, v in ((0.1, 3.0), (0.05, 4.2), (0.02, 6.6))]
    data = extract_blowup_data(samples, K, 0)
    for mu in data.mus:
        assert mu[0] == pytest.approx(mu[1], rel=0.1)


def test_extract_single_peak_formula():
    K = "6 + 2*x3 - 3*x3*x4"
    s = [PeakSample(t, np.array([[0, 0, 1.0, 0]]), np.array([v])) for t, v in ((0.1, 3.0), (0.05, 4.0))]
    data = extract_blowup_data(s, K, 0)
    k = 8.0
    assert data.mus[0][0] == pytest.approx(2 * (k / 6) ** -0.5 * k ** 0.25)
    phi = 4 * np.pi * np.sqrt(6 / k) * np.pi / 2
    assert data.lambdas[1][0] == pytest.approx((k / 6) * phi / (16 * np.pi * np.sqrt(k)) * 0.05 * 16)
    with pytest.raises(UsageError):
        extract_blowup_data(s[:1], K, 0)
