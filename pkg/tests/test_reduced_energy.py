import numpy as np
import pytest
from hypothesis import given, strategies as st

from halfsphere.errors import DomainError, InfeasibleError, UsageError
from halfsphere.fields import as_field, normal_derivative
from halfsphere.morse_index import matrix_from_values
from halfsphere.reduced_energy import (
    BubbleConfiguration,
    eigen_relation_check,
    predict_concentration,
    reduced_energy,
    reduced_energy_fd_gradient,
    reduced_gradient,
)

K1 = "6 + x3 - 2*x3*x4"
K2 = "6 + 0.5*x3^2 - 40*x4*x3^2"
N3 = np.array([0.0, 0.0, 1.0, 0.0])


def _random_config(seed, tau=None):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    while True:
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        if n == 1 or min(np.linalg.norm(v[i] - v[j]) for i in range(n) for j in range(i)) > 0.3:
            break
    C = np.hstack([v, np.zeros((n, 1))])
    tau = rng.uniform(0.01, 0.2) if tau is None else tau
    g = rng.uniform(0.2, 5.0, n) / tau
    return BubbleConfiguration(C, g, tau)


@given(st.integers(0, 10 ** 6))
def test_gamma_gradient_matches_differences(seed):
    cfg = _random_config(seed)
    K, H = "7 + x1 - 0.5*x2*x3 + x4", "0.3 + 0.2*x3"
    _, g = reduced_gradient(cfg, K, H)
    fd = reduced_energy_fd_gradient(cfg, K, H)
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-9 * np.max(np.abs(fd)))


def test_printed_gradient_is_leading_order():
    cfg = BubbleConfiguration(N3, [20.0], 0.05)
    _, exact = reduced_gradient(cfg, K1, 0)
    _, printed = reduced_gradient(cfg, K1, 0, form="printed")
    assert not np.allclose(exact, printed, rtol=1e-3)
    cfg = BubbleConfiguration(N3, [20.0], 1e-5)
    _, exact = reduced_gradient(cfg, K1, 0)
    _, printed = reduced_gradient(cfg, K1, 0, form="printed")
    assert np.allclose(exact, printed, rtol=1e-3)


def test_single_bubble_prediction():
    for tau in (0.2, 0.02, 1e-3):
        p = predict_concentration([N3], K1, 0, tau)
        _, g = reduced_gradient(p.config, K1, 0)
        assert abs(g[0]) < 1e-10 * tau
        assert p.lambdas[0] == pytest.approx(p.M[0, 0], rel=1e-10)
        assert p.residual < 1e-12
        assert 0.5 < tau * p.config.gammas[0] < 1.0


def test_two_symmetric_bubbles():
    pts = [N3, -N3]
    p = predict_concentration(pts, K2, 0, 0.05)
    assert p.rho > 0
    assert p.config.gammas[0] == pytest.approx(p.config.gammas[1], rel=1e-8)
    assert p.residual < 1e-10
    _, g = reduced_gradient(p.config, K2, 0)
    assert np.max(np.abs(g)) < 1e-10


def test_negative_rho_is_infeasible():
    K = as_field("6 + 0.5*x3^2 - 0.1*x4*x3^2", "half-sphere")
    M = matrix_from_values([N3, -N3], [6.5, 6.5], [0, 0], [normal_derivative(K, N3)] * 2)
    assert np.linalg.eigvalsh(M)[0] < 0
    with pytest.raises(InfeasibleError):
        predict_concentration([N3, -N3], K, 0, 0.05)


def test_eigen_relation_check():
    M = np.array([[2.0, -1.0], [-1.0, 2.0]])
    mu = np.array([1.0, 1.0])
    assert eigen_relation_check(M, mu, [1.0, 1.0]) == 0.0
    with pytest.raises(UsageError):
        eigen_relation_check(M, [1.0], [1.0])


def test_admissibility():
    with pytest.raises(DomainError):
        reduced_energy(BubbleConfiguration(N3, [1e-9], 0.1), K1, 0)
    with pytest.raises(DomainError):
        BubbleConfiguration([N3, N3], [10.0, 10.0], 0.1).check_admissible()
    with pytest.raises(UsageError):
        BubbleConfiguration([N3], [1.0, 2.0], 0.1)


def test_energy_approaches_phi_sum():
    from halfsphere.energetics import phi

    cfg = BubbleConfiguration(N3, [1e8], 1e-9)
    assert reduced_energy(cfg, K1, 0) == pytest.approx(phi(K1, 0, N3), rel=1e-3)
