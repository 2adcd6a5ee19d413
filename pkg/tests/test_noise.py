import numpy as np
import pytest

from slident import estimate_sigma
from slident.noise import default_order, regularize_sigma


def test_white_noise_convergence():
    rng = np.random.default_rng(0)
    Sigma = np.array([[1.0, 0.4], [0.4, 2.0]])
    Y = rng.standard_normal((10_000, 2)) @ np.linalg.cholesky(Sigma).T
    est = estimate_sigma(Y, 3)
    assert np.linalg.norm(est.Sigma - Sigma) / np.linalg.norm(Sigma) < 0.05


def test_noise_free_process_gives_zero():
    a = 0.3
    R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    Y = np.empty((200, 2))
    Y[0] = [1.0, 0.5]
    for t in range(1, 200):
        Y[t] = R @ Y[t - 1]
    est = estimate_sigma(Y, 1)
    assert np.max(np.abs(est.Sigma)) <= 1e-16 * np.mean(Y ** 2) * 10


def test_order_zero_rejected():
    with pytest.raises(ValueError):
        estimate_sigma(np.zeros((50, 2)), 0)


def test_insufficient_data():
    with pytest.raises(ValueError):
        estimate_sigma(np.ones((7, 2)), 3)


def test_psd_and_orthogonal_residuals():
    rng = np.random.default_rng(1)
    Y = rng.standard_normal((300, 3))
    Y[1:] += 0.5 * Y[:-1]
    from slident._accel import lagged_regressor
    est = estimate_sigma(Y, 4)
    assert np.allclose(est.Sigma, est.Sigma.T)
    assert np.linalg.eigvalsh(est.Sigma).min() >= -1e-12
    X = lagged_regressor(Y, 4)
    assert np.max(np.abs(X.T @ est.residuals)) <= 1e-8 * np.abs(X).max() * np.abs(Y).max() * len(Y)
    assert est.coeffs.shape == (4, 3, 3)
    assert est.residuals.shape == (296, 3)


def test_rank_deficient_uses_ridge():
    rng = np.random.default_rng(2)
    y = rng.standard_normal(100)
    Y = np.column_stack([y, y])
    est = estimate_sigma(Y, 2)
    assert np.all(np.isfinite(est.Sigma))


def test_recovers_ar_coefficients():
    rng = np.random.default_rng(3)
    A = np.array([[0.5, 0.2], [-0.1, 0.3]])
    Y = np.zeros((5000, 2))
    for t in range(1, 5000):
        Y[t] = A @ Y[t - 1] + rng.standard_normal(2)
    assert np.allclose(estimate_sigma(Y, 1).coeffs[0], A, atol=0.05)


def test_default_order_and_regularisation():
    assert default_order(500, 6, 20) == 20
    assert default_order(5000, 2, 10) == 20
    assert default_order(10, 6, 20) == 1
    S = regularize_sigma(np.zeros((2, 2)) + np.diag([1.0, 3.0]))
    assert np.allclose(S, np.diag([1.0, 3.0]) + 2e-8 * np.eye(2))
