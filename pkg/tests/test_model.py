import numpy as np
import pytest
from hypothesis import given, strategies as st

from slident import generate_sl_model, simulate, true_predictor, unstack_theta
from slident.model import GroundTruthModel, TimeSeries, UnstableModelError, companion_radius


def test_experiment_one_model():
    mod = generate_sl_model(6, 1, 4, T_true=20, decay=0.8, seed=1)
    assert len(mod.sparsity_support) == 4
    assert all(i != j for i, j in mod.sparsity_support)
    assert mod.F.shape == (6, 1) and mod.H_coeffs.shape == (20, 1, 6)
    assert mod.spectral_radius() <= 0.95 + 1e-12


def test_no_sparse_part_is_factor_model():
    mod = generate_sl_model(2, 1, 0, T_true=5, seed=3)
    assert not np.any(mod.S_coeffs)
    assert np.any(mod.L_coeffs)


def test_same_seed_bit_identical():
    a, b = generate_sl_model(4, 1, 3, 6, seed=9), generate_sl_model(4, 1, 3, 6, seed=9)
    assert a.to_dict() == b.to_dict()


@given(m=st.integers(2, 6), data=st.data(), seed=st.integers(0, 2**31 - 1))
def test_generated_model_invariants(m, data, seed):
    n = data.draw(st.integers(0, m - 1))
    nnz = data.draw(st.integers(0, m * m))
    mod = generate_sl_model(m, n, nnz, T_true=4, decay=0.7, seed=seed)
    nonzero = {(i, j) for i in range(m) for j in range(m) if np.any(mod.S_coeffs[:, i, j])}
    assert nonzero <= set(mod.sparsity_support)
    assert len(set(mod.sparsity_support)) == nnz
    assert companion_radius(mod.G_coeffs) <= 0.95 + 1e-12
    for S in (mod.Sigma_v, mod.Sigma_w):
        if S.size:
            assert np.allclose(S, S.T) and np.linalg.eigvalsh(S).min() > 0


def test_diagonal_used_only_after_off_diagonal():
    mod = generate_sl_model(3, 0, 8, T_true=3, seed=0)
    diag = [p for p in mod.sparsity_support if p[0] == p[1]]
    assert len(diag) == 2


@pytest.mark.parametrize("kwargs", [
    dict(m=3, n=3, nnz_s=1), dict(m=3, n=1, nnz_s=10), dict(m=3, n=1, nnz_s=1, decay=1.0),
    dict(m=0, n=0, nnz_s=0),
])
def test_generator_preconditions(kwargs):
    with pytest.raises(ValueError):
        generate_sl_model(**kwargs)


def test_unstable_draw_raises(monkeypatch):
    import slident.model as mm
    monkeypatch.setattr(mm, "MAX_SHRINKS", 0)
    with pytest.raises(UnstableModelError):
        generate_sl_model(4, 1, 4, T_true=5, seed=1)


def _zero_model(m, Sigma_v, F=None):
    n = 0 if F is None else F.shape[1]
    return GroundTruthModel(m=m, n=n, T_true=2, S_coeffs=np.zeros((2, m, m)),
                            F=np.zeros((m, n)) if F is None else F, H_coeffs=np.zeros((2, n, m)),
                            Sigma_v=Sigma_v, Sigma_w=np.eye(n))


def test_sigma_formula():
    assert np.array_equal(_zero_model(3, np.eye(3), F=np.zeros((3, 1))).Sigma, np.eye(3))
    F = np.array([[1.0], [2.0]])
    assert np.allclose(_zero_model(2, np.eye(2), F).Sigma, np.eye(2) + F @ F.T)


def test_white_noise_sample_covariance():
    Sigma_v = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.3], [0.0, 0.3, 0.7]])
    ts = simulate(_zero_model(3, Sigma_v), 100_000, seed=4)
    S = np.cov(ts.values.T)
    assert np.linalg.norm(S - Sigma_v) / np.linalg.norm(Sigma_v) < 0.05


def test_simulation_matches_plain_recursion():
    mod = generate_sl_model(3, 1, 2, T_true=4, seed=2)
    ts = simulate(mod, 50, seed=7, burn_in=40)
    rng = np.random.default_rng(7)
    E = rng.standard_normal((90, 3)) @ np.linalg.cholesky(mod.Sigma).T
    Y = np.zeros((90, 3))
    for t in range(90):
        Y[t] = E[t]
        for k in range(1, 5):
            if t - k >= 0:
                Y[t] += mod.G_coeffs[k - 1] @ Y[t - k]
    assert np.allclose(ts.values, Y[40:], rtol=0, atol=1e-12)


def test_simulation_deterministic_and_sized():
    mod = generate_sl_model(6, 1, 4, seed=1)
    a, b = simulate(mod, 500, seed=11), simulate(mod, 500, seed=11)
    assert a.values.shape == (500, 6)
    assert np.array_equal(a.values, b.values)


def test_burn_in_precondition():
    mod = generate_sl_model(3, 1, 2, T_true=4, seed=2)
    with pytest.raises(ValueError):
        simulate(mod, 10, burn_in=2)


def test_true_predictor_round_trip():
    mod = generate_sl_model(4, 1, 3, T_true=5, seed=8)
    est = true_predictor(mod)
    G = unstack_theta(est.theta, est.layout)
    assert np.array_equal(G, mod.S_coeffs + np.einsum("in,knj->kij", mod.F, mod.H_coeffs))


def test_true_predictor_without_latent_part():
    mod = generate_sl_model(4, 0, 3, T_true=5, seed=8)
    assert not np.any(true_predictor(mod).theta_l)


def test_zero_model_predictor_is_zero():
    est = true_predictor(_zero_model(2, np.eye(2)))
    assert not np.any(est.theta)


def test_model_dict_round_trip():
    mod = generate_sl_model(4, 2, 5, T_true=3, seed=21)
    back = GroundTruthModel.from_dict(mod.to_dict())
    assert back.to_dict() == mod.to_dict()


def test_timeseries_validation():
    with pytest.raises(ValueError):
        TimeSeries(np.array([[np.nan, 1.0]]))
    with pytest.raises(ValueError):
        TimeSeries(np.zeros((0, 2)))
