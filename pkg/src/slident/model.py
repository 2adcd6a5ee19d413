"""Random sparse-plus-low-rank ground-truth models and data simulation."""

from dataclasses import dataclass, field

import numpy as np

from . import _accel

TARGET_RADIUS = 0.95
SHRINK = 0.9
MAX_SHRINKS = 400


class UnstableModelError(RuntimeError):
    """Rescaling could not bring the companion spectral radius below target."""


@dataclass
class GroundTruthModel:
    """FIR sparse-plus-low-rank model.

    ``S_coeffs`` has shape (T_true, m, m) and ``H_coeffs`` (T_true, n, m);
    index 0 along the first axis is lag 1.
    """

    m: int
    n: int
    T_true: int
    S_coeffs: np.ndarray
    F: np.ndarray
    H_coeffs: np.ndarray
    Sigma_v: np.ndarray
    Sigma_w: np.ndarray
    sparsity_support: list = field(default_factory=list)
    seed: int | None = None

    @property
    def L_coeffs(self):
        return np.einsum("in,knj->kij", self.F, self.H_coeffs)

    @property
    def G_coeffs(self):
        return self.S_coeffs + self.L_coeffs

    @property
    def Sigma(self):
        """Innovation covariance Sigma_v + F Sigma_w F^T."""
        return self.Sigma_v + self.F @ self.Sigma_w @ self.F.T

    def spectral_radius(self):
        return companion_radius(self.G_coeffs)

    def to_dict(self):
        return {
            "m": self.m,
            "n": self.n,
            "T_true": self.T_true,
            "S_coeffs": self.S_coeffs.tolist(),
            "F": self.F.tolist(),
            "H_coeffs": self.H_coeffs.tolist(),
            "Sigma_v": self.Sigma_v.tolist(),
            "Sigma_w": self.Sigma_w.tolist(),
            "sparsity_support": [list(p) for p in self.sparsity_support],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        m, n, T = int(d["m"]), int(d["n"]), int(d["T_true"])
        return cls(
            m=m,
            n=n,
            T_true=T,
            S_coeffs=np.asarray(d["S_coeffs"], dtype=float).reshape(T, m, m),
            F=np.asarray(d["F"], dtype=float).reshape(m, n),
            H_coeffs=np.asarray(d["H_coeffs"], dtype=float).reshape(T, n, m),
            Sigma_v=np.asarray(d["Sigma_v"], dtype=float).reshape(m, m),
            Sigma_w=np.asarray(d["Sigma_w"], dtype=float).reshape(n, n),
            sparsity_support=[tuple(int(v) for v in p) for p in d["sparsity_support"]],
            seed=d.get("seed"),
        )


@dataclass
class TimeSeries:
    values: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] == 0:
            raise ValueError("time series must be a non-empty (N, m) array")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("time series contains non-finite values")

    @property
    def N(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]


def companion_radius(G):
    """Spectral radius of the VAR companion matrix of lag coefficients G (L, m, m)."""
    L, m, _ = G.shape
    if L == 0:
        return 0.0
    C = np.zeros((m * L, m * L))
    C[:m, :] = np.concatenate(list(G), axis=1)
    if L > 1:
        C[m:, :-m] = np.eye(m * (L - 1))
    return float(np.max(np.abs(np.linalg.eigvals(C))))


def _support_positions(rng, m, nnz_s):
    off = [(i, j) for i in range(m) for j in range(m) if i != j]
    diag = [(i, i) for i in range(m)]
    n_off = min(nnz_s, len(off))
    pick = rng.choice(len(off), size=n_off, replace=False)
    support = [off[p] for p in sorted(pick)]
    extra = nnz_s - n_off
    if extra > 0:
        pick = rng.choice(m, size=extra, replace=False)
        support += [diag[p] for p in sorted(pick)]
    return sorted(support)


def generate_sl_model(m, n, nnz_s, T_true=20, decay=0.8, seed=0):
    """Draw a random stable S+L model with ``nnz_s`` manifest edges and ``n`` latent nodes.

    Coefficients are Gaussian with per-lag envelope ``decay**k``; S and H are
    then shrunk jointly by 0.9 until the companion spectral radius of
    S_k + F H_k is at most 0.95.
    """
    if m < 1:
        raise ValueError("m must be positive")
    if not 0 <= n < m:
        raise ValueError("need 0 <= n < m")
    if not 0 <= nnz_s <= m * m:
        raise ValueError("nnz_s must lie in [0, m^2]")
    if not 0.0 < decay < 1.0:
        raise ValueError("decay must lie in (0, 1)")
    if T_true < 1:
        raise ValueError("T_true must be positive")

    rng = np.random.default_rng(seed)
    support = _support_positions(rng, m, nnz_s)
    envelope = decay ** np.arange(1, T_true + 1)

    S = np.zeros((T_true, m, m))
    for i, j in support:
        S[:, i, j] = rng.standard_normal(T_true) * envelope
    F = rng.standard_normal((m, n))
    H = rng.standard_normal((T_true, n, m)) * envelope[:, None, None]

    A = rng.standard_normal((m, m)) / np.sqrt(m)
    Sigma_v = 0.5 * np.eye(m) + 0.5 * A @ A.T
    Sigma_w = np.eye(n)

    for _ in range(MAX_SHRINKS):
        G = S + np.einsum("in,knj->kij", F, H)
        if companion_radius(G) <= TARGET_RADIUS:
            break
        S *= SHRINK
        H *= SHRINK
    else:
        raise UnstableModelError(f"could not stabilise model drawn with seed={seed}")

    return GroundTruthModel(
        m=m, n=n, T_true=T_true, S_coeffs=S, F=F, H_coeffs=H,
        Sigma_v=Sigma_v, Sigma_w=Sigma_w, sparsity_support=support, seed=seed,
    )


def simulate(model, N, seed=0, burn_in=None):
    """Simulate N samples of y(t) = sum_k (S_k + F H_k) y(t-k) + e(t), e ~ N(0, Sigma)."""
    if N < 1:
        raise ValueError("N must be positive")
    if burn_in is None:
        burn_in = 10 * model.T_true
    if burn_in < model.T_true:
        raise ValueError("burn_in must be at least T_true")
    rng = np.random.default_rng(seed)
    Lc = np.linalg.cholesky(model.Sigma)
    E = rng.standard_normal((N + burn_in, model.m)) @ Lc.T
    Y = _accel.var_recursion(model.G_coeffs, E)
    if not np.all(np.isfinite(Y)):
        raise FloatingPointError("simulation diverged; model is not stable")
    return TimeSeries(Y[burn_in:], seed=seed)


def true_predictor(model):
    """Predictor coefficients of the generating model, laid out like an estimate."""
    from .estimator import PredictorEstimate
    from .regression import ThetaLayout, stack_theta

    layout = ThetaLayout(model.m, model.T_true)
    return PredictorEstimate(
        theta_s=stack_theta(model.S_coeffs),
        theta_l=stack_theta(model.L_coeffs),
        layout=layout,
        sigma=model.Sigma,
        diagnostics={"source": "true"},
    )
