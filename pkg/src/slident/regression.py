"""Linear-regression form y = Phi theta + e of the truncated one-step predictor.

Layout conventions (0-indexed throughout):

* theta stacks the impulse responses g^[ij] = ([G_1]_ij, ..., [G_T]_ij) in
  block order (0,0), (0,1), ..., (m-1,m-1); coefficient k of block (i,j)
  sits at ``(i*m + j)*T + k``.
* The stacked output vector is component-major: y_1(T+1..N), then y_2, ...
* Phi = I_m (x) Psi where row t of Psi is [y_1(t-1..t-T), ..., y_m(t-1..t-T)].
  Only Psi is stored.
"""

from dataclasses import dataclass

import numpy as np

from . import _accel


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class ThetaLayout:
    m: int
    T: int

    @property
    def size(self):
        return self.m * self.m * self.T

    def block_index(self, i, j):
        return i * self.m + j

    def offset(self, i, j, k):
        return self.block_index(i, j) * self.T + k


@dataclass
class StackedData:
    y_stacked: np.ndarray
    targets: np.ndarray
    N_prime: int
    T: int

    @property
    def m(self):
        return self.targets.shape[1]


@dataclass
class Regressor:
    Psi: np.ndarray
    m: int
    T: int

    @property
    def N_prime(self):
        return self.Psi.shape[0]

    @property
    def shape(self):
        return (self.m * self.N_prime, self.m * self.m * self.T)

    def apply(self, theta):
        """Phi @ theta, returned in stacked (component-major) order."""
        B = np.asarray(theta).reshape(self.m, self.m * self.T)
        return (self.Psi @ B.T).T.ravel()

    def apply_T(self, c):
        """Phi^T @ c for a stacked vector c."""
        C = np.asarray(c).reshape(self.m, self.N_prime)
        return (C @ self.Psi).ravel()

    def predict(self, theta):
        """One-step predictions as an (N', m) array."""
        B = np.asarray(theta).reshape(self.m, self.m * self.T)
        return self.Psi @ B.T

    def dense(self):
        """Dense Phi = I_m (x) Psi; for tests and cross-checks only."""
        return np.kron(np.eye(self.m), self.Psi)

    def lag_blocks(self):
        """Psi split per regressor variable: shape (m, N', T)."""
        return self.Psi.reshape(self.N_prime, self.m, self.T).transpose(1, 0, 2)


def _values(ts):
    return ts.values if hasattr(ts, "values") else np.asarray(ts, dtype=float)


def stack_outputs(ts, T):
    Y = _values(ts)
    N = Y.shape[0]
    if N <= T:
        raise InsufficientDataError(f"need N > T, got N={N}, T={T}")
    targets = np.ascontiguousarray(Y[T:])
    return StackedData(y_stacked=targets.T.ravel(), targets=targets, N_prime=N - T, T=T)


def unstack_outputs(data):
    return data.y_stacked.reshape(data.m, data.N_prime).T


def build_regressor(ts, T):
    Y = _values(ts)
    if Y.shape[0] <= T:
        raise InsufficientDataError(f"need N > T, got N={Y.shape[0]}, T={T}")
    if T < 1:
        raise ValueError("T must be positive")
    return Regressor(Psi=_accel.lagged_regressor(Y, T), m=Y.shape[1], T=T)


def unstack_theta(theta, layout):
    """theta -> G with G[k-1] = G_k, shape (T, m, m)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (layout.size,):
        raise ValueError(f"theta has length {theta.size}, layout expects {layout.size}")
    return theta.reshape(layout.m, layout.m, layout.T).transpose(2, 0, 1).copy()


def stack_theta(G):
    """Inverse of :func:`unstack_theta` for G of shape (T, m, m)."""
    G = np.asarray(G, dtype=float)
    return G.transpose(1, 2, 0).ravel().copy()
