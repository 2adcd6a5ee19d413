"""Stability kernel and the Kronecker-structured sparse / low-rank priors.

Every prior here has the form K = C (x) Ktilde, where C is an (m^2, m^2)
coupling over impulse-response blocks (i, j) and Ktilde is the (T, T) TC
kernel shared by all blocks:

* sparse part:    C = diag(gamma)
* low-rank part:  C = Lambda (x) I_m,
  Lambda = alpha (I - U U^T) + U diag(beta) U^T
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

ORTHO_TOL = 1e-10


def psd_sqrt(C):
    """Symmetric square root of a PSD matrix (negative eigenvalues clipped)."""
    w, Q = np.linalg.eigh(0.5 * (C + C.T))
    return (Q * np.sqrt(np.clip(w, 0.0, None))) @ Q.T


@dataclass(frozen=True)
class KernelTilde:
    c: float
    lam: float
    T: int

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must lie in (0, 1)")
        if self.T < 1:
            raise ValueError("T must be positive")

    @cached_property
    def matrix(self):
        k = np.arange(1, self.T + 1)
        return self.c * self.lam ** np.maximum.outer(k, k)

    @cached_property
    def chol(self):
        return np.linalg.cholesky(self.matrix)

    @cached_property
    def inv(self):
        return np.linalg.inv(self.matrix)


def tc_kernel(c, lam, T):
    """TC kernel with entries c * lam**max(k, l), k, l = 1..T."""
    return KernelTilde(float(c), float(lam), int(T))


class KronKernel:
    """Generic prior K = C (x) Ktilde over theta of length m^2 T."""

    def __init__(self, C, ktilde):
        C = np.asarray(C, dtype=float)
        m = int(round(np.sqrt(C.shape[0])))
        if C.shape != (m * m, m * m):
            raise ValueError("coupling matrix must be (m^2, m^2)")
        self._C = C
        self.m = m
        self.ktilde = ktilde

    @property
    def C(self):
        return self._C

    @property
    def T(self):
        return self.ktilde.T

    @property
    def size(self):
        return self.m * self.m * self.T

    def coeff_sqrt(self):
        return psd_sqrt(self.C)

    def coupling(self):
        """Cj[j, i, i'] = C[(i,j), (i',j)]; raises if C mixes different j."""
        m = self.m
        C4 = self.C.reshape(m, m, m, m)
        mask = np.eye(m, dtype=bool)[None, :, None, :]
        off = np.where(np.broadcast_to(mask, C4.shape), 0.0, C4)
        if np.any(off != 0.0):
            raise ValueError("coupling mixes regressor variables; no per-variable split")
        return np.ascontiguousarray(np.einsum("ajbj->jab", C4))

    def matvec(self, v):
        V = np.asarray(v, dtype=float).reshape(self.m * self.m, self.T)
        return (self.C @ V @ self.ktilde.matrix).ravel()

    def dense(self):
        return np.kron(self.C, self.ktilde.matrix)

    def __add__(self, other):
        if not isinstance(other, KronKernel):
            return NotImplemented
        if other.ktilde != self.ktilde:
            raise ValueError("kernels must share the same Ktilde")
        return KronKernel(self.C + other.C, self.ktilde)


class SparseKernel(KronKernel):
    """K_S = Gamma (x) Ktilde with Gamma = diag(gamma), gamma indexed i*m + j."""

    def __init__(self, gamma, ktilde):
        gamma = np.asarray(gamma, dtype=float).ravel()
        m = int(round(np.sqrt(gamma.size)))
        if m * m != gamma.size:
            raise ValueError("gamma must have m^2 entries")
        if np.any(gamma < 0):
            raise ValueError("gamma must be nonnegative")
        self.gamma = gamma
        self.m = m
        self.ktilde = ktilde

    @property
    def C(self):
        return np.diag(self.gamma)

    def coeff_sqrt(self):
        return np.diag(np.sqrt(self.gamma))

    def coupling(self):
        m = self.m
        G = self.gamma.reshape(m, m)
        Cj = np.zeros((m, m, m))
        idx = np.arange(m)
        Cj[:, idx, idx] = G.T
        return Cj

    def matvec(self, v):
        V = np.asarray(v, dtype=float).reshape(self.m * self.m, self.T)
        return (self.gamma[:, None] * (V @ self.ktilde.matrix)).ravel()


class LowRankKernel(KronKernel):
    """K_L = Lambda (x) I_m (x) Ktilde with the alpha / beta / U parametrisation."""

    def __init__(self, alpha, beta, U, ktilde):
        U = np.asarray(U, dtype=float)
        beta = np.asarray(beta, dtype=float).ravel()
        if U.ndim != 2:
            raise ValueError("U must be a 2-D array")
        m, r = U.shape
        if beta.size != r:
            raise ValueError("beta must have one entry per column of U")
        if alpha < 0 or np.any(beta < 0):
            raise ValueError("alpha and beta must be nonnegative")
        if r and np.max(np.abs(U.T @ U - np.eye(r))) > ORTHO_TOL:
            raise ValueError("U must have orthonormal columns")
        self.alpha = float(alpha)
        self.beta = beta
        self.U = U
        self.m = m
        self.ktilde = ktilde

    @property
    def r(self):
        return self.U.shape[1]

    @cached_property
    def Lambda(self):
        P = self.U @ self.U.T
        L = self.alpha * (np.eye(self.m) - P) + (self.U * self.beta) @ self.U.T
        return 0.5 * (L + L.T)

    @property
    def C(self):
        return np.kron(self.Lambda, np.eye(self.m))

    def lambda_sqrt(self):
        P = self.U @ self.U.T
        return np.sqrt(self.alpha) * (np.eye(self.m) - P) + (self.U * np.sqrt(self.beta)) @ self.U.T

    def coeff_sqrt(self):
        return np.kron(self.lambda_sqrt(), np.eye(self.m))

    def coupling(self):
        return np.repeat(self.Lambda[None, :, :], self.m, axis=0)

    def matvec(self, v):
        m, T = self.m, self.T
        V = np.asarray(v, dtype=float).reshape(m, m * T)
        W = (self.Lambda @ V).reshape(m * m, T)
        return (W @ self.ktilde.matrix).ravel()

    def dense(self):
        return np.kron(np.kron(self.Lambda, np.eye(self.m)), self.ktilde.matrix)


def build_sparse_kernel(gamma, ktilde):
    return SparseKernel(gamma, ktilde)


def build_lowrank_kernel(alpha, beta, U, ktilde):
    return LowRankKernel(alpha, beta, U, ktilde)


def unstructured_kernel(m, ktilde):
    """K = I_{m^2} (x) Ktilde, the plain TC prior."""
    return SparseKernel(np.ones(m * m), ktilde)


def sample_prior(kernel, seed=None, size=None):
    """Zero-mean Gaussian draw(s) with covariance ``kernel``.

    Uses the structured square root (sqrt of the coupling) (x) chol(Ktilde),
    so singular couplings produce exact zeros outside the kernel range.
    """
    rng = np.random.default_rng(seed)
    n = 1 if size is None else int(size)
    m2, T = kernel.m * kernel.m, kernel.T
    Z = rng.standard_normal((n, m2, T))
    S = kernel.coeff_sqrt()
    X = np.einsum("ab,nbt,st->nas", S, Z, kernel.ktilde.chol).reshape(n, m2 * T)
    return X[0] if size is None else X
