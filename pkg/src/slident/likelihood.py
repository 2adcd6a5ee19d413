"""Negative log marginal likelihood of the S+L prior and its minimisation."""

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize_scalar

from ._system import KronSystem
from .kernel import LowRankKernel, SparseKernel, tc_kernel
from .optimize import sgp_minimize

LAMBDA_GRID = tuple(np.round(np.arange(0.30, 0.951, 0.05), 2))
C_BOUNDS = (1e-8, 1e2)
GAMMA_TRUNCATION = 1e-8


@dataclass
class HyperState:
    """gamma (m^2,), alpha, beta (r,), fixed U (m, r) and fixed Ktilde.

    The optimised vector is xi = [gamma, alpha, beta].
    """

    gamma: np.ndarray
    alpha: float
    beta: np.ndarray
    U: np.ndarray
    ktilde: object

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float).ravel()
        self.beta = np.asarray(self.beta, dtype=float).ravel()
        self.U = np.asarray(self.U, dtype=float).reshape(self.m, self.beta.size)
        self.alpha = float(self.alpha)

    @property
    def m(self):
        return int(round(np.sqrt(self.gamma.size)))

    @property
    def r(self):
        return self.beta.size

    def to_vector(self):
        return np.concatenate([self.gamma, [self.alpha], self.beta])

    def with_vector(self, xi):
        xi = np.asarray(xi, dtype=float)
        m2 = self.gamma.size
        return replace(self, gamma=xi[:m2].copy(), alpha=float(xi[m2]), beta=xi[m2 + 1:].copy())

    def sparse_kernel(self):
        return SparseKernel(self.gamma, self.ktilde)

    def lowrank_kernel(self):
        return LowRankKernel(self.alpha, self.beta, self.U, self.ktilde)

    def kernel(self):
        return self.sparse_kernel() + self.lowrank_kernel()

    def truncated(self, rel=GAMMA_TRUNCATION):
        """Copy with gamma entries below rel * max(gamma) set to exactly zero."""
        g = self.gamma.copy()
        top = g.max(initial=0.0)
        g[g < rel * top] = 0.0
        return replace(self, gamma=g)

    def to_dict(self):
        return {
            "c": self.ktilde.c,
            "lambda": self.ktilde.lam,
            "T": self.ktilde.T,
            "gamma": self.gamma.tolist(),
            "alpha": self.alpha,
            "beta": self.beta.tolist(),
            # column-major
            "U": self.U.T.ravel().tolist(),
            "m": self.m,
            "r": self.r,
        }

    @classmethod
    def from_dict(cls, d):
        m, r = int(d["m"]), int(d["r"])
        U = np.asarray(d["U"], dtype=float).reshape(r, m).T if r else np.zeros((m, 0))
        return cls(gamma=d["gamma"], alpha=d["alpha"], beta=d["beta"], U=U,
                   ktilde=tc_kernel(d["c"], d["lambda"], d["T"]))


def initial_hyper(m, ktilde, U=None):
    """gamma = alpha = beta = 1 / (m T mean diag Ktilde)."""
    U = np.zeros((m, 0)) if U is None else np.asarray(U, dtype=float)
    scale = 1.0 / (m * ktilde.T * float(np.mean(np.diag(ktilde.matrix))))
    return HyperState(gamma=np.full(m * m, scale), alpha=scale, beta=np.full(U.shape[1], scale),
                      U=U, ktilde=ktilde)


class MarglikWorkspace:
    """Caches the data-dependent pieces for repeated evaluations of l(xi)."""

    def __init__(self, data, reg, Sigma, ktilde, method="auto"):
        self.system = KronSystem(data, reg, Sigma, ktilde)
        self.method = self.system.pick(method)
        self.m = reg.m
        self.n_eval = 0

    def _solve(self, hyper, grad):
        self.n_eval += 1
        return self.system.solve(hyper.kernel(), method=self.method, grad=grad)

    def value(self, hyper):
        return self._solve(hyper, False).ell

    def value_and_grad(self, hyper, split=False):
        """l and dl/dxi; with ``split`` also the nonnegative trace part of dl/dxi."""
        res = self._solve(hyper, True)
        g_tr = _chain(hyper, res.grad_trace)
        g_q = _chain(hyper, res.grad_quad)
        if split:
            return res.ell, g_tr - g_q, g_tr
        return res.ell, g_tr - g_q

    def value_grad_fisher(self, hyper):
        """l, dl/dxi and the diagonal of the Fisher information in xi."""
        self.n_eval += 1
        res = self.system.solve(hyper.kernel(), method=self.method, grad=True, info=True)
        grad = _chain(hyper, res.grad_trace) - _chain(hyper, res.grad_quad)
        if self.method == "primal":
            return res.ell, grad, _fisher_primal(hyper, res.info)
        return res.ell, grad, _fisher_dual(hyper, res.info, self.system.lag_grams)


def _chain(hyper, Gj):
    """Map d l / d Cj[j, i, i'] to d l / d xi."""
    m = hyper.m
    idx = np.arange(m)
    g_gamma = Gj[:, idx, idx].T.ravel()
    Gl = Gj.sum(axis=0)
    U = hyper.U
    P = U @ U.T
    g_alpha = float(np.sum((np.eye(m) - P) * Gl))
    g_beta = np.einsum("iq,ik,kq->q", U, Gl, U)
    return np.concatenate([g_gamma, [g_alpha], g_beta])


def _full_basis(U):
    """Orthonormal basis of R^m whose first r columns are U."""
    m, r = U.shape
    Q, _ = np.linalg.qr(np.hstack([U, np.eye(m)]))
    Q = Q[:, :m].copy()
    Q[:, :r] = U
    return Q


def _fisher_primal(hyper, M):
    """1/2 tr((M P_p)^2) per coordinate, M the whitened Phi^T V^-1 Phi.

    For gamma_ij, P_p picks one T x T diagonal block. For alpha and beta,
    P_p = (a projector over the output index) (x) I_{mT}.
    """
    m, r = hyper.m, hyper.r
    T = M.shape[0] // (m * m)
    B = M.reshape(m * m, T, m * m, T)
    idx = np.arange(m * m)
    f_gamma = 0.5 * np.sum(B[idx, :, idx, :] ** 2, axis=(1, 2))
    Q = _full_basis(hyper.U)
    Mq = np.einsum("ia,iXjY,jb->aXbY", Q, M.reshape(m, m * T, m, m * T), Q, optimize=True)
    sq = np.sum(Mq ** 2, axis=(1, 3))
    f_alpha = 0.5 * float(np.sum(sq[r:, r:]))
    return np.concatenate([f_gamma, [f_alpha], 0.5 * np.diag(sq)[:r]])


def _fisher_dual(hyper, Vinv, Mj):
    """Same quantity from V^-1 and the lag Grams; dense, so small N' only."""
    m, r = hyper.m, hyper.r
    Np = Mj.shape[1]
    Vb = Vinv.reshape(m, Np, m, Np)
    f_gamma = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            A = Vb[i, :, i, :] @ Mj[j]
            f_gamma[i, j] = 0.5 * np.sum(A * A.T)
    Ms = Mj.sum(axis=0)
    Q = _full_basis(hyper.U)

    def half_tr_sq(P):
        X = Vinv @ np.kron(P, Ms)
        return 0.5 * float(np.sum(X * X.T))

    f_alpha = half_tr_sq(Q[:, r:] @ Q[:, r:].T) if r < m else 0.0
    f_beta = [half_tr_sq(np.outer(Q[:, q], Q[:, q])) for q in range(r)]
    return np.concatenate([f_gamma.ravel(), [f_alpha], f_beta])


def neg_log_marglik(data, reg, hyper, Sigma, method="auto"):
    """1/2 log det V + 1/2 y^T V^-1 y (the constant (m N'/2) log 2 pi is dropped)."""
    return MarglikWorkspace(data, reg, Sigma, hyper.ktilde, method=method).value(hyper)


def marglik_gradient(data, reg, hyper, Sigma, method="auto"):
    return MarglikWorkspace(data, reg, Sigma, hyper.ktilde, method=method).value_and_grad(hyper)[1]


def minimize_hyper(ws, hyper0, **sgp_opts):
    """Minimise l over xi with U and Ktilde held fixed.

    The SGP scaling is the inverse Fisher diagonal, a cheap inverse-Hessian
    estimate. Split-gradient scalings (xi over the trace part) shrink with
    xi and leave coordinates stuck near zero; this one does not. Negligible
    gamma entries are truncated to exact zeros at the end. Returns the
    truncated HyperState, its l value and the optimizer result.
    """
    cache = {}

    def f(x):
        return ws.value(hyper0.with_vector(x))

    def g(x):
        _, grad, fisher = ws.value_grad_fisher(hyper0.with_vector(x))
        cache["x"], cache["fisher"] = x.copy(), fisher
        return grad

    def scaling(x, grad):
        if not ("x" in cache and np.array_equal(cache["x"], x)):
            g(x)
        return 1.0 / np.maximum(cache["fisher"], 1e-300)

    res = sgp_minimize(f, g, hyper0.to_vector(), scaling=scaling, **sgp_opts)
    hyper = hyper0.with_vector(res.x).truncated()
    ell = ws.value(hyper)
    return hyper, ell, res


def _tc_profile(system, ktilde_unit):
    """Closed-form l(c) for K = c I (x) Ktilde via a joint eigenbasis."""
    m, T = system.m, system.T
    Lk = ktilde_unit.chol
    Psi = system.reg.Psi
    Lb = np.kron(np.eye(m), Lk)
    Rt = Lb.T @ (Psi.T @ Psi) @ Lb
    nu, Qr = np.linalg.eigh(0.5 * (Rt + Rt.T))
    mu, Qs = np.linalg.eigh(system.Sigma_inv)
    nu = np.clip(nu, 0.0, None)
    Bt = (system.b.reshape(m * m, T) @ Lk).reshape(m, m * T)
    p2 = (Qs.T @ Bt @ Qr) ** 2
    prod = np.outer(mu, nu)
    base = system.Np * system.logdet_sigma + system.yWy

    def ell(c):
        den = 1.0 + c * prod
        return 0.5 * (base + np.sum(np.log(den)) - c * np.sum(p2 / den))

    return ell


def estimate_ktilde_hyper(data, reg, Sigma, lambdas=LAMBDA_GRID, c_bounds=C_BOUNDS, return_table=False):
    """Pick (c, lambda) of the TC kernel by minimising l under K = I (x) Ktilde(c, lambda).

    lambda runs over a fixed grid; for each lambda, log c is found by bounded
    scalar search and the interval endpoints are also checked.
    """
    T = reg.T
    system = KronSystem(data, reg, Sigma, tc_kernel(1.0, lambdas[0], T))
    lo, hi = np.log(c_bounds[0]), np.log(c_bounds[1])
    table = []
    for lam in lambdas:
        prof = _tc_profile(system, tc_kernel(1.0, lam, T))
        res = minimize_scalar(lambda u: prof(np.exp(u)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-6})
        cands = [(float(res.fun), float(np.exp(res.x))), (prof(c_bounds[0]), c_bounds[0]),
                 (prof(c_bounds[1]), c_bounds[1])]
        ell, c = min(cands)
        table.append({"lambda": float(lam), "c": c, "ell": float(ell)})
    best = min(table, key=lambda row: row["ell"])
    out = (best["c"], best["lambda"])
    return (out, table) if return_table else out
