"""Structured solves with V = Phi (C (x) Ktilde) Phi^T + Sigma (x) I_N'.

Two exact routes are provided:

* ``dual``: factor V itself, an (m N') x (m N') matrix assembled from the
  per-variable lag Gram blocks M_j = Psi_j Ktilde Psi_j^T.
* ``primal``: factor A = I + Z^T Phi^T W Phi Z with K = Z Z^T,
  Z = sqrt(C) (x) chol(Ktilde) and W = Sigma^-1 (x) I. A has size m^2 T and
  is SPD for any PSD coupling, so singular kernels need no special care.
  log det V and y^T V^-1 y follow from Sylvester's identity and Woodbury.

Both return the same quantities: l = 1/2 log det V + 1/2 y^T V^-1 y,
w = Phi^T V^-1 y, and optionally the derivative of l with respect to the
per-variable couplings Cj[j, i, i'] = C[(i,j), (i',j)].
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from . import _accel
from .kernel import psd_sqrt

log = logging.getLogger(__name__)

JITTER = 1e-10


class FactorizationError(np.linalg.LinAlgError):
    pass


@dataclass
class SolveResult:
    ell: float
    w: np.ndarray
    logdet: float
    quad: float
    grad_trace: np.ndarray | None = None
    grad_quad: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    # primal: whitened Phi^T V^-1 Phi (n x n); dual: V^-1. Only set on request.
    info: np.ndarray | None = None

    @property
    def grad_coupling(self):
        """d l / d Cj[j, i, i'] = grad_trace - grad_quad (both PSD-weighted, >= 0 on PSD directions)."""
        if self.grad_trace is None:
            return None
        return self.grad_trace - self.grad_quad


def spd_factor(V):
    """Cholesky of symmetrised V; adds jitter once on failure."""
    V = 0.5 * (V + V.T)
    try:
        return sla.cho_factor(V, lower=True, check_finite=False), 0.0
    except np.linalg.LinAlgError:
        eps = JITTER * np.trace(V) / V.shape[0]
        log.warning("factorization failed; retrying with jitter %.3g", eps)
        try:
            return sla.cho_factor(V + eps * np.eye(V.shape[0]), lower=True, check_finite=False), eps
        except np.linalg.LinAlgError as exc:
            raise FactorizationError("matrix is not positive definite even after jitter") from exc


def _logdet_from_cho(cf):
    return 2.0 * float(np.sum(np.log(np.diag(cf[0]))))


class KronSystem:
    def __init__(self, data, reg, Sigma, ktilde):
        if reg.T != ktilde.T:
            raise ValueError("regressor and Ktilde use different truncation lengths")
        self.m = reg.m
        self.T = reg.T
        self.Np = reg.N_prime
        self.reg = reg
        self.ktilde = ktilde
        self.y = data.y_stacked
        Sigma = 0.5 * (np.asarray(Sigma, dtype=float) + np.asarray(Sigma, dtype=float).T)
        self.Sigma = Sigma
        cf = sla.cho_factor(Sigma, lower=True)
        self.Sigma_inv = sla.cho_solve(cf, np.eye(self.m))
        self.logdet_sigma = _logdet_from_cho(cf)
        Yp = data.targets
        self.yWy = float(np.sum(self.Sigma_inv * (Yp.T @ Yp)))
        P = reg.Psi.T @ Yp
        self.b = (P @ self.Sigma_inv).T.ravel()

    @property
    def n_primal(self):
        return self.m * self.m * self.T

    @property
    def n_dual(self):
        return self.m * self.Np

    def pick(self, method):
        if method == "auto":
            return "primal" if self.n_primal <= self.n_dual else "dual"
        if method not in ("primal", "dual"):
            raise ValueError(f"unknown method {method!r}")
        return method

    # -- primal -------------------------------------------------------------

    @cached_property
    def _primal(self):
        m, T = self.m, self.T
        Lk = self.ktilde.chol
        R = self.reg.Psi.T @ self.reg.Psi
        Lb = np.kron(np.eye(m), Lk)
        Rt = Lb.T @ R @ Lb
        Rt = 0.5 * (Rt + Rt.T)
        Gt = np.kron(self.Sigma_inv, Rt)
        bt = (self.b.reshape(m * m, T) @ Lk).ravel()
        btr = np.kron(self.Sigma_inv, _accel.block_traces(Rt, m, T))
        return Gt, bt, btr

    def primal(self, C, grad=False, info=False):
        m2, T = self.m * self.m, self.T
        n = m2 * T
        Gt, bt, btr = self._primal
        Ch = psd_sqrt(C)
        E = (Ch @ Gt.reshape(m2, T * n)).reshape(n, n)
        A = (E.reshape(n, m2, T).transpose(0, 2, 1) @ Ch).transpose(0, 2, 1).reshape(n, n)
        A = 0.5 * (A + A.T)
        A[np.diag_indices(n)] += 1.0
        cf, eps = spd_factor(A)
        h = (Ch @ bt.reshape(m2, T)).ravel()
        z = sla.cho_solve(cf, h, check_finite=False)
        logdet = self.Np * self.logdet_sigma + _logdet_from_cho(cf)
        quad = self.yWy - float(h @ z)
        wt = bt - E.T @ z
        Wt = wt.reshape(m2, T)
        w = sla.solve_triangular(self.ktilde.chol, Wt.T, lower=True, trans="T").T.ravel()
        res = SolveResult(ell=0.5 * (logdet + quad), w=w, logdet=logdet, quad=quad,
                          diagnostics={"method": "primal", "jitter": eps})
        if grad:
            J = sla.solve_triangular(cf[0], E, lower=True, check_finite=False)
            if info:
                JtJ = J.T @ J
                res.info = Gt - 0.5 * (JtJ + JtJ.T)
                JJ = np.einsum("atbt->ab", JtJ.reshape(m2, T, m2, T))
            else:
                J3 = J.reshape(n, m2, T)
                JJ = np.tensordot(J3, J3, axes=([0, 2], [0, 2]))
            m = self.m
            tr_part = 0.5 * (btr - JJ)
            q_part = 0.5 * (Wt @ Wt.T)
            res.grad_trace = np.einsum("ajbj->jab", tr_part.reshape(m, m, m, m)).copy()
            res.grad_quad = np.einsum("ajbj->jab", q_part.reshape(m, m, m, m)).copy()
        return res

    # -- dual ---------------------------------------------------------------

    @cached_property
    def lag_grams(self):
        """M_j = Psi_j Ktilde Psi_j^T, shape (m, N', N')."""
        blocks = self.reg.lag_blocks()
        Kt = self.ktilde.matrix
        return np.ascontiguousarray(np.einsum("jsk,kl,jtl->jst", blocks, Kt, blocks, optimize=True))

    def assemble(self, Cj):
        return _accel.assemble_dual(np.asarray(Cj, dtype=float), self.lag_grams, self.Sigma)

    def dual(self, Cj, grad=False, info=False):
        m, Np = self.m, self.Np
        V = self.assemble(Cj)
        cf, eps = spd_factor(V)
        c = sla.cho_solve(cf, self.y, check_finite=False)
        logdet = _logdet_from_cho(cf)
        quad = float(self.y @ c)
        w = self.reg.apply_T(c)
        resid = np.linalg.norm(V @ c - self.y) / max(np.linalg.norm(self.y), 1e-300)
        res = SolveResult(ell=0.5 * (logdet + quad), w=w, logdet=logdet, quad=quad,
                          diagnostics={"method": "dual", "jitter": eps, "residual": float(resid)})
        if grad:
            Vinv = sla.cho_solve(cf, np.eye(m * Np), check_finite=False)
            Tr = _accel.dual_trace_terms(Vinv, self.lag_grams)
            Cm = c.reshape(m, Np)
            MC = np.einsum("jst,bt->jbs", self.lag_grams, Cm)
            Q = np.einsum("as,jbs->jab", Cm, MC)
            res.grad_trace = 0.5 * Tr
            res.grad_quad = 0.5 * Q
            if info:
                res.info = Vinv
        return res

    def solve(self, kernel, method="auto", grad=False, info=False):
        method = self.pick(method)
        if method == "primal":
            return self.primal(kernel.C, grad=grad, info=info)
        return self.dual(kernel.coupling(), grad=grad, info=info)
