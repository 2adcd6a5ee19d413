"""Outer loop choosing the latent rank r, the subspace U and the hyperparameters."""

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .estimator import posterior_mean_g, posterior_mean_sl
from .kernel import unstructured_kernel
from .likelihood import HyperState, MarglikWorkspace, initial_hyper, minimize_hyper

log = logging.getLogger(__name__)

KKT_WARN = 1e-3


def extract_al(theta, m, T):
    """A_l = [L_1 ... L_T] (m x mT) from a stacked coefficient vector."""
    theta = np.asarray(theta, dtype=float)
    G = theta.reshape(m, m, T)  # [i, j, k]
    return G.transpose(0, 2, 1).reshape(m, T * m)


def leading_singular_vectors(A, r):
    """Top-r left singular vectors of A, sign-fixed so each column's largest-|.| entry is positive."""
    A = np.asarray(A, dtype=float)
    m = A.shape[0]
    if r > m:
        raise ValueError(f"rank {r} exceeds dimension {m}")
    if r == 0:
        return np.zeros((m, 0))
    if not np.any(A):
        warnings.warn("zero matrix has no singular directions; using canonical basis", RuntimeWarning)
        return np.eye(m)[:, :r]
    U, _, _ = np.linalg.svd(A, full_matrices=False)
    U = U[:, :r].copy()
    pivot = np.argmax(np.abs(U), axis=0)
    U *= np.sign(U[pivot, np.arange(r)])
    return U


@dataclass
class HyperloopOptions:
    r_max: int | None = None
    rel_tol: float = 1e-9
    max_inner: int = 20
    sgp: dict = field(default_factory=lambda: {"tol": 1e-6, "max_iter": 500})
    method: str = "auto"
    warm_start: str = "previous"


@dataclass
class RankRecord:
    r: int
    U: np.ndarray
    hyper: HyperState
    ell: float
    inner_iters: int = 0
    ell_trace: list = field(default_factory=list)


@dataclass
class HyperloopReport:
    per_rank: list
    selected_r: int
    wallclock: float
    tc_estimate: np.ndarray | None = None

    def to_dict(self):
        return {
            "per_rank": [
                {"r": rec.r, "ell_best": rec.ell, "inner_iters": rec.inner_iters,
                 "ell_trace": list(rec.ell_trace)}
                for rec in self.per_rank
            ],
            "selected_r": self.selected_r,
            "wallclock": self.wallclock,
        }


def _strictly_below(new, old, rel_tol):
    return new < old - rel_tol * abs(old)


def _warm_start(prev, U, ktilde):
    beta = np.concatenate([prev.beta, [prev.alpha]])[: U.shape[1]]
    return HyperState(gamma=prev.gamma.copy(), alpha=prev.alpha, beta=beta, U=U, ktilde=ktilde)


def run_algorithm1(data, reg, ktilde, Sigma, opts=None):
    """Select (r, U, xi) by alternating SVD refinement and marginal-likelihood minimisation.

    Rank 0 is the sparse-only fit. For each new rank, A_l is bootstrapped
    (from the plain TC estimate at r = 1, from the previous rank's S+L
    estimate otherwise), U is taken from its leading singular vectors and xi
    is re-minimised; U is then re-derived from the new low-rank estimate for
    as long as l keeps strictly decreasing. The rank grows while the best l
    keeps strictly decreasing, and the last improving rank is returned.
    """
    opts = opts or HyperloopOptions()
    t0 = time.perf_counter()
    m, T = reg.m, reg.T
    r_max = m if opts.r_max is None else min(opts.r_max, m)
    ws = MarglikWorkspace(data, reg, Sigma, ktilde, method=opts.method)

    def minimize(start):
        hyper, ell, res = minimize_hyper(ws, start, **opts.sgp)
        if res.warning:
            # near a stationary point both warnings mean f hit float resolution, which is routine
            level = logging.INFO if res.kkt <= KKT_WARN else logging.WARNING
            log.log(level, "rank %d: %s (kkt %.2e after %d iterations)", start.r, res.warning, res.kkt, res.n_iter)
        return hyper, ell

    def low_rank_part(hyper):
        est = posterior_mean_sl(data, reg, hyper.sparse_kernel(), hyper.lowrank_kernel(), Sigma,
                                method=opts.method, system=ws.system)
        return extract_al(est.theta_l, m, T)

    hyper0, ell0 = minimize(initial_hyper(m, ktilde))
    best = {0: RankRecord(r=0, U=np.zeros((m, 0)), hyper=hyper0, ell=ell0, ell_trace=[ell0])}
    tc_theta = None
    r = 0
    while r < r_max:
        r += 1
        if r == 1:
            tc_theta = posterior_mean_g(data, reg, unstructured_kernel(m, ktilde), Sigma, method=opts.method)
            A = extract_al(tc_theta, m, T)
        else:
            A = low_rank_part(best[r - 1].hyper)
        U = leading_singular_vectors(A, r)
        if opts.warm_start == "previous":
            start = _warm_start(best[r - 1].hyper, U, ktilde)
        elif opts.warm_start == "fresh":
            start = initial_hyper(m, ktilde, U)
        else:
            start = _warm_start(best[r - 1].hyper, U, ktilde)
            floor = initial_hyper(m, ktilde).alpha
            start.beta[-1] = max(start.beta[-1], floor)
            start.alpha = max(start.alpha, floor)
        hyper, ell = minimize(start)
        rec = RankRecord(r=r, U=U, hyper=hyper, ell=ell, ell_trace=[ell])
        for _ in range(opts.max_inner):
            U_new = leading_singular_vectors(low_rank_part(rec.hyper), r)
            start = HyperState(gamma=rec.hyper.gamma, alpha=rec.hyper.alpha, beta=rec.hyper.beta,
                               U=U_new, ktilde=ktilde)
            hyper_new, ell_new = minimize(start)
            rec.ell_trace.append(ell_new)
            if not _strictly_below(ell_new, rec.ell, opts.rel_tol):
                break
            rec.U, rec.hyper, rec.ell = U_new, hyper_new, ell_new
            rec.inner_iters += 1
        log.info("rank %d: l = %.6f (rank %d: %.6f)", r, rec.ell, r - 1, best[r - 1].ell)
        best[r] = rec
        if not _strictly_below(rec.ell, best[r - 1].ell, opts.rel_tol):
            r -= 1
            break
    chosen = best[r]
    report = HyperloopReport(per_rank=[best[k] for k in sorted(best)], selected_r=r,
                             wallclock=time.perf_counter() - t0, tc_estimate=tc_theta)
    return chosen.r, chosen.U, chosen.hyper, report
