"""Scaled gradient projection on the nonnegative orthant."""

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class SGPResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    converged: bool
    kkt: float
    trace: list = field(default_factory=list)
    warning: str | None = None
    n_fev: int = 0


def kkt_residual(x, g):
    """||P(x - g) - x||_inf for the constraint x >= 0."""
    return float(np.max(np.abs(np.maximum(x - g, 0.0) - x), initial=0.0))


def sgp_minimize(objective, gradient, x0, *, scaling=None, tol=1e-6, max_iter=500,
                 sigma=1e-4, max_backtracks=60, d_min=1e-6, d_max=1e6,
                 step_min=1e-5, step_max=1e5, ftol=0.0, stall_lam=1e-9, stall_iters=5, bound_decay=None):
    """Minimise ``objective`` subject to x >= 0.

    Each iteration takes d = P(x - a D g) - x, with D a clipped diagonal
    inverse-Hessian estimate and a a Barzilai-Borwein step length in the
    D-metric, followed by Armijo backtracking (halving) along d.

    ``gradient`` is a callable, or ``True`` when ``objective`` returns
    ``(f, g)``. ``scaling(x, g)`` returns the diagonal of D; when omitted a
    per-coordinate secant estimate is maintained. ``ftol`` > 0 adds a
    relative-decrease stopping rule on top of the KKT test.

    If the line search needs a step below ``stall_lam`` (or fails) while a
    user scaling is active, the scaling is dropped in favour of the secant
    estimate. ``bound_decay`` > 0 narrows the clipping interval of D
    towards 1 as iterations accumulate, as in Bonettini-style SGP
    convergence proofs. Without progress for ``stall_iters`` iterations the
    run stops with a warning.

    The trace holds one dict per iteration: iter, objective, step, kkt.
    """
    if gradient is True:
        def f_only(x):
            return objective(x)[0]

        def fg(x):
            return objective(x)
    else:
        f_only = objective

        def fg(x):
            return objective(x), gradient(x)

    x = np.maximum(np.asarray(x0, dtype=float).copy(), 0.0)
    f, g = fg(x)
    n_fev = 1
    d_diag = np.ones_like(x)
    step = 1.0
    kkt = kkt_residual(x, g)
    trace = [{"iter": 0, "objective": float(f), "step": 0.0, "kkt": kkt}]
    warning = None
    converged = kkt <= tol
    it = 0
    flat = 0
    best_kkt = kkt
    while not converged and it < max_iter:
        it += 1
        if scaling is not None:
            d_diag = np.asarray(scaling(x, g), dtype=float)
        # bounds shrink towards the identity, which keeps coordinates near 0 from freezing
        width = np.sqrt(1.0 + bound_decay / it ** 2) if bound_decay else np.inf
        d_diag = np.clip(d_diag, max(d_min, 1.0 / width), min(d_max, width))
        d = np.maximum(x - step * d_diag * g, 0.0) - x
        gd = float(g @ d)
        if gd >= 0.0:
            # no descent along the scaled direction; fall back to the plain projected gradient
            d = np.maximum(x - g, 0.0) - x
            gd = float(g @ d)
            if gd >= 0.0:
                converged = True
                break
        resolution = 64 * np.finfo(float).eps * max(1.0, abs(f))
        lam = 1.0
        for _ in range(max_backtracks):
            x_new = x + lam * d
            f_new = f_only(x_new)
            n_fev += 1
            if not np.isfinite(f_new):
                lam *= 0.5
                continue
            # below float resolution of f the Armijo margin is noise; settle for no increase
            if f_new <= f + sigma * lam * gd or (f_new <= f and -sigma * lam * gd < resolution):
                break
            lam *= 0.5
        else:
            lam = 0.0
        if lam < stall_lam and scaling is not None:
            log.debug("sgp: scaled step stalled at iter %d, switching to secant scaling", it)
            scaling, d_diag, step = None, np.ones_like(x), 1.0
            continue
        if lam == 0.0:
            warning = "line search failed"
            log.debug("sgp: line search failed after %d halvings at iter %d", max_backtracks, it)
            break
        x_new = np.maximum(x_new, 0.0)
        f_new, g_new = fg(x_new)
        n_fev += 1
        s = x_new - x
        yv = g_new - g
        if scaling is None:
            ok = s * yv > 1e-300
            d_diag = np.where(ok, s / np.where(ok, yv, 1.0), d_diag)
            d_diag = np.clip(d_diag, d_min, d_max)
        # BB step in the metric induced by D
        sDs = float(s @ (s / d_diag))
        sy = float(s @ yv)
        step = float(np.clip(sDs / sy, step_min, step_max)) if sy > 0 else step_max
        f_prev = f
        x, f, g = x_new, f_new, g_new
        kkt = kkt_residual(x, g)
        trace.append({"iter": it, "objective": float(f), "step": lam, "kkt": kkt})
        stuck = f_prev - f <= 1e-15 * max(1.0, abs(f)) and kkt >= best_kkt
        flat = flat + 1 if stuck else 0
        best_kkt = min(best_kkt, kkt)
        if kkt <= tol:
            converged = True
        elif ftol > 0 and abs(f_prev - f) <= ftol * max(1.0, abs(f)):
            break
        elif flat >= stall_iters:
            warning = "no progress"
            break
    return SGPResult(x=x, fun=float(f), grad=g, n_iter=it, converged=converged, kkt=kkt,
                     trace=trace, warning=warning, n_fev=n_fev)
