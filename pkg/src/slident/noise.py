"""Innovation covariance from a long least-squares AR (ARX) fit."""

from dataclasses import dataclass

import numpy as np

from . import _accel

RIDGE = 1e-8
SIGMA_REG = 1e-8


@dataclass
class SigmaEstimate:
    Sigma: np.ndarray
    arx_order: int
    residuals: np.ndarray
    coeffs: np.ndarray


def default_order(N, m, T):
    return max(1, min(2 * T, N // (4 * m)))


def estimate_sigma(ts, order):
    """Fit y(t) ~ sum_{k<=order} A_k y(t-k) by least squares; Sigma = R^T R / (N - order)."""
    Y = ts.values if hasattr(ts, "values") else np.asarray(ts, dtype=float)
    N, m = Y.shape
    if order < 1:
        raise ValueError("ARX order must be at least 1")
    if N <= m * order + m:
        raise ValueError(f"insufficient data: N={N} needs to exceed m*order + m = {m * order + m}")
    X = _accel.lagged_regressor(Y, order)
    Yp = Y[order:]
    XtX = X.T @ X
    if np.linalg.matrix_rank(XtX) < XtX.shape[0]:
        ridge = RIDGE * np.trace(XtX) / XtX.shape[0]
        B = np.linalg.solve(XtX + ridge * np.eye(XtX.shape[0]), X.T @ Yp)
    else:
        B = np.linalg.lstsq(X, Yp, rcond=None)[0]
    resid = Yp - X @ B
    Sigma = resid.T @ resid / (N - order)
    Sigma = 0.5 * (Sigma + Sigma.T)
    # B rows follow the regressor layout (j, k); reorder to A[k][i, j]
    A = B.reshape(m, order, m).transpose(1, 2, 0)
    return SigmaEstimate(Sigma=Sigma, arx_order=order, residuals=resid, coeffs=A)


def regularize_sigma(Sigma, rel=SIGMA_REG):
    m = Sigma.shape[0]
    return Sigma + rel * np.trace(Sigma) / m * np.eye(m)
