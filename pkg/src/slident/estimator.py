"""Posterior means of the predictor coefficients and the Tikhonov objective."""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from ._system import KronSystem, spd_factor
from .kernel import KronKernel
from .regression import ThetaLayout, unstack_theta

RANGE_TOL = 1e-8


class OutOfRangeError(ValueError):
    """theta has a component outside the range of a singular kernel."""


@dataclass
class PredictorEstimate:
    theta_s: np.ndarray
    theta_l: np.ndarray
    layout: ThetaLayout
    sigma: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def theta(self):
        return self.theta_s + self.theta_l

    def S_coeffs(self):
        return unstack_theta(self.theta_s, self.layout)

    def L_coeffs(self):
        return unstack_theta(self.theta_l, self.layout)

    def G_coeffs(self):
        return unstack_theta(self.theta, self.layout)

    def to_dict(self):
        return {
            "m": self.layout.m,
            "T": self.layout.T,
            "theta_s": self.theta_s.tolist(),
            "theta_l": self.theta_l.tolist(),
            "sigma": None if self.sigma is None else np.asarray(self.sigma).tolist(),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d):
        m, T = int(d["m"]), int(d["T"])
        sigma = d.get("sigma")
        return cls(
            theta_s=np.asarray(d["theta_s"], dtype=float),
            theta_l=np.asarray(d["theta_l"], dtype=float),
            layout=ThetaLayout(m, T),
            sigma=None if sigma is None else np.asarray(sigma, dtype=float).reshape(m, m),
            diagnostics=dict(d.get("diagnostics", {})),
        )


def _dense_posterior(data, reg, K, Sigma):
    Phi = reg.dense()
    V = Phi @ K @ Phi.T + np.kron(Sigma, np.eye(reg.N_prime))
    cf, _ = spd_factor(V)
    c = sla.cho_solve(cf, data.y_stacked)
    return K @ (Phi.T @ c)


def posterior_mean_g(data, reg, K, Sigma, method="auto"):
    """theta_hat = K Phi^T (Phi K Phi^T + Sigma (x) I)^-1 y.

    ``K`` is a structured kernel (anything with the :class:`KronKernel`
    interface) or a dense (m^2 T, m^2 T) array, which is handled by dense
    linear algebra and meant for small problems.
    """
    if not isinstance(K, KronKernel):
        return _dense_posterior(data, reg, np.asarray(K, dtype=float), np.asarray(Sigma, dtype=float))
    sol = KronSystem(data, reg, Sigma, K.ktilde).solve(K, method=method)
    return K.matvec(sol.w)


def posterior_mean_sl(data, reg, Ks, Kl, Sigma, method="auto", system=None):
    """Joint posterior means: theta_s = K_S Phi^T c, theta_l = K_L Phi^T c.

    One factorisation of the combined system serves both parts.
    """
    system = system or KronSystem(data, reg, Sigma, Ks.ktilde)
    sol = system.solve(Ks + Kl, method=method)
    diagnostics = dict(sol.diagnostics)
    diagnostics["ell"] = sol.ell
    return PredictorEstimate(
        theta_s=Ks.matvec(sol.w),
        theta_l=Kl.matvec(sol.w),
        layout=ThetaLayout(reg.m, reg.T),
        sigma=np.asarray(Sigma, dtype=float),
        diagnostics=diagnostics,
    )


def _sparse_penalty(theta_s, Ks):
    S = np.asarray(theta_s, dtype=float).reshape(Ks.m * Ks.m, Ks.T)
    Kinv = Ks.ktilde.inv
    quad = np.einsum("at,ts,as->a", S, Kinv, S)
    scale = max(float(np.max(np.abs(S))), 1.0)
    zero = Ks.gamma == 0
    if np.any(np.abs(S[zero]) > RANGE_TOL * scale):
        raise OutOfRangeError("theta_s has a nonzero block where gamma is zero")
    return float(np.sum(quad[~zero] / Ks.gamma[~zero]))


def _lowrank_penalty(theta_l, Kl):
    m, T = Kl.m, Kl.T
    X = np.asarray(theta_l, dtype=float).reshape(m, m * T)
    Lp = np.linalg.pinv(Kl.Lambda, hermitian=True)
    proj = Kl.Lambda @ Lp
    scale = max(float(np.max(np.abs(X))), 1.0)
    if np.max(np.abs(X - proj @ X), initial=0.0) > RANGE_TOL * scale:
        raise OutOfRangeError("theta_l rows leave the range of Lambda")
    Xk = (X.reshape(m * m, T) @ Kl.ktilde.inv).reshape(m, m * T)
    return float(np.sum(X * (Lp @ Xk)))


def tikhonov_objective(theta_s, theta_l, data, reg, Ks, Kl, Sigma):
    """||y - Phi(theta_s + theta_l)||^2_{Sigma^-1 (x) I} + ||theta_s||^2_{K_S^+} + ||theta_l||^2_{K_L^+}.

    Pseudo-inverse norms are used for singular kernels; a theta outside the
    corresponding range raises :class:`OutOfRangeError`.
    """
    theta_s = np.asarray(theta_s, dtype=float)
    theta_l = np.asarray(theta_l, dtype=float)
    resid = data.targets - reg.predict(theta_s + theta_l)
    Sinv = np.linalg.inv(np.asarray(Sigma, dtype=float))
    fit = float(np.sum((resid @ Sinv) * resid))
    return fit + _sparse_penalty(theta_s, Ks) + _lowrank_penalty(theta_l, Kl)
