"""
Profile log-likelihood of the Gaussian factor model.

For fixed uniquenesses Psi the loadings maximizing the log-likelihood are
``Psi^{1/2} V_q Delta`` with ``Delta_ii = max(theta_i - 1, 0)^{1/2}``, where
``theta_i`` are the squared top-q singular values of the scaled centered data
and ``V_q`` the matching right singular vectors. Substituting them leaves

    l_p(Psi) = c - n/2 { log det Psi + tr(Psi^{-1} S) + sum_i (log theta_i - theta_i + 1) }

with ``c = -n p log(2 pi) / 2`` and gradient ``-n/2 diag(L L^T + Psi - S)``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .data import ImplicitW, centered_matmat, diag_s
from .lanczos import partial_svd

__all__ = [
    "SvdConfig",
    "ProfileEval",
    "SvdNotConverged",
    "profile_eval",
    "recover_loadings",
    "full_loglik",
    "rescale_to_covariance",
    "canonical_rotation",
    "DENSE_LIMIT",
    "KINK_TOL",
]

LOG_2PI = np.log(2.0 * np.pi)
DENSE_LIMIT = 2000
# theta within [1, 1 + KINK_TOL] is treated as exactly 1
KINK_TOL = 1e-10


class SvdNotConverged(RuntimeError):
    def __init__(self, triplets, psi):
        self.triplets = triplets
        self.psi = np.array(psi, copy=True)
        super().__init__(
            f"partial SVD did not converge after {triplets.restarts} restarts "
            f"(max residual {np.max(triplets.residuals):.3e}, h_1 = {triplets.values[0]:.6g})"
        )


@dataclass(frozen=True)
class SvdConfig:
    delta: float = 1e-9
    max_restarts: int = 1000
    seed: int = 0


@dataclass
class ProfileEval:
    value: float
    gradient: np.ndarray
    theta: np.ndarray
    right_vectors: np.ndarray
    psi: np.ndarray
    constant: float
    scale_mode: str = "correlation"
    svd_restarts: int = 0
    # diag(L L^T + Psi - S); zero exactly at a stationary point
    score: np.ndarray = field(default=None, repr=False)
    loadings: np.ndarray = field(default=None, repr=False)

    @property
    def q(self):
        return self.theta.shape[0]


def _constant(n, p):
    return -0.5 * n * p * LOG_2PI


def profile_eval(data, psi, q, svd_cfg=None, scale_mode="correlation", with_loadings=False):
    """Value and gradient of the profile log-likelihood from a single partial SVD."""
    svd_cfg = svd_cfg or SvdConfig()
    psi = np.asarray(psi, dtype=np.float64)
    if q < 1:
        raise ValueError("q must be at least 1")
    op = ImplicitW(data, psi, scale_mode)
    trip = partial_svd(
        op, q, delta=svd_cfg.delta, max_restarts=svd_cfg.max_restarts, seed=svd_cfg.seed
    )
    if not trip.converged:
        raise SvdNotConverged(trip, psi)
    theta = trip.values**2
    theta_eff = np.where(theta <= 1.0 + KINK_TOL, 1.0, theta)
    factor_terms = np.log(theta_eff) - theta_eff + 1.0
    assert np.all(factor_terms <= 0.0)

    n = data.n
    s = diag_s(data, scale_mode)
    c = _constant(n, data.p)
    value = c - 0.5 * n * (np.sum(np.log(psi)) + np.sum(s / psi) + np.sum(factor_terms))

    V = trip.right_vectors
    # diag(L L^T) = psi_j sum_k (theta_k - 1) v_jk^2
    ll_diag = psi * ((V * V) @ (theta_eff - 1.0))
    score = ll_diag + psi - s
    # d/dpsi_j of log psi_j + s_jj / psi_j and of the theta terms carries 1 / psi_j^2
    gradient = -0.5 * n * score / psi**2

    ev = ProfileEval(
        value=float(value),
        gradient=gradient,
        theta=theta,
        right_vectors=V,
        psi=psi.copy(),
        constant=c,
        scale_mode=scale_mode,
        svd_restarts=trip.restarts,
        score=score,
    )
    if with_loadings:
        ev.loadings = recover_loadings(ev, psi)
    return ev


def recover_loadings(eval, psi=None):
    """Profiled loadings ``Psi^{1/2} V_q Delta``; columns with theta <= 1 are zero."""
    psi = eval.psi if psi is None else np.asarray(psi, dtype=np.float64)
    theta_eff = np.where(eval.theta <= 1.0 + KINK_TOL, 1.0, eval.theta)
    delta = np.sqrt(theta_eff - 1.0)
    return (np.sqrt(psi)[:, None] * eval.right_vectors) * delta


def full_loglik(data, lam, psi, scale_mode="correlation", method="woodbury"):
    """Gaussian log-likelihood at ``Sigma = L L^T + Psi`` (mean profiled out).

    ``method="woodbury"`` uses only n x q and p x q intermediates:
    ``log det Sigma = log det Psi + log det(I + L^T Psi^{-1} L)`` and
    ``tr(Sigma^{-1} S) = tr(Psi^{-1} S) - tr(M^{-1} A^T S A)`` with ``A = Psi^{-1} L``.
    ``method="dense"`` builds S and Sigma and is limited to p <= DENSE_LIMIT.
    """
    lam = np.asarray(lam, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    if lam.ndim == 1:
        lam = lam[:, None]
    n, p = data.n, data.p
    if lam.shape[0] != p or psi.shape != (p,):
        raise ValueError("dimension mismatch between data, loadings and uniquenesses")
    s = diag_s(data, scale_mode)
    if method == "dense":
        if p > DENSE_LIMIT:
            raise ValueError(f"dense evaluation limited to p <= {DENSE_LIMIT}")
        Yc = centered_matmat(data, np.eye(p), scale_mode)
        S = Yc.T @ Yc / n
        Sigma = lam @ lam.T + np.diag(psi)
        cf = linalg.cho_factor(Sigma)
        logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
        tr = np.trace(linalg.cho_solve(cf, S))
        return float(-0.5 * n * (p * LOG_2PI + logdet + tr))
    if method != "woodbury":
        raise ValueError(f"unknown method {method!r}")
    k = lam.shape[1]
    A = lam / psi[:, None]
    M = np.eye(k) + lam.T @ A
    cf = linalg.cho_factor(M)
    logdet = np.sum(np.log(psi)) + 2.0 * np.sum(np.log(np.diag(cf[0])))
    T = centered_matmat(data, A, scale_mode)
    C = T.T @ T / n
    tr = np.sum(s / psi) - np.trace(linalg.cho_solve(cf, C))
    return float(-0.5 * n * (p * LOG_2PI + logdet + tr))


def rescale_to_covariance(lam_corr, psi_corr, data):
    """Map a correlation-scale fit back to the covariance scale of ``data``."""
    sd = data.col_sd
    return np.asarray(lam_corr) * sd[:, None], np.asarray(psi_corr) * sd**2


def canonical_rotation(lam, psi):
    """Rotate loadings so that ``L^T Psi^{-1} L`` is diagonal and decreasing.

    Columns are signed so that their largest-magnitude entry is positive.
    Returns ``(rotated_loadings, gamma_diagonal)``.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape[1] == 0:
        return lam.copy(), np.zeros(0)
    gamma = lam.T @ (lam / np.asarray(psi)[:, None])
    w, Q = np.linalg.eigh(gamma)
    order = np.argsort(w)[::-1]
    w, Q = w[order], Q[:, order]
    out = lam @ Q
    idx = np.argmax(np.abs(out), axis=0)
    signs = np.sign(out[idx, np.arange(out.shape[1])])
    signs[signs == 0] = 1.0
    return out * signs, w
