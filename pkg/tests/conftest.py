"""Dense reference implementations used as test oracles.

Everything here forms S, W and Sigma explicitly, which the package never does.
"""

import numpy as np
import pytest

from fad.data import DataSet

LOG_2PI = np.log(2.0 * np.pi)


def dense_scaled_centered(Y, scale_mode="correlation"):
    Y = np.asarray(Y, dtype=np.float64)
    Yc = Y - Y.mean(axis=0)
    if scale_mode == "correlation":
        Yc = Yc / np.sqrt(np.mean(Yc**2, axis=0))
    return Yc


def dense_S(Y, scale_mode="correlation"):
    Yc = dense_scaled_centered(Y, scale_mode)
    return Yc.T @ Yc / Y.shape[0]


def dense_W(Y, psi, scale_mode="correlation"):
    Yc = dense_scaled_centered(Y, scale_mode)
    return Yc / np.sqrt(Y.shape[0]) / np.sqrt(psi)


def dense_loglik(S, n, lam, psi):
    """Gaussian log-likelihood with the mean profiled out, from explicit matrices."""
    p = S.shape[0]
    Sigma = lam @ lam.T + np.diag(psi)
    sign, logdet = np.linalg.slogdet(Sigma)
    assert sign > 0
    return -0.5 * n * (p * LOG_2PI + logdet + np.trace(np.linalg.solve(Sigma, S)))


def dense_profile_loadings(Y, psi, q, scale_mode="correlation"):
    """Profiled loadings from a full SVD of the dense W."""
    W = dense_W(Y, psi, scale_mode)
    _, h, Vt = np.linalg.svd(W, full_matrices=False)
    theta = h[:q] ** 2
    delta = np.sqrt(np.maximum(theta - 1.0, 0.0))
    return np.sqrt(psi)[:, None] * Vt[:q].T * delta, theta


def dense_em_step(S, lam, psi, coef=1):
    q = lam.shape[1]
    Sigma = lam @ lam.T + np.diag(psi)
    Sinv = np.linalg.inv(Sigma)
    SPL = S @ (lam / psi[:, None])
    lam_new = SPL @ np.linalg.inv(np.eye(q) + lam.T @ Sinv @ SPL)
    psi_new = np.diag(S) - coef * np.diag(lam_new @ lam.T @ Sinv @ S)
    return lam_new, psi_new


def factor_data(n, p, q, seed=0, psi_range=(0.2, 0.8)):
    """Return (DataSet, loadings, uniquenesses) drawn from a q-factor model."""
    rng = np.random.default_rng(seed)
    psi = rng.uniform(*psi_range, size=p)
    lam = rng.standard_normal((p, q))
    Y = rng.standard_normal((n, q)) @ lam.T + rng.standard_normal((n, p)) * np.sqrt(psi)
    return DataSet.from_array(Y), lam, psi


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
