"""Factor-count selection by BIC and comparison of fitted models."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .em import fit_em
from .fit import fit_fad
from .profile import DENSE_LIMIT, canonical_rotation
from .report import FitReport

__all__ = [
    "select_q",
    "fit_one",
    "compare_fits",
    "ComparisonReport",
    "lowrank_frobenius_diff",
    "correlation_factor",
    "relative_error_R",
    "relative_error_gamma",
    "relative_error_LLt",
]

METHODS = ("fad", "em")


def fit_one(data, k, method="fad", cfg=None, em_cfg=None):
    """Fit one model, turning numerical failures into a failed report."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    try:
        if method == "fad":
            return fit_fad(data, k, cfg)
        return fit_em(data, k, cfg, em_cfg)
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        return FitReport.failed(method, k, data.n, data.p, f"{type(exc).__name__}: {exc}")


def select_q(data, k_max, method="fad", cfg=None, em_cfg=None, threads=1):
    """Fit k = 1..k_max factors and return ``(q_best, reports)``.

    ``q_best`` minimizes BIC over the successful fits; ties go to the smaller k.
    Reports are ordered by k regardless of completion order.
    """
    if not 1 <= k_max <= min(data.n, data.p) - 1:
        raise ValueError(f"k_max must be in [1, {min(data.n, data.p) - 1}], got {k_max}")
    ks = list(range(1, k_max + 1))
    if threads > 1 and k_max > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(lambda k: fit_one(data, k, method, cfg, em_cfg), ks))
    else:
        reports = [fit_one(data, k, method, cfg, em_cfg) for k in ks]
    ok = [r for r in reports if r.ok]
    if not ok:
        raise RuntimeError(f"all {k_max} fits failed; first error: {reports[0].error}")
    best = min(ok, key=lambda r: (r.bic, r.q))
    return best.q, reports


def lowrank_frobenius_diff(A, B):
    """``||A A^T - B B^T||_F`` from q x q Gram products."""
    if A.shape[0] <= DENSE_LIMIT:
        return float(np.linalg.norm(A @ A.T - B @ B.T))
    sq = (
        np.linalg.norm(A.T @ A) ** 2
        + np.linalg.norm(B.T @ B) ** 2
        - 2.0 * np.linalg.norm(B.T @ A) ** 2
    )
    return float(np.sqrt(max(sq, 0.0)))


def correlation_factor(lam, psi):
    """Loadings of the implied correlation matrix: ``R = L L^T + diag(1 - rowsum(L^2))``."""
    lam = np.asarray(lam, dtype=np.float64)
    d = np.sum(lam**2, axis=1) + np.asarray(psi)
    return lam / np.sqrt(d)[:, None]


def _offdiag_frobenius(A, B):
    # Frobenius norm of the off-diagonal part of A A^T - B B^T
    total = lowrank_frobenius_diff(A, B) ** 2
    diag = np.sum(A**2, axis=1) - np.sum(B**2, axis=1)
    return float(np.sqrt(max(total - diag @ diag, 0.0)))


def relative_error_R(lam_hat, psi_hat, lam, psi):
    """``||R_hat - R||_F / ||R||_F`` for the implied correlation matrices."""
    Lh = correlation_factor(lam_hat, psi_hat)
    L = correlation_factor(lam, psi)
    p = L.shape[0]
    zero = np.zeros((p, 0))
    norm_R = np.sqrt(_offdiag_frobenius(L, zero) ** 2 + p)
    return float(_offdiag_frobenius(Lh, L) / norm_R)


def _gamma_diag(lam, psi):
    _, g = canonical_rotation(lam, psi)
    return g


def relative_error_gamma(lam_hat, psi_hat, lam, psi):
    """``||Gamma_hat - Gamma||_F / ||Gamma||_F`` with both in canonical (diagonal, decreasing) form."""
    gh = _gamma_diag(lam_hat, psi_hat)
    g = _gamma_diag(lam, psi)
    k = max(gh.size, g.size)
    gh = np.pad(gh, (0, k - gh.size))
    g = np.pad(g, (0, k - g.size))
    return float(np.linalg.norm(gh - g) / np.linalg.norm(g))


def relative_error_LLt(lam_hat, psi_hat, lam, psi):
    """Relative Frobenius error of ``L L^T`` on the implied correlation scale."""
    Lh = correlation_factor(lam_hat, psi_hat)
    L = correlation_factor(lam, psi)
    return lowrank_frobenius_diff(Lh, L) / lowrank_frobenius_diff(L, np.zeros((L.shape[0], 0)))


@dataclass
class ComparisonReport:
    q: int
    truth_errors: dict = field(default_factory=dict)
    cross: dict = field(default_factory=dict)
    speed_ratio: float = float("nan")

    def summary(self):
        return {
            "q": self.q,
            "truth_errors": self.truth_errors,
            "cross": self.cross,
            "speed_ratio": self.speed_ratio,
        }


def _truth_errors(r, truth):
    return {
        "d_R": relative_error_R(r.lambda_hat, r.psi_hat, truth.lambda_, truth.psi),
        "d_Gamma": relative_error_gamma(r.lambda_hat, r.psi_hat, truth.lambda_, truth.psi),
        "d_LLt": relative_error_LLt(r.lambda_hat, r.psi_hat, truth.lambda_, truth.psi),
    }


def compare_fits(a, b, truth=None):
    """Cross-method discrepancies between two fits of the same data and q.

    ``truth`` is anything with ``lambda_`` and ``psi`` attributes (e.g. a
    :class:`fad.simulate.FactorTruth`); when given, relative errors of each fit
    against it are included. ``speed_ratio`` is ``b`` wall time over ``a``.
    """
    if a.p != b.p or a.q != b.q:
        raise ValueError(f"fits differ in shape: (p={a.p}, q={a.q}) vs (p={b.p}, q={b.q})")
    if a.scale_mode != b.scale_mode:
        raise ValueError("fits are on different scales")
    cross = {
        "loglik": float(abs(a.loglik - b.loglik) / max(abs(b.loglik), 1e-300)),
        "psi": float(np.linalg.norm(a.psi_hat - b.psi_hat) / np.linalg.norm(b.psi_hat)),
        "gamma": relative_error_gamma(a.lambda_hat, a.psi_hat, b.lambda_hat, b.psi_hat)
        if np.any(b.lambda_hat)
        else float(np.linalg.norm(_gamma_diag(a.lambda_hat, a.psi_hat))),
        "LLt": _llt_cross(a, b),
    }
    out = ComparisonReport(q=a.q, cross=cross)
    if truth is not None:
        out.truth_errors = {a.method + "_a": _truth_errors(a, truth), b.method + "_b": _truth_errors(b, truth)}
    if a.wall_time_seconds > 0:
        out.speed_ratio = b.wall_time_seconds / a.wall_time_seconds
    return out


def _llt_cross(a, b):
    denom = lowrank_frobenius_diff(b.lambda_hat, np.zeros((b.p, 0)))
    diff = lowrank_frobenius_diff(a.lambda_hat, b.lambda_hat)
    return diff / denom if denom > 0 else diff
