"""Fit summaries shared by the FAD and EM drivers."""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["FitReport", "bic"]


def bic(loglik, p, k, n):
    """``-2 loglik + p k log n``, with k the number of fitted factors."""
    return float(-2.0 * loglik + p * k * np.log(n))


@dataclass
class FitReport:
    method: str
    q: int
    n: int
    p: int
    loglik: float
    psi_hat: np.ndarray
    lambda_hat: np.ndarray
    grad_inf_norm: float
    iterations: int
    lanczos_calls: int
    wall_time_seconds: float
    converged: bool
    hit_max_iter: bool = False
    status: str = ""
    scale_mode: str = "correlation"
    evaluations: int = 0
    loglik_trace: list = field(default_factory=list, repr=False)
    error: str = None

    @property
    def bic(self):
        return bic(self.loglik, self.p, self.q, self.n)

    @property
    def ok(self):
        return self.error is None

    @property
    def gamma_hat(self):
        """``L^T Psi^{-1} L`` of the fitted model."""
        return self.lambda_hat.T @ (self.lambda_hat / self.psi_hat[:, None])

    def score_residual(self, s_diag):
        """``max_j |s_jj - (L L^T)_jj - psi_j|``."""
        return float(np.max(np.abs(s_diag - np.sum(self.lambda_hat**2, axis=1) - self.psi_hat)))

    def summary(self, with_arrays=False):
        out = {
            "method": self.method,
            "q": self.q,
            "n": self.n,
            "p": self.p,
            "loglik": self.loglik,
            "bic": self.bic,
            "grad_inf_norm": self.grad_inf_norm,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "lanczos_calls": self.lanczos_calls,
            "wall_time_seconds": self.wall_time_seconds,
            "converged": self.converged,
            "hit_max_iter": self.hit_max_iter,
            "status": self.status,
            "scale_mode": self.scale_mode,
        }
        if self.error is not None:
            out["error"] = self.error
        if with_arrays:
            out["psi_hat"] = self.psi_hat.tolist()
            out["lambda_hat"] = self.lambda_hat.tolist()
        return out

    @classmethod
    def failed(cls, method, q, n, p, message, wall_time=0.0):
        return cls(
            method=method,
            q=q,
            n=n,
            p=p,
            loglik=float("nan"),
            psi_hat=np.full(p, np.nan),
            lambda_hat=np.full((p, q), np.nan),
            grad_inf_norm=float("nan"),
            iterations=0,
            lanczos_calls=0,
            wall_time_seconds=wall_time,
            converged=False,
            status="error",
            error=message,
        )

    @classmethod
    def from_summary(cls, d):
        d = dict(d)
        d.pop("bic", None)
        psi = np.asarray(d.pop("psi_hat", []), dtype=np.float64)
        lam = np.asarray(d.pop("lambda_hat", []), dtype=np.float64).reshape(len(psi), -1)
        known = set(cls.__dataclass_fields__)
        kwargs = {k: v for k, v in d.items() if k in known}
        return cls(psi_hat=psi, lambda_hat=lam, **kwargs)
