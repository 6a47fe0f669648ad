"""
Partial SVD by Lanczos bidiagonalization with full reorthogonalization and
implicit restarts.

Only the products ``W g`` and ``W^T f`` are needed, so ``op`` can be any object
with ``shape``, ``matvec`` and ``rmatvec`` (an :class:`fad.data.ImplicitW`, a
``scipy.sparse.linalg.LinearOperator``, ...). A dense ndarray is also accepted.

Notation: F (n x m) and G (p x m) are the left and right Lanczos bases and

    W^T F = G B,        W G = F B^T + r e_m^T,

with B upper bidiagonal on the first sweep. If ``B = P diag(h) Q^T`` then the
Ritz triplets are ``u_j = F Q e_j``, ``v_j = G P e_j``, and
``||W v_j - h_j u_j|| = beta_m |P[m-1, j]|``.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BidiagonalSystem",
    "SingularTriplets",
    "partial_svd",
    "lanczos_sweep",
    "ritz_residuals",
    "basis_size",
]

_EPS = np.finfo(np.float64).eps


class _DenseOp:
    def __init__(self, A):
        self.A = np.asarray(A, dtype=np.float64)
        self.shape = self.A.shape

    def matvec(self, v):
        return self.A @ v

    def rmatvec(self, u):
        return self.A.T @ u


def _as_operator(op):
    if isinstance(op, np.ndarray):
        return _DenseOp(op)
    return op


@dataclass
class BidiagonalSystem:
    """State of a Lanczos sweep: ``W^T F = G B`` and ``W G = F B^T + r e_m^T``."""

    B: np.ndarray
    F: np.ndarray
    G: np.ndarray
    r: np.ndarray
    m: int

    @property
    def beta(self):
        return float(np.linalg.norm(self.r))


@dataclass
class SingularTriplets:
    values: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    restarts: int
    converged: bool
    residuals: np.ndarray = field(default=None)
    matvecs: int = 0

    @property
    def q(self):
        return self.values.shape[0]


def basis_size(q, n, p):
    """Lanczos basis size ``max(2q + 1, 20)``, capped at ``min(n, p)``."""
    return min(max(2 * q + 1, 20), n, p)


class _Counter:
    def __init__(self, op):
        self.op = op
        self.calls = 0

    def matvec(self, v):
        self.calls += 1
        return np.asarray(self.op.matvec(v), dtype=np.float64).reshape(-1)

    def rmatvec(self, u):
        self.calls += 1
        return np.asarray(self.op.rmatvec(u), dtype=np.float64).reshape(-1)


def _orthogonalize(x, basis):
    # classical Gram-Schmidt, applied twice
    if basis.shape[1] == 0:
        return x
    x = x - basis @ (basis.T @ x)
    x = x - basis @ (basis.T @ x)
    return x


def _random_orthogonal(rng, basis):
    dim = basis.shape[0]
    for _ in range(10):
        x = _orthogonalize(rng.standard_normal(dim), basis)
        nrm = np.linalg.norm(x)
        if nrm > 1e-8:
            return x / nrm
    raise RuntimeError("could not find a vector orthogonal to the current basis")


class _Lanczos:
    def __init__(self, op, m, rng):
        self.op = op
        self.m = m
        self.rng = rng
        n, p = op.op.shape
        self.F = np.zeros((n, m))
        self.G = np.zeros((p, m))
        self.B = np.zeros((m, m))
        self.scale = 0.0  # running estimate of ||W||

    def _tiny(self):
        return 1e3 * _EPS * self.scale

    def start(self, f):
        f = f / np.linalg.norm(f)
        self.F[:, 0] = f
        g = self.op.rmatvec(f)
        alpha = np.linalg.norm(g)
        self.scale = max(self.scale, alpha)
        if alpha <= self._tiny() or alpha == 0.0:
            g = _random_orthogonal(self.rng, self.G[:, :0])
            alpha = 0.0
        else:
            g = g / alpha
        self.G[:, 0] = g
        self.B[0, 0] = alpha

    def extend(self, k):
        """Fill columns k..m-1 given columns 0..k-1; returns the residual r_m."""
        F, G, B, m = self.F, self.G, self.B, self.m
        for j in range(k - 1, m):
            r = self.op.matvec(G[:, j]) - B[j, j] * F[:, j]
            r = _orthogonalize(r, F[:, : j + 1])
            beta = np.linalg.norm(r)
            self.scale = max(self.scale, beta)
            if j == m - 1:
                return r
            if beta <= self._tiny() or beta == 0.0:
                f = _random_orthogonal(self.rng, F[:, : j + 1])
                beta = 0.0
            else:
                f = r / beta
            F[:, j + 1] = f
            B[j, j + 1] = beta
            g = self.op.rmatvec(f) - beta * G[:, j]
            g = _orthogonalize(g, G[:, : j + 1])
            alpha = np.linalg.norm(g)
            self.scale = max(self.scale, alpha)
            if alpha <= self._tiny() or alpha == 0.0:
                g = _random_orthogonal(self.rng, G[:, : j + 1])
                alpha = 0.0
            else:
                g = g / alpha
            G[:, j + 1] = g
            B[j + 1, j + 1] = alpha
        raise AssertionError("unreachable")


def lanczos_sweep(op, m, f1=None, seed=0):
    """Run one bidiagonalization sweep of length m and return the system."""
    counter = _Counter(_as_operator(op))
    n, p = counter.op.shape
    if not 1 <= m <= min(n, p):
        raise ValueError(f"basis size must be in [1, {min(n, p)}], got {m}")
    rng = np.random.default_rng(seed)
    lz = _Lanczos(counter, m, rng)
    lz.start(rng.standard_normal(n) if f1 is None else np.asarray(f1, dtype=np.float64))
    r = lz.extend(1)
    return BidiagonalSystem(B=lz.B.copy(), F=lz.F.copy(), G=lz.G.copy(), r=r, m=m)


def ritz_residuals(sys, h, v_tilde_last_row):
    """``beta_m |v~_{j,m}|`` for the first ``len(h)`` Ritz pairs.

    ``v_tilde_last_row`` is the last row of the left singular vectors of B.
    """
    q = len(h)
    return sys.beta * np.abs(np.asarray(v_tilde_last_row)[:q])


def _fix_signs(U, V):
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def partial_svd(op, q, delta=1e-9, max_restarts=1000, seed=0, m=None):
    """Largest q singular values and vectors of ``op``.

    Parameters
    ----------
    op : operator or ndarray
        Object with ``shape`` (n, p), ``matvec`` and ``rmatvec``.
    q : int
        Number of triplets, ``1 <= q <= min(n, p) - 1``.
    delta : float
        Stop when ``beta_m |v~_{j,m}| <= h_1 * delta`` for all j <= q.
    max_restarts : int
        Restart budget; on exhaustion the current approximation is returned
        with ``converged=False``.
    seed : int
        Seed for the random starting vector (and breakdown replacements).
    m : int, optional
        Basis size; defaults to ``max(2q + 1, 20)`` capped at ``min(n, p)``.

    Returns
    -------
    SingularTriplets
        Values are nonincreasing; each right vector is signed so that its
        largest-magnitude entry is positive.
    """
    counter = _Counter(_as_operator(op))
    n, p = counter.op.shape
    if not 1 <= q <= min(n, p) - 1:
        raise ValueError(f"q must satisfy 1 <= q <= min(n, p) - 1 = {min(n, p) - 1}, got {q}")
    if delta <= 0:
        raise ValueError("delta must be positive")
    if m is None:
        m = basis_size(q, n, p)
    if not q < m <= min(n, p):
        raise ValueError(f"basis size m={m} must satisfy q < m <= min(n, p)")
    rng = np.random.default_rng(seed)
    lz = _Lanczos(counter, m, rng)
    lz.start(rng.standard_normal(n))
    if m == p < n:
        return _full_right_basis(lz, counter, q, delta)
    k = 1
    restarts = 0
    while True:
        r = lz.extend(k)
        beta_m = np.linalg.norm(r)
        P, h, Qt = np.linalg.svd(lz.B)
        res = beta_m * np.abs(P[m - 1, :q])
        converged = bool(np.all(res <= h[0] * delta))
        if converged or restarts >= max_restarts:
            break
        restarts += 1
        U = lz.F @ Qt[:q].T
        V = lz.G @ P[:, :q]
        rho = beta_m * P[m - 1, :q]
        lz.F[:, :q] = U
        lz.G[:, :q] = V
        lz.F[:, q:] = 0.0
        lz.G[:, q:] = 0.0
        if beta_m <= lz._tiny() or beta_m == 0.0:
            f = _random_orthogonal(rng, lz.F[:, :q])
            rho = np.zeros(q)
        else:
            f = _orthogonalize(r / beta_m, lz.F[:, :q])
            f /= np.linalg.norm(f)
        lz.F[:, q] = f
        g = counter.rmatvec(f) - V @ rho
        g = _orthogonalize(g, lz.G[:, :q])
        alpha = np.linalg.norm(g)
        if alpha <= lz._tiny() or alpha == 0.0:
            g = _random_orthogonal(rng, lz.G[:, :q])
            alpha = 0.0
        else:
            g /= alpha
        lz.G[:, q] = g
        lz.B[:] = 0.0
        lz.B[np.arange(q), np.arange(q)] = h[:q]
        lz.B[:q, q] = rho
        lz.B[q, q] = alpha
        k = q + 1
    U = lz.F @ Qt[:q].T
    V = lz.G @ P[:, :q]
    U, V = _fix_signs(U, V)
    return SingularTriplets(
        values=h[:q].copy(),
        right_vectors=V,
        left_vectors=U,
        restarts=restarts,
        converged=converged,
        residuals=res,
        matvecs=counter.calls,
    )


def _full_right_basis(lz, counter, q, delta):
    """Exact triplets when the right basis spans all of R^p (m = p < n).

    Then ``W = W G G^T = [F, r/beta] [B^T; beta e_m^T] G^T``, so the SVD of the
    (m+1) x m matrix on the right is exact even when a near-multiple singular
    value has been lost from the Krylov space of F (the lost copy lives in r).
    """
    r = lz.extend(1)
    m = lz.m
    beta = np.linalg.norm(r)
    K = np.vstack([lz.B.T, np.zeros((1, m))])
    K[m, m - 1] = beta
    X, h, Yt = np.linalg.svd(K, full_matrices=False)
    f_next = r / beta if beta > 0 else np.zeros_like(r)
    U = lz.F @ X[:m, :q] + np.outer(f_next, X[m, :q])
    V = lz.G @ Yt[:q].T
    U, V = _fix_signs(U, V)
    res = np.array([np.linalg.norm(counter.rmatvec(U[:, j]) - h[j] * V[:, j]) for j in range(q)])
    return SingularTriplets(
        values=h[:q].copy(),
        right_vectors=V,
        left_vectors=U,
        restarts=0,
        converged=bool(np.all(res <= 10 * h[0] * delta)),
        residuals=res,
        matvecs=counter.calls,
    )
