import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from fad.data import DataSet, ImplicitW
from fad.lanczos import basis_size, lanczos_sweep, partial_svd, ritz_residuals


def _check_against_dense(A, q, tol=1e-8, align=1e-6, **kw):
    trip = partial_svd(A, q, **kw)
    U, s, Vt = np.linalg.svd(A)
    assert trip.converged
    assert_allclose(trip.values, s[:q], rtol=0, atol=tol * s[0])
    for j in range(q):
        gap = min(
            s[j - 1] - s[j] if j > 0 else np.inf,
            s[j] - s[j + 1] if j + 1 < len(s) else np.inf,
        )
        if gap > 1e-6 * s[0]:
            assert abs(trip.right_vectors[:, j] @ Vt[j]) > 1 - align
    return trip


def test_basis_size():
    assert basis_size(3, 100, 1000) == 20
    assert basis_size(12, 100, 1000) == 25
    assert basis_size(2, 8, 50) == 8


def test_diagonal_operator():
    A = np.diag([5.0, 4.0, 3.0, 2.0, 1.0])
    trip = partial_svd(A, 2)
    assert_allclose(trip.values, [5.0, 4.0], atol=1e-12)
    assert_allclose(np.abs(trip.right_vectors), np.eye(5)[:, :2], atol=1e-10)
    # sign convention: largest-magnitude entry positive
    assert np.all(trip.right_vectors[np.argmax(np.abs(trip.right_vectors), axis=0), [0, 1]] > 0)


def test_random_30_by_50(rng):
    _check_against_dense(rng.standard_normal((30, 50)), 3)


def test_tall_and_restarting(rng):
    # slow spectral decay forces restarts with m = 20
    A = rng.standard_normal((200, 120))
    trip = _check_against_dense(A, 5)
    assert trip.restarts > 0


def test_rank_two():
    rng = np.random.default_rng(3)
    Q1, _ = np.linalg.qr(rng.standard_normal((30, 2)))
    Q2, _ = np.linalg.qr(rng.standard_normal((40, 2)))
    A = 3.0 * np.outer(Q1[:, 0], Q2[:, 0]) + 2.0 * np.outer(Q1[:, 1], Q2[:, 1])
    trip = partial_svd(A, 3)
    assert_allclose(trip.values[:2], [3.0, 2.0], atol=1e-12)
    assert trip.values[2] <= 1e-8 * 3.0


def test_clustered_spectrum(rng):
    U, _ = np.linalg.qr(rng.standard_normal((50, 50)))
    V, _ = np.linalg.qr(rng.standard_normal((45, 45)))
    s = np.concatenate([[10.0, 10.0 - 1e-7, 10.0 - 2e-7], np.linspace(5, 0.1, 42)])
    A = U[:, :45] * s @ V.T
    trip = partial_svd(A, 3)
    assert_allclose(trip.values, s[:3], atol=1e-8 * s[0])
    # the cluster is resolved as a subspace
    P = V[:, :3]
    assert np.linalg.norm(P.T @ trip.right_vectors, 2) > 1 - 1e-6
    assert abs(np.linalg.svd(P.T @ trip.right_vectors, compute_uv=False)[-1]) > 1 - 1e-6


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(3, 60),
    p=st.integers(3, 60),
    seed=st.integers(0, 2**32 - 1),
    rank_cut=st.booleans(),
)
def test_matches_dense_svd(n, p, seed, rank_cut):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, p))
    if rank_cut and min(n, p) > 3:
        r = int(rng.integers(1, min(n, p) - 1))
        A = rng.standard_normal((n, r)) @ rng.standard_normal((r, p))
    q = int(rng.integers(1, min(n, p)))
    q = min(q, 4)
    _check_against_dense(A, q)


def test_orthonormal_and_residual_bound(rng):
    A = rng.standard_normal((80, 70))
    delta = 1e-9
    trip = partial_svd(A, 4, delta=delta)
    V, U = trip.right_vectors, trip.left_vectors
    assert np.max(np.abs(V.T @ V - np.eye(4))) < 1e-8
    assert np.max(np.abs(U.T @ U - np.eye(4))) < 1e-8
    for j in range(4):
        assert np.linalg.norm(A.T @ U[:, j] - trip.values[j] * V[:, j]) <= 10 * trip.values[0] * delta
    assert np.all(np.diff(trip.values) <= 0)


def test_deterministic(rng):
    A = rng.standard_normal((40, 90))
    a = partial_svd(A, 3, seed=7)
    b = partial_svd(A, 3, seed=7)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.right_vectors, b.right_vectors)


def test_sweep_relations_and_orthogonality(rng):
    A = rng.standard_normal((35, 25))
    sys = lanczos_sweep(A, 12, seed=1)
    F, G, B = sys.F, sys.G, sys.B
    assert np.max(np.abs(F.T @ F - np.eye(12))) < 1e-10
    assert np.max(np.abs(G.T @ G - np.eye(12))) < 1e-10
    assert_allclose(A.T @ F, G @ B, atol=1e-10)
    e_m = np.zeros(12)
    e_m[-1] = 1.0
    assert_allclose(A @ G, F @ B.T + np.outer(sys.r, e_m), atol=1e-10)
    # first sweep is upper bidiagonal in this orientation
    assert_allclose(np.triu(np.tril(B, 1)), B)


def test_ritz_residuals_zero_row():
    sys = lanczos_sweep(np.diag([5.0, 4.0, 3.0, 2.0, 1.0]), 3, seed=0)
    assert_allclose(ritz_residuals(sys, np.ones(2), np.zeros(3)), 0.0)


def test_ritz_residuals_full_dimension():
    sys = lanczos_sweep(np.diag([5.0, 4.0, 3.0, 2.0, 1.0]), 5, seed=0)
    P, h, _ = np.linalg.svd(sys.B)
    assert_allclose(ritz_residuals(sys, h[:2], P[-1]), 0.0, atol=1e-12)
    assert_allclose(h, [5, 4, 3, 2, 1], atol=1e-12)


def test_ritz_residuals_match_dense(rng):
    A = rng.standard_normal((40, 30))
    sys = lanczos_sweep(A, 10, seed=2)
    P, h, Qt = np.linalg.svd(sys.B)
    res = ritz_residuals(sys, h[:3], P[-1])
    for j in range(3):
        u = sys.F @ Qt[j]
        v = sys.G @ P[:, j]
        assert abs(np.linalg.norm(A @ v - h[j] * u) - res[j]) < 1e-10


def test_implicit_operator(rng):
    Y = rng.standard_normal((30, 200))
    psi = rng.uniform(0.2, 0.8, 200)
    op = ImplicitW(DataSet.from_array(Y), psi)
    trip = partial_svd(op, 3)
    s = np.linalg.svd(op.to_dense(), compute_uv=False)
    assert_allclose(trip.values, s[:3], atol=1e-8 * s[0])


def test_bad_arguments(rng):
    A = rng.standard_normal((5, 4))
    with pytest.raises(ValueError):
        partial_svd(A, 4)
    with pytest.raises(ValueError):
        partial_svd(A, 0)
    with pytest.raises(ValueError):
        partial_svd(A, 2, delta=0.0)


def test_restart_budget_exhausted(rng):
    A = rng.standard_normal((200, 150))
    trip = partial_svd(A, 5, max_restarts=0, m=11)
    assert not trip.converged
    assert trip.restarts == 0
    assert np.max(trip.residuals) > trip.values[0] * 1e-9


def test_full_right_basis_recovers_near_multiple(rng):
    # m = p < n: a near-triple top value must not lose a copy to the residual
    n, p = 49, 5
    U, _ = np.linalg.qr(rng.standard_normal((n, p)))
    V, _ = np.linalg.qr(rng.standard_normal((p, p)))
    s = np.array([5.0 + 2e-9, 5.0 + 1e-9, 5.0, 0.46, 0.38])
    trip = partial_svd((U * s) @ V.T, 4)
    assert trip.converged
    assert_allclose(trip.values, s[:4], atol=1e-8 * s[0])
    assert np.max(np.abs(trip.right_vectors.T @ trip.right_vectors - np.eye(4))) < 1e-8
