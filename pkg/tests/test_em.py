import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import dense_em_step, dense_loglik, dense_S, factor_data
from fad.data import DataSet
from fad.em import EmConfig, em_init, em_step, fit_em
from fad.fit import FitConfig, fit_fad, initial_estimates
from fad.profile import full_loglik
from fad.selection import lowrank_frobenius_diff


@pytest.mark.parametrize("coef", [1, 2])
def test_step_matches_dense(rng, coef):
    Y = rng.standard_normal((15, 10)) @ rng.standard_normal((10, 10)) * 0.3 + rng.standard_normal((15, 10))
    d = DataSet.from_array(Y)
    lam = rng.standard_normal((10, 2)) * 0.5
    psi = rng.uniform(0.3, 0.9, 10)
    new = em_step(em_init(d, lam, psi), d, psi_update_coef=coef, bounds=(1e-12, 1e12))
    lam_o, psi_o = dense_em_step(dense_S(Y), lam, psi, coef)
    if np.all(psi_o > 1e-12):
        assert_allclose(new.lambda_, lam_o, rtol=1e-10, atol=1e-12)
        assert_allclose(new.psi, psi_o, rtol=1e-10, atol=1e-12)
    assert_allclose(new.loglik, dense_loglik(dense_S(Y), 15, new.lambda_, new.psi), rtol=1e-10)


def test_loglik_tracks_full_loglik(rng):
    d, _, _ = factor_data(30, 20, 2, seed=1)
    st = em_init(d, rng.standard_normal((20, 2)), rng.uniform(0.2, 0.8, 20))
    assert_allclose(st.loglik, full_loglik(d, st.lambda_, st.psi), rtol=1e-12)


def test_monotone_random_steps(rng):
    d, _, _ = factor_data(40, 25, 3, seed=2)
    st = em_init(d, rng.standard_normal((25, 3)), rng.uniform(0.2, 0.8, 25))
    for _ in range(100):
        new = em_step(st, d, bounds=(0.005, 1.0))
        assert new.loglik >= st.loglik - 1e-10 * abs(st.loglik)
        st = new


def test_fixed_point_of_converged_fit():
    d, _, _ = factor_data(30, 8, 2, seed=3)
    r = fit_fad(d, 2, FitConfig(psi_lo=1e-3))
    assert r.converged
    st = em_init(d, r.lambda_hat, r.psi_hat)
    new = em_step(st, d, bounds=(1e-3, 1.0))
    scale = np.linalg.norm(r.lambda_hat @ r.lambda_hat.T)
    assert lowrank_frobenius_diff(new.lambda_, r.lambda_hat) < 1e-8 * scale
    assert np.linalg.norm(new.psi - r.psi_hat) < 1e-8 * np.linalg.norm(r.psi_hat)


def test_scalar_gaussian():
    rng = np.random.default_rng(4)
    Y = rng.standard_normal((40, 2))
    Y[:, 1] += 0.8 * Y[:, 0]
    d = DataSet.from_array(Y[:, :1])
    with pytest.raises(ValueError):
        fit_em(d, 1)  # q must be < min(n, p) for the start
    # p = 1 through the step itself
    st = em_init(d, np.array([[0.5]]), np.array([0.6]))
    for _ in range(200):
        st = em_step(st, d, bounds=(1e-6, 1.0))
    assert_allclose(st.lambda_[0, 0] ** 2 + st.psi[0], 1.0, atol=1e-8)


def test_fit_em_agrees_with_fad():
    d, _, _ = factor_data(20, 10, 2, seed=5)
    a = fit_fad(d, 2)
    b = fit_em(d, 2)
    assert b.converged
    llt = lowrank_frobenius_diff(a.lambda_hat, b.lambda_hat) / np.linalg.norm(b.lambda_hat @ b.lambda_hat.T)
    assert llt < 1e-4
    assert abs(a.loglik - b.loglik) < 1e-6 * abs(b.loglik)
    assert np.all(np.diff(b.loglik_trace) >= -1e-10 * np.abs(b.loglik_trace[1:]))


def test_max_iter_flag():
    d, _, _ = factor_data(50, 40, 2, seed=6)
    r = fit_em(d, 4, em_cfg=EmConfig(max_iter=5))
    assert r.hit_max_iter and not r.converged
    assert r.iterations == 5
    assert len(r.loglik_trace) == 6


def test_literal_coefficient_breaks_ascent():
    d, _, _ = factor_data(60, 30, 2, seed=7)
    lo = 0.005
    st1 = st2 = em_init(d, *initial_estimates(d, 2))
    drops = 0
    for _ in range(20):
        st1 = em_step(st1, d, bounds=(lo, 1.0), psi_update_coef=1)
        new2 = em_step(st2, d, bounds=(lo, 1.0), psi_update_coef=2)
        drops += new2.loglik < st2.loglik
        st2 = new2
    assert drops > 0
    assert np.all(st1.psi >= lo)
