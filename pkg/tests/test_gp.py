import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from costbo.exceptions import GPFitError, InvalidDataError, InvalidHyperparameterError
from costbo.gp import (Dataset, Domain, FantasyBatch, GaussianProcess, GPHyperparams, Observation,
                       condition, fit_hyperparameters, kernel_matern52_ard,
                       log_marginal_likelihood_dense, matern52, posterior, sample_posterior)
from oracles import dense_posterior, matern52_dense


def _random_gp(rng, d, n, noise=0.0):
    hp = GPHyperparams(rng.uniform(0.2, 1.5, d), rng.uniform(0.5, 3.0), noise, rng.normal())
    X = rng.uniform(-1, 1, (n, d))
    y = np.sin(3 * X).sum(axis=1) + 0.1 * rng.normal(size=n)
    return GaussianProcess(hyperparams=hp).fit(X, y), X, y, hp


# --- kernel -----------------------------------------------------------------

def test_kernel_zero_distance_is_amplitude():
    hp = GPHyperparams([0.3, 2.0], 2.5)
    assert kernel_matern52_ard([0.1, 0.2], [0.1, 0.2], hp) == 2.5


def test_kernel_unit_distance_value():
    # (1 + sqrt5 + 5/3) exp(-sqrt5) evaluated independently
    expected = (1 + math.sqrt(5) + 5 / 3) * math.exp(-math.sqrt(5))
    hp = GPHyperparams([1.0], 1.0)
    assert kernel_matern52_ard([0.0], [1.0], hp) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.5240, abs=5e-5)


def test_kernel_symmetric_and_bounded():
    rng = np.random.default_rng(1)
    hp = GPHyperparams([0.5, 0.7, 1.1], 1.7)
    for _ in range(50):
        a, b = rng.uniform(-2, 2, (2, 3))
        k = kernel_matern52_ard(a, b, hp)
        assert k == kernel_matern52_ard(b, a, hp)
        assert 0 < k <= hp.amplitude


def test_kernel_rejects_nonpositive_lengthscale():
    with pytest.raises(InvalidHyperparameterError):
        GPHyperparams([1.0, 0.0], 1.0)
    with pytest.raises(InvalidHyperparameterError):
        GPHyperparams([1.0], -1.0)
    with pytest.raises(InvalidHyperparameterError):
        GPHyperparams([1.0], 1.0, noise_variance=-1e-3)


def test_gram_matches_scipy_oracle_and_is_psd():
    rng = np.random.default_rng(2)
    X = rng.uniform(0, 1, (30, 3))
    ls, amp = np.array([0.2, 0.5, 0.9]), 1.3
    K = matern52(X, X, ls, amp)
    np.testing.assert_allclose(K, matern52_dense(X, X, ls, amp), rtol=1e-13, atol=1e-15)
    assert np.linalg.eigvalsh(K + 1e-8 * amp * np.eye(30)).min() > 0


# --- data containers -----------------------------------------------------------

def test_dataset_best_and_order():
    ds = Dataset()
    assert ds.best() == math.inf
    for v in (3.0, 1.0, 2.0):
        ds.append(Observation([v, 0.0], v, 1.0))
    assert ds.best() == 1.0
    np.testing.assert_array_equal(ds.y, [3.0, 1.0, 2.0])
    assert ds.X.shape == (3, 2)


def test_observation_cost_must_be_positive():
    with pytest.raises(InvalidDataError):
        Observation([0.0], 1.0, 0.0)


def test_domain_validation_and_maps():
    with pytest.raises(ValueError):
        Domain([0.0, 1.0], [1.0, 1.0])
    dom = Domain([-1.0, 0.0], [1.0, 4.0])
    x = np.array([0.5, 1.0])
    np.testing.assert_allclose(dom.from_unit(dom.to_unit(x)), x)
    assert dom.contains(x) and not dom.contains([2.0, 0.0])


# --- posterior ---------------------------------------------------------------------

def test_empty_dataset_gives_prior():
    hp = GPHyperparams([0.5], 2.0, prior_mean=0.7)
    gp = GaussianProcess(hyperparams=hp).fit(np.empty((0, 1)), np.empty(0))
    assert posterior(gp, np.array([0.3])) == (0.7, 2.0)


def test_posterior_interpolates_observations():
    hp = GPHyperparams([0.1], 1.0)
    X = np.array([[0.1], [0.5], [0.9]])
    y = np.array([0.4, -0.3, 0.2])
    gp = GaussianProcess(hyperparams=hp).fit(X, y)
    for x, v in zip(X, y):
        m, s2 = posterior(gp, x)
        assert abs(m - v) < 1e-8
        assert 0.0 <= s2 < 1e-8


def test_interpolation_error_is_exactly_the_jitter_term():
    # mean at a training point is y_i - jitter * alpha_i for a noise-free model
    hp = GPHyperparams([0.4], 1.0)
    X = np.array([[0.1], [0.5], [0.9]])
    y = np.array([1.0, -2.0, 0.5])
    gp = GaussianProcess(hyperparams=hp).fit(X, y)
    mean, _ = gp.posterior(X)
    np.testing.assert_allclose(mean, y - gp.jitter_ * gp.alpha_, rtol=0, atol=1e-14)


def test_posterior_matches_dense_oracle():
    rng = np.random.default_rng(3)
    for d in (1, 2, 3):
        gp, X, y, hp = _random_gp(rng, d, 3, noise=1e-3)
        Q = rng.uniform(-1, 1, (20, d))
        mean, var = gp.posterior(Q)
        m0, v0 = dense_posterior(X, y, Q, hp.lengthscales, hp.amplitude, hp.noise_variance,
                                 hp.prior_mean, gp.jitter_)
        np.testing.assert_allclose(mean, m0, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(var, v0, rtol=1e-8, atol=1e-10)


def test_predict_return_std_and_sklearn_api():
    rng = np.random.default_rng(4)
    gp, X, y, hp = _random_gp(rng, 2, 10)
    mean, std = gp.predict(X[:3], return_std=True)
    np.testing.assert_allclose(std ** 2, gp.posterior(X[:3])[1])
    assert clone(gp).get_params()["hyperparams"].as_dict() == hp.as_dict()
    assert gp.score(X, y) > 0.999


def test_log_marginal_likelihood_matches_dense():
    rng = np.random.default_rng(5)
    for n in (2, 10, 30):
        gp, X, y, hp = _random_gp(rng, 2, n, noise=1e-2)
        dense = log_marginal_likelihood_dense(X, y, hp, gp.jitter_)
        assert gp.log_marginal_likelihood() == pytest.approx(dense, rel=1e-8)


# --- sampling ----------------------------------------------------------------------

def test_sample_posterior_degenerate_cases():
    hp = GPHyperparams([0.4], 1.0)
    gp = GaussianProcess(hyperparams=hp).fit(np.array([[0.2]]), np.array([1.5]))
    m, _ = gp.posterior(np.array([0.6]))
    assert sample_posterior(gp, np.array([0.6]), 0.0) == m
    # zero variance at the (noise-free) observation, up to jitter-level variance
    assert sample_posterior(gp, np.array([0.2]), 3.0) == pytest.approx(1.5, abs=1e-3)


def test_sample_posterior_monte_carlo_mean():
    rng = np.random.default_rng(6)
    gp, X, y, hp = _random_gp(rng, 1, 5)
    x = np.array([0.05])
    m, v = gp.posterior(x)
    z = rng.standard_normal(100_000)
    draws = gp.sample_posterior(np.repeat(x[None, :], z.size, axis=0), z)
    se = draws.std(ddof=1) / math.sqrt(z.size)
    assert abs(draws.mean() - m) < 3 * se


# --- conditioning ------------------------------------------------------------------

def test_condition_reproduces_new_observation():
    hp = GPHyperparams([0.1, 0.1], 1.0)
    gp = GaussianProcess(hyperparams=hp).fit(np.array([[0.0, 0.0], [0.8, 0.8]]),
                                             np.array([0.1, -0.2]))
    obs = Observation([0.4, 0.3], 0.5, 1.0)
    new = condition(gp, obs)
    m, v = new.posterior(obs.point)
    assert abs(m - 0.5) < 1e-8
    assert v < 1e-8
    # the original is untouched
    assert gp.X_train_.shape[0] == 2


def test_condition_error_is_exactly_the_jitter_term():
    rng = np.random.default_rng(7)
    gp, X, y, hp = _random_gp(rng, 2, 8)
    new = gp.condition([0.3, -0.4], 2.0)
    m, _ = new.posterior(np.array([0.3, -0.4]))
    assert m == pytest.approx(2.0 - new.jitter_ * new.alpha_[-1], abs=1e-10)


def test_condition_matches_full_rebuild():
    rng = np.random.default_rng(8)
    for d in (1, 2, 3):
        gp, X, y, hp = _random_gp(rng, d, 20, noise=1e-4)
        Xn = rng.uniform(-1, 1, (30, d))
        yn = rng.normal(size=30)
        inc = gp
        for x, v in zip(Xn, yn):
            inc = inc.condition(x, v)
        full = GaussianProcess(hyperparams=hp).fit(np.vstack([X, Xn]), np.append(y, yn))
        Q = rng.uniform(-1, 1, (40, d))
        m1, v1 = inc.posterior(Q)
        m2, v2 = full.posterior(Q)
        np.testing.assert_allclose(m1, m2, rtol=1e-8, atol=1e-8 * hp.amplitude)
        np.testing.assert_allclose(v1, v2, rtol=1e-8, atol=1e-8 * hp.amplitude)


def test_condition_order_invariance():
    rng = np.random.default_rng(9)
    gp, X, y, hp = _random_gp(rng, 2, 6)
    a, b = Observation([0.1, 0.2], 0.3, 1.0), Observation([-0.5, 0.7], -1.0, 1.0)
    ab = condition(condition(gp, a), b)
    ba = condition(condition(gp, b), a)
    Q = rng.uniform(-1, 1, (25, 2))
    for u, w in zip(ab.posterior(Q), ba.posterior(Q)):
        np.testing.assert_allclose(u, w, rtol=1e-8, atol=1e-10)


def test_condition_on_duplicate_point_falls_back_to_refactorization():
    hp = GPHyperparams([0.5], 1.0)
    gp = GaussianProcess(hyperparams=hp).fit(np.array([[0.2], [0.6]]), np.array([1.0, 0.0]))
    new = gp.condition([0.2], 1.0)
    assert new.jitter_ >= gp.jitter_
    assert np.all(np.isfinite(new.posterior(np.linspace(0, 1, 5)[:, None])[0]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 15))
def test_variance_non_increasing_under_conditioning(seed, d, n):
    rng = np.random.default_rng(seed)
    gp, X, y, hp = _random_gp(rng, d, n)
    new = gp.condition(rng.uniform(-1, 1, d), rng.normal())
    Q = rng.uniform(-1, 1, (30, d))
    assert np.all(new.posterior(Q)[1] <= gp.posterior(Q)[1] + 1e-8)


def test_fantasy_batch_matches_sequential_conditioning():
    rng = np.random.default_rng(10)
    gp, X, y, hp = _random_gp(rng, 2, 10)
    B = 4
    fb = FantasyBatch(gp, B)
    models = [gp] * B
    for _ in range(3):
        Xn = rng.uniform(-1, 1, (B, 2))
        yn = rng.normal(size=B)
        fb.add(Xn, yn)
        models = [m.condition(x, v) for m, x, v in zip(models, Xn, yn)]
    Q = rng.uniform(-1, 1, (B, 7, 2))
    mean, var = fb.posterior(Q)
    for b in range(B):
        m, v = models[b].posterior(Q[b])
        np.testing.assert_allclose(mean[b], m, rtol=1e-8, atol=1e-9)
        np.testing.assert_allclose(var[b], v, rtol=1e-7, atol=1e-9)


# --- hyperparameter fitting -----------------------------------------------------

def test_fit_recovers_known_lengthscale():
    rng = np.random.default_rng(11)
    X = rng.uniform(0, 1, (60, 1))
    K = matern52_dense(X, X, np.array([0.3]), 1.0) + 0.01 * np.eye(60)
    y = np.linalg.cholesky(K) @ rng.standard_normal(60)
    hp = fit_hyperparameters(X, y, seed=0, domain=Domain([0.0], [1.0]))
    assert abs(math.log(hp.lengthscales[0]) - math.log(0.3)) < 0.5


def test_fit_is_deterministic_given_seed():
    rng = np.random.default_rng(12)
    X = rng.uniform(-1, 1, (15, 2))
    y = np.cos(2 * X[:, 0]) + X[:, 1]
    a = fit_hyperparameters(X, y, seed=3)
    b = fit_hyperparameters(X, y, seed=3)
    assert a.as_dict() == b.as_dict()


def test_fit_constant_data_does_not_crash():
    X = np.linspace(0, 1, 8)[:, None]
    gp = GaussianProcess(domain=Domain([0.0], [1.0])).fit(X, np.full(8, 4.2))
    mean, var = gp.posterior(np.array([[0.33], [0.9]]))
    np.testing.assert_array_equal(mean, 4.2)
    assert gp.hyperparams_.noise_variance <= 1e-6


def test_fit_needs_two_points():
    with pytest.raises(ValueError):
        fit_hyperparameters(np.zeros((1, 1)), np.zeros(1))


def test_fit_failure_raises_with_diagnostics(monkeypatch):
    import costbo.gp as gpmod
    monkeypatch.setattr(gpmod, "_neg_lml_and_grad", lambda *a: None)
    with pytest.raises(GPFitError) as info:
        fit_hyperparameters(np.random.default_rng(0).uniform(size=(5, 1)), np.arange(5.0))
    assert len(info.value.diagnostics) == 8
