import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from missbias import gprior
from missbias.dgp import Truth, generate_complete
from missbias.errors import InsufficientDataError, InvalidParameterError, NoValidModelError, SingularDesignError
from missbias.gprior import (
    CrossProducts,
    ModelIndex,
    check_prior,
    enumerate_models,
    fit,
    fit_crossprod,
    model_posterior,
    posterior_mean_cov,
    sample_beta_sigma,
    scatter_p2,
)
from missbias.oracle import ml_quadrature
from missbias.stochastic import RngStream

NULL, B1, B2, FULL = enumerate_models(2)


def test_enumeration_order():
    assert [m.included for m in enumerate_models(2)] == [(), (1,), (2,), (1, 2)]
    assert [m.included for m in enumerate_models(3)][4:] == [(1, 2), (1, 3), (2, 3), (1, 2, 3)]
    assert len(enumerate_models(5)) == 32


def test_enumeration_guard():
    with pytest.raises(InvalidParameterError):
        enumerate_models(21)


@pytest.mark.parametrize("mask", range(8))
def test_bitmask_round_trip(mask):
    assert ModelIndex.from_bitmask(mask).bitmask == mask


def test_model_index_validation():
    assert ModelIndex((2, 1)).included == (1, 2)
    with pytest.raises(InvalidParameterError):
        ModelIndex((1, 1))
    with pytest.raises(InvalidParameterError):
        ModelIndex((0,))
    with pytest.raises(InvalidParameterError):
        ModelIndex((3,)).check_range(2)


def test_labels():
    assert NULL.label == "()" and FULL.label == "(beta1, beta2)"


# -- fit --------------------------------------------------------------------


def test_null_model_direct_substitution():
    y = np.array([1.0, 1.0, 1.0, 1.0])
    post = fit(NULL, np.zeros((4, 2)), y, 4.0)
    assert post.s_gamma == 4.0
    assert post.log_ml == pytest.approx(math.lgamma(2) - 2 * math.log(math.pi) - 2 * math.log(4), rel=1e-14)


def test_orthogonal_response():
    X = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
    y = np.array([0.0, 0.0, 2.0, -1.0])
    null = fit(NULL, X, y, 3.0)
    full = fit(FULL, X, y, 3.0)
    assert full.s_gamma == pytest.approx(float(y @ y))
    assert full.log_ml == pytest.approx(null.log_ml - math.log(4.0), rel=1e-13)


@pytest.mark.parametrize("model", [NULL, B1, B2, FULL], ids=lambda m: m.label)
def test_fit_matches_quadrature_n6(small_design, model):
    X, y = small_design
    closed = fit(model, X, y, 6.0).log_ml
    assert abs(math.expm1(closed - ml_quadrature(model.included, X, y, 6.0))) < 1e-6


def test_oracle_agreement_20_datasets():
    g = np.random.default_rng(8)
    for i in range(20):
        n = 5 + i % 4
        X = g.standard_normal((n, 2))
        y = X @ g.normal(size=2) + g.standard_normal(n)
        for m in enumerate_models(2):
            closed = fit(m, X, y, float(n)).log_ml
            assert abs(math.expm1(closed - ml_quadrature(m.included, X, y, float(n)))) < 1e-6


def test_singular_design():
    X = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
    with pytest.raises(SingularDesignError):
        fit(FULL, X, np.ones(5), 5.0)
    with pytest.raises(SingularDesignError):
        fit(B1, np.zeros((5, 2)), np.ones(5), 5.0)


def test_nearly_singular_guard():
    x = np.arange(6.0)
    X = np.column_stack([x, x + 1e-12 * np.array([1, -1, 1, -1, 1, -1])])
    with pytest.raises(SingularDesignError):
        fit(FULL, X, np.ones(6), 6.0)


def test_insufficient_rows():
    with pytest.raises(InsufficientDataError):
        fit(FULL, np.eye(2), np.ones(2), 2.0)


def test_bad_g():
    with pytest.raises(InvalidParameterError):
        fit(FULL, np.random.default_rng(0).normal(size=(5, 2)), np.ones(5), 0.0)


def test_column_permutation_invariance():
    g = np.random.default_rng(3)
    X = g.standard_normal((30, 2))
    y = X @ [1.0, -0.5] + g.standard_normal(30)
    a = fit(FULL, X, y, 30.0)
    b = fit(FULL, X[:, ::-1], y, 30.0)
    np.testing.assert_allclose(a.beta_hat, b.beta_hat[::-1], rtol=1e-12)
    assert a.log_ml == pytest.approx(b.log_ml, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 1e4))
def test_scatter_monotone_in_columns(seed, g):
    r = np.random.default_rng(seed)
    X = r.standard_normal((12, 2))
    y = r.standard_normal(12)
    s = {m.included: fit(m, X, y, g).s_gamma for m in enumerate_models(2)}
    yty = float(y @ y)
    assert s[()] == pytest.approx(yty)
    for sub, sup in [((), (1,)), ((), (2,)), ((1,), (1, 2)), ((2,), (1, 2))]:
        assert s[sup] <= s[sub] * (1 + 1e-12)
    assert all(0 < v <= yty * (1 + 1e-12) for v in s.values())


def test_scale_invariance_of_model_posterior():
    g = np.random.default_rng(4)
    X = g.standard_normal((40, 2))
    y = X @ [0.3, 0.2] + g.standard_normal(40)
    a = model_posterior(X, y, 40.0, np.full(4, 0.25)).posterior
    b = model_posterior(X, 7.3 * y, 40.0, np.full(4, 0.25)).posterior
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_scatter_p2_matches_fit():
    g = np.random.default_rng(5)
    X = g.standard_normal((20, 2))
    y = g.standard_normal(20)
    cp = CrossProducts.from_data(X, y)
    for m in enumerate_models(2):
        post = fit_crossprod(m, cp, 20.0)
        s, bh, inv = scatter_p2(m.bitmask, cp.xtx[0, 0], cp.xtx[0, 1], cp.xtx[1, 1], cp.xty[0], cp.xty[1], cp.yty, 20.0)
        assert s == pytest.approx(post.s_gamma, rel=1e-12)
        np.testing.assert_allclose(bh, post.beta_hat, rtol=1e-12)
        if m.size:
            np.testing.assert_allclose(np.asarray(inv), post.xtx_inverse[np.triu_indices(m.size)], rtol=1e-12)


def test_intercept_equals_explicit_flat_column_limit():
    # A flat prior on the intercept is the large-variance limit; posterior
    # means of the slopes must match the centred least-squares shrinkage.
    g = np.random.default_rng(6)
    X = g.standard_normal((50, 2)) + 3.0
    y = 2.0 + X @ [0.5, -1.0] + g.standard_normal(50)
    post = fit(FULL, X, y, 50.0, intercept=True)
    Xc, yc = X - X.mean(0), y - y.mean()
    ls = np.linalg.lstsq(Xc, yc, rcond=None)[0]
    np.testing.assert_allclose(post.beta_hat, ls, rtol=1e-10)
    assert post.n == 49


# -- sampling and moments ---------------------------------------------------


def test_null_model_draw():
    post = fit(NULL, np.zeros((5, 2)), np.arange(5.0), 5.0)
    beta, s2 = sample_beta_sigma(post, RngStream(0))
    assert beta.size == 0 and s2 > 0


def test_sampling_moments_match_closed_form():
    g = np.random.default_rng(7)
    X = g.standard_normal((25, 2))
    y = X @ [1.0, 0.5] + g.standard_normal(25)
    post = fit(FULL, X, y, 25.0)
    mean, cov, s2_mean = posterior_mean_cov(post)
    rng = RngStream(1, 2)
    draws = [sample_beta_sigma(post, rng) for _ in range(100_000)]
    betas = np.array([d[0] for d in draws])
    s2 = np.array([d[1] for d in draws])
    se = np.sqrt(np.diag(cov) / len(betas))
    assert np.all(np.abs(betas.mean(0) - mean) < 4 * se)
    s2_sd = s2_mean / math.sqrt(post.n / 2 - 2)
    assert abs(s2.mean() - s2_mean) < 4 * s2_sd / math.sqrt(len(s2))
    assert np.all(np.abs(np.cov(betas.T) - cov) < 0.05 * np.sqrt(np.outer(np.diag(cov), np.diag(cov))))


def test_posterior_mean_cov_large_g():
    g = np.random.default_rng(8)
    X = g.standard_normal((10, 2))
    y = g.standard_normal(10)
    post = fit(FULL, X, y, 1e12)
    np.testing.assert_allclose(posterior_mean_cov(post)[0], post.beta_hat, rtol=1e-9)


def test_posterior_mean_cov_null():
    y = np.arange(1.0, 7.0)
    mean, cov, s2 = posterior_mean_cov(fit(NULL, np.zeros((6, 2)), y, 6.0))
    assert mean.size == 0 and s2 == pytest.approx(float(y @ y) / 4)


def test_posterior_mean_cov_needs_rows():
    post = fit(FULL, np.random.default_rng(0).normal(size=(4, 2)), np.arange(4.0), 4.0)
    with pytest.raises(InsufficientDataError):
        posterior_mean_cov(post)


# -- model posterior --------------------------------------------------------


def test_equal_marginals_give_prior():
    # y orthogonal to both columns and g tiny: every log_ml is the same
    X = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    post = model_posterior(X, y, 1e-300, np.full(4, 0.25))
    np.testing.assert_allclose(post.posterior, 0.25, atol=1e-12)


def test_point_mass_prior():
    g = np.random.default_rng(9)
    X = g.standard_normal((30, 2))
    post = model_posterior(X, X[:, 1] + g.standard_normal(30), 30.0, [1.0, 0.0, 0.0, 0.0])
    assert post.posterior.tolist() == [1.0, 0.0, 0.0, 0.0]


def test_rank_deficient_models_flagged():
    X = np.column_stack([np.zeros(10), np.arange(10.0)])
    post = model_posterior(X, np.arange(10.0) + 1.0, 10.0, np.full(4, 0.25))
    assert post.valid.tolist() == [True, False, True, False]
    assert post.posterior[1] == 0 and post.posterior[3] == 0
    assert post.posterior.sum() == pytest.approx(1.0, abs=1e-12)


def test_all_invalid_raises():
    X = np.zeros((10, 2))
    with pytest.raises(NoValidModelError):
        model_posterior(X, np.ones(10), 10.0, [0.0, 0.5, 0.0, 0.5])


@pytest.mark.parametrize("prior", [[0.5, 0.5, 0.5], [0.5, 0.6, -0.1, 0.0], [0.3, 0.3, 0.3, 0.3]])
def test_prior_validation(prior):
    with pytest.raises(InvalidParameterError):
        check_prior(prior, 4)


def test_complete_data_strong_signal_20_seeds():
    mass = []
    for seed in range(20):
        d = generate_complete(1000, Truth(), RngStream(seed))
        post = model_posterior(np.column_stack([d.x1, d.x2]), d.y, 1000.0, np.full(4, 0.25))
        mass.append(post.probability(B2) + post.probability(FULL))
        assert post.posterior.sum() == pytest.approx(1.0, abs=1e-12)
    assert min(mass) >= 0.99
