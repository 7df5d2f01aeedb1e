import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from missbias.dgp import Dataset, Threshold, Truth, apply_censoring, generate_complete
from missbias.errors import DegenerateScaleError, InsufficientDataError, InvalidParameterError, SingularDesignError
from missbias.imputation import (
    WorkingParams,
    WorkingRegression,
    draw_conditional,
    impute_all,
    impute_full_conditional,
    update_working_params,
)
from missbias.oracle import conditional_density_grid, conditional_grid_check
from missbias.sampler import FULL_MODEL, McmcConfig, run_chain
from missbias.stochastic import RngStream

finite = st.floats(-5, 5)
positive = st.floats(0.05, 5)


def test_working_params_validation():
    with pytest.raises(InvalidParameterError):
        WorkingParams((0.0, 1.0), 0.0)
    with pytest.raises(InvalidParameterError):
        WorkingParams((0.0,), 1.0)
    with pytest.raises(InvalidParameterError):
        WorkingParams((math.nan, 1.0), 1.0)


# -- conjugate update -------------------------------------------------------


def test_affine_x2_is_degenerate():
    x1 = np.linspace(-1, 1, 10)
    with pytest.raises(DegenerateScaleError):
        update_working_params(x1, 2.0 + 3.0 * x1, RngStream(0))


def test_constant_x1_is_singular():
    with pytest.raises(SingularDesignError):
        update_working_params(np.ones(10), np.arange(10.0), RngStream(0))


def test_too_few_rows():
    with pytest.raises(InsufficientDataError):
        WorkingRegression(np.arange(3.0))


def test_working_update_moments():
    g = np.random.default_rng(1)
    x1 = g.standard_normal(30)
    x2 = 1.0 + 0.5 * x1 + g.standard_normal(30)
    reg = WorkingRegression(x1)
    alpha_hat, rss = reg.least_squares(x2)
    rng = RngStream(2, 3)
    draws = [reg.update(x2, rng) for _ in range(100_000)]
    alpha = np.array([d.alpha for d in draws])
    tau2 = np.array([d.tau2 for d in draws])
    tau2_mean = rss / (30 - 4)
    # alpha | y has a t marginal with covariance E[tau2] (W'W)^-1
    se = np.sqrt(np.diag(tau2_mean * reg.gram_inverse) / len(alpha))
    assert np.all(np.abs(alpha.mean(0) - alpha_hat) < 4 * se)
    tau2_sd = tau2_mean / math.sqrt((30 - 2) / 2 - 2)
    assert abs(tau2.mean() - tau2_mean) < 4 * tau2_sd / math.sqrt(len(tau2))


def test_least_squares_matches_lstsq():
    g = np.random.default_rng(4)
    x1, x2 = g.standard_normal(50), g.standard_normal(50)
    alpha_hat, rss = WorkingRegression(x1).least_squares(x2)
    W = np.column_stack([np.ones(50), x1])
    ref, res, *_ = np.linalg.lstsq(W, x2, rcond=None)
    np.testing.assert_allclose(alpha_hat, ref, rtol=1e-12)
    assert rss == pytest.approx(res[0], rel=1e-10)


# -- full conditional -------------------------------------------------------


def test_worked_example():
    m, v = impute_full_conditional(0.0, 1.0, (0.0, 1.0), 1.0, WorkingParams((0.0, 0.0), 1.0))
    assert (m, v) == (0.5, 0.5)


def test_zero_beta2_returns_working_conditional():
    wp = WorkingParams((0.3, -0.7), 2.5)
    m, v = impute_full_conditional(1.2, 9.0, (0.4, 0.0), 1.0, wp)
    assert m == pytest.approx(0.3 - 0.7 * 1.2) and v == 2.5


@settings(max_examples=100)
@given(finite, finite, finite, st.floats(0.1, 5), positive, finite, finite, positive)
def test_variance_bounded_by_both_precisions(x1, y, b1, b2, s2, a0, a1, t2):
    m, v = impute_full_conditional(x1, y, (b1, b2), s2, WorkingParams((a0, a1), t2))
    assert v <= min(t2, s2 / b2**2) * (1 + 1e-12)


@settings(max_examples=100)
@given(finite, finite, finite, finite, positive, finite, finite, positive)
def test_sign_symmetry(x1, y, b1, b2, s2, a0, a1, t2):
    wp = WorkingParams((a0, a1), t2)
    m, v = impute_full_conditional(x1, y, (b1, b2), s2, wp)
    # negating beta2 and the partial residual y - beta1 x1 together
    y_flip = 2 * b1 * x1 - y
    m2, v2 = impute_full_conditional(x1, y_flip, (b1, -b2), s2, wp)
    assert m2 == pytest.approx(m, rel=1e-9, abs=1e-9) and v2 == pytest.approx(v, rel=1e-12)


def test_density_matches_grid_oracle_50_draws():
    g = np.random.default_rng(11)
    grid = np.linspace(-10, 10, 10_000)
    done = 0
    while done < 50:
        beta = g.normal(size=2)
        s2, t2 = g.uniform(0.2, 1.0, 2)
        wp = WorkingParams(tuple(g.normal(0, 0.5, 2)), t2)
        x1, y = g.standard_normal(), g.normal(0, 1.5)
        m, v = impute_full_conditional(x1, y, beta, s2, wp)
        if abs(m) + 9 * math.sqrt(v) >= 10:
            continue
        ref = conditional_density_grid(grid, x1, y, beta, s2, wp.alpha, t2)
        ours = np.exp(-0.5 * (grid - m) ** 2 / v) / math.sqrt(2 * math.pi * v)
        assert np.max(np.abs(ours - ref)) <= 1e-8
        gm, gv = conditional_grid_check(x1, y, beta, s2, wp.alpha, t2)
        assert abs(gm - m) <= 1e-6 and abs(gv - v) <= 1e-6
        done += 1


def test_intercept_shifts_partial_residual():
    wp = WorkingParams((0.0, 0.0), 1.0)
    a = impute_full_conditional(0.0, 3.0, (0.0, 1.0), 1.0, wp, intercept=2.0)
    b = impute_full_conditional(0.0, 1.0, (0.0, 1.0), 1.0, wp)
    assert a == b


# -- draws ------------------------------------------------------------------


def _masked(n=50, seed=0):
    d = generate_complete(n, Truth(), RngStream(seed))
    return Dataset(d.x1, d.x2, np.zeros(n, bool), d.y)


def test_impute_all_no_missing():
    d = generate_complete(20, Truth(), RngStream(0))
    assert impute_all(d, (0.0, 1.0), 1.0, WorkingParams((0, 0), 1.0), RngStream(1)).size == 0


def test_impute_all_degenerate_tau2():
    d = _masked()
    wp = WorkingParams((0.5, -0.25), 1e-12)
    draws = impute_all(d, (0.0, 0.0), 1.0, wp, RngStream(2))
    np.testing.assert_allclose(draws, 0.5 - 0.25 * d.x1, atol=1e-4)


def test_impute_all_deterministic():
    d = _masked()
    args = ((0.1, 0.9), 0.8, WorkingParams((0.2, 0.1), 0.5))
    a = impute_all(d, *args, RngStream(3, 1))
    b = impute_all(d, *args, RngStream(3, 1))
    assert np.array_equal(a, b) and a.shape == (50,)


def test_impute_all_moments():
    d = _masked(4, seed=5)
    args = ((0.1, 0.9), 0.8, WorkingParams((0.2, 0.1), 0.5))
    m, v = impute_full_conditional(d.x1, d.y, *args)
    rng = RngStream(4)
    draws = np.array([impute_all(d, *args, rng) for _ in range(50_000)])
    assert np.all(np.abs(draws.mean(0) - m) < 4 * np.sqrt(v / 50_000))


def test_truncated_draws_stay_positive_and_match_truncnorm():
    from scipy import stats

    mean = np.full(200_000, -1.0)
    x = draw_conditional(mean, 4.0, RngStream(6), truncate_support=True)
    assert x.min() >= 0
    ref = stats.truncnorm(a=0.5, b=np.inf, loc=-1.0, scale=2.0)
    assert abs(x.mean() - ref.mean()) < 4 * ref.std() / math.sqrt(x.size)


def test_truncation_far_tail_is_finite():
    x = draw_conditional(np.array([-60.0]), 1.0, RngStream(7), truncate_support=True)
    assert np.isfinite(x[0]) and 0 <= x[0] < 0.2


def test_untruncated_imputations_go_negative_under_threshold():
    d = apply_censoring(generate_complete(1000, Truth(), RngStream(8)), Threshold())
    cfg = McmcConfig(iterations=300, burn_in=100, chain_count=1, store_imputed=True)
    chain = run_chain(d, FULL_MODEL, cfg, RngStream(8, 1))
    assert np.mean(chain.imputed < 0) > 0
