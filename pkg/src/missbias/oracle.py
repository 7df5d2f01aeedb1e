"""Brute-force numerical references for the closed-form machinery.

Nothing here reuses the conjugate algebra, the imputation formulas or the
data generator it is meant to check; only the random streams are shared.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidParameterError, OracleFailure
from .stochastic import RngStream

LOG_2PI = math.log(2.0 * math.pi)
DGP_ORACLE_STREAM = 0x0AC1E

# P(|x1 - y| < 0.2) under the default truth, fixed before any sampler code
# ran. Computed by 1-D quadrature over x1 of the exponentially modified
# normal CDF of y - x1 = x2 - x1 + eps (beta1 = 0), and confirmed by
# dgp_moments at 1e7 draws.
BAND_MISSING_RATE = {"mean": 0.07802708277460996, "rate": 0.0802906522870764}


def _log_trapezoid(log_f: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """log of the trapezoid rule applied to ``exp(log_f)`` along ``axis``."""
    top = np.max(log_f, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    f = np.exp(log_f - top)
    f_first = np.take(f, [0], axis=axis)
    f_last = np.take(f, [-1], axis=axis)
    total = f.sum(axis=axis, keepdims=True) - 0.5 * (f_first + f_last)
    with np.errstate(divide="ignore"):
        out = np.log(total * h) + top
    return np.squeeze(out, axis=axis)


def ml_quadrature(
    included,
    X,
    y,
    g: float,
    sigma2_decades: float = 4.0,
    beta_halfwidth: float = 12.0,
    tol: float = 1e-8,
    max_refinements: int = 12,
) -> float:
    """Log marginal likelihood of a g-prior submodel by tensor quadrature.

    Integrates ``N(y; X b, s2 I) * N(b; 0, g s2 (X'X)^-1) / s2`` over ``b``
    and ``s2``. The variance axis is ``t = log s2`` on
    ``[10^-d, 10^d] * (y'y / n)``; the coefficients are expressed in units of
    prior standard deviations ``u`` (``b = sqrt(g s2) R^-1 u`` with
    ``X'X = R'R``) on ``[-12, 12]^k``. In these units the prior is standard
    normal and the integrand factorises over the ``u`` coordinates, so each
    variance node needs only ``k`` one-dimensional integrals.

    Trapezoid grids are halved until two successive Richardson-extrapolated
    values differ by less than ``tol`` (absolute, on the log scale).

    Parameters
    ----------
    included : sequence of int
        1-based columns of ``X`` in the submodel (at most 2).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    cols = [int(i) - 1 for i in included]
    n, k = len(y), len(cols)
    if n > 12 or k > 2:
        raise InvalidParameterError("ml_quadrature is limited to n <= 12 and k <= 2")
    yty = float(y @ y)
    if k:
        Xg = X[:, cols]
        r = np.linalg.cholesky(Xg.T @ Xg).T
        # b'X'y = sqrt(g s2) u' (R^-T X'y)
        proj = np.linalg.solve(r.T, Xg.T @ y)
    else:
        proj = np.zeros(0)

    centre = math.log(yty / n)
    span = sigma2_decades * math.log(10.0)
    t_lo, t_hi = centre - span, centre + span
    # ||y - Xb||^2 = y'y - 2 sqrt(g s2) u'proj + g s2 u'u

    def estimate(level: int) -> float:
        nt = 32 * 2**level
        nu = 16 * 2**level
        t = np.linspace(t_lo, t_hi, nt + 1)
        ht = (t_hi - t_lo) / nt
        log_f = -0.5 * n * (LOG_2PI + t) - 0.5 * yty * np.exp(-t)
        if k:
            u = np.linspace(-beta_halfwidth, beta_halfwidth, nu + 1)
            hu = 2.0 * beta_halfwidth / nu
            s = np.sqrt(g) * np.exp(-0.5 * t)
            for j in range(k):
                # exponent from the likelihood cross term, the likelihood
                # quadratic term and the standard-normal prior on u_j
                e = (
                    proj[j] * s[:, None] * u[None, :]
                    - 0.5 * g * u[None, :] ** 2
                    - 0.5 * u[None, :] ** 2
                    - 0.5 * LOG_2PI
                )
                log_f = log_f + _log_trapezoid(e, hu, axis=1)
        return float(_log_trapezoid(log_f, ht))

    prev_est = estimate(0)
    prev_rich = None
    for level in range(1, max_refinements + 1):
        est = estimate(level)
        # trapezoid error is O(h^2): one Richardson step on the integral scale
        rich = est + math.log1p((1.0 - math.exp(prev_est - est)) / 3.0)
        if prev_rich is not None and abs(rich - prev_rich) < tol:
            return rich
        prev_est, prev_rich = est, rich
    raise OracleFailure(f"quadrature did not converge after {max_refinements} refinements")


def _log_product_density(x2, x1, y, beta, sigma2, alpha, tau2, intercept=0.0):
    """Unnormalised log density of a missing x2: working prior times likelihood."""
    mu = alpha[0] + alpha[1] * x1
    resid = y - intercept - beta[0] * x1 - beta[1] * x2
    return -0.5 * (x2 - mu) ** 2 / tau2 - 0.5 * resid**2 / sigma2


def conditional_density_grid(grid, x1, y, beta, sigma2, alpha, tau2, intercept=0.0) -> np.ndarray:
    """Product density normalised numerically (trapezoid) on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    lp = _log_product_density(grid, x1, y, beta, sigma2, alpha, tau2, intercept)
    f = np.exp(lp - lp.max())
    return f / np.trapezoid(f, grid)


def conditional_grid_check(x1, y, beta, sigma2, alpha, tau2, intercept=0.0, points: int = 100_001):
    """Mean and variance of the missing-x2 conditional by grid normalisation.

    A wide first pass brackets both factors; later passes re-centre on
    ``mean ± 12 sd`` of the previous pass until the window stops moving.
    """
    mu = alpha[0] + alpha[1] * x1
    lo, hi = mu - 40 * math.sqrt(tau2), mu + 40 * math.sqrt(tau2)
    if beta[1] != 0:
        c = (y - intercept - beta[0] * x1) / beta[1]
        w = 40 * math.sqrt(sigma2) / abs(beta[1])
        lo, hi = min(lo, c - w), max(hi, c + w)
    mean = var = None
    for _ in range(6):
        grid = np.linspace(lo, hi, points)
        dens = conditional_density_grid(grid, x1, y, beta, sigma2, alpha, tau2, intercept)
        new_mean = float(np.trapezoid(grid * dens, grid))
        new_var = float(np.trapezoid((grid - new_mean) ** 2 * dens, grid))
        if mean is not None and abs(new_mean - mean) <= 1e-12 * (1 + abs(mean)) and abs(
            new_var - var
        ) <= 1e-12 * var:
            break
        mean, var = new_mean, new_var
        sd = math.sqrt(var)
        lo, hi = mean - 12 * sd, mean + 12 * sd
    return mean, var


def dgp_moments(
    n_mc: int,
    beta=(0.0, 1.0),
    sigma2: float = 1.0,
    mechanism: str = "band",
    width: float = 0.2,
    cutoff: float = 0.0,
    exp_param: str = "mean",
    seed: int = 0,
    chunk: int = 1_000_000,
):
    """Plain Monte Carlo ``(mean x2, var x2, missing rate)`` of the true model.

    ``mechanism`` is ``"band"`` (censor iff ``|x1 - y| < width``),
    ``"threshold"`` (censor iff ``x1 < cutoff``) or ``"none"``. Draws come
    from a dedicated stream of ``seed``.
    """
    if n_mc < 100_000:
        raise InvalidParameterError("dgp_moments needs n_mc >= 1e5")
    rng = RngStream(seed, DGP_ORACLE_STREAM).generator
    total = 0.0
    total_sq = 0.0
    missing = 0
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        x1 = rng.standard_normal(m)
        scale = np.exp(-x1) if exp_param == "mean" else np.exp(x1)
        x2 = rng.exponential(scale)
        y = beta[0] * x1 + beta[1] * x2 + math.sqrt(sigma2) * rng.standard_normal(m)
        if mechanism == "band":
            missing += int(np.count_nonzero(np.abs(x1 - y) < width))
        elif mechanism == "threshold":
            missing += int(np.count_nonzero(x1 < cutoff))
        elif mechanism != "none":
            raise InvalidParameterError(f"unknown mechanism {mechanism!r}")
        total += float(x2.sum())
        total_sq += float((x2 * x2).sum())
        done += m
    mean = total / n_mc
    return mean, total_sq / n_mc - mean * mean, missing / n_mc
