"""Gaussian working model for x2 given x1 and the exact imputation conditional.

The working model is x2 | x1 ~ N(alpha0 + alpha1 * x1, tau2), with a flat
prior on alpha and p(tau2) ∝ 1 / tau2. The truth is exponential, so the
working model is deliberately misspecified: imputations are not truncated
to the positive half-line unless ``truncate_support`` is requested.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtri_exp

from .dgp import Dataset
from .errors import DegenerateScaleError, InsufficientDataError, InvalidParameterError
from .gprior import gram_inverse
from .stochastic import RngStream, sample_inverse_gamma, sample_mvn


@dataclass(frozen=True)
class WorkingParams:
    alpha: tuple
    tau2: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if len(self.alpha) != 2:
            raise InvalidParameterError("alpha must have length 2")
        if not (self.tau2 > 0 and np.isfinite(self.tau2) and np.all(np.isfinite(self.alpha))):
            raise InvalidParameterError("working parameters must be finite with tau2 > 0")

    @classmethod
    def _trusted(cls, alpha, tau2: float) -> "WorkingParams":
        """Construct without validation (hot loop; inputs come from a valid draw)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "alpha", alpha)
        object.__setattr__(obj, "tau2", tau2)
        return obj

    def mean(self, x1):
        return self.alpha[0] + self.alpha[1] * np.asarray(x1)


class WorkingRegression:
    """Conjugate updater for the working regression on a fixed x1 column.

    The Gram matrix of ``[1, x1]`` and its inverse factor are cached, since x1
    never changes during a chain.
    """

    def __init__(self, x1):
        x1 = np.asarray(x1, dtype=float)
        self.n = len(x1)
        if self.n < 4:
            raise InsufficientDataError("working regression needs n >= 4")
        self.x1 = x1
        s1 = float(x1.sum())
        gram = np.array([[float(self.n), s1], [s1, float(x1 @ x1)]])
        self.gram_inverse = gram_inverse(gram)
        self._factor = np.linalg.cholesky(self.gram_inverse)

    def least_squares(self, x2):
        """Return ``(alpha_hat, rss)`` for the regression of ``x2`` on ``[1, x1]``."""
        x2 = np.asarray(x2, dtype=float)
        wty = np.array([x2.sum(), self.x1 @ x2])
        alpha_hat = self.gram_inverse @ wty
        resid = x2 - alpha_hat[0] - alpha_hat[1] * self.x1
        return alpha_hat, float(resid @ resid)

    def update(self, x2_current, rng: RngStream) -> WorkingParams:
        """Draw ``tau2`` then ``alpha | tau2`` from the conjugate posterior."""
        alpha_hat, rss = self.least_squares(x2_current)
        scale = float(np.dot(x2_current, x2_current))
        if not rss > 1e-24 * max(scale, 1.0):
            raise DegenerateScaleError(
                "x2 is exactly affine in x1; the tau2 draw is undefined (collapsed imputation state)"
            )
        tau2 = sample_inverse_gamma((self.n - 2) / 2.0, rss / 2.0, rng)
        alpha = sample_mvn(alpha_hat, None, rng, factor=np.sqrt(tau2) * self._factor)
        return WorkingParams(tuple(alpha), tau2)


def update_working_params(x1, x2_current, rng: RngStream) -> WorkingParams:
    """One conjugate draw of the working parameters given completed x2."""
    return WorkingRegression(x1).update(x2_current, rng)


def impute_full_conditional(x1_i, y_i, beta, sigma2, wp: WorkingParams, intercept: float = 0.0):
    """Mean and variance of the Gaussian full conditional of a missing x2.

    Combines the working prior N(alpha0 + alpha1 x1, tau2) with the regression
    likelihood N(y; intercept + beta1 x1 + beta2 x2, sigma2). Works
    elementwise on arrays of rows.
    """
    b1, b2 = float(beta[0]), float(beta[1])
    prec = 1.0 / wp.tau2 + b2 * b2 / sigma2
    mean = (wp.mean(x1_i) / wp.tau2 + b2 * (np.asarray(y_i) - intercept - b1 * np.asarray(x1_i)) / sigma2) / prec
    return mean, 1.0 / prec


def draw_conditional(mean, variance, rng: RngStream, truncate_support: bool = False) -> np.ndarray:
    """Independent draws from N(mean, variance), one standard normal/uniform per row.

    With ``truncate_support`` each draw is restricted to ``[0, inf)`` by the
    inverse-CDF method, computed in log space for far-negative means.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    sd = np.sqrt(variance)
    if not truncate_support:
        return mean + sd * rng.standard_normal(mean.shape)
    u = rng.uniform(mean.shape)
    log_mass = log_ndtr(mean / sd)
    z = -ndtri_exp(np.log(u) + log_mass)
    return np.maximum(mean + sd * z, 0.0)


def impute_all(
    data: Dataset,
    beta_dense,
    sigma2: float,
    wp: WorkingParams,
    rng: RngStream,
    intercept: float = 0.0,
    truncate_support: bool = False,
) -> np.ndarray:
    """Draw every masked x2 from its full conditional, in row order."""
    idx = data.missing_index
    if idx.size == 0:
        return np.zeros(0)
    m, v = impute_full_conditional(data.x1[idx], data.y[idx], beta_dense, sigma2, wp, intercept)
    return draw_conditional(m, v, rng, truncate_support)
