"""Zellner g-prior conjugate algebra for linear submodels.

For a submodel using columns ``X_g`` (k of them) the prior is

    beta | sigma2 ~ N(0, g * sigma2 * (X_g' X_g)^{-1}),   p(sigma2) ∝ 1 / sigma2

which gives, with ``bhat`` the least-squares fit and ``S = y'y - g/(1+g) bhat' X_g' y``,

    sigma2 | y        ~ InvGamma(n/2, S/2)
    beta | sigma2, y  ~ N(g/(1+g) bhat, sigma2 g/(1+g) (X_g' X_g)^{-1})
    log p(y)          = lgamma(n/2) - (n/2) log(pi) - (k/2) log(1+g) - (n/2) log(S)

With ``intercept=True`` an always-included intercept with a flat prior is
integrated out: X and y are centred, ``n`` becomes ``n - 1`` in the formulas
above and ``log p(y)`` gains ``-log(n)/2``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientDataError,
    InvalidParameterError,
    NoValidModelError,
    SingularDesignError,
)
from .stochastic import RngStream, log_sum_exp, sample_inverse_gamma, sample_mvn

MAX_ENUMERATED_P = 20
SINGULAR_RTOL = 1e-8


@dataclass(frozen=True, order=True)
class ModelIndex:
    """Sorted, 1-based column indices included in a submodel."""

    included: tuple = ()

    def __post_init__(self):
        inc = tuple(sorted(int(i) for i in self.included))
        if len(set(inc)) != len(inc) or any(i < 1 for i in inc):
            raise InvalidParameterError(f"invalid model indices {self.included!r}")
        object.__setattr__(self, "included", inc)

    @property
    def size(self) -> int:
        return len(self.included)

    @property
    def columns(self) -> list:
        """0-based column positions."""
        return [i - 1 for i in self.included]

    @property
    def bitmask(self) -> int:
        return sum(1 << (i - 1) for i in self.included)

    @classmethod
    def from_bitmask(cls, mask: int) -> "ModelIndex":
        mask = int(mask)
        if mask < 0:
            raise InvalidParameterError("model bitmask must be >= 0")
        return cls(tuple(j + 1 for j in range(mask.bit_length()) if mask >> j & 1))

    @property
    def label(self) -> str:
        return "(" + ", ".join(f"beta{i}" for i in self.included) + ")"

    def check_range(self, p: int) -> None:
        if self.included and self.included[-1] > p:
            raise InvalidParameterError(f"model {self.label} out of range for p={p}")


def enumerate_models(p: int) -> list:
    """All 2^p submodels, ordered by size then lexicographically."""
    if not 0 <= p <= MAX_ENUMERATED_P:
        raise InvalidParameterError(f"p must be in [0, {MAX_ENUMERATED_P}] for exact enumeration")
    return [
        ModelIndex(c) for k in range(p + 1) for c in itertools.combinations(range(1, p + 1), k)
    ]


@dataclass(frozen=True)
class CrossProducts:
    """Sufficient statistics of a (possibly centred) design."""

    xtx: np.ndarray
    xty: np.ndarray
    yty: float
    n: int
    intercept: bool = False
    x_mean: np.ndarray | None = None
    y_mean: float = 0.0

    @property
    def n_eff(self) -> int:
        return self.n - 1 if self.intercept else self.n

    @property
    def p(self) -> int:
        return self.xtx.shape[0]

    @classmethod
    def from_data(cls, X, y, intercept: bool = False) -> "CrossProducts":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != y.shape[0]:
            raise InvalidParameterError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if intercept:
            xm, ym = X.mean(axis=0), float(y.mean())
            Xc, yc = X - xm, y - ym
            return cls(Xc.T @ Xc, Xc.T @ yc, float(yc @ yc), len(y), True, xm, ym)
        return cls(X.T @ X, X.T @ y, float(y @ y), len(y))


@dataclass(frozen=True)
class GPriorPosterior:
    model: ModelIndex
    n: int
    g: float
    beta_hat: np.ndarray
    xtx_inverse: np.ndarray
    s_gamma: float
    log_ml: float
    intercept: bool = False
    x_mean: np.ndarray | None = None
    y_mean: float = 0.0
    n_total: int = 0

    @property
    def k(self) -> int:
        return self.model.size

    @property
    def shrink(self) -> float:
        return self.g / (1.0 + self.g)


def gram_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse of a Gram matrix, rejecting numerically singular designs.

    The design's singular values are the square roots of the Gram
    eigenvalues, so the guard is ``sqrt(lmin / lmax) > SINGULAR_RTOL``.
    """
    k = a.shape[0]
    if k == 1:
        if not a[0, 0] > 0:
            raise SingularDesignError("design column is identically zero")
        return np.array([[1.0 / a[0, 0]]])
    if k == 2:
        det = _det2_checked(a[0, 0], a[0, 1], a[1, 1])
        return np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]]) / det
    w = np.linalg.eigvalsh(a)
    if not (w[-1] > 0 and w[0] > 0 and math.sqrt(w[0] / w[-1]) > SINGULAR_RTOL):
        raise SingularDesignError("design columns are linearly dependent")
    c = np.linalg.cholesky(a)
    ci = np.linalg.solve(c, np.eye(k))
    return ci.T @ ci


def _det2_checked(a11: float, a12: float, a22: float) -> float:
    """Determinant of a symmetric 2x2 Gram matrix after the singularity guard."""
    det = a11 * a22 - a12 * a12
    disc = math.sqrt((a11 - a22) ** 2 + 4.0 * a12 * a12)
    lmax = 0.5 * (a11 + a22 + disc)
    # det / lmax is the accurate form of the small root.
    lmin = det / lmax if lmax > 0 else 0.0
    if not (lmax > 0 and lmin > 0 and math.sqrt(lmin / lmax) > SINGULAR_RTOL):
        raise SingularDesignError("design columns are linearly dependent")
    return det


def scatter_p2(mask: int, a11, a12, a22, b1, b2, yty, g):
    """Scalar fast path of :func:`fit_crossprod` for two candidate columns.

    ``mask`` is the model bitmask; ``a``/``b`` are the entries of X'X and
    X'y. Returns ``(S, beta_hat, inverse)`` with ``inverse`` packed as
    ``(i11,)`` or ``(i11, i12, i22)``.
    """
    shrink = g / (1.0 + g)
    if mask == 0:
        return yty, (), ()
    if mask == 1 or mask == 2:
        a, b = (a11, b1) if mask == 1 else (a22, b2)
        if not a > 0:
            raise SingularDesignError("design column is identically zero")
        bh = b / a
        return max(yty - shrink * bh * b, yty * 1e-300), (bh,), (1.0 / a,)
    det = _det2_checked(a11, a12, a22)
    i11, i12, i22 = a22 / det, -a12 / det, a11 / det
    bh1 = i11 * b1 + i12 * b2
    bh2 = i12 * b1 + i22 * b2
    return max(yty - shrink * (bh1 * b1 + bh2 * b2), yty * 1e-300), (bh1, bh2), (i11, i12, i22)


def fit_crossprod(model: ModelIndex, cp: CrossProducts, g: float) -> GPriorPosterior:
    """:func:`fit` from precomputed cross products."""
    if not (g > 0 and math.isfinite(g)):
        raise InvalidParameterError("g must be finite and > 0")
    model.check_range(cp.p)
    n, k = cp.n_eff, model.size
    if n <= k:
        raise InsufficientDataError(f"need more than {k} rows for model {model.label}, have {n}")
    if not cp.yty > 0:
        raise InsufficientDataError("response has zero scatter")
    cols = model.columns
    if k == 0:
        beta_hat = np.zeros(0)
        xtx_inv = np.zeros((0, 0))
        s = cp.yty
    else:
        if k == cp.p:
            xtx_inv = gram_inverse(cp.xtx)
            xty = cp.xty
        else:
            xtx_inv = gram_inverse(cp.xtx[np.ix_(cols, cols)])
            xty = cp.xty[cols]
        beta_hat = xtx_inv @ xty
        s = cp.yty - (g / (1.0 + g)) * float(beta_hat @ xty)
        # s >= yty / (1 + g) > 0 analytically; rounding can only bite for g near 1e16.
        s = max(s, cp.yty * 1e-300)
    log_ml = (
        math.lgamma(n / 2.0)
        - (n / 2.0) * math.log(math.pi)
        - (k / 2.0) * math.log1p(g)
        - (n / 2.0) * math.log(s)
    )
    if cp.intercept:
        log_ml -= 0.5 * math.log(cp.n)
    return GPriorPosterior(
        model=model,
        n=n,
        g=float(g),
        beta_hat=beta_hat,
        xtx_inverse=xtx_inv,
        s_gamma=float(s),
        log_ml=float(log_ml),
        intercept=cp.intercept,
        x_mean=None if cp.x_mean is None else cp.x_mean[cols],
        y_mean=cp.y_mean,
        n_total=cp.n,
    )


def fit(model: ModelIndex, X, y, g: float, intercept: bool = False) -> GPriorPosterior:
    """Conjugate g-prior posterior of one submodel.

    Raises
    ------
    SingularDesignError
        If the included columns are numerically dependent.
    InsufficientDataError
        If there are no more rows than included columns.
    """
    return fit_crossprod(model, CrossProducts.from_data(X, y, intercept), g)


def sample_beta_sigma(post: GPriorPosterior, rng: RngStream):
    """One exact joint draw ``(beta, sigma2)``; ``beta`` is empty for the null model."""
    sigma2 = sample_inverse_gamma(post.n / 2.0, post.s_gamma / 2.0, rng)
    if post.k == 0:
        return np.zeros(0), sigma2
    factor = math.sqrt(sigma2 * post.shrink) * _cholesky_small(post.xtx_inverse)
    beta = sample_mvn(post.shrink * post.beta_hat, None, rng, factor=factor)
    return beta, sigma2


def _cholesky_small(a: np.ndarray) -> np.ndarray:
    if a.shape[0] == 1:
        return np.sqrt(a)
    if a.shape[0] == 2:
        l00 = math.sqrt(a[0, 0])
        l10 = a[1, 0] / l00
        return np.array([[l00, 0.0], [l10, math.sqrt(a[1, 1] - l10 * l10)]])
    return np.linalg.cholesky(a)


def sample_intercept(post: GPriorPosterior, beta, sigma2: float, rng: RngStream) -> float:
    """Draw the flat-prior intercept given ``(beta, sigma2)``; zero when absent."""
    if not post.intercept:
        return 0.0
    centre = post.y_mean - (float(post.x_mean @ beta) if post.k else 0.0)
    return centre + math.sqrt(sigma2 / post.n_total) * float(rng.standard_normal())


def posterior_mean_cov(post: GPriorPosterior):
    """Exact posterior moments ``(E[beta], Cov(beta), E[sigma2])``."""
    if post.n <= post.k + 2:
        raise InsufficientDataError("posterior moments need n > k + 2")
    sigma2_mean = post.s_gamma / (post.n - 2)
    mean = post.shrink * post.beta_hat
    cov = sigma2_mean * post.shrink * post.xtx_inverse
    return mean, cov, sigma2_mean


@dataclass(frozen=True)
class ModelPosterior:
    models: list
    log_ml: np.ndarray
    prior: np.ndarray
    posterior: np.ndarray
    valid: np.ndarray

    def probability(self, model: ModelIndex) -> float:
        return float(self.posterior[self.models.index(model)])


def check_prior(prior, n_models: int) -> np.ndarray:
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (n_models,):
        raise InvalidParameterError(f"model prior must have length {n_models}")
    if np.any(prior < 0) or not np.all(np.isfinite(prior)):
        raise InvalidParameterError("model prior must be nonnegative and finite")
    if abs(prior.sum() - 1.0) > 1e-10:
        raise InvalidParameterError(f"model prior sums to {prior.sum()!r}, not 1")
    return prior


def model_posterior_crossprod(cp: CrossProducts, g: float, prior, models=None):
    """:func:`model_posterior` from cross products; also returns the per-model fits."""
    models = enumerate_models(cp.p) if models is None else models
    prior = check_prior(prior, len(models))
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior)
    return _model_posterior(cp, g, prior, log_prior, models)


def _model_posterior(cp, g, prior, log_prior, models):
    log_ml = np.full(len(models), -np.inf)
    valid = np.zeros(len(models), dtype=bool)
    fits = [None] * len(models)
    for j, m in enumerate(models):
        try:
            fits[j] = fit_crossprod(m, cp, g)
        except (SingularDesignError, InsufficientDataError):
            continue
        log_ml[j] = fits[j].log_ml
        valid[j] = True
    if not valid.any():
        raise NoValidModelError("every submodel is rank-deficient or underdetermined")
    log_w = np.where(valid & (prior > 0), log_prior + log_ml, -np.inf)
    if not np.isfinite(log_w).any():
        raise NoValidModelError("prior puts no mass on any valid submodel")
    post = np.exp(log_w - log_sum_exp(log_w))
    post /= post.sum()
    return ModelPosterior(models, log_ml, prior, post, valid), fits


def model_posterior(X, y, g: float, prior, intercept: bool = False) -> ModelPosterior:
    """Posterior over all 2^p submodels under a given model prior."""
    cp = CrossProducts.from_data(X, y, intercept)
    return model_posterior_crossprod(cp, g, prior)[0]
