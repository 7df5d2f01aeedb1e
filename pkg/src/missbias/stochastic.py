"""Seedable random streams and the distribution samplers built on them.

Every draw in the library flows through an :class:`RngStream`. A stream is
identified by ``(seed, stream_id)`` and backed by a Philox counter-based
generator whose 128-bit key is the concatenation of the two 64-bit words, so
distinct stream ids give disjoint, uncoupled sequences without any shared
state. Chains and replicates each get their own stream id.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidParameterError, NumericalError

_U64 = 2**64


class RngStream:
    """Single-owner random stream keyed by ``(seed, stream_id)``.

    Never share one instance between concurrent workers; create one stream
    per worker instead.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        seed, stream_id = int(seed), int(stream_id)
        if not (0 <= seed < _U64 and 0 <= stream_id < _U64):
            raise InvalidParameterError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = seed
        self.stream_id = stream_id
        self.generator = np.random.Generator(np.random.Philox(key=seed + (stream_id << 64)))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def spawn(self, stream_id: int) -> "RngStream":
        """Fresh stream with the same seed and a different id."""
        return RngStream(self.seed, stream_id)

    def uniform(self, size=None):
        """Uniform draws on the half-open interval (0, 1]."""
        return 1.0 - self.generator.random(size)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def standard_gamma(self, shape, size=None):
        # numpy uses Marsaglia-Tsang rejection (with the shape < 1 boost),
        # valid for every shape > 0.
        return self.generator.standard_gamma(shape, size)

    def choice(self, probs) -> int:
        """Index drawn from a discrete distribution by inverse CDF on one uniform."""
        cdf = np.cumsum(probs)
        u = self.generator.random() * cdf[-1]
        idx = int(np.searchsorted(cdf, u, side="right"))
        # Guard against u landing on the final cumulative value through rounding.
        return min(idx, len(cdf) - 1)


def _check_finite(*values):
    for v in values:
        if isinstance(v, float):
            if not math.isfinite(v):
                raise InvalidParameterError(f"non-finite parameter: {v!r}")
        elif not np.all(np.isfinite(v)):
            raise InvalidParameterError(f"non-finite parameter: {v!r}")


def sample_normal(mean, sd, rng: RngStream, size=None):
    """Draw from N(mean, sd**2). ``sd == 0`` returns ``mean`` exactly."""
    _check_finite(mean, sd)
    if np.any(np.asarray(sd) < 0):
        raise InvalidParameterError("sd must be >= 0")
    # sd * z is a signed zero when sd == 0, so the sum is exactly mean.
    out = mean + sd * rng.standard_normal(size)
    return float(out) if size is None else out


def exponential_from_uniform(u, rate):
    """Inverse-CDF transform ``-ln(u) / rate`` of a uniform on (0, 1]."""
    return -np.log(u) / rate


def sample_exponential(rate, rng: RngStream, size=None):
    """Exponential draw with mean ``1/rate`` from a single uniform per draw.

    ``rate`` may be an array, in which case one draw per entry is made.
    """
    _check_finite(rate)
    rate_arr = np.asarray(rate, dtype=float)
    if np.any(rate_arr <= 0):
        raise InvalidParameterError("rate must be > 0")
    if size is None and rate_arr.ndim > 0:
        size = rate_arr.shape
    out = exponential_from_uniform(rng.uniform(size), rate_arr)
    return float(out) if size is None else out


def sample_inverse_gamma(shape, scale, rng: RngStream, size=None):
    """Draw ``X`` with ``1/X ~ Gamma(shape, rate=scale)``."""
    _check_finite(shape, scale)
    if isinstance(shape, float) and isinstance(scale, float):
        ok = shape > 0 and scale > 0
    else:
        ok = np.all(np.asarray(shape) > 0) and np.all(np.asarray(scale) > 0)
    if not ok:
        raise InvalidParameterError("inverse-gamma shape and scale must be > 0")
    out = scale / rng.standard_gamma(shape, size)
    return float(out) if size is None else out


def mvn_factor(covariance) -> np.ndarray:
    """Lower factor ``L`` with ``L @ L.T == covariance`` for a PSD matrix.

    Cholesky is tried first; semidefinite input falls back to a symmetric
    eigendecomposition. Eigenvalues below ``-1e-10 * max(diag)`` are treated
    as a genuine failure.
    """
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    if cov.shape[0] != cov.shape[1]:
        raise InvalidParameterError(f"covariance must be square, got {cov.shape}")
    _check_finite(cov)
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
        raise NumericalError("covariance is not symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    tol = 1e-10 * max(float(np.max(np.diag(cov))), 0.0)
    w, v = np.linalg.eigh(cov)
    if w.size and w.min() < -tol:
        raise NumericalError(f"covariance is not positive semidefinite (min eigenvalue {w.min():.3g})")
    return v * np.sqrt(np.clip(w, 0.0, None))


def sample_mvn(mean, covariance, rng: RngStream, factor=None) -> np.ndarray:
    """Draw ``mean + L z`` with ``L`` a factor of ``covariance``.

    A precomputed ``factor`` may be passed to skip the decomposition.
    """
    mean = np.asarray(mean, dtype=float)
    if factor is None:
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise InvalidParameterError(
                f"dimension mismatch: mean {mean.shape}, covariance {cov.shape}"
            )
        factor = mvn_factor(cov)
    if mean.size == 0:
        return mean.copy()
    return mean + factor @ rng.standard_normal(mean.size)


def log_sum_exp(values) -> float:
    values = np.asarray(values, dtype=float)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return -math.inf
    m = finite.max()
    return float(m + np.log(np.sum(np.exp(finite - m))))
