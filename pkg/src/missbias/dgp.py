"""True data-generating process and the censoring mechanisms.

The true model is

    x1 ~ N(0, 1)
    x2 | x1 ~ Exponential with scale e^{-x1}   (``exp_param="mean"``)
                          or rate  e^{-x1}     (``exp_param="rate"``)
    y = beta1 * x1 + beta2 * x2 + eps,  eps ~ N(0, sigma2)

The censoring mechanisms mask x2 as a deterministic function of (x1, y), so
both are MAR.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np

from .errors import InvalidInputError, InvalidParameterError
from .stochastic import RngStream, sample_exponential

EXP_PARAMS = ("mean", "rate")


@dataclass(frozen=True)
class Truth:
    beta: tuple = (0.0, 1.0)
    sigma2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if len(self.beta) != 2:
            raise InvalidParameterError("truth.beta must have length 2")
        if not (self.sigma2 >= 0 and np.isfinite(self.sigma2)):
            raise InvalidParameterError("truth.sigma2 must be finite and >= 0")


@dataclass(eq=False)
class Dataset:
    """Covariates, response and the x2 observation mask.

    ``x2`` keeps the true value even where it is masked, so simulation
    diagnostics can score imputations. Estimators must read x2 only through
    :meth:`observed_x2`.
    """

    x1: np.ndarray
    x2: np.ndarray
    x2_observed: np.ndarray
    y: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        self.x1 = np.asarray(self.x1, dtype=float)
        self.x2 = np.asarray(self.x2, dtype=float)
        self.x2_observed = np.asarray(self.x2_observed, dtype=bool)
        self.y = np.asarray(self.y, dtype=float)
        self.n = len(self.x1)
        if self.n < 1:
            raise InvalidParameterError("dataset must have at least one row")
        if not (len(self.x2) == len(self.x2_observed) == len(self.y) == self.n):
            raise InvalidInputError("x1, x2, x2_observed and y must have equal length")
        for name in ("x1", "y"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidInputError(f"{name} contains non-finite values")
        if not np.all(np.isfinite(self.x2[self.x2_observed])):
            raise InvalidInputError("observed x2 values must be finite")

    def observed_x2(self) -> np.ndarray:
        """x2 with masked entries replaced by NaN."""
        return np.where(self.x2_observed, self.x2, np.nan)

    @property
    def missing_index(self) -> np.ndarray:
        return np.flatnonzero(~self.x2_observed)

    @property
    def has_truth(self) -> bool:
        return bool(np.all(np.isfinite(self.x2)))

    def fingerprint(self) -> int:
        """64-bit content hash of the observed view (truth under the mask excluded)."""
        h = hashlib.blake2b(digest_size=8)
        h.update(np.ascontiguousarray(self.x1).tobytes())
        h.update(np.ascontiguousarray(np.where(self.x2_observed, self.x2, 0.0)).tobytes())
        h.update(np.ascontiguousarray(self.x2_observed).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        return int.from_bytes(h.digest(), "little")


# -- mechanisms -------------------------------------------------------------


@dataclass(frozen=True)
class Threshold:
    """Censor x2 iff ``x1 < cutoff``."""

    cutoff: float = 0.0

    def censored(self, x1, y) -> np.ndarray:
        return np.asarray(x1) < self.cutoff


@dataclass(frozen=True)
class Band:
    """Censor x2 iff ``|x1 - y| < width``.

    With ``invert=True`` the complement is censored instead (x2 is kept only
    inside the band). The boundary ``|x1 - y| == width`` is observed in the
    default orientation and censored when inverted.
    """

    width: float = 0.2
    invert: bool = False

    def __post_init__(self):
        if not self.width > 0:
            raise InvalidParameterError("band width must be > 0")

    def censored(self, x1, y) -> np.ndarray:
        inside = np.abs(np.asarray(x1) - np.asarray(y)) < self.width
        return ~inside if self.invert else inside


@dataclass(frozen=True)
class NoCensoring:
    def censored(self, x1, y) -> np.ndarray:
        return np.zeros(np.shape(x1), dtype=bool)


Mechanism = Union[Threshold, Band, NoCensoring]


# -- generation -------------------------------------------------------------

CovariateGenerator = Callable[[int, RngStream], "tuple[np.ndarray, np.ndarray]"]


def draw_covariates(n: int, rng: RngStream, exp_param: str = "mean"):
    """Draw (x1, x2) from the true covariate law."""
    if exp_param not in EXP_PARAMS:
        raise InvalidParameterError(f"exp_param must be one of {EXP_PARAMS}")
    x1 = rng.standard_normal(n)
    rate = np.exp(x1) if exp_param == "mean" else np.exp(-x1)
    x2 = sample_exponential(rate, rng)
    return x1, x2


def generate_complete(
    n: int,
    truth: Truth,
    rng: RngStream,
    exp_param: str = "mean",
    covariates: CovariateGenerator | None = None,
) -> Dataset:
    """Draw a fully observed dataset of ``n`` rows.

    Draw order is fixed: all x1, then all x2 (one uniform each), then all
    noise terms. ``covariates`` replaces the default (x1, x2) law.
    """
    if int(n) < 1:
        raise InvalidParameterError("n must be >= 1")
    n = int(n)
    if covariates is None:
        x1, x2 = draw_covariates(n, rng, exp_param)
    else:
        x1, x2 = (np.asarray(a, dtype=float) for a in covariates(n, rng))
    eps = rng.standard_normal(n) * np.sqrt(truth.sigma2)
    y = truth.beta[0] * x1 + truth.beta[1] * x2 + eps
    return Dataset(x1=x1, x2=x2, x2_observed=np.ones(n, dtype=bool), y=y)


def apply_censoring(data: Dataset, mech: Mechanism) -> Dataset:
    """Copy of ``data`` with x2 additionally masked where ``mech`` fires.

    x1, x2 and y are carried over unchanged.
    """
    censored = mech.censored(data.x1, data.y)
    return replace(
        data,
        x1=data.x1.copy(),
        x2=data.x2.copy(),
        y=data.y.copy(),
        x2_observed=data.x2_observed & ~censored,
    )


def missing_fraction(data: Dataset) -> float:
    return float(np.count_nonzero(~data.x2_observed)) / data.n


# -- CSV --------------------------------------------------------------------

CSV_HEADER = ["x1", "x2", "x2_observed", "y"]


def write_csv(data: Dataset, path, observed_view: bool = True) -> None:
    """Write ``x1,x2,x2_observed,y``; masked x2 is an empty field in the observed view."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for a, b, o, c in zip(data.x1, data.x2, data.x2_observed, data.y):
            x2 = repr(float(b)) if (o or not observed_view) else ""
            w.writerow([repr(float(a)), x2, int(o), repr(float(c))])


def read_csv(path) -> Dataset:
    """Inverse of :func:`write_csv`. Empty x2 fields load as NaN."""
    x1, x2, obs, y = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise InvalidInputError(f"expected header {','.join(CSV_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise InvalidInputError(f"line {lineno}: expected 4 fields, got {len(row)}")
            try:
                x1.append(float(row[0]))
                x2.append(float(row[1]) if row[1] != "" else np.nan)
                if row[2] not in ("0", "1"):
                    raise ValueError(f"x2_observed must be 0 or 1, got {row[2]!r}")
                obs.append(row[2] == "1")
                y.append(float(row[3]))
            except ValueError as exc:
                raise InvalidInputError(f"line {lineno}: {exc}") from None
    return Dataset(x1=np.array(x1), x2=np.array(x2), x2_observed=np.array(obs), y=np.array(y))
