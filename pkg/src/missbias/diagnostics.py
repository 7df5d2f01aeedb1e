"""Posterior summaries, convergence diagnostics and figure data export."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import DegenerateDensityError, InvalidInputError
from .gprior import enumerate_models

QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased (1/n) autocovariance at every lag, via FFT."""
    n = len(x)
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    return np.fft.irfft(f * np.conj(f), size)[:n] / n


def _as_chains(chains) -> np.ndarray:
    arrs = [np.asarray(c, dtype=float) for c in chains]
    if not arrs or min(len(a) for a in arrs) < 1:
        raise InvalidInputError("need at least one non-empty chain")
    n = min(len(a) for a in arrs)
    return np.stack([a[:n] for a in arrs])


def effective_sample_size(chains) -> float:
    """Multi-chain ESS with Geyer's initial positive sequence truncation.

    ``chains`` is a sequence of 1-D draws (one per chain; truncated to the
    shortest). Autocorrelations are combined across chains through the
    between/within variance estimate. Returns NaN for constant input.
    """
    x = _as_chains(chains)
    m, n = x.shape
    if n < 4:
        return float("nan")
    acov = np.stack([_autocovariance(c) for c in x])
    chain_var = acov[:, 0] * n / (n - 1.0)
    w = chain_var.mean()
    var_plus = w * (n - 1.0) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if not var_plus > 0:
        return float("nan")
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    tau = -1.0
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        tau += 2.0 * pair
    return float(m * n / tau)


def split_rhat(chains) -> float:
    """Split-R̂: each chain is halved (dropping a middle draw if odd) and the
    classic between/within potential scale reduction is taken over the halves.
    """
    x = _as_chains(chains)
    n = x.shape[1] // 2
    if n < 2:
        return float("nan")
    halves = np.concatenate([x[:, :n], x[:, -n:]])
    w = halves.var(axis=1, ddof=1).mean()
    b = n * halves.mean(axis=1).var(ddof=1)
    if not w > 0:
        return float("nan")
    var_plus = (n - 1.0) / n * w + b / n
    return float(math.sqrt(var_plus / w))


@dataclass
class ParamStats:
    mean: float
    variance: float
    sd: float
    quantiles: dict
    ess: float
    rhat: float

    def to_json(self) -> dict:
        return {
            "mean": self.mean,
            "variance": self.variance,
            "sd": self.sd,
            "quantiles": self.quantiles,
            "ess": _nan_to_none(self.ess),
            "rhat": _nan_to_none(self.rhat),
        }


def _nan_to_none(v):
    return None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v


def param_stats(chains) -> ParamStats:
    """Pooled moments plus ESS and split-R̂ for one scalar parameter.

    The variance uses the 1/(N-1) normalisation.
    """
    x = _as_chains(chains)
    pooled = np.concatenate(list(np.asarray(c, dtype=float) for c in chains))
    if pooled.size == 0:
        raise InvalidInputError("empty chain")
    var = float(pooled.var(ddof=1)) if pooled.size > 1 else 0.0
    q = np.quantile(pooled, QUANTILES)
    return ParamStats(
        mean=float(pooled.mean()),
        variance=var,
        sd=math.sqrt(var),
        quantiles={f"{100 * p:g}%": float(v) for p, v in zip(QUANTILES, q)},
        ess=effective_sample_size(x),
        rhat=split_rhat(x),
    )


@dataclass
class Summary:
    params: dict
    model_frequencies: np.ndarray
    model_labels: list
    imputation_rmse: float | None = None
    n_draws: int = 0
    n_chains: int = 0
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> ParamStats:
        return self.params[name]

    def to_json(self) -> dict:
        return {
            "parameters": {k: v.to_json() for k, v in self.params.items()},
            "model_frequencies": {
                lab: float(f) for lab, f in zip(self.model_labels, self.model_frequencies)
            },
            "imputation_rmse": _nan_to_none(self.imputation_rmse),
            "n_draws": self.n_draws,
            "n_chains": self.n_chains,
        }


def summarize(chains, data=None) -> Summary:
    """Pooled summary of one or more chains of the same analysis.

    ``chains`` may be a single :class:`~missbias.sampler.Chain`. If ``data``
    with the masked truth is given, ``imputation_rmse`` compares the
    posterior-mean imputations against the true masked x2 values.
    """
    if not isinstance(chains, (list, tuple)):
        chains = [chains]
    if not chains or any(len(c) == 0 for c in chains):
        raise InvalidInputError("summarize needs chains with at least one stored state")
    names = chains[0].parameter_names()
    params = {name: param_stats([c.values(name) for c in chains]) for name in names}
    models = enumerate_models(chains[0].p)
    masks = np.concatenate([c.model_mask for c in chains])
    counts = np.array([np.count_nonzero(masks == m.bitmask) for m in models], dtype=float)
    rmse = None
    if data is not None and data.has_truth and chains[0].imputed_mean.size:
        idx = chains[0].missing_index
        weights = np.array([len(c) for c in chains], dtype=float)
        imputed = np.average(np.stack([c.imputed_mean for c in chains]), axis=0, weights=weights)
        rmse = float(np.sqrt(np.mean((imputed - data.x2[idx]) ** 2)))
    return Summary(
        params=params,
        model_frequencies=counts / counts.sum(),
        model_labels=[m.label for m in models],
        imputation_rmse=rmse,
        n_draws=int(masks.size),
        n_chains=len(chains),
    )


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float)
    return 1.06 * float(x.std(ddof=1)) * len(x) ** (-0.2)


def density_1d(samples, grid: int = 512, bandwidth="auto"):
    """Gaussian-kernel density on ``grid`` equally spaced points.

    The grid spans ``[min - 3h, max + 3h]``. Samples are linearly binned onto
    an internal grid with spacing at most ``h / 10`` and convolved with the
    kernel, then interpolated onto the output grid.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise InvalidInputError("density needs at least 2 samples")
    if not x.std() > 0:
        raise DegenerateDensityError("samples have zero variance")
    h = silverman_bandwidth(x) if bandwidth == "auto" else float(bandwidth)
    if not h > 0:
        raise InvalidInputError("bandwidth must be > 0")
    lo, hi = x.min() - 3 * h, x.max() + 3 * h
    points = np.linspace(lo, hi, int(grid))
    fine = int(min(max(grid, math.ceil((hi - lo) / (h / 10.0)) + 1), 1 << 20))
    delta = (hi - lo) / (fine - 1)
    pos = (x - lo) / delta
    left = np.clip(np.floor(pos).astype(np.int64), 0, fine - 2)
    frac = pos - left
    counts = np.bincount(left, 1.0 - frac, fine) + np.bincount(left + 1, frac, fine)
    half = int(math.ceil(4.0 * h / delta)) + 1
    offsets = np.arange(-half, half + 1) * delta
    kernel = np.exp(-0.5 * (offsets / h) ** 2) / (h * math.sqrt(2 * math.pi))
    dens = fftconvolve(counts, kernel, mode="same") / x.size
    dens = np.clip(dens, 0.0, None)
    fine_points = lo + delta * np.arange(fine)
    return points, np.interp(points, fine_points, dens)


def trace_export(chain, name: str):
    """``(iterations, values)`` exactly as stored for one parameter."""
    return chain.iteration.copy(), np.asarray(chain.values(name)).copy()


def write_pairs_csv(path, header, xs, ys) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for a, b in zip(xs, ys):
            w.writerow([repr(a.item() if hasattr(a, "item") else a), repr(float(b))])


def read_pairs_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [(float(a), float(b)) for a, b in reader]
    arr = np.array(rows, dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def write_trace_csv(chains, name: str, path) -> None:
    """``chain,iter,value`` rows for every chain."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chain", "iter", name])
        for c in chains:
            it, v = trace_export(c, name)
            for a, b in zip(it, v):
                w.writerow([c.chain_id, int(a), repr(float(b))])


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
