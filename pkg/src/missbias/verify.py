"""The oracle suite behind ``missbias verify``.

Each check compares a closed-form or sampled quantity with an independent
brute-force reference and reports the worst observed discrepancy against
its tolerance.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import gprior, imputation, oracle
from .dgp import Truth, generate_complete
from .diagnostics import effective_sample_size
from .errors import MissBiasError
from .gprior import enumerate_models
from .imputation import WorkingParams
from .sampler import FULL_MODEL, McmcConfig, run_chain
from .stochastic import RngStream

VERIFY_SEED = 20240611


@dataclass
class CheckResult:
    name: str
    observed: float
    tolerance: float
    passed: bool
    seconds: float = 0.0
    note: str = ""


def check_ml_quadrature(datasets: int = 20, n: int = 6, seed: int = VERIFY_SEED) -> CheckResult:
    """Closed-form log marginal likelihoods against tensor quadrature.

    The discrepancy is relative on the marginal likelihood itself,
    ``|exp(closed - quad) - 1|``, maximised over datasets and models.
    """
    rng = RngStream(seed, 1).generator
    worst = 0.0
    for _ in range(datasets):
        X = rng.standard_normal((n, 2))
        y = X @ rng.normal(0.0, 1.0, 2) + rng.standard_normal(n)
        g = float(rng.choice([1.0, float(n), 25.0]))
        for m in enumerate_models(2):
            closed = gprior.fit(m, X, y, g).log_ml
            quad = oracle.ml_quadrature(m.included, X, y, g)
            worst = max(worst, abs(math.expm1(closed - quad)))
    return CheckResult("g-prior marginal likelihood vs quadrature", worst, 1e-6, worst <= 1e-6)


def _conditional_params(rng):
    """Random parameters whose conditional sits well inside [-10, 10]."""
    while True:
        beta = rng.normal(0.0, 1.0, 2)
        sigma2 = rng.uniform(0.2, 1.0)
        wp = WorkingParams(tuple(rng.normal(0.0, 0.5, 2)), rng.uniform(0.2, 1.0))
        x1, y = rng.standard_normal(), rng.normal(0.0, 1.5)
        m, v = imputation.impute_full_conditional(x1, y, beta, sigma2, wp)
        if abs(m) + 9.0 * math.sqrt(v) < 10.0:
            return x1, y, beta, sigma2, wp, float(m), float(v)


def check_full_conditional(draws: int = 50, seed: int = VERIFY_SEED) -> CheckResult:
    """Gaussian full conditional against the grid-normalised product density.

    Sup-norm over a 10^4-point grid on [-10, 10]; the grid moments from
    :func:`oracle.conditional_grid_check` must also agree to 1e-6.
    """
    rng = RngStream(seed, 2).generator
    grid = np.linspace(-10.0, 10.0, 10_000)
    worst = 0.0
    worst_moment = 0.0
    for _ in range(draws):
        x1, y, beta, sigma2, wp, m, v = _conditional_params(rng)
        ref = oracle.conditional_density_grid(grid, x1, y, beta, sigma2, wp.alpha, wp.tau2)
        ours = np.exp(-0.5 * (grid - m) ** 2 / v) / math.sqrt(2 * math.pi * v)
        worst = max(worst, float(np.max(np.abs(ours - ref))))
        gm, gv = oracle.conditional_grid_check(x1, y, beta, sigma2, wp.alpha, wp.tau2)
        worst_moment = max(worst_moment, abs(gm - m), abs(gv - v))
    ok = worst <= 1e-8 and worst_moment <= 1e-6
    return CheckResult(
        "missing-x2 full conditional vs grid", worst, 1e-8, ok, note=f"moment delta {worst_moment:.2e}"
    )


def check_dgp_moments(n_mc: int = 1_000_000, seed: int = VERIFY_SEED) -> list:
    mean_x2, _, _ = oracle.dgp_moments(n_mc, mechanism="none", seed=seed)
    _, _, thr = oracle.dgp_moments(n_mc, mechanism="threshold", seed=seed)
    _, _, band = oracle.dgp_moments(n_mc, mechanism="band", seed=seed)
    d_mean = abs(mean_x2 - math.exp(0.5))
    d_thr = abs(thr - 0.5)
    d_band = abs(band - oracle.BAND_MISSING_RATE["mean"])
    return [
        CheckResult("DGP mean of x2 vs e^(1/2)", d_mean, 0.02, d_mean <= 0.02),
        CheckResult("threshold missing rate vs 1/2", d_thr, 0.005, d_thr <= 0.005),
        CheckResult("band missing rate vs recorded constant", d_band, 0.01, d_band <= 0.01),
    ]


def check_conjugacy(n: int = 200, iterations: int = 20000, seed: int = VERIFY_SEED) -> CheckResult:
    """Complete-data chain moments against the exact g-prior posterior.

    Reports the largest |chain mean - exact mean| in units of the
    ESS-adjusted Monte Carlo standard error, over beta1, beta2 and sigma2.
    """
    data = generate_complete(n, Truth(), RngStream(seed, 3))
    cfg = McmcConfig(iterations=iterations, burn_in=1000, chain_count=1, seed=seed)
    chain = run_chain(data, FULL_MODEL, cfg, RngStream(seed, 4))
    X = np.column_stack([data.x1, data.x2])
    post = gprior.fit(FULL_MODEL, X, data.y, cfg.g_for(n))
    mean, cov, s2_mean = gprior.posterior_mean_cov(post)
    # Var(sigma2) of InvGamma(n/2, S/2)
    a = post.n / 2.0
    s2_var = s2_mean**2 / (a - 2.0)
    targets = [
        (chain.beta[:, 0], mean[0], cov[0, 0]),
        (chain.beta[:, 1], mean[1], cov[1, 1]),
        (chain.sigma2, s2_mean, s2_var),
    ]
    worst = 0.0
    for draws, exact, var in targets:
        ess = effective_sample_size([draws])
        worst = max(worst, abs(draws.mean() - exact) / math.sqrt(var / ess))
    return CheckResult("complete-data chain vs exact posterior (SE units)", worst, 4.0, worst <= 4.0)


CHECKS = (check_ml_quadrature, check_full_conditional, check_dgp_moments, check_conjugacy)


def run_checks() -> list:
    """Run every check; an oracle that raises counts as a failure."""
    results = []
    for fn in CHECKS:
        t0 = time.perf_counter()
        try:
            out = fn()
        except MissBiasError as exc:
            out = CheckResult(fn.__name__, math.nan, math.nan, False, note=f"{type(exc).__name__}: {exc}")
        out = out if isinstance(out, list) else [out]
        dt = (time.perf_counter() - t0) / len(out)
        for r in out:
            r.seconds = dt
        results.extend(out)
    return results


def format_table(results: list) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  {'observed':>10}  {'tolerance':>9}  {'time':>6}  status"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        line = f"{r.name:<{width}}  {r.observed:>10.3e}  {r.tolerance:>9.1e}  {r.seconds:>5.1f}s  {status}"
        if r.note:
            line += f"  ({r.note})"
        lines.append(line)
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} checks passed")
    return "\n".join(lines)
