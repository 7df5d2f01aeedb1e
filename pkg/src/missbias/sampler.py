"""Gibbs data-augmentation chains for the fixed-model and selection analyses.

One sweep uses a fixed scan order:

1. working parameters (alpha, tau2) given the completed x2 column;
2. every masked x2 from its full conditional given (beta, sigma2, alpha, tau2);
3. (selection only) the model index from the enumerated model posterior of
   the completed design, with beta and sigma2 integrated out;
4. (beta, sigma2) from the g-prior posterior of the current model.

Excluded coefficients enter step 2 as literal zeros.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .dgp import Dataset
from .errors import (
    DegenerateScaleError,
    InsufficientDataError,
    InvalidInputError,
    InvalidParameterError,
    NoValidModelError,
    SingularDesignError,
)
from .gprior import (
    CrossProducts,
    ModelIndex,
    check_prior,
    enumerate_models,
    fit_crossprod,
    sample_beta_sigma,
    sample_intercept,
    scatter_p2,
)
from .imputation import WorkingParams, WorkingRegression, draw_conditional, impute_full_conditional
from .stochastic import RngStream, sample_inverse_gamma

log = logging.getLogger(__name__)

P = 2
SELECT = "select"
Mode = Union[ModelIndex, str]
FULL_MODEL = ModelIndex((1, 2))


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 20000
    burn_in: int = 2000
    thin: int = 1
    g_value: Union[float, str] = "n"
    seed: int = 0
    chain_count: int = 4
    intercept: bool = False
    truncate_support: bool = False
    store_imputed: bool = False

    def __post_init__(self):
        if self.iterations < 1 or self.burn_in < 0 or self.burn_in >= self.iterations:
            raise InvalidParameterError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise InvalidParameterError("thin must be >= 1")
        if self.chain_count < 1:
            raise InvalidParameterError("chain_count must be >= 1")
        if isinstance(self.g_value, str):
            if self.g_value != "n":
                raise InvalidParameterError('g_value must be a positive number or "n"')
        elif not (self.g_value > 0 and math.isfinite(self.g_value)):
            raise InvalidParameterError("g_value must be finite and > 0")

    def g_for(self, n: int) -> float:
        return float(n) if self.g_value == "n" else float(self.g_value)

    @property
    def stored_length(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class ChainState:
    beta_dense: np.ndarray
    sigma2: float
    model: ModelIndex
    working: WorkingParams
    imputed_x2: np.ndarray
    intercept: float = 0.0


@dataclass
class Chain:
    """Stored post-burn-in, thinned draws in columnar form.

    ``imputed_mean`` is the running average of the imputed x2 vector over the
    stored draws; the full per-draw imputations are kept only when
    ``config.store_imputed`` is set.
    """

    config: McmcConfig
    dataset_fingerprint: int
    iteration: np.ndarray
    model_mask: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray
    alpha: np.ndarray
    tau2: np.ndarray
    intercept: np.ndarray | None = None
    missing_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    imputed_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    imputed: np.ndarray | None = None
    chain_id: int = 0

    def __len__(self) -> int:
        return len(self.iteration)

    @property
    def p(self) -> int:
        return self.beta.shape[1]

    def state(self, i: int) -> ChainState:
        return ChainState(
            beta_dense=self.beta[i].copy(),
            sigma2=float(self.sigma2[i]),
            model=ModelIndex.from_bitmask(int(self.model_mask[i])),
            working=WorkingParams(tuple(self.alpha[i]), float(self.tau2[i])),
            imputed_x2=self.imputed[i].copy() if self.imputed is not None else np.zeros(0),
            intercept=0.0 if self.intercept is None else float(self.intercept[i]),
        )

    @property
    def states(self) -> list:
        return [self.state(i) for i in range(len(self))]

    def parameter_names(self) -> list:
        names = [f"beta{j + 1}" for j in range(self.p)] + ["sigma2", "alpha0", "alpha1", "tau2"]
        if self.intercept is not None:
            names.append("intercept")
        return names

    def values(self, name: str) -> np.ndarray:
        """Stored sequence of one scalar parameter (or ``model`` bitmasks)."""
        if name == "model":
            return self.model_mask
        if name.startswith("beta") and name[4:].isdigit():
            j = int(name[4:])
            if 1 <= j <= self.p:
                return self.beta[:, j - 1]
        simple = {"sigma2": self.sigma2, "tau2": self.tau2, "alpha0": self.alpha[:, 0], "alpha1": self.alpha[:, 1]}
        if name in simple:
            return simple[name]
        if name == "intercept" and self.intercept is not None:
            return self.intercept
        raise InvalidInputError(f"unknown parameter {name!r}; have {self.parameter_names()}")


class _Gibbs:
    """Sweep engine bound to one dataset.

    The sweep works on scalar sufficient statistics of the completed x2
    column (its sum and its products with x1, x2 and y), split into a fixed
    observed part and the part contributed by the current imputations. The
    arithmetic is the same as composing :mod:`imputation` and :mod:`gprior`
    step by step; ``tests/test_sampler.py`` checks the two agree.
    """

    def __init__(self, data: Dataset, cfg: McmcConfig, mode: Mode, prior=None):
        self.cfg = cfg
        self.n = n = data.n
        self.x1 = data.x1
        self.y = data.y
        self.miss = data.missing_index
        self.x1m = self.x1[self.miss]
        self.ym = self.y[self.miss]
        x2_obs = data.observed_x2()
        self.models = enumerate_models(P)
        self.masks = [m.bitmask for m in self.models]
        self.sizes = [m.size for m in self.models]
        if mode == SELECT:
            self.fixed = None
            if prior is None:
                prior = np.full(len(self.models), 1.0 / len(self.models))
            self.prior = check_prior(prior, len(self.models))
            self.log_prior = [math.log(v) if v > 0 else -math.inf for v in self.prior]
        elif isinstance(mode, ModelIndex):
            mode.check_range(P)
            self.fixed = mode
            self.fixed_pos = self.masks.index(mode.bitmask)
            self.prior = None
        else:
            raise InvalidParameterError(f"mode must be a ModelIndex or {SELECT!r}")
        obs = np.isfinite(x2_obs)
        self.obs = obs
        self.n_obs = int(obs.sum())
        if self.n_obs < 4:
            raise InsufficientDataError(f"need at least 4 complete cases, have {self.n_obs}")
        self.x2_obs = x2_obs[obs]
        self.x1_obs = self.x1[obs]
        self.working = WorkingRegression(self.x1)
        gi = self.working.gram_inverse
        self.gi = (float(gi[0, 0]), float(gi[0, 1]), float(gi[1, 1]))
        wl = self.working._factor
        self.wl = (float(wl[0, 0]), float(wl[1, 0]), float(wl[1, 1]))
        self.g = cfg.g_for(n)
        self.shrink = self.g / (1.0 + self.g)
        n_eff = n - 1 if cfg.intercept else n
        self.n_eff = n_eff
        self.log_ml_const = math.lgamma(n_eff / 2.0) - (n_eff / 2.0) * math.log(math.pi)
        if cfg.intercept:
            self.log_ml_const -= 0.5 * math.log(n)
        self.log1pg = math.log1p(self.g)
        self.sum_x1 = float(self.x1.sum())
        self.sum_y = float(self.y.sum())
        self.x1x1 = float(self.x1 @ self.x1)
        self.x1y = float(self.x1 @ self.y)
        self.yty = float(self.y @ self.y)
        xo, x1o, yo = self.x2_obs, self.x1_obs, self.y[obs]
        self.obs_stats = (float(xo.sum()), float(x1o @ xo), float(xo @ xo), float(xo @ yo))
        self.imputed = np.zeros(self.miss.size)
        self.stats = self.obs_stats

    # -- sufficient statistics ------------------------------------------------

    def set_imputed(self, values) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape != self.miss.shape:
            raise InvalidInputError("state imputations do not match the dataset's masked rows")
        self.imputed = values
        s, t, q, u = self.obs_stats
        if values.size:
            s += float(values.sum())
            t += float(self.x1m @ values)
            q += float(values @ values)
            u += float(values @ self.ym)
        self.stats = (s, t, q, u)

    def completed_x2(self) -> np.ndarray:
        x2 = np.empty(self.n)
        x2[self.obs] = self.x2_obs
        x2[self.miss] = self.imputed
        return x2

    def crossprod(self) -> CrossProducts:
        s, t, q, u = self.stats
        xtx = np.array([[self.x1x1, t], [t, q]])
        xty = np.array([self.x1y, u])
        if not self.cfg.intercept:
            return CrossProducts(xtx, xty, self.yty, self.n)
        n = self.n
        xm = np.array([self.sum_x1, s]) / n
        ym = self.sum_y / n
        return CrossProducts(
            xtx - n * np.outer(xm, xm), xty - n * xm * ym, self.yty - n * ym * ym, n, True, xm, ym
        )

    # -- blocks --------------------------------------------------------------

    def initial(self, rng: RngStream) -> ChainState:
        cc = WorkingRegression(self.x1_obs)
        alpha_hat, rss = cc.least_squares(self.x2_obs)
        self.set_imputed(alpha_hat[0] + alpha_hat[1] * self.x1m)
        tau2 = rss / (cc.n - 2) if rss > 0 else 1.0
        model = self.fixed if self.fixed is not None else FULL_MODEL
        post = fit_crossprod(model, self.crossprod(), self.g)
        beta, sigma2 = sample_beta_sigma(post, rng)
        icpt = sample_intercept(post, beta, sigma2, rng)
        dense = np.zeros(P)
        dense[model.columns] = beta
        return ChainState(dense, sigma2, model, WorkingParams(tuple(alpha_hat), tau2), self.imputed.copy(), icpt)

    def _working(self, rng: RngStream) -> WorkingParams:
        s, t, q, _ = self.stats
        g00, g01, g11 = self.gi
        a0 = g00 * s + g01 * t
        a1 = g01 * s + g11 * t
        rss = q - a0 * s - a1 * t
        if not rss > 1e-12 * max(q, 1.0):
            # The normal-equation form loses digits near collapse; recompute directly.
            _, rss = self.working.least_squares(self.completed_x2())
            if not rss > 1e-24 * max(q, 1.0):
                raise DegenerateScaleError(
                    "x2 is exactly affine in x1; the tau2 draw is undefined (collapsed imputation state)"
                )
        tau2 = sample_inverse_gamma((self.n - 2) / 2.0, rss / 2.0, rng)
        z = rng.standard_normal(2)
        sd = math.sqrt(tau2)
        l00, l10, l11 = self.wl
        return WorkingParams._trusted((a0 + sd * l00 * z[0], a1 + sd * (l10 * z[0] + l11 * z[1])), tau2)

    def _centred(self):
        s, t, q, u = self.stats
        if not self.cfg.intercept:
            return self.x1x1, t, q, self.x1y, u, self.yty
        n = self.n
        m1, m2, my = self.sum_x1 / n, s / n, self.sum_y / n
        return (
            self.x1x1 - n * m1 * m1,
            t - n * m1 * m2,
            q - n * m2 * m2,
            self.x1y - n * m1 * my,
            u - n * m2 * my,
            self.yty - n * my * my,
        )

    def _coefficients(self, rng: RngStream):
        a11, a12, a22, b1, b2, yty = self._centred()
        if self.fixed is not None:
            j = self.fixed_pos
            scat, bh, inv = scatter_p2(self.masks[j], a11, a12, a22, b1, b2, yty, self.g)
        else:
            fits = []
            log_w = []
            for mask, size, lp in zip(self.masks, self.sizes, self.log_prior):
                fit = None
                if lp > -math.inf:
                    try:
                        fit = scatter_p2(mask, a11, a12, a22, b1, b2, yty, self.g)
                    except SingularDesignError:
                        pass
                fits.append(fit)
                if fit is None:
                    log_w.append(-math.inf)
                else:
                    log_w.append(lp + self.log_ml_const - 0.5 * size * self.log1pg - 0.5 * self.n_eff * math.log(fit[0]))
            top = max(log_w)
            if top == -math.inf:
                raise NoValidModelError("no submodel with positive prior mass is estimable")
            w = [math.exp(v - top) for v in log_w]
            j = rng.choice(np.array(w) / sum(w))
            scat, bh, inv = fits[j]
        mask = self.masks[j]
        sigma2 = sample_inverse_gamma(self.n_eff / 2.0, scat / 2.0, rng)
        dense = np.zeros(P)
        sh = self.shrink
        if len(bh) == 1:
            z = rng.standard_normal(1)
            dense[0 if mask == 1 else 1] = sh * bh[0] + math.sqrt(sigma2 * sh * inv[0]) * z[0]
        elif len(bh) == 2:
            z = rng.standard_normal(2)
            c = math.sqrt(sigma2 * sh)
            l00 = math.sqrt(inv[0])
            l10 = inv[1] / l00
            l11 = math.sqrt(inv[2] - l10 * l10)
            dense[0] = sh * bh[0] + c * l00 * z[0]
            dense[1] = sh * bh[1] + c * (l10 * z[0] + l11 * z[1])
        icpt = 0.0
        if self.cfg.intercept:
            n = self.n
            centre = (self.sum_y - self.sum_x1 * dense[0] - self.stats[0] * dense[1]) / n
            icpt = centre + math.sqrt(sigma2 / n) * float(rng.standard_normal())
        return dense, sigma2, self.models[j], icpt

    def step(self, state: ChainState, rng: RngStream) -> ChainState:
        wp = self._working(rng)
        if self.miss.size:
            m, v = impute_full_conditional(self.x1m, self.ym, state.beta_dense, state.sigma2, wp, state.intercept)
            self.set_imputed(draw_conditional(m, v, rng, self.cfg.truncate_support))
        dense, sigma2, model, icpt = self._coefficients(rng)
        return ChainState(dense, sigma2, model, wp, self.imputed, icpt)


def init_state(data: Dataset, mode: Mode, rng: RngStream, cfg: McmcConfig | None = None) -> ChainState:
    """Starting state: complete-case regression imputations plus one g-prior draw.

    Selection mode starts at the full model.
    """
    return _Gibbs(data, cfg or McmcConfig(), mode).initial(rng)


def step_fixed(state: ChainState, data: Dataset, model: ModelIndex, cfg: McmcConfig, rng: RngStream) -> ChainState:
    """One systematic-scan sweep with the model held fixed."""
    k = _Gibbs(data, cfg, model)
    k.set_imputed(state.imputed_x2)
    return k.step(state, rng)


def step_select(state: ChainState, data: Dataset, prior_models, cfg: McmcConfig, rng: RngStream) -> ChainState:
    """One sweep that also redraws the model index."""
    k = _Gibbs(data, cfg, SELECT, prior_models)
    k.set_imputed(state.imputed_x2)
    return k.step(state, rng)


ProgressFn = Callable[[int, int, int], None]


def run_chain(
    data: Dataset,
    mode: Mode,
    cfg: McmcConfig,
    rng: RngStream,
    prior=None,
    progress: ProgressFn | None = None,
    chain_id: int = 0,
) -> Chain:
    """Initialise and iterate one chain, keeping post-burn-in thinned draws.

    Sweeps are numbered from 1; sweep ``s`` is stored when ``s > burn_in``
    and ``(s - burn_in) % thin == 0``. ``progress(chain_id, s, iterations)``
    is called every 1000 sweeps.
    """
    k = _Gibbs(data, cfg, mode, prior)
    state = k.initial(rng)
    size = cfg.stored_length
    m = k.miss.size
    iteration = np.zeros(size, dtype=np.int64)
    model_mask = np.zeros(size, dtype=np.int64)
    beta = np.zeros((size, P))
    sigma2 = np.zeros(size)
    alpha = np.zeros((size, 2))
    tau2 = np.zeros(size)
    intercept = np.zeros(size) if cfg.intercept else None
    imputed = np.zeros((size, m)) if cfg.store_imputed else None
    imputed_sum = np.zeros(m)
    row = 0
    for s in range(1, cfg.iterations + 1):
        state = k.step(state, rng)
        if s > cfg.burn_in and (s - cfg.burn_in) % cfg.thin == 0:
            iteration[row] = s
            model_mask[row] = state.model.bitmask
            beta[row] = state.beta_dense
            sigma2[row] = state.sigma2
            alpha[row] = state.working.alpha
            tau2[row] = state.working.tau2
            if intercept is not None:
                intercept[row] = state.intercept
            if imputed is not None:
                imputed[row] = state.imputed_x2
            imputed_sum += state.imputed_x2
            row += 1
        if progress is not None and s % 1000 == 0:
            progress(chain_id, s, cfg.iterations)
    return Chain(
        config=cfg,
        dataset_fingerprint=data.fingerprint(),
        iteration=iteration,
        model_mask=model_mask,
        beta=beta,
        sigma2=sigma2,
        alpha=alpha,
        tau2=tau2,
        intercept=intercept,
        missing_index=k.miss.copy(),
        imputed_mean=imputed_sum / max(size, 1),
        imputed=imputed,
        chain_id=chain_id,
    )


def _run_one(args):
    data, mode, cfg, prior, stream_id, chain_id = args
    return run_chain(data, mode, cfg, RngStream(cfg.seed, stream_id), prior, chain_id=chain_id)


def run_chains(
    data: Dataset,
    mode: Mode,
    cfg: McmcConfig,
    prior=None,
    jobs: int = 1,
    stream_base: int = 1,
) -> list:
    """Run ``cfg.chain_count`` chains on streams ``stream_base + c``.

    Chains are returned in chain-id order whatever order workers finish in.
    """
    tasks = [(data, mode, cfg, prior, stream_base + c, c) for c in range(cfg.chain_count)]
    if jobs <= 1 or len(tasks) == 1:
        return [_run_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(_run_one, tasks))


# -- chain CSV --------------------------------------------------------------


def chain_header(chain: Chain) -> list:
    cols = ["iter", "model"] + [f"beta{j + 1}" for j in range(chain.p)]
    cols += ["sigma2", "alpha0", "alpha1", "tau2"]
    if chain.intercept is not None:
        cols.append("intercept")
    return cols


def write_chain_csv(chain: Chain, path) -> None:
    """One row per stored state; ``model`` is the inclusion bitmask (bit j-1 for beta j)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(chain_header(chain))
        for i in range(len(chain)):
            row = [int(chain.iteration[i]), int(chain.model_mask[i])]
            row += [repr(float(b)) for b in chain.beta[i]]
            row += [repr(float(chain.sigma2[i])), repr(float(chain.alpha[i, 0])),
                    repr(float(chain.alpha[i, 1])), repr(float(chain.tau2[i]))]
            if chain.intercept is not None:
                row.append(repr(float(chain.intercept[i])))
            w.writerow(row)


def read_chain_csv(path, config: McmcConfig | None = None) -> Chain:
    """Load a chain dump; imputation summaries are not part of the format."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["iter", "model"]:
            raise InvalidInputError(f"{path}: not a chain dump (header {header})")
        betas = [h for h in header if h.startswith("beta")]
        expected = ["iter", "model"] + [f"beta{j + 1}" for j in range(len(betas))]
        expected += ["sigma2", "alpha0", "alpha1", "tau2"]
        has_icpt = header[-1] == "intercept"
        if header != expected + (["intercept"] if has_icpt else []):
            raise InvalidInputError(f"{path}: unexpected chain header {header}")
        try:
            rows = np.array([[float(v) for v in r] for r in reader], dtype=float)
        except ValueError as exc:
            raise InvalidInputError(f"{path}: {exc}") from None
    if rows.size == 0:
        raise InvalidInputError(f"{path}: chain dump has no states")
    p = len(betas)
    cfg = config or McmcConfig(iterations=int(rows[-1, 0]), burn_in=int(rows[0, 0]) - 1, chain_count=1)
    return Chain(
        config=cfg,
        dataset_fingerprint=0,
        iteration=rows[:, 0].astype(np.int64),
        model_mask=rows[:, 1].astype(np.int64),
        beta=rows[:, 2 : 2 + p],
        sigma2=rows[:, 2 + p],
        alpha=rows[:, 3 + p : 5 + p],
        tau2=rows[:, 5 + p],
        intercept=rows[:, 6 + p] if has_icpt else None,
        imputed_mean=np.zeros(0),
    )
