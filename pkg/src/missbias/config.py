"""Experiment configuration: strict JSON schema, defaults and the canned runs."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .dgp import Band, NoCensoring, Threshold, Truth
from .errors import ConfigError
from .gprior import ModelIndex
from .sampler import P, SELECT, McmcConfig

_U64 = 2**64


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TruthSpec(_Strict):
    beta: tuple[float, float] = (0.0, 1.0)
    sigma2: float = Field(1.0, ge=0.0, allow_inf_nan=False)

    def build(self) -> Truth:
        return Truth(self.beta, self.sigma2)


class ThresholdSpec(_Strict):
    kind: Literal["threshold"] = "threshold"
    cutoff: float = Field(0.0, allow_inf_nan=False)

    def build(self) -> Threshold:
        return Threshold(self.cutoff)


class BandSpec(_Strict):
    kind: Literal["band"] = "band"
    width: float = Field(0.2, gt=0.0, allow_inf_nan=False)
    invert: bool = False

    def build(self) -> Band:
        return Band(self.width, self.invert)


class NoneSpec(_Strict):
    kind: Literal["none"] = "none"

    def build(self) -> NoCensoring:
        return NoCensoring()


MechanismSpec = Annotated[Union[ThresholdSpec, BandSpec, NoneSpec], Field(discriminator="kind")]


class McmcSpec(_Strict):
    iterations: int = Field(20000, ge=1)
    burn_in: int = Field(2000, ge=0)
    thin: int = Field(1, ge=1)
    chain_count: int = Field(4, ge=1)
    store_imputed: bool = False

    @model_validator(mode="after")
    def _burn_in_below_iterations(self):
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in must be < iterations")
        return self


class ExperimentConfig(_Strict):
    """Everything needed to regenerate an experiment bit for bit.

    ``working`` accepts ``joint_gaussian`` for completeness: a bivariate
    Gaussian on (x1, x2) implies the same conditional regression of x2 on
    x1, and x1 is never missing, so both settings run the same sampler.
    """

    n: int = Field(1000, ge=5)
    truth: TruthSpec = TruthSpec()
    mechanism: MechanismSpec = ThresholdSpec()
    exp_param: Literal["mean", "rate"] = "mean"
    intercept: bool = False
    working: Literal["conditional_gaussian", "joint_gaussian"] = "conditional_gaussian"
    truncate_support: bool = False
    g: Union[Literal["n"], float] = "n"
    model_prior: Optional[list[float]] = None
    mode: Literal["fixed", "selection"] = "fixed"
    fixed_model: list[int] = [1, 2]
    mcmc: McmcSpec = McmcSpec()
    seed: int = Field(0, ge=0, lt=_U64)
    replicates: int = Field(1, ge=1, lt=2**31)
    output_dir: str = "results"

    @field_validator("g")
    @classmethod
    def _g_positive(cls, v):
        if v != "n" and not (v > 0 and math.isfinite(v)):
            raise ValueError('g must be "n" or a finite number > 0')
        return v

    @field_validator("fixed_model")
    @classmethod
    def _model_in_range(cls, v):
        ModelIndex(tuple(v)).check_range(P)
        if sorted(set(v)) != list(v):
            raise ValueError("fixed_model must list distinct columns in increasing order")
        return v

    @field_validator("model_prior")
    @classmethod
    def _prior_valid(cls, v):
        if v is None:
            return v
        if len(v) != 2**P:
            raise ValueError(f"model_prior needs {2**P} entries (one per submodel)")
        if any(not (p >= 0 and math.isfinite(p)) for p in v) or abs(sum(v) - 1.0) > 1e-10:
            raise ValueError("model_prior must be nonnegative and sum to 1")
        return v

    def mcmc_config(self) -> McmcConfig:
        m = self.mcmc
        return McmcConfig(
            iterations=m.iterations,
            burn_in=m.burn_in,
            thin=m.thin,
            g_value=self.g,
            seed=self.seed,
            chain_count=m.chain_count,
            intercept=self.intercept,
            truncate_support=self.truncate_support,
            store_imputed=m.store_imputed,
        )

    def sampler_mode(self):
        return SELECT if self.mode == "selection" else ModelIndex(tuple(self.fixed_model))

    def resolved(self) -> dict:
        """All fields with defaults expanded, JSON-ready."""
        return self.model_dump(mode="json")


def _format_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(obj: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(obj)
    except ValidationError as exc:
        raise ConfigError(_format_error(exc)) from None


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config; every failure is a :class:`ConfigError`."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    try:
        return parse_config(obj)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# -- canned simulations -----------------------------------------------------

# Longer than the McmcConfig defaults: the band runs mix slowly in beta1 and
# the acceptance checks ask for ESS > 1000 on every seed. Model switching
# slows sigma2 further, so the selection run gets more sweeps.
CANNED_MCMC = McmcSpec(iterations=60000, burn_in=5000)
CANNED_SELECTION_MCMC = McmcSpec(iterations=100000, burn_in=5000)

_CANNED = {
    1: dict(mechanism=ThresholdSpec(), mode="fixed", mcmc=CANNED_MCMC),
    2: dict(mechanism=BandSpec(invert=True), mode="fixed", mcmc=CANNED_MCMC),
    3: dict(mechanism=BandSpec(invert=True), mode="selection", mcmc=CANNED_SELECTION_MCMC),
}

SIMULATIONS = tuple(_CANNED)


def canned_mcmc(sim: int) -> McmcSpec:
    if sim not in _CANNED:
        raise ConfigError(f"sim must be one of {SIMULATIONS}")
    return _CANNED[sim]["mcmc"]


def canned_config(sim: int, seed: int = 0, output_dir: str = "results", **overrides) -> ExperimentConfig:
    """Configuration of one of the three published simulations."""
    if sim not in _CANNED:
        raise ConfigError(f"sim must be one of {SIMULATIONS}")
    fields = dict(_CANNED[sim], seed=seed, output_dir=str(output_dir))
    fields.update(overrides)
    try:
        return ExperimentConfig(**fields)
    except ValidationError as exc:
        raise ConfigError(_format_error(exc)) from None
