"""Bias of Bayesian variable selection with misspecified covariate imputation.

Simulation library: the data-generating process and censoring mechanisms
(:mod:`dgp`), Zellner g-prior algebra (:mod:`gprior`), the Gaussian working
imputation model (:mod:`imputation`), Gibbs chains (:mod:`sampler`),
diagnostics, brute-force oracles and a command-line interface.
"""

from .dgp import Band, Dataset, NoCensoring, Threshold, Truth, apply_censoring, generate_complete
from .gprior import ModelIndex, enumerate_models, fit, model_posterior
from .sampler import FULL_MODEL, SELECT, Chain, McmcConfig, run_chain, run_chains
from .stochastic import RngStream

__version__ = "0.1.0"

__all__ = [
    "Band",
    "Chain",
    "Dataset",
    "FULL_MODEL",
    "McmcConfig",
    "ModelIndex",
    "NoCensoring",
    "RngStream",
    "SELECT",
    "Threshold",
    "Truth",
    "apply_censoring",
    "enumerate_models",
    "fit",
    "generate_complete",
    "model_posterior",
    "run_chain",
    "run_chains",
]
