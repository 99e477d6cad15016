"""Bayesian multi-touch attribution with decaying ad effects and interactions."""

__version__ = "0.1.0"

from .attribution import AttributionReport, attribute, removal_effect
from .core import (
    Channel,
    InvalidInputError,
    Journey,
    Link,
    ModelParams,
    ModelSpec,
    NumericError,
    Touch,
    apply_link,
    linear_predictor,
    predict,
)
from .diagnostics import Diagnostics, diagnostics, summarize
from .fitting import fit
from .ingest import PreprocessConfig, parse, preprocess
from .likelihood import (
    PriorConfig,
    grad_log_posterior,
    log_likelihood,
    log_posterior_unconstrained,
    log_prior,
    to_constrained,
    to_unconstrained,
)
from .sampler import PosteriorDraws, SamplerConfig, run
from .simulator import SimConfig, sample_true_params, simulate_dataset
