"""Posterior sampling for the attribution model."""

from __future__ import annotations

from typing import Sequence

from .core import Journey, ModelSpec
from .likelihood import PosteriorTarget, PriorConfig, constrained_vector, parameter_names
from .sampler import PosteriorDraws, SamplerConfig, run


def fit(
    journeys: Sequence[Journey],
    spec: ModelSpec,
    priors: PriorConfig = PriorConfig(),
    config: SamplerConfig = SamplerConfig(),
    channel_names: Sequence[str] | None = None,
) -> PosteriorDraws:
    """Sample the posterior; draws are stored on the constrained scale."""
    target = PosteriorTarget(journeys, priors, spec)
    names = parameter_names(spec, target.batch.n_journeys, channel_names)
    return run(
        target,
        target.dim,
        config,
        transform=lambda theta: constrained_vector(theta, spec),
        names=names,
    )
