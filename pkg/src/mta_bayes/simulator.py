"""Synthetic journeys with known ground truth.

Randomness comes from numpy's PCG64 fed by ``SeedSequence``.  Streams are
split by spawn key so that every journey is reproducible on its own:

    (seed, spawn_key=(0,))     ground-truth parameters
    (seed, spawn_key=(1, i))   journey i: channels, gaps, outcome noise
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .core import InvalidInputError, Journey, Link, ModelParams, ModelSpec, Touch, apply_link
from .likelihood import JourneyBatch, predictor_parts


@dataclass(frozen=True)
class SimConfig:
    n_journeys: int = 10_000
    n_channels: int = 5
    touches_per_journey: int = 10
    inter_event_rate: float = 1.0
    link: Link = Link.IDENTITY
    seed: int = 0
    sigma_y: float = 0.1
    param_overrides: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "link", Link(self.link))
        if self.n_journeys < 1 or self.touches_per_journey < 1 or self.n_channels < 1:
            raise InvalidInputError("n_journeys, n_channels and touches_per_journey must be >= 1")
        if not self.inter_event_rate > 0:
            raise InvalidInputError("inter_event_rate must be positive")
        unknown = set(self.param_overrides) - {"mu", "gamma", "beta", "lam", "sigma_y"}
        if unknown:
            raise InvalidInputError(f"unknown parameter overrides: {sorted(unknown)}")

    @property
    def model_spec(self) -> ModelSpec:
        return ModelSpec(self.n_channels, self.link, include_random_effects=False, include_interaction=True)


def param_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,))))


def journey_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1, index))))


def sample_true_params(config: SimConfig, rng: np.random.Generator) -> ModelParams:
    c = config.n_channels
    beta = rng.uniform(0.0, 1.0, size=c)
    gamma = rng.normal(0.0, 1.0)
    lam = rng.beta(1.0, 1.0, size=c)
    # Beta(1,1) can return an endpoint in floating point; redraw those
    while np.any((lam <= 0) | (lam >= 1)):
        bad = (lam <= 0) | (lam >= 1)
        lam[bad] = rng.beta(1.0, 1.0, size=int(bad.sum()))
    values = dict(mu=0.0, gamma=float(gamma), beta=beta, lam=lam, sigma_y=config.sigma_y)
    values.update(config.param_overrides)
    return ModelParams(**values)


def simulate_journey_touches(config: SimConfig, rng: np.random.Generator) -> tuple[Touch, ...]:
    k = config.touches_per_journey
    channels = rng.integers(0, config.n_channels, size=k)
    gaps = rng.exponential(1.0 / config.inter_event_rate, size=k - 1)
    times = np.concatenate([[0.0], np.cumsum(gaps)])
    return tuple(Touch(int(a), float(t)) for a, t in zip(channels, times))


def simulate_dataset(config: SimConfig) -> tuple[list[Journey], ModelParams]:
    params = sample_true_params(config, param_rng(config.seed))
    spec = config.model_spec
    touch_lists, noise = [], np.empty(config.n_journeys)
    for i in range(config.n_journeys):
        rng = journey_rng(config.seed, i)
        touch_lists.append(simulate_journey_touches(config, rng))
        noise[i] = rng.standard_normal() if spec.link is Link.IDENTITY else rng.uniform()

    provisional = [Journey(f"c{i:06d}", t, 0.0) for i, t in enumerate(touch_lists)]
    batch = JourneyBatch.from_journeys(provisional, config.n_channels)
    mean = apply_link(predictor_parts(batch, params, spec)[0], spec.link)
    if spec.link is Link.IDENTITY:
        outcome = mean + params.sigma_y * noise
    else:
        outcome = (noise < mean).astype(float)
    journeys = [
        Journey(j.customer_id, j.touches, float(y), j.eval_time) for j, y in zip(provisional, outcome)
    ]
    return journeys, params
