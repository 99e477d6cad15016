"""Channel attribution by removal effects.

The removal effect of channel ``c`` on a journey is the predicted outcome
with all touches minus the prediction after deleting every touch of ``c``.
A channel's attribution is the sum of its removal effects over journeys,
evaluated separately for each posterior draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Journey, Link, ModelParams, ModelSpec, apply_link, touch_predictor
from .diagnostics import summarize_values
from .likelihood import JourneyBatch, as_batch, params_from_vector

DEFAULT_MAX_DRAWS = 500


def removal_effect(journey: Journey, params: ModelParams, spec: ModelSpec, channel: int, index: int = 0) -> float:
    full = touch_predictor(journey.touches, journey.eval_time, params, spec, index)
    removed = touch_predictor(journey.without_channel(channel), journey.eval_time, params, spec, index)
    return float(apply_link(full, spec.link) - apply_link(removed, spec.link))


def removal_effects(batch: JourneyBatch, params: ModelParams, spec: ModelSpec) -> np.ndarray:
    """Removal effect of every channel on every journey, shape ``(N, C)``."""
    w = batch.touch_effects(params.beta, params.lam)
    total = w.sum(axis=1)[:, None]
    total_sq = (w * w).sum(axis=1)[:, None]
    base = np.full((batch.n_journeys, 1), params.mu)
    if spec.include_random_effects:
        base = base + params.b[:, None]

    def eta(touch_sum, touch_sq):
        # an absent channel leaves both sums bit-identical, so its effect is exactly 0
        out = base + touch_sum
        if spec.include_interaction:
            out = out + params.gamma * (touch_sum * touch_sum - touch_sq)
        return out

    full = eta(total, total_sq)
    removed = eta(total - batch.channel_sums(w), total_sq - batch.channel_sums(w * w))
    return apply_link(full, spec.link) - apply_link(removed, spec.link)


@dataclass
class AttributionReport:
    channel_names: list[str]
    draws: np.ndarray  # (n_draws, C) summed removal effects
    link: str
    n_journeys: int
    draw_indices: list[int] = field(default_factory=list)

    def summaries(self) -> dict[str, dict]:
        return {name: summarize_values(self.draws[:, c]) for c, name in enumerate(self.channel_names)}

    def to_dict(self) -> dict:
        return {
            "metadata": {
                "n_journeys": self.n_journeys,
                "link": self.link,
                "n_draws": int(self.draws.shape[0]),
                "draw_indices": list(self.draw_indices),
            },
            "channels": {
                name: {**summary, "draws": self.draws[:, c].tolist()}
                for (name, summary), c in zip(self.summaries().items(), range(len(self.channel_names)))
            },
        }


def thin_indices(n_total: int, max_draws: int | None) -> list[int]:
    """Evenly spaced indices into the flattened draws."""
    if max_draws is None or n_total <= max_draws:
        return list(range(n_total))
    return sorted({int(math.floor(i * n_total / max_draws)) for i in range(max_draws)})


def attribute(
    dataset,
    posterior,
    spec: ModelSpec,
    channel_names: Sequence[str] | None = None,
    max_draws: int | None = DEFAULT_MAX_DRAWS,
) -> AttributionReport:
    """Per-draw channel attribution.

    ``posterior`` is a ``PosteriorDraws`` (constrained columns) or a sequence
    of ``ModelParams``.
    """
    batch = as_batch(dataset, spec)
    if hasattr(posterior, "flat"):
        flat = posterior.flat()
        indices = thin_indices(flat.shape[0], max_draws)
        params_list = [params_from_vector(flat[i], spec) for i in indices]
    else:
        params_list = list(posterior)
        indices = thin_indices(len(params_list), max_draws)
        params_list = [params_list[i] for i in indices]
    if not params_list:
        raise ValueError("attribution needs at least one posterior draw")
    names = list(channel_names) if channel_names is not None else [str(c) for c in range(spec.n_channels)]
    values = np.empty((len(params_list), spec.n_channels))
    for d, params in enumerate(params_list):
        values[d] = removal_effects(batch, params, spec).sum(axis=0)
    return AttributionReport(names, values, Link(spec.link).value, batch.n_journeys, indices)
