"""Domain types and the customer-behaviour model.

A journey's conversion propensity is

    eta = mu + b_i + sum_k beta[a_k] * lam[a_k]**d_k
               + gamma * sum_{k != l} beta[a_k] lam[a_k]**d_k beta[a_l] lam[a_l]**d_l

with d_k = eval_time - t_k (days since touch k) and the pair sum running over
ordered pairs.  The outcome scale is obtained through a link (identity or
logistic).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class InvalidInputError(ValueError):
    """Input violates a documented precondition."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


class Link(str, enum.Enum):
    IDENTITY = "identity"
    LOGIT = "logit"


@dataclass(frozen=True)
class Channel:
    id: int
    name: str


@dataclass(frozen=True)
class Touch:
    channel: int
    time: float

    def __post_init__(self):
        if not math.isfinite(self.time) or self.time < 0:
            raise InvalidInputError(f"touch time must be finite and >= 0, got {self.time}")
        if self.channel < 0:
            raise InvalidInputError(f"channel id must be >= 0, got {self.channel}")


@dataclass(frozen=True)
class Journey:
    """One customer's ordered touches and the outcome observed at ``eval_time``.

    ``eval_time`` defaults to the time of the last touch.
    """

    customer_id: str
    touches: tuple[Touch, ...]
    outcome: float
    eval_time: float | None = None

    def __post_init__(self):
        touches = tuple(self.touches)
        object.__setattr__(self, "touches", touches)
        if not touches:
            raise InvalidInputError(f"journey {self.customer_id!r} has no touches")
        times = [t.time for t in touches]
        if any(b < a for a, b in zip(times, times[1:])):
            raise InvalidInputError(f"journey {self.customer_id!r}: touches not sorted by time")
        if self.eval_time is None:
            object.__setattr__(self, "eval_time", times[-1])
        elif not math.isfinite(self.eval_time) or self.eval_time < times[-1]:
            raise InvalidInputError(
                f"journey {self.customer_id!r}: eval_time {self.eval_time} precedes last touch {times[-1]}"
            )
        if not math.isfinite(self.outcome):
            raise InvalidInputError(f"journey {self.customer_id!r}: outcome must be finite")

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(t.channel for t in self.touches)

    def elapsed(self) -> np.ndarray:
        """Days between each touch and the evaluation time."""
        return np.array([self.eval_time - t.time for t in self.touches], dtype=float)

    def without_channel(self, channel: int) -> tuple[Touch, ...]:
        return tuple(t for t in self.touches if t.channel != channel)


@dataclass(frozen=True)
class ModelSpec:
    n_channels: int
    link: Link = Link.IDENTITY
    include_random_effects: bool = False
    include_interaction: bool = True

    def __post_init__(self):
        object.__setattr__(self, "link", Link(self.link))
        if self.n_channels < 1:
            raise InvalidInputError("n_channels must be >= 1")


@dataclass(frozen=True)
class ModelParams:
    """Constrained-space parameter values.

    ``b`` holds one random effect per journey of the fitted dataset; it is
    empty when the model has no random effects.
    """

    mu: float
    gamma: float
    beta: np.ndarray
    lam: np.ndarray
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sigma_b: float = 1.0
    sigma_y: float = 1.0

    def __post_init__(self):
        for name in ("beta", "lam", "b"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.beta.shape != self.lam.shape:
            raise InvalidInputError("beta and lambda must have one entry per channel")
        if np.any(self.beta < 0):
            raise InvalidInputError(f"beta must be non-negative, got {self.beta}")
        if np.any((self.lam <= 0) | (self.lam >= 1)):
            raise InvalidInputError(f"lambda must lie in (0, 1), got {self.lam}")
        if not self.sigma_b > 0 or not self.sigma_y > 0:
            raise InvalidInputError("sigma_b and sigma_y must be positive")

    @property
    def n_channels(self) -> int:
        return self.beta.shape[0]

    def half_life(self) -> np.ndarray:
        return np.log(0.5) / np.log(self.lam)


def decay(lam: float | np.ndarray, elapsed: float | np.ndarray):
    """lam**elapsed evaluated as exp(elapsed * log lam)."""
    return np.exp(np.multiply(elapsed, np.log(lam)))


def _check_channels(channels: Sequence[int], n_channels: int):
    for c in channels:
        if not 0 <= c < n_channels:
            raise InvalidInputError(f"channel id {c} out of range for {n_channels} channels")


def _random_effect(params: ModelParams, spec: ModelSpec, index: int) -> float:
    if not spec.include_random_effects:
        return 0.0
    if index >= params.b.shape[0]:
        raise InvalidInputError(f"no random effect for journey index {index} (have {params.b.shape[0]})")
    return float(params.b[index])


def touch_predictor(
    touches: Sequence[Touch],
    eval_time: float,
    params: ModelParams,
    spec: ModelSpec,
    index: int = 0,
) -> float:
    """Linear predictor for an arbitrary (possibly empty) touch sequence."""
    _check_channels([t.channel for t in touches], spec.n_channels)
    effects = [
        params.beta[t.channel] * decay(params.lam[t.channel], eval_time - t.time) for t in touches
    ]
    eta = params.mu + _random_effect(params, spec, index) + math.fsum(effects)
    if spec.include_interaction:
        with np.errstate(over="ignore", invalid="ignore"):
            pairs = [
                effects[i] * effects[j]
                for i in range(len(effects))
                for j in range(len(effects))
                if i != j
            ]
        eta += params.gamma * math.fsum(pairs)
    if not math.isfinite(eta):
        raise NumericError(
            f"non-finite linear predictor (mu={params.mu}, gamma={params.gamma}, "
            f"beta={params.beta.tolist()}, lambda={params.lam.tolist()})"
        )
    return float(eta)


def linear_predictor(journey: Journey, params: ModelParams, spec: ModelSpec, index: int = 0) -> float:
    """Argument of the link for ``journey``; ``index`` selects its random effect."""
    return touch_predictor(journey.touches, journey.eval_time, params, spec, index)


def sigmoid(x):
    """Logistic function, stable for large |x|."""
    x = np.asarray(x, dtype=float)
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return out if out.ndim else float(out)


def log_sigmoid(x):
    """log(sigmoid(x)) without forming sigmoid(x)."""
    x = np.asarray(x, dtype=float)
    out = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
    return out if out.ndim else float(out)


def apply_link(eta, link: Link | str):
    if Link(link) is Link.IDENTITY:
        return eta
    return sigmoid(eta)


def predict(journey: Journey, params: ModelParams, spec: ModelSpec, index: int = 0) -> float:
    return apply_link(linear_predictor(journey, params, spec, index), spec.link)


def make_channels(names: Sequence[str]) -> list[Channel]:
    if len(set(names)) != len(names):
        raise InvalidInputError("channel names must be unique")
    return [Channel(i, name) for i, name in enumerate(names)]
