"""Log-likelihood, priors and the unconstrained log-posterior with its gradient.

Unconstrained layout (fixed):

    [mu, gamma, log beta (C), logit lambda (C), log sigma_b, raw b (N), log sigma_y]

The random-effect block (``log sigma_b`` and ``raw b``) is present only when
the model includes random effects, ``log sigma_y`` only under the identity
link.  Random effects are non-centred: ``b = sigma_b * raw``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    InvalidInputError,
    Journey,
    Link,
    ModelParams,
    ModelSpec,
    log_sigmoid,
    sigmoid,
)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorConfig:
    sigma_b_rate: float = 0.5
    beta_scale: float = 10.0
    gamma_sd: float = 10.0
    mu_sd: float = 10.0
    sigma_y_scale: float = 1.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value > 0:
                raise InvalidInputError(f"prior {name} must be positive, got {value}")


# --------------------------------------------------------------------------
# data layout


@dataclass(frozen=True)
class JourneyBatch:
    """Journeys packed into padded ``(N, K)`` arrays, K the longest journey.

    Padded slots have ``mask == 0`` and point at channel 0.
    """

    channel: np.ndarray
    elapsed: np.ndarray
    mask: np.ndarray
    outcome: np.ndarray
    n_channels: int

    @classmethod
    def from_journeys(cls, journeys: Sequence[Journey], n_channels: int) -> "JourneyBatch":
        n = len(journeys)
        k = max((len(j.touches) for j in journeys), default=1)
        channel = np.zeros((n, k), dtype=np.intp)
        elapsed = np.zeros((n, k))
        mask = np.zeros((n, k))
        for i, j in enumerate(journeys):
            m = len(j.touches)
            channel[i, :m] = j.channels
            elapsed[i, :m] = j.elapsed()
            mask[i, :m] = 1.0
        if channel.size and (channel.max() >= n_channels):
            bad = int(channel.max())
            raise InvalidInputError(f"channel id {bad} out of range for {n_channels} channels")
        outcome = np.array([j.outcome for j in journeys], dtype=float)
        return cls(channel, elapsed, mask, outcome, n_channels)

    @property
    def n_journeys(self) -> int:
        return self.outcome.shape[0]

    def touch_effects(self, beta: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """Per-touch main effects beta[a] * lam[a]**elapsed, zero on padding."""
        return self.mask * beta[self.channel] * np.exp(self.elapsed * np.log(lam)[self.channel])

    def channel_sums(self, values: np.ndarray) -> np.ndarray:
        """Sum ``values`` (N, K) within each journey by channel -> (N, C)."""
        n = self.n_journeys
        flat = (np.arange(n)[:, None] * self.n_channels + self.channel).ravel()
        out = np.bincount(flat, weights=values.ravel(), minlength=n * self.n_channels)
        return out.reshape(n, self.n_channels)


def as_batch(dataset, spec: ModelSpec) -> JourneyBatch:
    if isinstance(dataset, JourneyBatch):
        return dataset
    return JourneyBatch.from_journeys(list(dataset), spec.n_channels)


def _check_outcomes(batch: JourneyBatch, spec: ModelSpec):
    if spec.link is Link.LOGIT and not np.all((batch.outcome == 0) | (batch.outcome == 1)):
        raise InvalidInputError("logit link requires outcomes in {0, 1}")


def predictor_parts(batch: JourneyBatch, params: ModelParams, spec: ModelSpec):
    """Return (eta, effects, total, pair_sum) for the whole batch.

    ``pair_sum`` is the ordered-pair interaction sum, S**2 - sum(w**2).
    """
    w = batch.touch_effects(params.beta, params.lam)
    total = w.sum(axis=1)
    pair_sum = total * total - (w * w).sum(axis=1)
    eta = params.mu + total
    if spec.include_random_effects:
        eta = eta + _journey_effects(params, batch.n_journeys)
    if spec.include_interaction:
        eta = eta + params.gamma * pair_sum
    return eta, w, total, pair_sum


def _journey_effects(params: ModelParams, n: int) -> np.ndarray:
    if params.b.shape[0] != n:
        raise InvalidInputError(f"model has {params.b.shape[0]} random effects for {n} journeys")
    return params.b


# --------------------------------------------------------------------------
# transforms


def dimension(spec: ModelSpec, n_journeys: int) -> int:
    c = spec.n_channels
    return 2 + 2 * c + (n_journeys + 1 if spec.include_random_effects else 0) + (
        1 if spec.link is Link.IDENTITY else 0
    )


def _n_random_effects(theta_len: int, spec: ModelSpec) -> int:
    if not spec.include_random_effects:
        return 0
    n = theta_len - dimension(spec, 0)
    if n < 0:
        raise InvalidInputError(f"theta of length {theta_len} too short for {spec}")
    return n


def parameter_names(spec: ModelSpec, n_journeys: int, channel_names: Sequence[str] | None = None) -> list[str]:
    c = spec.n_channels
    labels = list(channel_names) if channel_names is not None else [str(i) for i in range(c)]
    names = ["mu", "gamma"]
    names += [f"beta[{x}]" for x in labels]
    names += [f"lambda[{x}]" for x in labels]
    if spec.include_random_effects:
        names.append("sigma_b")
        names += [f"b[{i}]" for i in range(n_journeys)]
    if spec.link is Link.IDENTITY:
        names.append("sigma_y")
    return names


def to_unconstrained(params: ModelParams, spec: ModelSpec) -> np.ndarray:
    if params.n_channels != spec.n_channels:
        raise InvalidInputError("params and spec disagree on the number of channels")
    if np.any(params.beta <= 0):
        raise InvalidInputError("beta = 0 has no unconstrained representation")
    lam = params.lam
    parts = [
        [params.mu, params.gamma],
        np.log(params.beta),
        np.log(lam) - np.log1p(-lam),
    ]
    if spec.include_random_effects:
        parts.append([math.log(params.sigma_b)])
        parts.append(params.b / params.sigma_b)
    if spec.link is Link.IDENTITY:
        parts.append([math.log(params.sigma_y)])
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def _unpack(theta: np.ndarray, spec: ModelSpec):
    theta = np.asarray(theta, dtype=float)
    c = spec.n_channels
    n = _n_random_effects(theta.shape[0], spec)
    u_beta = theta[2 : 2 + c]
    u_lam = theta[2 + c : 2 + 2 * c]
    pos = 2 + 2 * c
    u_sigma_b, raw = 0.0, np.zeros(0)
    if spec.include_random_effects:
        u_sigma_b = theta[pos]
        raw = theta[pos + 1 : pos + 1 + n]
        pos += 1 + n
    u_sigma_y = theta[pos] if spec.link is Link.IDENTITY else 0.0
    return theta[0], theta[1], u_beta, u_lam, u_sigma_b, raw, u_sigma_y


def to_constrained(theta: np.ndarray, spec: ModelSpec) -> ModelParams:
    mu, gamma, u_beta, u_lam, u_sigma_b, raw, u_sigma_y = _unpack(theta, spec)
    sigma_b = math.exp(u_sigma_b)
    return ModelParams(
        mu=float(mu),
        gamma=float(gamma),
        beta=np.exp(u_beta),
        lam=sigmoid(np.asarray(u_lam)),
        b=sigma_b * raw,
        sigma_b=sigma_b,
        sigma_y=math.exp(u_sigma_y),
    )


def log_jacobian(theta: np.ndarray, spec: ModelSpec) -> float:
    """log |d constrained / d unconstrained| for the layout above."""
    _, _, u_beta, u_lam, u_sigma_b, raw, u_sigma_y = _unpack(theta, spec)
    total = float(np.sum(u_beta))
    total += float(np.sum(log_sigmoid(u_lam) + log_sigmoid(-u_lam)))
    if spec.include_random_effects:
        total += (1 + raw.shape[0]) * float(u_sigma_b)
    if spec.link is Link.IDENTITY:
        total += float(u_sigma_y)
    return total


# --------------------------------------------------------------------------
# densities


def _loglik_terms(eta: np.ndarray, y: np.ndarray, params: ModelParams, spec: ModelSpec) -> np.ndarray:
    if spec.link is Link.LOGIT:
        return y * log_sigmoid(eta) + (1.0 - y) * log_sigmoid(-eta)
    z = (y - eta) / params.sigma_y
    return -0.5 * LOG_2PI - math.log(params.sigma_y) - 0.5 * z * z


def log_likelihood(dataset, params: ModelParams, spec: ModelSpec) -> float:
    batch = as_batch(dataset, spec)
    _check_outcomes(batch, spec)
    if batch.n_journeys == 0:
        return 0.0
    eta = predictor_parts(batch, params, spec)[0]
    return math.fsum(_loglik_terms(eta, batch.outcome, params, spec))


def log_prior(params: ModelParams, priors: PriorConfig, spec: ModelSpec) -> float:
    lp = -0.5 * (params.mu / priors.mu_sd) ** 2 - math.log(priors.mu_sd) - 0.5 * LOG_2PI
    lp += -0.5 * (params.gamma / priors.gamma_sd) ** 2 - math.log(priors.gamma_sd) - 0.5 * LOG_2PI
    lp += float(np.sum(-params.beta / priors.beta_scale - math.log(priors.beta_scale)))
    # lambda ~ Uniform(0, 1) contributes log(1) = 0
    if spec.include_random_effects:
        lp += math.log(priors.sigma_b_rate) - priors.sigma_b_rate * params.sigma_b
        z = params.b / params.sigma_b
        lp += float(np.sum(-0.5 * z * z - math.log(params.sigma_b) - 0.5 * LOG_2PI))
    if spec.link is Link.IDENTITY:
        s = priors.sigma_y_scale
        lp += math.log(2.0) - 0.5 * LOG_2PI - math.log(s) - 0.5 * (params.sigma_y / s) ** 2
    return lp


def log_posterior_unconstrained(theta, dataset, priors: PriorConfig, spec: ModelSpec) -> float:
    params = to_constrained(theta, spec)
    return (
        log_likelihood(dataset, params, spec)
        + log_prior(params, priors, spec)
        + log_jacobian(theta, spec)
    )


def grad_log_posterior(theta, dataset, priors: PriorConfig, spec: ModelSpec) -> np.ndarray:
    return log_posterior_and_grad(theta, dataset, priors, spec)[1]


def log_posterior_and_grad(theta, dataset, priors: PriorConfig, spec: ModelSpec):
    """Log-posterior on the unconstrained scale and its analytic gradient."""
    theta = np.asarray(theta, dtype=float)
    batch = as_batch(dataset, spec)
    _check_outcomes(batch, spec)
    c = spec.n_channels
    params = to_constrained(theta, spec)
    beta, lam = params.beta, params.lam
    grad = np.zeros_like(theta)
    n = batch.n_journeys

    # priors and Jacobian, all in unconstrained coordinates
    lp = log_prior(params, priors, spec) + log_jacobian(theta, spec)
    grad[0] = -params.mu / priors.mu_sd**2
    grad[1] = -params.gamma / priors.gamma_sd**2
    grad[2 : 2 + c] = 1.0 - beta / priors.beta_scale
    grad[2 + c : 2 + 2 * c] = 1.0 - 2.0 * lam
    pos = 2 + 2 * c
    if spec.include_random_effects:
        raw = theta[pos + 1 : pos + 1 + n]
        # non-centred: N(b; 0, sigma_b) plus the N log sigma_b Jacobian is N(raw; 0, 1)
        grad[pos] = 1.0 - priors.sigma_b_rate * params.sigma_b
        grad[pos + 1 : pos + 1 + n] = -raw
    if spec.link is Link.IDENTITY:
        grad[-1] = 1.0 - (params.sigma_y / priors.sigma_y_scale) ** 2

    if n == 0:
        return lp, grad

    eta, w, total, pair_sum = predictor_parts(batch, params, spec)
    y = batch.outcome
    lp += math.fsum(_loglik_terms(eta, y, params, spec))

    if spec.link is Link.LOGIT:
        dl_deta = y - sigmoid(eta)
    else:
        resid = y - eta
        dl_deta = resid / params.sigma_y**2
        grad[-1] += -n + float(np.sum(resid * resid)) / params.sigma_y**2

    grad[0] += float(np.sum(dl_deta))
    if spec.include_interaction:
        grad[1] += float(np.sum(dl_deta * pair_sum))
        deta_dw = 1.0 + 2.0 * params.gamma * (total[:, None] - w)
    else:
        deta_dw = np.ones_like(w)
    g_w = dl_deta[:, None] * deta_dw * w
    flat_channel = batch.channel.ravel()
    grad[2 : 2 + c] += np.bincount(flat_channel, weights=g_w.ravel(), minlength=c)
    g_lam = np.bincount(flat_channel, weights=(g_w * batch.elapsed).ravel(), minlength=c)
    grad[2 + c : 2 + 2 * c] += g_lam * (1.0 - lam)
    if spec.include_random_effects:
        grad[pos] += float(np.sum(dl_deta * params.b))
        grad[pos + 1 : pos + 1 + n] += dl_deta * params.sigma_b
    return lp, grad


class PosteriorTarget:
    """Callable ``theta -> (logp, grad)`` bound to a dataset; safe to share across threads."""

    def __init__(self, dataset, priors: PriorConfig, spec: ModelSpec):
        self.batch = as_batch(dataset, spec)
        _check_outcomes(self.batch, spec)
        self.priors = priors
        self.spec = spec
        self.dim = dimension(spec, self.batch.n_journeys)

    def __call__(self, theta):
        return log_posterior_and_grad(theta, self.batch, self.priors, self.spec)


def constrained_vector(theta: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """Constrained values in the unconstrained layout's order (the draw columns)."""
    p = to_constrained(theta, spec)
    parts = [[p.mu, p.gamma], p.beta, p.lam]
    if spec.include_random_effects:
        parts += [[p.sigma_b], p.b]
    if spec.link is Link.IDENTITY:
        parts.append([p.sigma_y])
    return np.concatenate([np.asarray(x, dtype=float) for x in parts])


def params_from_vector(vec: np.ndarray, spec: ModelSpec) -> ModelParams:
    """Inverse of ``constrained_vector``."""
    vec = np.asarray(vec, dtype=float)
    c = spec.n_channels
    n = _n_random_effects(vec.shape[0], spec)
    values = dict(mu=float(vec[0]), gamma=float(vec[1]), beta=vec[2 : 2 + c], lam=vec[2 + c : 2 + 2 * c])
    pos = 2 + 2 * c
    if spec.include_random_effects:
        values["sigma_b"] = float(vec[pos])
        values["b"] = vec[pos + 1 : pos + 1 + n]
    if spec.link is Link.IDENTITY:
        values["sigma_y"] = float(vec[-1])
    return ModelParams(**values)
