"""Finite-difference verification of the analytic log-posterior gradient.

The differences are taken on a separate long-double evaluation of the
log-posterior, written directly from the density formulas.  Besides being an
independent second implementation, the extra precision keeps cancellation
noise in the central difference well below the 1e-6 relative tolerance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import Journey, Link, ModelSpec, Touch
from .likelihood import JourneyBatch, PriorConfig, dimension, log_posterior_and_grad

XF = np.longdouble


def random_dataset(rng: np.random.Generator, n_journeys: int, n_channels: int, link: Link, max_touches: int = 5):
    journeys = []
    for i in range(n_journeys):
        k = int(rng.integers(1, max_touches + 1))
        gaps = rng.exponential(1.0, size=k - 1)
        times = np.concatenate([[0.0], np.cumsum(gaps)])
        channels = rng.integers(0, n_channels, size=k)
        outcome = float(rng.integers(0, 2)) if Link(link) is Link.LOGIT else float(rng.normal(0.5, 1.0))
        eval_time = float(times[-1] + rng.exponential(0.5))
        touches = tuple(Touch(int(a), float(t)) for a, t in zip(channels, times))
        journeys.append(Journey(f"r{i}", touches, outcome, eval_time))
    return journeys


def log_posterior_extended(theta, batch: JourneyBatch, priors: PriorConfig, spec: ModelSpec):
    """Unconstrained log-posterior in long double, from the textbook densities."""
    th = np.asarray(theta, dtype=XF)
    c, n = spec.n_channels, batch.n_journeys
    half_log_2pi = np.log(XF(2) * np.pi) / 2
    mu, gamma = th[0], th[1]
    beta = np.exp(th[2 : 2 + c])
    lam = 1 / (1 + np.exp(-th[2 + c : 2 + 2 * c]))
    pos = 2 + 2 * c

    total = -(mu**2) / (2 * XF(priors.mu_sd) ** 2) - np.log(XF(priors.mu_sd)) - half_log_2pi
    total += -(gamma**2) / (2 * XF(priors.gamma_sd) ** 2) - np.log(XF(priors.gamma_sd)) - half_log_2pi
    total += np.sum(-beta / XF(priors.beta_scale) - np.log(XF(priors.beta_scale)))
    # Jacobians: beta = exp(u), lambda = logistic(u)
    total += np.sum(th[2 : 2 + c]) + np.sum(np.log(lam) + np.log(1 - lam))

    b = np.zeros(n, dtype=XF)
    if spec.include_random_effects:
        log_sigma_b = th[pos]
        sigma_b = np.exp(log_sigma_b)
        b = sigma_b * th[pos + 1 : pos + 1 + n]
        total += np.log(XF(priors.sigma_b_rate)) - XF(priors.sigma_b_rate) * sigma_b
        total += np.sum(-(b**2) / (2 * sigma_b**2) - log_sigma_b - half_log_2pi)
        total += (n + 1) * log_sigma_b

    w = (
        batch.mask.astype(XF)
        * beta[batch.channel]
        * np.exp(batch.elapsed.astype(XF) * np.log(lam)[batch.channel])
    )
    eta = mu + b + w.sum(axis=1)
    if spec.include_interaction:
        for i in range(w.shape[1]):
            for j in range(w.shape[1]):
                if i != j:
                    eta = eta + gamma * w[:, i] * w[:, j]
    y = batch.outcome.astype(XF)
    if spec.link is Link.LOGIT:
        total += np.sum(y * eta - np.logaddexp(XF(0), eta))
    else:
        log_sigma_y = th[-1]
        sigma_y = np.exp(log_sigma_y)
        s = XF(priors.sigma_y_scale)
        total += np.log(XF(2)) - half_log_2pi - np.log(s) - sigma_y**2 / (2 * s**2) + log_sigma_y
        total += np.sum(-half_log_2pi - log_sigma_y - (y - eta) ** 2 / (2 * sigma_y**2))
    return total


def finite_difference_gradient(theta, batch, priors, spec, step: float = 1e-5) -> np.ndarray:
    th = np.asarray(theta, dtype=XF)
    h = XF(step)
    out = np.empty(th.shape[0])
    for i in range(th.shape[0]):
        up, down = th.copy(), th.copy()
        up[i] += h
        down[i] -= h
        diff = log_posterior_extended(up, batch, priors, spec) - log_posterior_extended(down, batch, priors, spec)
        out[i] = float(diff / (2 * h))
    return out


def gradient_errors(analytic: np.ndarray, numeric: np.ndarray, rel_tol=1e-6, abs_tol=1e-8, floor=1e-8):
    """Boolean mask of failing coordinates and the relative errors."""
    err = np.abs(analytic - numeric)
    big = np.abs(analytic) > floor
    rel = np.where(big, err / np.where(big, np.abs(analytic), 1.0), 0.0)
    failed = np.where(big, rel > rel_tol, err > abs_tol)
    return failed, rel


@dataclass
class GradientCheckResult:
    n_points: int = 0
    n_coordinates: int = 0
    max_rel_error: float = 0.0
    failures: list[str] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures


def check_gradients(
    n_points: int = 100,
    n_channels: int = 3,
    n_journeys: int = 50,
    seed: int = 0,
    links=(Link.IDENTITY, Link.LOGIT),
    random_effects: bool = True,
    rel_tol: float = 1e-6,
    abs_tol: float = 1e-8,
    step: float = 1e-5,
) -> GradientCheckResult:
    """Compare analytic and finite-difference gradients at random points.

    Each point draws a fresh dataset and theta ~ Uniform(-2, 2);
    ``n_points`` points are checked for every link in ``links``.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    priors = PriorConfig()
    result = GradientCheckResult()
    start = time.perf_counter()
    for p, link in ((p, Link(lk)) for lk in links for p in range(n_points)):
        spec = ModelSpec(n_channels, link, include_random_effects=random_effects, include_interaction=True)
        batch = JourneyBatch.from_journeys(random_dataset(rng, n_journeys, n_channels, link), n_channels)
        theta = rng.uniform(-2.0, 2.0, size=dimension(spec, n_journeys))
        analytic = log_posterior_and_grad(theta, batch, priors, spec)[1]
        numeric = finite_difference_gradient(theta, batch, priors, spec, step)
        failed, rel = gradient_errors(analytic, numeric, rel_tol, abs_tol)
        result.n_points += 1
        result.n_coordinates += theta.shape[0]
        result.max_rel_error = max(result.max_rel_error, float(rel.max()))
        for i in np.flatnonzero(failed):
            result.failures.append(
                f"point {p} ({link.value}) coord {i}: analytic {analytic[i]:.12g} vs fd {numeric[i]:.12g}"
            )
    result.seconds = time.perf_counter() - start
    return result
