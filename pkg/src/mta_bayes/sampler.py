"""Adaptive Hamiltonian Monte Carlo over an unconstrained density.

Each iteration integrates a leapfrog trajectory whose number of steps is
drawn uniformly from ``1..L``, with ``L = ceil(trajectory_length / step_size)``
capped at ``max_leapfrog_steps``.  Warmup tunes the step size by dual
averaging and the inverse metric in expanding windows; both are frozen for
the sampling phase.  The metric is diagonal, or dense for low-dimensional
targets when ``metric="auto"``.

Each chain starts from a point drawn uniformly in ``[-init_jitter,
init_jitter]`` per coordinate.  With ``init="optimize"`` ``init_restarts``
such points are each moved uphill by L-BFGS and the highest is kept;
log-transformed scale parameters have flat regions far from the mode that
HMC only crosses slowly, and single climbs occasionally stop at a poor local
mode.

Chains are independent.  Chain ``k`` draws all its randomness from
``SeedSequence(seed, spawn_key=(k,))`` so results do not depend on how many
worker threads run them.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .core import InvalidInputError

log = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1000.0
RWM_TARGET_ACCEPT = 0.234
DENSE_AUTO_MAX_DIM = 100
# trajectories before the first metric estimate are kept short; the unit
# metric is usually badly scaled and long trajectories buy little there
UNADAPTED_MAX_STEPS = 64
INIT_OPTIMIZE_MAX_ITER = 1000

LogDensity = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


class SamplerInitError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 4
    n_warmup: int = 1000
    n_samples: int = 1000
    target_accept: float = 0.8
    max_leapfrog_steps: int = 1024
    seed: int = 0
    init_jitter: float = 2.0
    trajectory_length: float = 4.5
    kernel: str = "hmc"
    metric: str = "auto"
    n_workers: int = 1
    init: str = "optimize"
    init_restarts: int = 4

    def __post_init__(self):
        if self.n_chains < 1 or self.n_samples < 1 or self.n_warmup < 0:
            raise InvalidInputError("need n_chains >= 1, n_samples >= 1, n_warmup >= 0")
        if not 0 < self.target_accept < 1:
            raise InvalidInputError("target_accept must lie in (0, 1)")
        if self.kernel not in ("hmc", "rwm"):
            raise InvalidInputError(f"unknown kernel {self.kernel!r}")
        if self.metric not in ("auto", "diag", "dense"):
            raise InvalidInputError(f"unknown metric {self.metric!r}")
        if self.init not in ("optimize", "jitter"):
            raise InvalidInputError(f"unknown init {self.init!r}")
        if self.init_restarts < 1:
            raise InvalidInputError("init_restarts must be >= 1")
        if self.max_leapfrog_steps < 1 or not self.trajectory_length > 0:
            raise InvalidInputError("max_leapfrog_steps and trajectory_length must be positive")


@dataclass
class PosteriorDraws:
    """Draws of shape ``(n_chains, n_samples, D)`` with per-chain tuning state."""

    draws: np.ndarray
    names: list[str]
    accept_stats: np.ndarray
    divergence_count: np.ndarray
    step_size: np.ndarray
    inv_metric: np.ndarray
    n_leapfrog: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_samples(self) -> int:
        return self.draws.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, :, self.names.index(name)]

    def flat(self) -> np.ndarray:
        """All draws stacked chain after chain, shape ``(n_chains * n_samples, D)``."""
        return self.draws.reshape(-1, self.draws.shape[2])


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chain,))))


def _safe_eval(target: LogDensity, q: np.ndarray):
    try:
        with np.errstate(all="ignore"):
            logp, grad = target(q)
    except (ArithmeticError, ValueError):
        return -math.inf, None
    if not math.isfinite(logp) or not np.all(np.isfinite(grad)):
        return -math.inf, None
    return float(logp), np.asarray(grad, dtype=float)


class DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance rate."""

    def __init__(self, step_size: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.restart(step_size)

    def restart(self, step_size: float):
        self.mu = math.log(10.0 * step_size)
        self.counter = 0
        self.h_bar = 0.0
        self.log_eps = math.log(step_size)
        self.log_eps_bar = 0.0

    def update(self, accept_prob: float) -> float:
        self.counter += 1
        t = self.counter
        eta = 1.0 / (t + self.t0)
        self.h_bar = (1 - eta) * self.h_bar + eta * (self.target - accept_prob)
        self.log_eps = self.mu - math.sqrt(t) / self.gamma * self.h_bar
        x = t ** (-self.kappa)
        self.log_eps_bar = x * self.log_eps + (1 - x) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def final_step_size(self) -> float:
        return math.exp(self.log_eps_bar)


def warmup_windows(n_warmup: int) -> list[tuple[int, int]]:
    """``[start, end)`` iteration ranges over which the metric is estimated."""
    init_buffer, term_buffer, base = 75, 50, 25
    if n_warmup < 20:
        return []
    if init_buffer + term_buffer + base > n_warmup:
        init_buffer = int(0.15 * n_warmup)
        term_buffer = int(0.1 * n_warmup)
        base = n_warmup - init_buffer - term_buffer
    windows, start, size = [], init_buffer, base
    last = n_warmup - term_buffer
    while start < last:
        end = start + size
        # fold a too-short final window into the current one
        if end + 2 * size > last:
            end = last
        windows.append((start, end))
        start, size = end, 2 * size
    return windows


class _Moments:
    """Streaming mean and (co)variance of warmup draws."""

    def __init__(self, dim, dense):
        self.n, self.mean = 0, np.zeros(dim)
        self.m2 = np.zeros((dim, dim)) if dense else np.zeros(dim)
        self.dense = dense

    def add(self, x):
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += np.outer(d, x - self.mean) if self.dense else d * (x - self.mean)

    def regularized(self):
        n = self.n
        cov = self.m2 / (n - 1)
        shrink = 1e-3 * (5.0 / (n + 5.0))
        cov = (n / (n + 5.0)) * cov
        if self.dense:
            return cov + shrink * np.eye(cov.shape[0])
        return cov + shrink


class Metric:
    """Euclidean metric given by the inverse mass matrix (vector if diagonal)."""

    def __init__(self, inv_metric: np.ndarray):
        self.inv = np.asarray(inv_metric, dtype=float)
        self.dense = self.inv.ndim == 2
        if self.dense:
            self.chol = np.linalg.cholesky(self.inv)
        else:
            self.sqrt_inv = np.sqrt(self.inv)

    def momentum(self, rng) -> np.ndarray:
        z = rng.standard_normal(self.inv.shape[0])
        if self.dense:
            # p ~ N(0, inv^-1): solve chol^T p = z
            return np.linalg.solve(self.chol.T, z)
        return z / self.sqrt_inv

    def velocity(self, p):
        return self.inv @ p if self.dense else self.inv * p

    def kinetic(self, p) -> float:
        return 0.5 * float(np.dot(p, self.velocity(p)))

    def scaled_noise(self, rng) -> np.ndarray:
        z = rng.standard_normal(self.inv.shape[0])
        return self.chol @ z if self.dense else self.sqrt_inv * z


def _leapfrog(target, q, p, grad, step_size, n_steps, metric: Metric):
    """Integrate ``n_steps`` leapfrog steps; returns (q, p, logp, grad), grad None on failure."""
    p = p + 0.5 * step_size * grad
    for i in range(n_steps):
        q = q + step_size * metric.velocity(p)
        logp, grad = _safe_eval(target, q)
        if grad is None:
            return q, p, -math.inf, None
        if i + 1 < n_steps:
            p = p + step_size * grad
    p = p + 0.5 * step_size * grad
    return q, p, logp, grad


def _find_step_size(target, q, logp, grad, metric: Metric, rng, step_size=1.0):
    """Double or halve the step size until one-step acceptance crosses 0.5."""
    p = metric.momentum(rng)
    h0 = -logp + metric.kinetic(p)

    def log_ratio(eps):
        _, p1, lp1, g1 = _leapfrog(target, q, p, grad, eps, 1, metric)
        if g1 is None:
            return -math.inf
        return h0 - (-lp1 + metric.kinetic(p1))

    direction = 1 if log_ratio(step_size) > math.log(0.5) else -1
    for _ in range(100):
        nxt = step_size * (2.0 ** direction)
        ratio = log_ratio(nxt)
        crossed = ratio < math.log(0.5) if direction == 1 else ratio > math.log(0.5)
        if crossed:
            return nxt if direction == -1 else step_size
        step_size = nxt
    return step_size


def _initial_point(target, dim, config, rng, init):
    if init is not None:
        q = np.asarray(init, dtype=float).copy()
        logp, grad = _safe_eval(target, q)
        if grad is not None:
            return q, logp, grad
        raise SamplerInitError("log density is not finite at the supplied initial point")
    best = None
    n_starts = config.init_restarts if config.init == "optimize" else 1
    for _ in range(100):
        q = rng.uniform(-config.init_jitter, config.init_jitter, size=dim)
        logp, grad = _safe_eval(target, q)
        if grad is None:
            continue
        if config.init == "optimize":
            q, logp, grad = _climb(target, q, logp, grad)
        if best is None or logp > best[1]:
            best = (q, logp, grad)
        n_starts -= 1
        if n_starts == 0:
            return best
    if best is not None:
        return best
    raise SamplerInitError("log density not finite at 100 random initial points")


def _climb(target, q, logp, grad):
    """L-BFGS ascent from ``q``; keeps ``q`` if no finite improvement is found."""

    def objective(x):
        lp, g = _safe_eval(target, x)
        if g is None:
            return math.inf, np.zeros_like(x)
        return -lp, -g

    res = optimize.minimize(
        objective, q, jac=True, method="L-BFGS-B", options={"maxiter": INIT_OPTIMIZE_MAX_ITER}
    )
    lp1, g1 = _safe_eval(target, res.x)
    if g1 is not None and lp1 >= logp:
        return np.array(res.x, dtype=float), lp1, g1
    return q, logp, grad


@dataclass
class _ChainResult:
    draws: np.ndarray
    accept_stat: float
    divergences: int
    step_size: float
    inv_metric: np.ndarray
    n_leapfrog: int


def _use_dense(config: SamplerConfig, dim: int) -> bool:
    if config.metric == "auto":
        return dim <= DENSE_AUTO_MAX_DIM
    return config.metric == "dense"


def _run_chain(target, dim, config: SamplerConfig, chain: int, init, transform) -> _ChainResult:
    rng = chain_rng(config.seed, chain)
    q, logp, grad = _initial_point(target, dim, config, rng, init)
    dense = _use_dense(config, dim)
    metric = Metric(np.eye(dim) if dense else np.ones(dim))
    hmc = config.kernel == "hmc"
    target_accept = config.target_accept if hmc else RWM_TARGET_ACCEPT
    if hmc:
        step_size = _find_step_size(target, q, logp, grad, metric, rng)
    else:
        step_size = 2.38 / math.sqrt(dim)
    adapter = DualAveraging(step_size, target_accept)
    windows = warmup_windows(config.n_warmup)
    moments = _Moments(dim, dense)
    metric_adapted = not windows

    out = np.empty((config.n_samples, transform(q).shape[0]))
    accept_sum, divergences, n_leapfrog = 0.0, 0, 0
    for it in range(config.n_warmup + config.n_samples):
        warmup = it < config.n_warmup
        if hmc:
            max_steps = min(config.max_leapfrog_steps, max(1, math.ceil(config.trajectory_length / step_size)))
            if not metric_adapted:
                max_steps = min(max_steps, UNADAPTED_MAX_STEPS)
            n_steps = int(rng.integers(1, max_steps + 1))
            p0 = metric.momentum(rng)
            h0 = -logp + metric.kinetic(p0)
            q1, p1, logp1, grad1 = _leapfrog(target, q, p0, grad, step_size, n_steps, metric)
            n_leapfrog += n_steps
            h1 = -logp1 + metric.kinetic(p1) if grad1 is not None else math.inf
        else:
            q1 = q + step_size * metric.scaled_noise(rng)
            logp1, grad1 = _safe_eval(target, q1)
            h0, h1 = -logp, -logp1
        energy_error = h1 - h0
        u = rng.uniform()
        if not math.isfinite(energy_error) or energy_error > DIVERGENCE_THRESHOLD:
            accept_prob = 0.0
            if not warmup:
                divergences += 1
        else:
            accept_prob = math.exp(min(0.0, -energy_error))
            if u < accept_prob:
                q, logp, grad = q1, logp1, grad1

        if warmup:
            step_size = adapter.update(accept_prob)
            if windows and windows[0][0] <= it < windows[0][1]:
                moments.add(q)
            if windows and it + 1 == windows[0][1]:
                metric = Metric(moments.regularized())
                metric_adapted = True
                windows.pop(0)
                moments = _Moments(dim, dense)
                if hmc:
                    step_size = _find_step_size(target, q, logp, grad, metric, rng, step_size)
                adapter.restart(step_size)
            if it + 1 == config.n_warmup:
                step_size = adapter.final_step_size
        else:
            accept_sum += accept_prob
            out[it - config.n_warmup] = transform(q)
    return _ChainResult(out, accept_sum / config.n_samples, divergences, step_size, metric.inv, n_leapfrog)


def run(
    target: LogDensity,
    dim: int,
    config: SamplerConfig,
    init: Sequence[np.ndarray] | None = None,
    transform: Callable[[np.ndarray], np.ndarray] | None = None,
    names: Sequence[str] | None = None,
) -> PosteriorDraws:
    """Sample ``config.n_chains`` chains from ``exp(logp)``.

    ``target(theta)`` returns ``(logp, grad)``.  ``transform`` maps each stored
    unconstrained point to the recorded vector (identity by default).
    """
    transform = transform or (lambda q: np.array(q, dtype=float))
    inits = list(init) if init is not None else [None] * config.n_chains

    def one(chain):
        return _run_chain(target, dim, config, chain, inits[chain], transform)

    if config.n_workers > 1 and config.n_chains > 1:
        with ThreadPoolExecutor(max_workers=config.n_workers) as pool:
            results = list(pool.map(one, range(config.n_chains)))
    else:
        results = [one(k) for k in range(config.n_chains)]

    draws = np.stack([r.draws for r in results])
    if names is None:
        names = [f"x[{i}]" for i in range(draws.shape[2])]
    post = PosteriorDraws(
        draws=draws,
        names=list(names),
        accept_stats=np.array([r.accept_stat for r in results]),
        divergence_count=np.array([r.divergences for r in results]),
        step_size=np.array([r.step_size for r in results]),
        inv_metric=np.stack([r.inv_metric for r in results]),
        n_leapfrog=np.array([r.n_leapfrog for r in results]),
    )
    log.info(
        "sampled %d chains: accept %s, divergences %s, step size %s",
        config.n_chains,
        np.round(post.accept_stats, 3).tolist(),
        post.divergence_count.tolist(),
        np.round(post.step_size, 4).tolist(),
    )
    return post
