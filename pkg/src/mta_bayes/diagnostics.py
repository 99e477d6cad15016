"""Convergence diagnostics and posterior summaries.

R-hat is the rank-normalized split-R-hat (maximum of the bulk and folded
versions); ESS uses Geyer's initial monotone sequence on split chains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

DEGENERATE = "degenerate"
QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


class UnsupportedError(ValueError):
    pass


@dataclass
class Diagnostics:
    """Per-parameter diagnostics; ``nan`` R-hat means degenerate (all draws equal)."""

    names: list[str]
    rhat: np.ndarray
    ess_bulk: np.ndarray
    ess_tail: np.ndarray

    def rhat_label(self, i: int):
        r = self.rhat[i]
        return DEGENERATE if math.isnan(r) else float(r)

    def max_rhat(self) -> float:
        finite = self.rhat[~np.isnan(self.rhat)]
        return float(finite.max()) if finite.size else math.nan

    @staticmethod
    def to_dict_value(x: float):
        """JSON-safe encoding: nan -> "degenerate", inf -> "inf"."""
        if math.isnan(x):
            return DEGENERATE
        if math.isinf(x):
            return "inf"
        return float(x)

    def to_dict(self) -> dict:
        enc = self.to_dict_value
        return {
            name: {
                "rhat": enc(self.rhat[i]),
                "ess_bulk": enc(self.ess_bulk[i]),
                "ess_tail": enc(self.ess_tail[i]),
            }
            for i, name in enumerate(self.names)
        }


def _split(x: np.ndarray) -> np.ndarray:
    """(chains, n) -> (2*chains, n//2), dropping the middle draw of odd chains."""
    n = x.shape[1]
    half = n // 2
    return np.concatenate([x[:, :half], x[:, n - half :]], axis=0)


def _rank_normalize(x: np.ndarray) -> np.ndarray:
    ranks = stats.rankdata(x, method="average").reshape(x.shape)
    return stats.norm.ppf((ranks - 0.375) / (x.size + 0.25))


def _rhat_basic(x: np.ndarray) -> float:
    m, n = x.shape
    chain_var = x.var(axis=1, ddof=1)
    within = chain_var.mean()
    between = n * x.mean(axis=1).var(ddof=1)
    if within == 0:
        return math.nan if between == 0 else math.inf
    var_plus = (n - 1) / n * within + between / n
    return math.sqrt(var_plus / within)


def split_rhat(x: np.ndarray) -> float:
    """Rank-normalized split-R-hat of one parameter, ``x`` shaped (chains, draws)."""
    x = np.asarray(x, dtype=float)
    if np.all(x == x.flat[0]):
        return math.nan
    s = _split(x)
    bulk = _rhat_basic(_rank_normalize(s))
    folded = np.abs(s - np.median(s))
    tail = _rhat_basic(_rank_normalize(folded)) if not np.all(folded == folded.flat[0]) else bulk
    return max(bulk, tail)


def _autocorr(x: np.ndarray) -> np.ndarray:
    """Autocorrelation of each row via FFT."""
    n = x.shape[1]
    centred = x - x.mean(axis=1, keepdims=True)
    size = 2 ** int(math.ceil(math.log2(2 * n)))
    f = np.fft.rfft(centred, size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n] / n
    return acov


def _ess_basic(x: np.ndarray) -> float:
    m, n = x.shape
    if n < 4:
        return math.nan
    acov = _autocorr(x)
    chain_var = acov[:, 0] * n / (n - 1)
    within = chain_var.mean()
    var_plus = within * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if var_plus == 0:
        return math.nan
    rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # Geyer: sum consecutive pairs while positive, enforce monotone decrease
    pair_sums = []
    t = 0
    while t + 1 < n:
        p = rho[t] + rho[t + 1]
        if p < 0:
            break
        if pair_sums and p > pair_sums[-1]:
            p = pair_sums[-1]
        pair_sums.append(p)
        t += 2
    tau = -1.0 + 2.0 * sum(pair_sums)
    tau = max(tau, 1.0 / math.log10(m * n))
    return min(m * n / tau, float(m * n))


def ess_bulk(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if np.all(x == x.flat[0]):
        return math.nan
    return _ess_basic(_rank_normalize(_split(x)))


def ess_tail(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if np.all(x == x.flat[0]):
        return math.nan
    s = _split(x)
    lo, hi = np.quantile(s, [0.05, 0.95])
    values = []
    for ind in (s <= lo, s <= hi):
        ind = ind.astype(float)
        if np.all(ind == ind.flat[0]):
            continue
        values.append(_ess_basic(ind))
    return min(values) if values else math.nan


def diagnostics(draws) -> Diagnostics:
    """Diagnostics for every column of a ``PosteriorDraws``."""
    arr = draws.draws
    if arr.shape[0] < 2:
        raise UnsupportedError("R-hat needs at least 2 chains")
    if arr.shape[1] < 4:
        raise UnsupportedError("diagnostics need at least 4 draws per chain")
    d = arr.shape[2]
    rhat = np.array([split_rhat(arr[:, :, i]) for i in range(d)])
    bulk = np.array([ess_bulk(arr[:, :, i]) for i in range(d)])
    tail = np.array([ess_tail(arr[:, :, i]) for i in range(d)])
    return Diagnostics(list(draws.names), rhat, bulk, tail)


def summarize_values(values: np.ndarray, is_decay: bool = False) -> dict:
    values = np.asarray(values, dtype=float).reshape(-1)
    q = np.quantile(values, QUANTILES)  # numpy's default "linear" rule is type 7
    constant = bool(np.all(values == values[0]))
    out = {
        "mean": float(values[0]) if constant else float(values.mean()),
        "sd": 0.0 if constant else float(values.std(ddof=1)),
        "q2.5": float(q[0]),
        "q25": float(q[1]),
        "q50": float(q[2]),
        "q75": float(q[3]),
        "q97.5": float(q[4]),
        "width95": float(q[4] - q[0]),
    }
    if is_decay:
        hl = np.log(0.5) / np.log(values)
        hq = np.quantile(hl, QUANTILES)
        out["half_life"] = {
            "mean": float(hl.mean()),
            "q2.5": float(hq[0]),
            "q50": float(hq[2]),
            "q97.5": float(hq[4]),
        }
    return out


def summarize(draws) -> dict[str, dict]:
    """Mean, sd, quantiles, central-95% width (and half-life for decay parameters)."""
    flat = draws.flat()
    if flat.shape[0] == 0:
        raise UnsupportedError("no draws to summarize")
    return {
        name: summarize_values(flat[:, i], is_decay=name.startswith("lambda"))
        for i, name in enumerate(draws.names)
    }
