"""Persisted artifacts: draws CSV, fit metadata JSON, attribution JSON/CSV."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .attribution import AttributionReport
from .core import ModelParams, ModelSpec
from .diagnostics import Diagnostics
from .sampler import PosteriorDraws


def fmt(x: float) -> str:
    return repr(float(x))


def write_draws_csv(path: str | Path, draws: PosteriorDraws):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chain", "iter", *draws.names])
        for c in range(draws.n_chains):
            for i in range(draws.n_samples):
                w.writerow([c, i, *(fmt(v) for v in draws.draws[c, i])])


def read_draws_csv(path: str | Path) -> PosteriorDraws:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["chain", "iter"]:
        raise ValueError(f"{path}: expected a header starting with 'chain,iter'")
    names = rows[0][2:]
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    if body.size == 0:
        raise ValueError(f"{path}: no draws")
    chain = body[:, 0].astype(int)
    n_chains = int(chain.max()) + 1
    values = body[:, 2:]
    per_chain = [values[chain == c] for c in range(n_chains)]
    n = min(len(v) for v in per_chain)
    arr = np.stack([v[:n] for v in per_chain])
    zeros = np.zeros(n_chains)
    return PosteriorDraws(arr, names, zeros, zeros.astype(int), zeros, np.ones((n_chains, len(names))))


def spec_to_dict(spec: ModelSpec) -> dict:
    return {
        "n_channels": spec.n_channels,
        "link": spec.link.value,
        "include_random_effects": spec.include_random_effects,
        "include_interaction": spec.include_interaction,
    }


def spec_from_dict(d: dict) -> ModelSpec:
    return ModelSpec(
        n_channels=int(d["n_channels"]),
        link=d["link"],
        include_random_effects=bool(d["include_random_effects"]),
        include_interaction=bool(d["include_interaction"]),
    )


def params_to_dict(params: ModelParams) -> dict:
    return {
        "mu": params.mu,
        "gamma": params.gamma,
        "beta": params.beta.tolist(),
        "lambda": params.lam.tolist(),
        "half_life": params.half_life().tolist(),
        "b": params.b.tolist(),
        "sigma_b": params.sigma_b,
        "sigma_y": params.sigma_y,
    }


def params_from_dict(d: dict) -> ModelParams:
    return ModelParams(
        mu=d["mu"],
        gamma=d["gamma"],
        beta=d["beta"],
        lam=d["lambda"],
        b=d.get("b", []),
        sigma_b=d.get("sigma_b", 1.0),
        sigma_y=d.get("sigma_y", 1.0),
    )


def write_json(path: str | Path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")


def read_json(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def fit_metadata(draws: PosteriorDraws, diag: Diagnostics, spec: ModelSpec, channel_names, extra: dict) -> dict:
    return {
        "model": {**spec_to_dict(spec), "channels": list(channel_names)},
        "sampler": {
            **extra,
            "accept_stats": draws.accept_stats.tolist(),
            "divergence_count": draws.divergence_count.tolist(),
            "step_size": draws.step_size.tolist(),
            "n_leapfrog": np.asarray(draws.n_leapfrog).tolist(),
        },
        "max_rhat": diag.to_dict_value(diag.max_rhat()),
        "diagnostics": diag.to_dict(),
    }


def write_attribution(json_path: str | Path, csv_path: str | Path, report: AttributionReport):
    write_json(json_path, report.to_dict())
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["draw", *report.channel_names])
        for d, row in zip(report.draw_indices, report.draws):
            w.writerow([d, *(fmt(v) for v in row)])


def read_attribution_draws(path: str | Path) -> dict[str, np.ndarray]:
    data = read_json(path)
    return {name: np.asarray(ch["draws"], dtype=float) for name, ch in data["channels"].items()}
