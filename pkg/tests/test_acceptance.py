"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test records a PASS/FAIL line (see ``acceptance_report``) that is
repeated in the pytest terminal summary.  The recovery, full-scale and
logit fits are long; the whole module takes on the order of an hour on one
core.
"""

import filecmp
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from acceptance_report import record
from mta_bayes.attribution import attribute
from mta_bayes.core import Link, ModelSpec
from mta_bayes.diagnostics import diagnostics
from mta_bayes.fitting import fit
from mta_bayes.gradcheck import check_gradients
from mta_bayes.likelihood import log_likelihood, params_from_vector
from mta_bayes.sampler import SamplerConfig, run
from mta_bayes.simulator import SimConfig, simulate_dataset
from oracles import naive_log_likelihood, random_journeys, random_params

pytestmark = pytest.mark.slow


def _interval(col, mass):
    tail = (1 - mass) / 2
    lo, hi = np.quantile(col, [tail, 1 - tail])
    return float(lo), float(hi)


def test_criterion_1_gradient_correctness():
    start = time.perf_counter()
    res = check_gradients(n_points=100, n_channels=3, n_journeys=50, seed=0, random_effects=True)
    seconds = time.perf_counter() - start
    passed = res.passed and seconds < 60
    record(1, "gradient vs finite differences", passed,
           f"{res.n_points} points, {res.n_coordinates} coordinates, {len(res.failures)} failures, "
           f"max rel err {res.max_rel_error:.2e}, {seconds:.1f}s")
    assert res.passed, res.failures[:5]
    assert seconds < 60


def test_criterion_2_likelihood_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for k in range(100):
        link = Link.IDENTITY if k % 2 == 0 else Link.LOGIT
        spec = ModelSpec(3, link, include_random_effects=bool(k % 4 >= 2), include_interaction=bool(k % 8 < 6))
        n = int(rng.integers(1, 21))
        journeys = random_journeys(rng, n, 3, link)
        params = random_params(rng, 3, n)
        diff = abs(log_likelihood(journeys, params, spec) - naive_log_likelihood(journeys, params, spec))
        worst = max(worst, diff)
    passed = worst <= 1e-10
    record(2, "vectorised log-likelihood vs naive ordered-pair oracle", passed,
           f"100 datasets, max abs diff {worst:.2e}")
    assert passed


def test_criterion_3_sampler_calibration():
    def std_normal(q):
        return -0.5 * float(q @ q), -q

    start = time.perf_counter()
    draws = run(std_normal, 10, SamplerConfig(n_chains=4, n_warmup=1000, n_samples=1000, seed=0))
    seconds = time.perf_counter() - start
    flat = draws.flat()
    rhat = np.array(diagnostics(draws).rhat)
    means, sds = flat.mean(axis=0), flat.std(axis=0, ddof=1)
    ks = stats.kstest(flat[:, 0], "norm").statistic
    checks = {
        "rhat": bool(np.all(rhat < 1.01)),
        "mean": bool(np.all(np.abs(means) <= 0.05)),
        "sd": bool(np.all((sds >= 0.95) & (sds <= 1.05))),
        "ks": ks < 0.02,
        "time": seconds < 120,
    }
    passed = all(checks.values())
    record(3, "10-d standard normal calibration", passed,
           f"max rhat {rhat.max():.4f}, max |mean| {np.abs(means).max():.3f}, "
           f"sd in [{sds.min():.3f}, {sds.max():.3f}], KS {ks:.4f}, {seconds:.1f}s")
    assert passed, checks


def test_criterion_4_parameter_recovery():
    reps = range(10)
    inside = {}
    mean_ok = True
    slowest = 0.0
    lines = []
    for seed in reps:
        cfg = SimConfig(n_journeys=2000, n_channels=3, touches_per_journey=6, link=Link.IDENTITY,
                        sigma_y=0.1, seed=seed)
        journeys, truth = simulate_dataset(cfg)
        start = time.perf_counter()
        draws = fit(journeys, cfg.model_spec, config=SamplerConfig(n_chains=4, n_warmup=1000, n_samples=1000, seed=seed))
        seconds = time.perf_counter() - start
        slowest = max(slowest, seconds)
        worst_err = 0.0
        for c in range(3):
            for name, value in ((f"beta[{c}]", truth.beta[c]), (f"lambda[{c}]", truth.lam[c])):
                col = draws.column(name).ravel()
                lo, hi = _interval(col, 0.90)
                inside.setdefault(name, 0)
                inside[name] += lo <= value <= hi
                err = abs(col.mean() - value)
                worst_err = max(worst_err, err)
                mean_ok &= err <= 0.1
        lines.append(f"seed {seed}: {seconds:.0f}s, max |mean - truth| {worst_err:.4f}")
    print("\n".join(lines))
    coverage_ok = all(v >= 8 for v in inside.values())
    passed = coverage_ok and mean_ok and slowest < 15 * 60
    record(4, "desk-scale recovery over 10 seeds", passed,
           f"90% coverage counts {inside}, means within 0.1: {mean_ok}, slowest rep {slowest:.0f}s")
    assert passed


def test_criterion_5_full_scale_sharpness():
    cfg = SimConfig(n_journeys=10_000, n_channels=5, touches_per_journey=10, link=Link.IDENTITY, seed=0)
    journeys, truth = simulate_dataset(cfg)
    start = time.perf_counter()
    draws = fit(journeys, cfg.model_spec, config=SamplerConfig(seed=0))
    seconds = time.perf_counter() - start
    results = []
    passed = seconds < 2 * 3600
    for c in np.flatnonzero(truth.beta > 0.2):
        for name, value in ((f"beta[{c}]", truth.beta[c]), (f"lambda[{c}]", truth.lam[c])):
            col = draws.column(name).ravel()
            lo, hi = _interval(col, 0.95)
            rel = abs(col.mean() - value) / value
            ok = (hi - lo) <= 0.05 and rel <= 0.04
            passed &= ok
            results.append(f"{name} width {hi - lo:.4f} relerr {rel:.3%}{'' if ok else ' FAIL'}")
    print("\n".join(results))
    record(5, "full-scale sharpness (10k journeys, 5 channels, 10 touches)", passed,
           f"{len(results)} parameters checked, {seconds / 60:.1f} min; " + "; ".join(results))
    assert passed


def _touch_mass(journeys, params):
    return sum(
        params.beta[t.channel] * params.lam[t.channel] ** (j.eval_time - t.time)
        for j in journeys
        for t in j.touches
    )


def test_criterion_6_attribution_invariants():
    sampler = SamplerConfig(n_chains=4, n_warmup=500, n_samples=250, seed=6)

    # a 4th channel that never appears in the data
    cfg = SimConfig(n_journeys=400, n_channels=3, touches_per_journey=4, seed=6)
    journeys, _ = simulate_dataset(cfg)
    spec = ModelSpec(4, Link.IDENTITY, include_random_effects=False, include_interaction=True)
    draws = fit(journeys, spec, config=sampler)
    report = attribute(journeys, draws, spec, max_draws=None)
    absent_zero = bool(np.all(report.draws[:, 3] == 0.0))

    # additive model: per-draw channel attributions sum to the total touch mass
    cfg0 = SimConfig(n_journeys=400, n_channels=3, touches_per_journey=4, seed=7, param_overrides={"gamma": 0.0})
    journeys0, _ = simulate_dataset(cfg0)
    spec0 = ModelSpec(3, Link.IDENTITY, include_random_effects=False, include_interaction=False)
    draws0 = fit(journeys0, spec0, config=sampler)
    report0 = attribute(journeys0, draws0, spec0, max_draws=200)
    flat = draws0.flat()
    worst = max(
        abs(report0.draws[k].sum() - _touch_mass(journeys0, params_from_vector(flat[i], spec0)))
        for k, i in enumerate(report0.draw_indices)
    )
    passed = absent_zero and worst <= 1e-8
    record(6, "attribution invariants", passed,
           f"absent channel exactly 0 over {report.draws.shape[0]} draws: {absent_zero}; "
           f"additivity max abs diff {worst:.2e} over {len(report0.draw_indices)} draws")
    assert passed


def test_criterion_7_logit_signs():
    cfg = SimConfig(n_journeys=5000, n_channels=3, touches_per_journey=6, link=Link.LOGIT, seed=0,
                    param_overrides={"gamma": -0.3, "mu": -2.0})
    journeys, _ = simulate_dataset(cfg)
    draws = fit(journeys, cfg.model_spec, config=SamplerConfig(seed=0))
    p_gamma = float(np.mean(draws.column("gamma") < 0))
    p_mu = float(np.mean(draws.column("mu") < 0))
    passed = p_gamma > 0.9 and p_mu > 0.95
    record(7, "logit simulation sign recovery", passed,
           f"P(gamma<0) = {p_gamma:.4f}, P(mu<0) = {p_mu:.4f}, "
           f"gamma mean {draws.column('gamma').mean():.3f}, mu mean {draws.column('mu').mean():.3f}")
    assert passed


def _pipeline(root):
    root.mkdir()
    steps = [
        ["simulate", "--journeys", "300", "--channels", "3", "--touches", "4", "--seed", "8",
         "--out", str(root / "journeys.jsonl")],
        ["fit", "--journeys", str(root / "journeys.jsonl"), "--out", str(root / "fit"),
         "--warmup", "300", "--samples", "300", "--seed", "8", "--allow-nonconverged"],
        ["attribute", "--journeys", str(root / "journeys.jsonl"), "--draws", str(root / "fit" / "draws.csv"),
         "--out", str(root / "attr")],
        ["report", "--draws", str(root / "fit" / "draws.csv"), "--attribution",
         str(root / "attr" / "attribution.json"), "--out", str(root / "report")],
    ]
    for argv in steps:
        subprocess.run([sys.executable, "-m", "mta_bayes.cli", *argv], check=True, capture_output=True)


def test_criterion_8_end_to_end_determinism(tmp_path):
    _pipeline(tmp_path / "a")
    _pipeline(tmp_path / "b")
    files = ["fit/draws.csv", "attr/attribution.json"]
    files += sorted(str(p.relative_to(tmp_path / "a")) for p in (tmp_path / "a" / "report").glob("*.svg"))
    differing = [f for f in files if not filecmp.cmp(tmp_path / "a" / f, tmp_path / "b" / f, shallow=False)]
    passed = not differing and len(files) > 2
    record(8, "end-to-end byte determinism", passed,
           f"{len(files)} files compared, differing: {differing or 'none'}")
    assert passed
