import math

import numpy as np
import pytest
from scipy import stats

from mta_bayes.core import InvalidInputError
from mta_bayes.fitting import fit
from mta_bayes.sampler import (
    DualAveraging,
    SamplerConfig,
    SamplerInitError,
    chain_rng,
    run,
    warmup_windows,
)
from mta_bayes.simulator import SimConfig, simulate_dataset


def std_normal(q):
    return -0.5 * float(q @ q), -q


def correlated_normal(rho):
    cov = np.array([[1.0, rho], [rho, 1.0]])
    prec = np.linalg.inv(cov)

    def target(q):
        return -0.5 * float(q @ prec @ q), -prec @ q

    return target


SMALL = SamplerConfig(n_chains=2, n_warmup=300, n_samples=300, seed=3)


def test_same_seed_bit_identical():
    a = run(std_normal, 3, SMALL)
    b = run(std_normal, 3, SMALL)
    np.testing.assert_array_equal(a.draws, b.draws)


def test_different_seed_differs():
    a = run(std_normal, 3, SMALL)
    b = run(std_normal, 3, SamplerConfig(n_chains=2, n_warmup=300, n_samples=300, seed=4))
    assert not np.array_equal(a.draws, b.draws)


def test_invariant_to_worker_threads():
    cfg = SamplerConfig(n_chains=3, n_warmup=200, n_samples=200, seed=1, n_workers=1)
    a = run(std_normal, 2, cfg)
    b = run(std_normal, 2, SamplerConfig(n_chains=3, n_warmup=200, n_samples=200, seed=1, n_workers=3))
    np.testing.assert_array_equal(a.draws, b.draws)
    np.testing.assert_array_equal(a.step_size, b.step_size)


def test_chain_streams_independent_of_chain_count():
    a = run(std_normal, 2, SamplerConfig(n_chains=2, n_warmup=100, n_samples=100, seed=9))
    b = run(std_normal, 2, SamplerConfig(n_chains=4, n_warmup=100, n_samples=100, seed=9))
    np.testing.assert_array_equal(a.draws, b.draws[:2])


def test_chain_rng_keys():
    assert chain_rng(1, 0).uniform() != chain_rng(1, 1).uniform()
    assert chain_rng(1, 2).uniform() == chain_rng(1, 2).uniform()


@pytest.mark.parametrize("metric", ["diag", "dense"])
def test_correlated_gaussian_moments(metric):
    cfg = SamplerConfig(n_chains=2, n_warmup=500, n_samples=1000, seed=0, metric=metric)
    d = run(correlated_normal(0.9), 2, cfg).flat()
    np.testing.assert_allclose(d.mean(axis=0), 0.0, atol=0.15)
    np.testing.assert_allclose(d.std(axis=0), 1.0, atol=0.1)
    assert np.corrcoef(d.T)[0, 1] == pytest.approx(0.9, abs=0.05)


def test_acceptance_within_band():
    d = run(std_normal, 5, SamplerConfig(n_chains=2, n_warmup=500, n_samples=500, seed=2))
    assert np.all(d.accept_stats >= 0.8 - 0.15)
    assert np.all(d.accept_stats <= 0.999)
    assert np.all(d.divergence_count == 0)


def test_one_dimensional_ks():
    d = run(std_normal, 1, SamplerConfig(n_chains=4, n_warmup=500, n_samples=2500, seed=0))
    assert stats.kstest(d.flat()[:, 0], "norm").statistic < 0.03


def test_rwm_kernel():
    cfg = SamplerConfig(n_chains=2, n_warmup=1000, n_samples=4000, seed=5, kernel="rwm")
    d = run(std_normal, 2, cfg)
    flat = d.flat()
    np.testing.assert_allclose(flat.mean(axis=0), 0.0, atol=0.2)
    np.testing.assert_allclose(flat.std(axis=0), 1.0, atol=0.15)
    assert np.all(np.abs(d.accept_stats - 0.234) < 0.15)


def test_bounded_support_target():
    # exponential(1) in log space: x = exp(u), log density u - exp(u)
    def target(q):
        return float(q[0] - math.exp(q[0])), np.array([1.0 - math.exp(q[0])])

    d = run(target, 1, SamplerConfig(n_chains=2, n_warmup=500, n_samples=2000, seed=1), transform=np.exp)
    assert d.flat().min() > 0
    assert d.flat().mean() == pytest.approx(1.0, abs=0.1)


def test_nonfinite_regions_are_rejected():
    # half-normal on x > 0 written with an explicit wall
    def target(q):
        if q[0] <= 0:
            return -math.inf, np.zeros(1)
        return -0.5 * float(q[0] ** 2), -q

    d = run(target, 1, SamplerConfig(n_chains=2, n_warmup=300, n_samples=1000, seed=2))
    assert d.flat().min() > 0


def test_init_failure():
    def bad(q):
        return -math.inf, np.zeros_like(q)

    with pytest.raises(SamplerInitError):
        run(bad, 2, SamplerConfig(n_chains=1, n_warmup=10, n_samples=10))


def test_exceptions_in_target_count_as_rejections():
    def raising(q):
        if q[0] > 1.5:
            raise ZeroDivisionError
        return std_normal(q)

    d = run(raising, 1, SamplerConfig(n_chains=1, n_warmup=200, n_samples=500, seed=0, init_jitter=1.0))
    assert d.flat().max() <= 1.5


def test_config_validation():
    with pytest.raises(InvalidInputError):
        SamplerConfig(target_accept=1.0)
    with pytest.raises(InvalidInputError):
        SamplerConfig(kernel="nuts")
    with pytest.raises(InvalidInputError):
        SamplerConfig(n_chains=0)


def test_warmup_windows_cover_middle_phase():
    w = warmup_windows(1000)
    assert w[0][0] == 75 and w[-1][1] == 950
    assert all(a[1] == b[0] for a, b in zip(w, w[1:]))
    sizes = [e - s for s, e in w]
    assert sizes[:3] == [25, 50, 100]
    assert warmup_windows(10) == []
    short = warmup_windows(100)
    assert short[0][0] == 15 and short[-1][1] == 90


def test_dual_averaging_reaches_target():
    # acceptance falls with step size: a = exp(-eps)
    da = DualAveraging(1.0, 0.8)
    eps = 1.0
    for _ in range(2000):
        eps = da.update(math.exp(-eps))
    assert da.final_step_size == pytest.approx(-math.log(0.8), rel=0.05)


def test_fitted_draws_are_valid_parameters():
    cfg = SimConfig(n_journeys=150, n_channels=2, touches_per_journey=3, seed=0)
    js, _ = simulate_dataset(cfg)
    d = fit(js, cfg.model_spec, config=SamplerConfig(n_chains=2, n_warmup=150, n_samples=100, seed=0))
    for name in d.names:
        col = d.column(name)
        if name.startswith("beta") or name.startswith("sigma"):
            assert np.all(col > 0), name
        if name.startswith("lambda"):
            assert np.all((col > 0) & (col < 1)), name


def test_optimized_init_starts_uphill():
    # narrow target (sd 0.01): without warmup, a jittered start stays far out
    # on its energy shell while an optimised start sits at the mode
    def target(q):
        return -0.5 * float(q @ q) * 1e4, -1e4 * q

    opt = run(target, 3, SamplerConfig(n_chains=1, n_warmup=0, n_samples=1, seed=0, init="optimize"))
    jit = run(target, 3, SamplerConfig(n_chains=1, n_warmup=0, n_samples=1, seed=0, init="jitter"))
    assert np.all(np.abs(opt.draws) < 0.1)
    assert np.abs(jit.draws).max() > 0.1
    with pytest.raises(InvalidInputError):
        SamplerConfig(init="map")


def test_optimized_init_restarts_pick_highest_mode():
    # two narrow modes at -1 (low) and +1 (high); one climb lands in either
    def target(q):
        a = -0.5 * ((q[0] + 1) / 0.05) ** 2 - 5.0
        b = -0.5 * ((q[0] - 1) / 0.05) ** 2
        m = max(a, b)
        wa, wb = math.exp(a - m), math.exp(b - m)
        lp = m + math.log(wa + wb)
        g = (wa * -(q[0] + 1) / 0.05**2 + wb * -(q[0] - 1) / 0.05**2) / (wa + wb)
        return lp, np.array([g])

    def starts(restarts):
        cfg = SamplerConfig(n_chains=8, n_warmup=0, n_samples=1, seed=0, init_restarts=restarts)
        return run(target, 1, cfg).draws[:, 0, 0]

    assert np.any(starts(1) < 0)
    assert np.all(starts(8) > 0)
    with pytest.raises(InvalidInputError):
        SamplerConfig(init_restarts=0)
