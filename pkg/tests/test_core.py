import math

import numpy as np
import pytest

from mta_bayes.core import (
    InvalidInputError,
    Journey,
    Link,
    ModelParams,
    ModelSpec,
    NumericError,
    Touch,
    apply_link,
    linear_predictor,
    log_sigmoid,
    predict,
    sigmoid,
)


def journey(*touches, eval_time=None, outcome=0.0):
    return Journey("c", tuple(Touch(a, t) for a, t in touches), outcome, eval_time)


def test_single_touch_hand_value():
    j = journey((0, 0.0), eval_time=1.0)
    p = ModelParams(mu=0.0, gamma=0.0, beta=[0.5], lam=[0.5])
    assert linear_predictor(j, p, ModelSpec(1)) == pytest.approx(0.25, abs=1e-15)


def test_baseline_only_when_beta_zero():
    j = journey((0, 0.0), (1, 2.0))
    p = ModelParams(mu=2.0, gamma=3.0, beta=[0.0, 0.0], lam=[0.3, 0.7], b=[-0.5], sigma_b=1.0)
    spec = ModelSpec(2, include_random_effects=True)
    assert linear_predictor(j, p, spec) == pytest.approx(1.5, abs=1e-15)


def test_two_touches_with_interaction():
    j = journey((0, 0.0), (1, 1.0), eval_time=1.0)
    p = ModelParams(mu=0.0, gamma=1.0, beta=[0.5, 0.4], lam=[0.5, 0.8])
    # main: 0.5*0.5 + 0.4*1 = 0.65; ordered pairs: 2 * 0.25 * 0.4
    assert linear_predictor(j, p, ModelSpec(2)) == pytest.approx(0.85, abs=1e-15)


def test_switches_zero_terms():
    j = journey((0, 0.0), (1, 1.0), eval_time=1.0)
    p = ModelParams(mu=0.0, gamma=1.0, beta=[0.5, 0.4], lam=[0.5, 0.8], b=[7.0])
    no_int = ModelSpec(2, include_interaction=False)
    assert linear_predictor(j, p, no_int) == pytest.approx(0.65, abs=1e-15)
    with_re = ModelSpec(2, include_random_effects=True)
    assert linear_predictor(j, p, with_re) == pytest.approx(7.85, abs=1e-14)


def test_same_channel_touches_interact():
    j = journey((0, 0.0), (0, 0.0))
    p = ModelParams(mu=0.0, gamma=0.5, beta=[1.0], lam=[0.5])
    assert linear_predictor(j, p, ModelSpec(1)) == pytest.approx(2.0 + 0.5 * 2.0)


def test_channel_out_of_range():
    j = journey((3, 0.0))
    p = ModelParams(mu=0.0, gamma=0.0, beta=[0.5], lam=[0.5])
    with pytest.raises(InvalidInputError):
        linear_predictor(j, p, ModelSpec(1))


def test_overflow_reports_numeric_error():
    j = journey((0, 0.0), eval_time=1e6)
    p = ModelParams(mu=0.0, gamma=0.0, beta=[1e300], lam=[1e-300])
    # lambda**delta underflows to 0 which is fine; an overflowing pair term is not
    assert math.isfinite(linear_predictor(j, p, ModelSpec(1)))
    j2 = journey((0, 0.0), (0, 0.0))
    p2 = ModelParams(mu=0.0, gamma=1.0, beta=[1e200], lam=[0.5])
    with pytest.raises(NumericError, match="gamma"):
        linear_predictor(j2, p2, ModelSpec(1))


def test_apply_link_values():
    assert apply_link(0.0, Link.LOGIT) == 0.5
    assert apply_link(3.7, Link.IDENTITY) == 3.7
    tiny = apply_link(-40.0, Link.LOGIT)
    assert 0.0 < tiny <= 1e-17
    assert log_sigmoid(-40.0) == pytest.approx(-40.0 - math.log1p(math.exp(-40.0)))
    assert math.isfinite(log_sigmoid(-1000.0))


def test_sigmoid_stable_and_symmetric():
    x = np.linspace(-800, 800, 4001)
    s = sigmoid(x)
    assert np.all((s >= 0) & (s <= 1))
    np.testing.assert_allclose(s + sigmoid(-x), 1.0, atol=1e-15)


def test_predict_composes_link():
    j = journey((0, 0.0), eval_time=1.0)
    p = ModelParams(mu=0.0, gamma=0.0, beta=[0.5], lam=[0.5])
    assert predict(j, p, ModelSpec(1, Link.LOGIT)) == pytest.approx(1 / (1 + math.exp(-0.25)), abs=1e-15)
    assert predict(j, p, ModelSpec(1)) == linear_predictor(j, p, ModelSpec(1))
    zero = ModelParams(mu=0.0, gamma=0.0, beta=[0.0], lam=[0.5])
    assert predict(j, zero, ModelSpec(1, Link.LOGIT)) == 0.5


def test_journey_validation():
    j = Journey("x", (Touch(0, 0.5), Touch(1, 2.0)), 1.0)
    assert j.eval_time == 2.0
    np.testing.assert_allclose(j.elapsed(), [1.5, 0.0])
    with pytest.raises(InvalidInputError, match="sorted"):
        Journey("x", (Touch(1, 2.0), Touch(0, 0.5)), 1.0)
    with pytest.raises(InvalidInputError):
        Journey("x", (), 1.0)
    with pytest.raises(InvalidInputError):
        Touch(0, -1.0)
    with pytest.raises(InvalidInputError):
        Journey("x", (Touch(0, 2.0),), 1.0, eval_time=1.0)


def test_params_validation():
    with pytest.raises(InvalidInputError):
        ModelParams(mu=0.0, gamma=0.0, beta=[-0.1], lam=[0.5])
    with pytest.raises(InvalidInputError):
        ModelParams(mu=0.0, gamma=0.0, beta=[0.1], lam=[1.0])
    with pytest.raises(InvalidInputError):
        ModelParams(mu=0.0, gamma=0.0, beta=[0.1, 0.2], lam=[0.5])


def test_half_life():
    p = ModelParams(mu=0.0, gamma=0.0, beta=[1.0, 1.0], lam=[0.5, 0.25])
    np.testing.assert_allclose(p.half_life(), [1.0, 0.5])
