import math

import numpy as np
import pytest

from llana.metrics import DegenerateError, evaluate_predictions, lpd, normalized_regret, nrmse, r2
from llana.predictive import PredictiveDistribution

MODE = -0.5 * math.log(2 * math.pi)


def test_nrmse_examples():
    assert nrmse([3.0, 1.0, 2.0], [3.0, 1.0, 2.0]) == 0.0
    assert nrmse([1.0, 0.0], [0.0, 1.0]) == 1.0
    with pytest.raises(DegenerateError):
        nrmse([1.0, 2.0], [4.0, 4.0])
    with pytest.raises(ValueError):
        nrmse([1.0], [1.0, 2.0])


def test_r2_examples():
    t = np.array([1.0, 4.0, 2.0, 8.0])
    assert r2(t, t) == 1.0
    assert abs(r2(np.full(4, t.mean()), t)) < 1e-15
    assert r2(t[::-1], t) < 0
    with pytest.raises(DegenerateError):
        r2([1.0, 2.0], [3.0, 3.0])


def test_lpd_examples():
    assert lpd([PredictiveDistribution(2.0, 1.0)], [2.0]) == pytest.approx(MODE, abs=1e-15)
    assert lpd([PredictiveDistribution(2.0, 0.5)], [2.5]) == pytest.approx(MODE - math.log(0.5) - 0.5, abs=1e-15)
    with pytest.raises(DegenerateError):
        lpd([PredictiveDistribution(2.0, 0.0)], [2.0])


def test_against_scalar_recomputation(rng):
    for _ in range(20):
        n = int(rng.integers(2, 40))
        t = rng.normal(size=n)
        p = t + rng.normal(scale=0.3, size=n)
        s = rng.uniform(0.05, 2.0, n)
        mean_t = sum(t) / n
        sq = sum((a - b) ** 2 for a, b in zip(p, t))
        assert abs(nrmse(p, t) - math.sqrt(sq / n) / (max(t) - min(t))) < 1e-12
        assert abs(r2(p, t) - (1 - sq / sum((a - mean_t) ** 2 for a in t))) < 1e-12
        dens = [math.log(math.exp(-((y - m) ** 2) / (2 * v * v)) / math.sqrt(2 * math.pi * v * v))
                for y, m, v in zip(t, p, s)]
        preds = [PredictiveDistribution(float(m), float(v)) for m, v in zip(p, s)]
        assert abs(lpd(preds, t) - sum(dens) / n) < 1e-12


def test_evaluate_predictions_report(rng):
    t = rng.normal(size=10)
    preds = [PredictiveDistribution(float(v) + 0.1, 1.0) for v in t]
    rep = evaluate_predictions(preds, t, 7)
    assert rep.n_observed == 7 and rep.nrmse >= 0 and math.isfinite(rep.lpd)
    np.testing.assert_allclose(rep.residuals, 0.1, atol=1e-12)


def test_regret_examples():
    assert normalized_regret([0.9, 0.5], 0.1, 1.1).values == pytest.approx((0.8, 0.4), abs=1e-15)
    assert normalized_regret([0.1, 0.7, 0.3], 0.1, 1.1).values == (0.0, 0.0, 0.0)
    with pytest.raises(DegenerateError):
        normalized_regret([0.5], 1.0, 1.0)


def test_regret_run_local_flag():
    curve = normalized_regret([3.0, 1.0, 2.0])
    assert curve.run_local and (curve.f_star_min, curve.f_star_max) == (1.0, 3.0)
    assert curve.values == (1.0, 0.0, 0.0)
    assert not normalized_regret([3.0], 0.0, 4.0).run_local


def test_regret_nonincreasing_and_bounded(rng):
    for _ in range(50):
        scores = rng.uniform(-2, 5, int(rng.integers(1, 30)))
        v = np.array(normalized_regret(scores, -2.0, 5.0).values)
        assert np.all(np.diff(v) <= 0)
        assert np.all((v >= 0) & (v <= 1))
