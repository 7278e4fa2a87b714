import math

import numpy as np
import pytest

from gp_oracle import dense_lml, dense_posterior
from llana.gp import (
    GpBounds,
    NumericalError,
    _cholesky_with_jitter,
    GpHyperparams,
    gp_condition,
    gp_fit,
    gp_log_marginal_likelihood,
    gp_predict,
    gp_predict_many,
    se_ard_kernel,
)
from llana.space import SizeError


def _random_instance(rng, n, d):
    x = rng.random((n, d))
    y = np.sin(3 * x).sum(axis=1) + 0.1 * rng.standard_normal(n)
    hyper = GpHyperparams(
        float(rng.uniform(0.5, 2.0)), tuple(rng.uniform(0.3, 2.0, d)), float(10 ** rng.uniform(-4, -1))
    )
    return x, y, hyper


def test_predict_matches_dense_oracle_1d(rng):
    x = rng.random((5, 1))
    y = rng.standard_normal(5)
    hyper = GpHyperparams(1.3, (0.4,), 1e-3)
    xq = np.linspace(-0.2, 1.2, 17)[:, None]
    model = gp_condition(x, y, hyper)
    mean, std = gp_predict_many(model, xq)
    m_ref, v_ref = dense_posterior(x, y, xq, 1.3, (0.4,), 1e-3 + model.jitter)
    np.testing.assert_allclose(mean, m_ref, atol=1e-8)
    np.testing.assert_allclose(std**2, v_ref, atol=1e-8)


def test_model_factor_invariants(rng):
    x, y, hyper = _random_instance(rng, 12, 3)
    m = gp_condition(x, y, hyper)
    kn = se_ard_kernel(x, x, hyper) + (hyper.noise_variance + m.jitter) * np.eye(12)
    np.testing.assert_allclose(m.chol @ m.chol.T, kn, atol=1e-8)
    np.testing.assert_allclose(kn @ m.alpha, m.train_y, atol=1e-8)


def test_single_point_interpolates():
    hyper = GpHyperparams(1.0, (0.3, 0.3), 1e-8)
    m = gp_condition([[0.2, 0.7]], [4.2], hyper)
    p = gp_predict(m, [0.2, 0.7])
    assert abs(p.mean - 4.2) < 1e-3
    assert p.std <= 1e-3 * m.y_std


def test_single_point_closed_form_posterior():
    # 1x1 posterior by hand at fixed unstandardized hyperparameters
    sf2, ls, sn2 = 2.0, 0.5, 1e-8
    m = gp_condition([[0.3]], [1.7], GpHyperparams(sf2, (ls,), sn2), standardize=False)
    xq = 0.55
    k = sf2 * math.exp(-0.5 * ((xq - 0.3) / ls) ** 2)
    c = sf2 + sn2 + m.jitter
    p = gp_predict(m, [xq])
    assert abs(p.mean - k / c * 1.7) < 1e-12
    assert abs(p.std**2 - (sf2 - k * k / c)) < 1e-12


def test_far_query_reverts_to_prior():
    m = gp_condition([[0.0], [0.1]], [1.0, 3.0], GpHyperparams(1.5, (0.05,), 1e-4))
    p = gp_predict(m, [50.0])
    assert abs(p.mean - m.y_mean) < 1e-6
    assert abs(p.std - math.sqrt(1.5) * m.y_std) < 1e-6


def test_duplicate_rows_fit():
    x = np.array([[0.5, 0.5]] * 6)
    m = gp_condition(x, np.ones(6), GpHyperparams(1.0, (0.5, 0.5), 1e-12))
    assert m.jitter == pytest.approx(1e-9)
    fitted = gp_fit(x, np.ones(6), restarts=2, seed=0)
    assert np.isfinite(gp_predict(fitted, [0.5, 0.5]).mean)


def test_jitter_escalates_then_gives_up():
    q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((3, 3)))
    indefinite = q @ np.diag([1.0, 1.0, -3e-8]) @ q.T
    chol, jitter = _cholesky_with_jitter(indefinite, 1.0)
    assert jitter == pytest.approx(1e-7)
    assert np.all(np.isfinite(chol))
    with pytest.raises(NumericalError):
        _cholesky_with_jitter(np.diag([1.0, -1.0]), 1.0)


def test_empty_training_set_is_a_size_error():
    with pytest.raises(SizeError):
        gp_fit(np.zeros((0, 2)), np.zeros(0))


def test_lml_scalar_case():
    m = gp_condition([[0.0]], [0.8], GpHyperparams(1.2, (1.0,), 0.3), standardize=False)
    c = 1.5 + m.jitter
    expected = -0.5 * 0.8**2 / c - 0.5 * math.log(c) - 0.5 * math.log(2 * math.pi)
    assert abs(gp_log_marginal_likelihood(m) - expected) < 1e-12


def test_lml_matches_dense_determinant(rng):
    for _ in range(5):
        x, y, hyper = _random_instance(rng, 6, 2)
        m = gp_condition(x, y, hyper, standardize=False)
        ref = dense_lml(x, y, hyper.signal_variance, hyper.lengthscales, hyper.noise_variance + m.jitter)
        assert abs(gp_log_marginal_likelihood(m) - ref) < 1e-8


def test_lml_and_predictions_permutation_invariant(rng):
    x, y, hyper = _random_instance(rng, 15, 3)
    perm = rng.permutation(15)
    a, b = gp_condition(x, y, hyper), gp_condition(x[perm], y[perm], hyper)
    assert abs(gp_log_marginal_likelihood(a) - gp_log_marginal_likelihood(b)) < 1e-10
    xq = rng.random((20, 3))
    for u, v in zip(gp_predict_many(a, xq), gp_predict_many(b, xq)):
        np.testing.assert_allclose(u, v, atol=1e-10)


def test_fit_beats_every_restart_initialization(rng):
    x = rng.random((20, 3))
    y = np.cos(4 * x[:, 0]) + x[:, 1] ** 2
    m = gp_fit(x, y, restarts=8, seed=3)
    lml = gp_log_marginal_likelihood(m)
    assert len(m.restarts) == 8
    assert all(lml >= r.initial_lml - 1e-9 for r in m.restarts)
    lo, hi = GpBounds().log_box(3)
    theta = m.hyper.to_log_vector()
    assert np.all(theta >= lo - 1e-12) and np.all(theta <= hi + 1e-12)


def test_fit_is_deterministic(rng):
    x = rng.random((10, 2))
    y = x.sum(axis=1)
    a, b = gp_fit(x, y, seed=1), gp_fit(x, y, seed=1)
    assert a.hyper == b.hyper


def test_variance_nonnegative_and_monotone_in_data(rng):
    hyper = GpHyperparams(1.0, (0.2, 0.3), 1e-3)
    x = rng.random((8, 2))
    y = rng.standard_normal(8)
    xq = rng.random((50, 2))
    _, before = gp_predict_many(gp_condition(x, y, hyper, standardize=False), xq)
    x2, y2 = np.vstack([x, rng.random((1, 2))]), np.append(y, 0.3)
    _, after = gp_predict_many(gp_condition(x2, y2, hyper, standardize=False), xq)
    assert np.all(before >= 0)
    assert np.all(after <= before + 1e-12)


def test_fit_pins_hyperparameters_with_equal_bounds(rng):
    x = rng.random((6, 1))
    bounds = GpBounds(noise_variance=(1e-8, 1e-8))
    m = gp_fit(x, x[:, 0] ** 2, bounds=bounds, restarts=2)
    assert abs(m.hyper.noise_variance - 1e-8) < 1e-20
