import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import gamma as sgamma

from energybench.errors import CalibrationError, DataError, DomainError
from energybench.scoring import (
    MetricReport,
    ScoreTable,
    compute_eer,
    evaluate,
    fit_score_table,
    gamma_cdf,
    score_building,
)


def test_eer_ratios():
    assert compute_eer(50.0, 100.0) == pytest.approx(0.5)
    assert compute_eer(100.0, 100.0) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        compute_eer(100.0, 0.0)
    with pytest.raises(DomainError):
        compute_eer(100.0, -5.0)


def test_gamma_recovery_from_seeded_sample():
    rng = np.random.default_rng(123)
    sample = rng.gamma(shape=2.0, scale=3.0, size=10_000)
    table = fit_score_table(sample)
    assert table.shape == pytest.approx(2.0, abs=0.1)
    assert table.scale == pytest.approx(3.0, abs=0.15)


def test_exponential_is_gamma_shape_one():
    rng = np.random.default_rng(77)
    sample = rng.exponential(scale=1.0, size=10_000)
    table = fit_score_table(sample)
    assert table.shape == pytest.approx(1.0, abs=0.05)


def test_median_scores_fifty():
    rng = np.random.default_rng(5)
    table = fit_score_table(rng.gamma(2.5, 1.2, size=5000))
    median = float(sgamma.ppf(0.5, table.shape, scale=table.scale))
    assert abs(table.score(median) - 50) <= 1


def test_score_monotone_on_grid():
    rng = np.random.default_rng(9)
    table = fit_score_table(rng.gamma(2.0, 0.5, size=2000))
    grid = np.linspace(1e-6, float(sgamma.ppf(0.999, table.shape, scale=table.scale)),
                       1000)
    scores = [table.score(float(e)) for e in grid]
    assert all(a >= b for a, b in zip(scores, scores[1:]))
    assert min(scores) >= 1 and max(scores) <= 100


def test_gamma_cdf_against_quadrature_oracle():
    shape, scale = 2.3, 1.7
    norm = math.gamma(shape) * scale ** shape

    def density(t):
        return t ** (shape - 1) * math.exp(-t / scale) / norm

    for x in (0.1, 0.5, 1.0, 2.0, 5.0, 10.0):
        expected, err = integrate.quad(density, 0.0, x, epsabs=1e-12, epsrel=1e-12)
        assert float(gamma_cdf(x, shape, scale)) == pytest.approx(expected, abs=1e-9)


def test_certification_boundary():
    rng = np.random.default_rng(11)
    table = fit_score_table(rng.gamma(2.0, 1.0, size=5000))
    e75 = float(sgamma.ppf(0.25, table.shape, scale=table.scale))
    e74 = float(sgamma.ppf(0.262, table.shape, scale=table.scale))
    r75 = score_building(e75, 1.0, table)
    r74 = score_building(e74, 1.0, table)
    assert r75.score == 75 and r75.certified
    assert r74.score == 74 and not r74.certified


def test_scores_monotone_in_eer_and_clamped():
    rng = np.random.default_rng(2)
    table = fit_score_table(rng.gamma(3.0, 0.4, size=1000))
    low = score_building(0.8, 1.0, table)
    high = score_building(1.2, 1.0, table)
    assert low.score >= high.score
    assert score_building(1e-9, 1.0, table).score == 100
    assert score_building(1e9, 1.0, table).score == 1


def test_fit_rejects_bad_inputs():
    with pytest.raises(DataError):
        fit_score_table(np.ones(10))           # too few
    with pytest.raises(DataError):
        fit_score_table(np.append(np.ones(40), -1.0))
    with pytest.raises(DataError):
        fit_score_table(np.full(50, 2.0))      # constant: no spread to fit


def test_fit_non_convergence_reports_calibration_error():
    rng = np.random.default_rng(1)
    sample = rng.gamma(4.0, 2.0, size=500)
    with pytest.raises(CalibrationError):
        fit_score_table(sample, max_iter=1)


def test_score_table_round_trip():
    rng = np.random.default_rng(3)
    table = fit_score_table(rng.gamma(2.0, 1.0, size=500))
    back = ScoreTable.from_dict(table.to_dict())
    assert back.score(1.0) == table.score(1.0)


# --- metrics ---


def test_golden_metric_values():
    y = np.asarray([100.0, 200.0])
    yhat = np.asarray([110.0, 180.0])
    rep = evaluate(y, yhat, p=0)
    assert rep.mape_pct == pytest.approx(10.0, abs=1e-10)
    assert rep.rmse == pytest.approx(math.sqrt(250.0), abs=1e-10)
    assert rep.nrmse_pct == pytest.approx(math.sqrt(250.0) / 100.0 * 100.0, abs=1e-10)


def test_adjusted_r2_golden_value():
    # n=10, p=2, R2=0.9 synthesized through the formula path
    rng = np.random.default_rng(0)
    # construct y, yhat with an exact R2 of 0.9: residual SS = 0.1 * total SS
    y = np.arange(10.0)
    ybar = y.mean()
    sst = np.sum((y - ybar) ** 2)
    resid = y - ybar
    resid = resid / np.sqrt(np.sum(resid ** 2)) * np.sqrt(0.1 * sst)
    yhat = y - resid
    rep = evaluate(y, yhat, p=2)
    assert rep.r2 == pytest.approx(0.9, abs=1e-12)
    assert rep.adj_r2 == pytest.approx(0.8714285714285714, abs=1e-10)


def test_perfect_fit_and_null_model():
    y = np.asarray([1.0, 2.0, 3.0, 4.0])
    perfect = evaluate(y, y, p=1)
    assert perfect.r2 == 1.0 and perfect.rmse == 0.0
    assert perfect.nrmse_pct == 0.0 and perfect.mape_pct == 0.0
    null = evaluate(y, np.full(4, y.mean()), p=1)
    assert null.r2 == pytest.approx(0.0, abs=1e-12)


def test_weight_rescale_invariance():
    rng = np.random.default_rng(4)
    y = rng.uniform(1, 10, 30)
    yhat = y + rng.normal(0, 1, 30)
    w = rng.uniform(0.5, 2.0, 30)
    a = evaluate(y, yhat, w, p=2)
    b = evaluate(y, yhat, w * 42.0, p=2)
    for key, va in a.to_dict().items():
        assert b.to_dict()[key] == pytest.approx(va, rel=1e-12)


def test_r2_identity_for_unit_weights():
    rng = np.random.default_rng(6)
    y = rng.uniform(0, 5, 50)
    yhat = y + rng.normal(0, 0.5, 50)
    rep = evaluate(y, yhat, p=1)
    expected = 1.0 - rep.rmse ** 2 * len(y) / np.sum((y - y.mean()) ** 2)
    assert rep.r2 == pytest.approx(expected, abs=1e-12)


def test_mape_excludes_zero_targets_with_count():
    y = np.asarray([0.0, 100.0, 200.0])
    yhat = np.asarray([5.0, 110.0, 180.0])
    rep = evaluate(y, yhat, p=0)
    assert rep.mape_excluded == 1
    assert rep.mape_pct == pytest.approx(10.0)


def test_degenerate_inputs_error():
    with pytest.raises(DataError):
        evaluate(np.full(5, 3.0), np.arange(5.0), p=1)   # zero range
    with pytest.raises(DataError):
        evaluate(np.arange(3.0), np.arange(3.0), p=2)    # n <= p + 1


def test_metric_report_serialization():
    rep = evaluate(np.asarray([1.0, 2.0, 4.0]), np.asarray([1.0, 2.5, 3.5]), p=1)
    assert isinstance(rep, MetricReport)
    assert set(rep.to_dict()) >= {"r2", "adj_r2", "rmse", "nrmse_pct", "mape_pct"}
    assert "NRMSE" in rep.format_text()
