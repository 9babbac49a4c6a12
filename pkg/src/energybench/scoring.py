"""Efficiency-ratio scoring and model evaluation metrics.

A building's efficiency ratio (actual over model-predicted source energy
use) is ranked against its peers through a gamma distribution whose CDF is
fitted, by nonlinear least squares initialized at the method-of-moments
estimate, to the empirical cumulative fractions of the sorted ratios. The
resulting 1-100 score is the reversed percentile, so lower ratios score
higher and 75+ marks certification.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import gammainc

from .errors import CalibrationError, DataError, DomainError

CERTIFICATION_THRESHOLD = 75
SCORE_TABLE_VERSION = 1


def compute_eer(actual_source_eui: float, predicted_source_eui: float) -> float:
    """Ratio of actual to model-normalized energy use; lower is better."""
    if predicted_source_eui <= 0:
        raise DomainError(
            f"model predicted non-physical energy {predicted_source_eui}",
            predicted=predicted_source_eui)
    return actual_source_eui / predicted_source_eui


def gamma_cdf(x, shape: float, scale: float):
    return gammainc(shape, np.asarray(x, dtype=float) / scale)


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


@dataclass(frozen=True)
class ScoreTable:
    """Monotone EER -> 1..100 lookup backed by fitted gamma parameters."""

    shape: float
    scale: float
    fit_residual: float     # RMS of CDF-fit residuals at the sample points

    def score(self, eer: float) -> int:
        if not math.isfinite(eer) or eer < 0:
            raise DomainError(f"efficiency ratio must be a non-negative real, got {eer}")
        raw = 100.0 * (1.0 - float(gamma_cdf(eer, self.shape, self.scale)))
        return min(100, max(1, _round_half_away(raw)))

    def to_dict(self) -> dict:
        return {
            "version": SCORE_TABLE_VERSION,
            "shape": self.shape,
            "scale": self.scale,
            "fit_residual": self.fit_residual,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreTable":
        return cls(shape=d["shape"], scale=d["scale"], fit_residual=d["fit_residual"])


def fit_score_table(eers, w=None, max_iter: int = 200) -> ScoreTable:
    """Fit gamma (shape, scale) to the weighted empirical CDF of sorted ratios.

    Plotting positions are Hazen, (rank - 0.5)/n, generalized to cumulative
    weight fractions when weights are present. Initialization is method of
    moments; optimization is bounded least squares on the CDF residuals.
    """
    e = np.asarray(eers, dtype=float)
    if e.ndim != 1 or e.size < 30:
        raise DataError(f"need at least 30 efficiency ratios, got {e.size}")
    if not np.all(np.isfinite(e)) or np.any(e <= 0):
        raise DataError("efficiency ratios must be positive and finite")
    if w is None:
        w = np.ones_like(e)
    else:
        w = np.asarray(w, dtype=float)
        if w.shape != e.shape or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise DataError("weights must be positive, finite, and match the sample")

    order = np.argsort(e, kind="stable")
    es, ws = e[order], w[order]
    total = float(np.sum(ws))
    positions = (np.cumsum(ws) - 0.5 * ws) / total

    mean = float(np.sum(ws * es) / total)
    var = float(np.sum(ws * (es - mean) ** 2) / total)
    if var <= 0:
        raise DataError("efficiency ratios are constant; nothing to calibrate")
    shape0 = mean * mean / var
    scale0 = var / mean

    # optimize log-parameters: positivity is free and the step scale stays
    # sane even when shape and scale differ by many orders of magnitude
    def residuals(logp):
        shape, scale = np.exp(logp)
        return gamma_cdf(es, shape, scale) - positions

    result = optimize.least_squares(
        residuals, x0=[math.log(shape0), math.log(scale0)], max_nfev=max_iter * 2)
    if not result.success:
        raise CalibrationError(
            "gamma CDF fit did not converge", status=int(result.status),
            solver_message=result.message, x0=[shape0, scale0])
    shape, scale = (float(v) for v in np.exp(result.x))
    rms = float(np.sqrt(np.mean(result.fun ** 2)))
    return ScoreTable(shape=shape, scale=scale, fit_residual=rms)


@dataclass(frozen=True)
class ScoreResult:
    score: int
    eer: float
    predicted: float
    certified: bool

    def to_dict(self) -> dict:
        return {"score": self.score, "eer": self.eer, "predicted": self.predicted,
                "certified": self.certified}


def score_building(actual: float, predicted: float, table: ScoreTable) -> ScoreResult:
    """Score one building from its actual and model-predicted energy use."""
    eer = compute_eer(actual, predicted)
    score = table.score(eer)
    return ScoreResult(score=score, eer=eer, predicted=predicted,
                       certified=score >= CERTIFICATION_THRESHOLD)


@dataclass(frozen=True)
class MetricReport:
    """The five comparison metrics; R-squared terms are weighted when weights exist."""

    r2: float
    adj_r2: float
    rmse: float
    nrmse_pct: float
    mape_pct: float
    n: int
    p: int
    mape_excluded: int = 0   # zero-target rows left out of the MAPE mean

    def to_dict(self) -> dict:
        return {
            "r2": self.r2, "adj_r2": self.adj_r2, "rmse": self.rmse,
            "nrmse_pct": self.nrmse_pct, "mape_pct": self.mape_pct,
            "n": self.n, "p": self.p, "mape_excluded": self.mape_excluded,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def format_text(self) -> str:
        rows = [
            ("R2", self.r2), ("adjusted R2", self.adj_r2), ("RMSE", self.rmse),
            ("NRMSE %", self.nrmse_pct), ("MAPE %", self.mape_pct),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v:.6g}" for k, v in rows)


def evaluate(y, yhat, w=None, p: int = 1) -> MetricReport:
    """Comparison metrics for predictions against observations.

    NRMSE normalizes by the observed range of the evaluation set; MAPE drops
    zero-target rows (counted) rather than failing on disclosure-data
    artifacts.
    """
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1:
        raise DataError("observation and prediction vectors must match")
    n = y.size
    if n == 0:
        raise DataError("nothing to evaluate")
    if w is None:
        w = np.ones(n)
    else:
        w = np.asarray(w, dtype=float)
        if w.shape != y.shape or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise DataError("weights must be positive, finite, and match the sample")

    err = y - yhat
    ybar = float(np.sum(w * y) / np.sum(w))
    sst = float(np.sum(w * (y - ybar) ** 2))
    sse = float(np.sum(w * err * err))
    if sst <= 0:
        raise DataError("observations are constant; R-squared and NRMSE are undefined")
    r2 = 1.0 - sse / sst
    if n <= p + 1:
        raise DataError(
            f"adjusted R-squared needs n > p + 1 (n={n}, p={p})", n=n, p=p)
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)

    rmse = float(np.sqrt(np.mean(err * err)))
    y_range = float(np.max(y) - np.min(y))
    nrmse = rmse / y_range * 100.0

    nonzero = y != 0
    excluded = int(np.sum(~nonzero))
    if not np.any(nonzero):
        raise DataError("every observation is zero; MAPE is undefined")
    mape = float(np.mean(np.abs(err[nonzero] / y[nonzero]))) * 100.0

    return MetricReport(r2=r2, adj_r2=adj_r2, rmse=rmse, nrmse_pct=nrmse,
                        mape_pct=mape, n=n, p=p, mape_excluded=excluded)
