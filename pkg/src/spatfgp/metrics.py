"""Prediction quality indicators and flood-category summaries."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateVarianceError, ParameterError, ShapeError


def _pair(test, predicted):
    t = np.asarray(test, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if t.shape != p.shape:
        raise ShapeError(f"test ({t.size}) and predicted ({p.size}) lengths differ")
    return t, p


def rmse(test, predicted) -> float:
    t, p = _pair(test, predicted)
    return float(np.sqrt(np.mean((t - p) ** 2)))


def q2(test, predicted) -> float:
    """``1 - SSE / SStot`` with SStot taken about the test mean."""
    t, p = _pair(test, predicted)
    if t.size < 2:
        raise ShapeError("Q2 needs at least two test values")
    sstot = float(np.sum((t - t.mean()) ** 2))
    if sstot <= 0.0:
        raise DegenerateVarianceError("test values have zero variance; use q2_pooled")
    return 1.0 - float(np.sum((t - p) ** 2)) / sstot


def q2_pooled(test, predicted, pooled_variance: float) -> float:
    """``1 - MSE / pooled_variance``; defined for constant test vectors."""
    if not np.isfinite(pooled_variance) or pooled_variance <= 0:
        raise ParameterError(f"pooled variance must be positive, got {pooled_variance}")
    t, p = _pair(test, predicted)
    return 1.0 - float(np.mean((t - p) ** 2)) / pooled_variance


def ca(test, predicted_mean, predicted_sd, c: float) -> float:
    """Fraction of test values inside ``mean +/- c * sd`` (per-point sd)."""
    if c < 0:
        raise ParameterError(f"c must be nonnegative, got {c}")
    t, m = _pair(test, predicted_mean)
    sd = np.asarray(predicted_sd, dtype=float).ravel()
    if sd.shape != t.shape:
        raise ShapeError("sd length differs from test length")
    if np.any(sd < 0):
        raise DataError("standard deviations must be nonnegative")
    if t.size == 0:
        raise ShapeError("empty test vector")
    if np.isinf(c):
        return 1.0
    return float(np.mean(np.abs(t - m) <= c * sd))


@dataclass
class MetricReport:
    rmse: float
    q2: float | None
    ca: dict = field(default_factory=dict)
    n_test: int = 0
    q2_pooled: float | None = None

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "q2": self.q2,
            "q2_pooled": self.q2_pooled,
            "ca": {str(k): v for k, v in self.ca.items()},
            "n_test": self.n_test,
        }


def metric_report(test, mean, sd=None, c_levels=(1.0, 2.0, 3.0), pooled_variance=None) -> MetricReport:
    """All indicators at once; Q2 is ``None`` when the test variance is zero."""
    t, m = _pair(test, mean)
    try:
        q = q2(t, m)
    except (DegenerateVarianceError, ShapeError):
        q = None
    report = MetricReport(rmse=rmse(t, m), q2=q, n_test=int(t.size))
    if sd is not None:
        report.ca = {float(c): ca(t, m, sd, c) for c in c_levels}
    if pooled_variance is not None:
        report.q2_pooled = q2_pooled(t, m, pooled_variance)
    return report


class FloodCategory(enum.IntEnum):
    MINOR = 0
    MODERATE = 1
    SERIOUS = 2
    SEVERE = 3


# upper bounds (inclusive) of the first three categories, in meters
FLOOD_THRESHOLDS = (0.5, 1.0, 1.5)


def classify_flood(h: float) -> FloodCategory:
    if not np.isfinite(h) or h < 0:
        raise DataError(f"water height must be nonnegative, got {h}")
    for cat, upper in zip(FloodCategory, FLOOD_THRESHOLDS):
        if h <= upper:
            return cat
    return FloodCategory.SEVERE


def classify_floods(heights) -> np.ndarray:
    h = np.asarray(heights, dtype=float)
    if np.any(~np.isfinite(h)) or np.any(h < 0):
        raise DataError("water heights must be nonnegative")
    return np.searchsorted(np.asarray(FLOOD_THRESHOLDS), h, side="left")


def category_proportions(heights) -> np.ndarray:
    """Share of values per category (minor, moderate, serious, severe)."""
    cats = classify_floods(np.ravel(heights))
    if cats.size == 0:
        raise ShapeError("no values to classify")
    counts = np.bincount(cats, minlength=len(FloodCategory))
    return counts / counts.sum()
