"""Calibration curves, Expected Calibration Error, and error diagnostics.

Classification curves group softmax scores into probability bins and compare
each bin's midpoint against the empirical positive rate inside it. Regression
curves compare each confidence level p against the fraction of ground truths
whose predicted-CDF value falls at or below p. ECE is the weighted absolute
gap between a curve and the diagonal.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .errors import DataError, UndefinedCorrelationError
from .gaussian import marginal_cdf_columns
from .models import CalibrationCurve, CurvePoint
from .records import BoxElement, Dataset

DEFAULT_BIN_EDGES = tuple(i / 10 for i in range(11))
DEFAULT_LEVELS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)

PLOT_DATA_HEADER = "# boxcal plot-data v1"
PLOT_DATA_COLUMNS = "task,element,level,empirical,weight"


def uniform_bin_edges(m: int) -> tuple[float, ...]:
    if m < 1:
        raise DataError(f"need at least one bin, got {m}")
    return tuple(i / m for i in range(m + 1))


def _check_edges(edges: Sequence[float]):
    if len(edges) < 2:
        raise DataError("need at least two bin edges")
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise DataError("bin edges must be strictly increasing")
    if edges[0] != 0.0 or edges[-1] != 1.0:
        raise DataError("bin edges must span [0, 1]")


def classification_curve(dataset: Dataset,
                         bin_edges: Sequence[float] = DEFAULT_BIN_EDGES,
                         scores: Optional[np.ndarray] = None) -> CalibrationCurve:
    """Binned reliability curve for the classification score.

    `scores` overrides the dataset's raw scores (used to evaluate a dataset
    through a fitted score map). Scores tied with a bin edge go to the upper
    bin; the last bin is closed at 1.
    """
    _check_edges(bin_edges)
    if len(dataset) == 0:
        raise DataError("dataset is empty")
    edges = np.asarray(bin_edges, dtype=np.float64)
    s = dataset.scores if scores is None else np.asarray(scores, dtype=np.float64)
    if s.shape != dataset.scores.shape:
        raise DataError("score override length mismatch")
    m = len(edges) - 1
    idx = np.searchsorted(edges, s, side="right") - 1
    idx = np.clip(idx, 0, m - 1)
    counts = np.bincount(idx, minlength=m)
    hits = np.bincount(idx, weights=dataset.labels.astype(np.float64), minlength=m)
    n = len(dataset)
    points = []
    for j in range(m):
        level = (float(edges[j]) + float(edges[j + 1])) / 2.0
        if counts[j] == 0:
            points.append(CurvePoint(level, None, 0.0))
        else:
            points.append(CurvePoint(level, float(hits[j]) / int(counts[j]),
                                     int(counts[j]) / n))
    return CalibrationCurve("classification", None, tuple(points), n)


def regression_pits(dataset: Dataset, element: BoxElement) -> np.ndarray:
    """Predicted-CDF value of each record's ground truth for one element."""
    j = int(element)
    return marginal_cdf_columns(dataset.means[:, j], dataset.variances[:, j],
                                dataset.ground_truths[:, j])


def regression_curve(dataset: Dataset, element: BoxElement,
                     levels: Sequence[float] = DEFAULT_LEVELS,
                     pits: Optional[np.ndarray] = None) -> CalibrationCurve:
    """Confidence-level reliability curve for one regression element.

    Every record contributes at every level, so each of the M levels carries
    weight 1/M. `pits` overrides the raw predicted-CDF values (used to
    evaluate through a fitted probability map).
    """
    if len(dataset) == 0:
        raise DataError("dataset is empty")
    levels = tuple(float(p) for p in levels)
    if not levels or any(b <= a for a, b in zip(levels, levels[1:])):
        raise DataError("levels must be non-empty and strictly increasing")
    if any(not 0.0 < p < 1.0 for p in levels):
        raise DataError("levels must lie strictly inside (0, 1)")
    if pits is None:
        pits = regression_pits(dataset, element)
    pits = np.asarray(pits, dtype=np.float64)
    if pits.shape != (len(dataset),):
        raise DataError("pit override length mismatch")
    n = len(dataset)
    m = len(levels)
    sorted_pits = np.sort(pits)
    counts = np.searchsorted(sorted_pits, np.asarray(levels), side="right")
    points = tuple(
        CurvePoint(p, int(c) / n, 1.0 / m) for p, c in zip(levels, counts)
    )
    return CalibrationCurve("regression", element, points, n)


def ece(curve: CalibrationCurve) -> float:
    """Weighted absolute deviation between the curve and the diagonal."""
    total = 0.0
    for pt in curve.points:
        if pt.empirical is None:
            continue
        total += pt.weight * abs(pt.level - pt.empirical)
    return total


def error_correlation(dataset: Dataset, a: BoxElement, b: BoxElement) -> float:
    """Pearson correlation between the regression errors of two elements."""
    if len(dataset) < 2:
        raise DataError("correlation needs at least two records")
    errors = dataset.ground_truths - dataset.means
    x = errors[:, int(a)]
    y = errors[:, int(b)]
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt(np.dot(xc, xc)))
    sy = float(np.sqrt(np.dot(yc, yc)))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError(
            f"correlation of {a.key} and {b.key} is undefined: an error sequence has zero variance"
        )
    r = float(np.dot(xc, yc)) / (sx * sy)
    return min(1.0, max(-1.0, r))


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def curve_rows(curve: CalibrationCurve) -> list[str]:
    """Delimited data rows for one curve, ECE footer row last."""
    element = curve.element.key if curve.element is not None else ""
    rows = [
        f"{curve.task},{element},{_fmt(pt.level)},{_fmt(pt.empirical)},{_fmt(pt.weight)}"
        for pt in curve.points
    ]
    rows.append(f"{curve.task},{element},ece,{_fmt(ece(curve))},")
    return rows


def curve_report(curve: CalibrationCurve) -> str:
    """Plot-data table for one curve: delimited rows plus an ECE footer."""
    return "\n".join([PLOT_DATA_HEADER, PLOT_DATA_COLUMNS] + curve_rows(curve)) + "\n"
