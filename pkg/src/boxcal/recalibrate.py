"""Post-hoc recalibrators: isotonic probability maps and temperature scaling.

Isotonic recalibration fits a monotone map from predicted probability to
empirical probability (pool-adjacent-violators); temperature scaling divides
each element's predicted variance by a fitted positive scalar. Both leave
predicted means untouched. Interval extraction works through either fitted
model, or through the raw Gaussian when nothing is active.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError, DegenerateFitError, UnreachableLevelError
from .evaluate import DEFAULT_BIN_EDGES, classification_curve, regression_pits
from .gaussian import std_normal_quantile
from .models import IsotonicMap, RecalibrationBundle, TemperatureModel
from .records import BoxElement, Dataset, DetectionRecord, GaussianMarginal


def pava(points: Iterable[tuple[float, float, float]]) -> IsotonicMap:
    """Weighted least-squares monotone fit by pool-adjacent-violators.

    Input triples are (x, y, w) sorted by x; duplicate x values are merged by
    weighted mean before fitting. Knot outputs are clamped to [0, 1].
    """
    pts = [(float(x), float(y), float(w)) for x, y, w in points]
    if not pts:
        raise DataError("pava needs at least one point")
    for x, y, w in pts:
        if w <= 0.0 or not math.isfinite(w):
            raise DataError(f"pava weight {w!r} must be strictly positive")
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DataError("pava points must be finite")
    if any(b[0] < a[0] for a, b in zip(pts, pts[1:])):
        raise ValueError("pava input must be sorted by x")

    merged: list[list[float]] = []  # [x, wy_sum, w_sum]
    for x, y, w in pts:
        if merged and merged[-1][0] == x:
            merged[-1][1] += w * y
            merged[-1][2] += w
        else:
            merged.append([x, w * y, w])

    # Blocks carry (weighted-value sum, weight sum, number of merged points).
    blocks: list[list[float]] = []
    for _, wy, w in merged:
        blocks.append([wy, w, 1])
        while len(blocks) >= 2 and blocks[-2][0] * blocks[-1][1] > blocks[-1][0] * blocks[-2][1]:
            wy1, w1, c1 = blocks.pop()
            blocks[-1][0] += wy1
            blocks[-1][1] += w1
            blocks[-1][2] += c1

    knots = []
    i = 0
    for wy, w, count in blocks:
        value = min(1.0, max(0.0, wy / w))
        for _ in range(count):
            knots.append((merged[i][0], value))
            i += 1
    return IsotonicMap(knots=tuple(knots))


def fit_isotonic_classification(dataset: Dataset,
                                bin_edges: Sequence[float] = DEFAULT_BIN_EDGES,
                                raw_labels: bool = False) -> IsotonicMap:
    """Fit the score-to-probability map on per-bin empirical accuracies.

    The default fits on (bin midpoint, in-bin positive rate) pairs weighted by
    bin occupancy; `raw_labels=True` fits directly on (score, label) pairs
    instead.
    """
    if np.unique(dataset.scores).size < 2:
        raise DegenerateFitError("cannot fit a score map with fewer than 2 distinct scores")
    if raw_labels:
        order = np.argsort(dataset.scores, kind="stable")
        s = dataset.scores[order]
        y = dataset.labels[order].astype(np.float64)
        return pava(zip(s.tolist(), y.tolist(), [1.0] * len(s)))
    curve = classification_curve(dataset, bin_edges)
    pts = [(pt.level, pt.empirical, pt.weight) for pt in curve.points if pt.weight > 0.0]
    return pava(pts)


def fit_isotonic_regression_calibrator(dataset: Dataset, element: BoxElement) -> IsotonicMap:
    """Fit the predicted-CDF-to-empirical-probability map for one element.

    Each record contributes the pair (its predicted CDF value, the fraction
    of records at or below it); ties share their averaged rank.
    """
    n = len(dataset)
    if n < 2:
        raise DegenerateFitError("regression recalibration needs at least 2 records")
    pits = np.sort(regression_pits(dataset, element))
    unique, counts = np.unique(pits, return_counts=True)
    if unique.size < 2:
        raise DegenerateFitError(
            f"{element.key}: all predicted CDF values are identical; nothing to fit"
        )
    # Average 1-based rank of each tie group, as a fraction of n.
    upper = np.cumsum(counts)
    lower = upper - counts + 1
    targets = (lower + upper) / 2.0 / n
    weights = counts / n
    return pava(zip(unique.tolist(), targets.tolist(), weights.tolist()))


def apply_isotonic(m: IsotonicMap, p):
    """Evaluate the fitted map at `p`, clamping outside the knot range."""
    return m.apply(p)


def invert_isotonic(m: IsotonicMap, q: float) -> float:
    """Preimage of `q` under the map, with clamping taken into account.

    Over a flat stretch the preimage is an interval; its midpoint is returned.
    Values outside the map's output range raise `UnreachableLevelError`.
    """
    xs = m.inputs
    ys = m.outputs
    q = float(q)
    if q < ys[0] or q > ys[-1]:
        raise UnreachableLevelError(
            f"probability {q!r} is outside the recalibrator's output range "
            f"[{ys[0]!r}, {ys[-1]!r}]"
        )
    if q <= ys[0]:
        left = 0.0
    else:
        i = int(np.searchsorted(ys, q, side="left"))
        left = xs[i - 1] + (q - ys[i - 1]) * (xs[i] - xs[i - 1]) / (ys[i] - ys[i - 1])
    if q >= ys[-1]:
        right = 1.0
    else:
        j = int(np.searchsorted(ys, q, side="right")) - 1
        right = xs[j] + (q - ys[j]) * (xs[j + 1] - xs[j]) / (ys[j + 1] - ys[j])
    return float((left + right) / 2.0)


def compose_isotonic(outer: IsotonicMap, inner: IsotonicMap) -> IsotonicMap:
    """Piecewise-linear map equal to `outer(inner(p))`."""
    xs = set(float(x) for x in inner.inputs)
    lo, hi = float(inner.outputs[0]), float(inner.outputs[-1])
    in_xs = inner.inputs
    in_ys = inner.outputs
    for u in outer.inputs:
        u = float(u)
        if not lo < u < hi:
            continue
        # Leftmost preimage of u inside a rising stretch of the inner map.
        i = int(np.searchsorted(in_ys, u, side="left"))
        if in_ys[i] == u:
            xs.add(float(in_xs[i]))
        else:
            xs.add(float(in_xs[i - 1] + (u - in_ys[i - 1]) * (in_xs[i] - in_xs[i - 1])
                         / (in_ys[i] - in_ys[i - 1])))
    grid = np.array(sorted(xs))
    values = outer.apply(inner.apply(grid))
    values = np.maximum.accumulate(values)  # guard float fuzz on flat runs
    return IsotonicMap(knots=tuple(zip(grid.tolist(), values.tolist())))


def fit_temperature(dataset: Dataset, element: BoxElement) -> float:
    """Temperature minimizing the scaled-variance NLL, in closed form.

    The per-element optimum of sum_n nll(y_n; mean_n, var_n / T) over T is
    N / sum_n z_n^2 with z_n the standardized residual.
    """
    if len(dataset) == 0:
        raise DataError("dataset is empty")
    j = int(element)
    resid = dataset.ground_truths[:, j] - dataset.means[:, j]
    z2 = resid * resid / dataset.variances[:, j]
    total = float(z2.sum())
    if total == 0.0:
        raise DegenerateFitError(
            f"{element.key}: every residual is zero, so the optimal temperature is unbounded; "
            "check that the recalibration set is disjoint from training and has real residuals"
        )
    return len(dataset) / total


def fit_temperature_model(dataset: Dataset) -> TemperatureModel:
    return TemperatureModel(tuple(fit_temperature(dataset, el) for el in BoxElement))


def apply_temperature(model: TemperatureModel, record: DetectionRecord) -> DetectionRecord:
    """Divide each marginal's variance by its temperature; means unchanged."""
    marginals = tuple(
        GaussianMarginal(m.mean, m.variance / t)
        for m, t in zip(record.marginals, model.temperatures)
    )
    return DetectionRecord(record.id, record.score, record.label, marginals,
                           record.ground_truth)


def apply_temperature_dataset(model: TemperatureModel, dataset: Dataset) -> Dataset:
    scale = np.asarray(model.temperatures, dtype=np.float64)
    return dataset.with_variances(dataset.variances / scale)


def calibrated_interval(bundle: Optional[RecalibrationBundle], record: DetectionRecord,
                        element: BoxElement, level: float) -> tuple[float, float]:
    """Central confidence interval for one element under the active recalibrator.

    With no active recalibrator this is the raw Gaussian interval. An active
    temperature rescales the Gaussian width; an active isotonic map is
    inverted to find the predicted-CDF tail points, which the raw Gaussian
    quantile then maps back to box-encoding units.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"interval level must lie strictly inside (0, 1), got {level!r}")
    m = record.marginals[int(element)]
    sd = math.sqrt(m.variance)
    recal = bundle.for_element(element) if bundle is not None else None
    active = recal.active if recal is not None else None
    if active == "temperature":
        sd = math.sqrt(m.variance / recal.temperature)
        active = None
    if active is None:
        z = std_normal_quantile((1.0 + level) / 2.0)
        return (m.mean - z * sd, m.mean + z * sd)
    q_lo = (1.0 - level) / 2.0
    q_hi = (1.0 + level) / 2.0
    p_lo = invert_isotonic(recal.isotonic, q_lo)
    p_hi = invert_isotonic(recal.isotonic, q_hi)
    if not (0.0 < p_lo < 1.0 and 0.0 < p_hi < 1.0):
        raise UnreachableLevelError(
            f"level {level!r} maps to a degenerate predicted-CDF tail under the isotonic map"
        )
    return (m.mean + sd * std_normal_quantile(p_lo),
            m.mean + sd * std_normal_quantile(p_hi))
