"""Seeded synthetic detection datasets with controllable miscalibration.

Ground truths are drawn from known per-record Gaussians, so the true
calibration state of every generated dataset is known exactly: reported
variances are the true ones times an inflation factor, reported means can
carry a per-element bias, and classification scores follow one of three laws
(calibrated, logit-shifted, or logit-compressed toward a crossing point).

All draws come from one numpy PCG64 generator seeded with the config seed, in
a fixed documented order, so a config maps to exactly one dataset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .records import Dataset, N_ELEMENTS

SCORE_LAWS = ("calibrated", "shifted", "compressed")

DEFAULT_VARIANCE_RANGE = (0.25, 1.0)


def _default_ranges() -> tuple[tuple[float, float], ...]:
    return tuple(DEFAULT_VARIANCE_RANGE for _ in range(N_ELEMENTS))


def _default_bias() -> tuple[float, ...]:
    return tuple(0.0 for _ in range(N_ELEMENTS))


@dataclass(frozen=True)
class SynthConfig:
    """Recipe for one synthetic dataset.

    `inflation` multiplies true variances into the reported ones (c > 1 means
    the detector claims more uncertainty than it has); `bias` shifts reported
    means away from the true ones, per element. The score law controls how the
    reported softmax score relates to the true positive-class probability:

    * calibrated: reported score equals the true probability;
    * shifted: reported = sigmoid(logit(q) + logit_shift);
    * compressed: reported scores pulled toward `compress_center` in logit
      space by factor `compress_gamma` < 1, which makes the detector
      over-confident below the center and under-confident above it.
    """

    n: int
    seed: int = 0
    inflation: float = 1.0
    bias: tuple[float, ...] = field(default_factory=_default_bias)
    variance_ranges: tuple[tuple[float, float], ...] = field(default_factory=_default_ranges)
    score_law: str = "calibrated"
    logit_shift: float = 0.0
    compress_gamma: float = 0.5
    compress_center: float = 0.7

    def __post_init__(self):
        if self.n < 1:
            raise UsageError(f"need at least one record, got n={self.n}")
        if not (math.isfinite(self.inflation) and self.inflation > 0.0):
            raise UsageError(f"variance inflation must be > 0, got {self.inflation!r}")
        if len(self.bias) != N_ELEMENTS:
            raise UsageError(f"bias needs {N_ELEMENTS} entries")
        if len(self.variance_ranges) != N_ELEMENTS:
            raise UsageError(f"variance_ranges needs {N_ELEMENTS} entries")
        for lo, hi in self.variance_ranges:
            if not (0.0 < lo <= hi) or not math.isfinite(hi):
                raise UsageError(f"bad variance range ({lo!r}, {hi!r})")
        if self.score_law not in SCORE_LAWS:
            raise UsageError(f"unknown score law {self.score_law!r}; expected one of {SCORE_LAWS}")
        if not 0.0 < self.compress_gamma:
            raise UsageError("compress_gamma must be > 0")
        if not 0.0 < self.compress_center < 1.0:
            raise UsageError("compress_center must lie inside (0, 1)")


def _logit(p: np.ndarray) -> np.ndarray:
    return np.log(p) - np.log1p(-p)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _reported_scores(q: np.ndarray, config: SynthConfig) -> np.ndarray:
    if config.score_law == "calibrated":
        return q
    q = np.clip(q, 1e-12, 1.0 - 1e-12)
    if config.score_law == "shifted":
        return _sigmoid(_logit(q) + config.logit_shift)
    center = _logit(np.array([config.compress_center]))[0]
    return _sigmoid(config.compress_gamma * (_logit(q) - center) + center)


def generate(config: SynthConfig) -> Dataset:
    """Draw one dataset. Deterministic per config; already validated."""
    rng = np.random.default_rng(config.seed)
    n = config.n
    true_means = rng.uniform(-1.0, 1.0, size=(n, N_ELEMENTS))
    lows = np.array([r[0] for r in config.variance_ranges])
    highs = np.array([r[1] for r in config.variance_ranges])
    true_vars = rng.uniform(lows, highs, size=(n, N_ELEMENTS))
    gts = true_means + np.sqrt(true_vars) * rng.standard_normal(size=(n, N_ELEMENTS))
    q = rng.uniform(0.0, 1.0, size=n)
    labels = (rng.uniform(0.0, 1.0, size=n) < q).astype(np.int64)
    scores = _reported_scores(q, config)
    means = true_means + np.asarray(config.bias)
    variances = config.inflation * true_vars
    ids = [f"r{i:07d}" for i in range(n)]
    return Dataset.from_columns(ids, scores, labels, means, variances, gts)


def subsample(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    """Uniform sample without replacement, order preserved, at least 1 record."""
    if not 0.0 < fraction <= 1.0:
        raise UsageError(f"fraction must lie in (0, 1], got {fraction!r}")
    n = len(dataset)
    k = max(1, int(round(fraction * n)))
    if k >= n:
        return dataset
    idx = np.sort(np.random.default_rng(seed).choice(n, size=k, replace=False))
    return dataset.select(idx)


def split_half(dataset: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic 50:50 split into (first half, held-out half)."""
    n = len(dataset)
    if n < 2:
        raise UsageError("cannot split a dataset with fewer than 2 records")
    k = n // 2
    sel = np.sort(np.random.default_rng(seed).choice(n, size=k, replace=False))
    mask = np.zeros(n, dtype=bool)
    mask[sel] = True
    rest = np.flatnonzero(~mask)
    return dataset.select(sel), dataset.select(rest)
