"""Core data model: detection records and validated datasets.

A detection is one box prediction already matched to its ground truth: a
softmax score with a binary label, plus an independent Gaussian marginal per
box-encoding element. The element order is fixed once for the whole toolkit
and carried explicitly by every file format so mismatches fail fast.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DataError, DatasetValidationError, RecordViolation


class BoxElement(enum.IntEnum):
    """Index of one box-encoding regression element, in canonical order."""

    COS_THETA = 0
    SIN_THETA = 1
    DX = 2
    DY = 3
    LOG_L = 4
    LOG_W = 5

    @property
    def key(self) -> str:
        return self.name.lower()

    @classmethod
    def from_key(cls, key: str) -> "BoxElement":
        try:
            return cls[key.upper()]
        except KeyError:
            raise DataError(f"unknown box element {key!r}") from None


ELEMENT_KEYS = tuple(e.key for e in BoxElement)
N_ELEMENTS = len(ELEMENT_KEYS)


class GaussianMarginal(NamedTuple):
    """Mean and variance of one predicted box element."""

    mean: float
    variance: float


@dataclass(frozen=True, slots=True)
class DetectionRecord:
    """One matched detection: score, label, per-element marginals, ground truth.

    Construction does not validate; `validate_dataset` is the gate that
    enforces the invariants (finite fields, positive variances, score in
    [0, 1], binary label, six elements).
    """

    id: str
    score: float
    label: int
    marginals: tuple[GaussianMarginal, ...]
    ground_truth: tuple[float, ...]


def _record_violations(index: int, rec: DetectionRecord) -> list[RecordViolation]:
    out = []

    def bad(reason):
        out.append(RecordViolation(index, str(rec.id), reason))

    if not isinstance(rec.id, str):
        bad("id must be a string")
    if not math.isfinite(rec.score):
        bad("score is not finite")
    elif not 0.0 <= rec.score <= 1.0:
        bad(f"score {rec.score!r} outside [0, 1]")
    if rec.label not in (0, 1):
        bad(f"label {rec.label!r} is not binary")
    if len(rec.marginals) != N_ELEMENTS:
        bad(f"expected {N_ELEMENTS} marginals, got {len(rec.marginals)}")
    if len(rec.ground_truth) != N_ELEMENTS:
        bad(f"expected {N_ELEMENTS} ground-truth values, got {len(rec.ground_truth)}")
    if len(rec.marginals) == len(rec.ground_truth) == N_ELEMENTS:
        for el, m in zip(BoxElement, rec.marginals):
            if not math.isfinite(m.mean):
                bad(f"{el.key}: mean is not finite")
            if not math.isfinite(m.variance) or m.variance <= 0.0:
                bad(f"{el.key}: variance {m.variance!r} is not strictly positive and finite")
        for el, g in zip(BoxElement, rec.ground_truth):
            if not math.isfinite(g):
                bad(f"{el.key}: ground truth is not finite")
    return out


class Dataset:
    """Immutable, column-oriented view of validated detection records.

    Bulk numerics read the column arrays directly; `__iter__`/`__getitem__`
    materialize `DetectionRecord` views on demand. All arrays are marked
    read-only, so a validated dataset is safe to share across threads.
    """

    __slots__ = ("_ids", "_scores", "_labels", "_means", "_variances", "_gts")

    def __init__(self, ids, scores, labels, means, variances, gts):
        n = len(ids)
        for arr, cols in ((means, N_ELEMENTS), (variances, N_ELEMENTS), (gts, N_ELEMENTS)):
            if arr.shape != (n, cols):
                raise DataError(f"column shape mismatch: {arr.shape} != {(n, cols)}")
        if scores.shape != (n,) or labels.shape != (n,):
            raise DataError("score/label column length mismatch")
        self._ids = tuple(ids)
        self._scores = scores
        self._labels = labels
        self._means = means
        self._variances = variances
        self._gts = gts
        for arr in (scores, labels, means, variances, gts):
            arr.setflags(write=False)

    @classmethod
    def from_records(cls, records: Sequence[DetectionRecord]) -> "Dataset":
        n = len(records)
        ids = [r.id for r in records]
        scores = np.fromiter((r.score for r in records), dtype=np.float64, count=n)
        labels = np.fromiter((r.label for r in records), dtype=np.int64, count=n)
        means = np.empty((n, N_ELEMENTS))
        variances = np.empty((n, N_ELEMENTS))
        gts = np.empty((n, N_ELEMENTS))
        for i, r in enumerate(records):
            for j, m in enumerate(r.marginals):
                means[i, j] = m.mean
                variances[i, j] = m.variance
            gts[i] = r.ground_truth
        return cls(ids, scores, labels, means, variances, gts)

    @classmethod
    def from_columns(cls, ids, scores, labels, means, variances, gts,
                     validate: bool = True) -> "Dataset":
        scores = np.ascontiguousarray(scores, dtype=np.float64)
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        means = np.ascontiguousarray(means, dtype=np.float64)
        variances = np.ascontiguousarray(variances, dtype=np.float64)
        gts = np.ascontiguousarray(gts, dtype=np.float64)
        ds = cls(ids, scores, labels, means, variances, gts)
        if validate:
            bad = ds._first_invalid()
            if bad is not None:
                raise DatasetValidationError(_record_violations(bad, ds[bad]))
        return ds

    def _first_invalid(self):
        ok = (
            np.isfinite(self._scores)
            & (self._scores >= 0.0)
            & (self._scores <= 1.0)
            & ((self._labels == 0) | (self._labels == 1))
            & np.isfinite(self._means).all(axis=1)
            & np.isfinite(self._gts).all(axis=1)
            & np.isfinite(self._variances).all(axis=1)
            & (self._variances > 0.0).all(axis=1)
        )
        if ok.all():
            return None
        return int(np.argmin(ok))

    def __len__(self) -> int:
        return len(self._ids)

    def __getitem__(self, i: int) -> DetectionRecord:
        marginals = tuple(
            GaussianMarginal(float(self._means[i, j]), float(self._variances[i, j]))
            for j in range(N_ELEMENTS)
        )
        return DetectionRecord(
            id=self._ids[i],
            score=float(self._scores[i]),
            label=int(self._labels[i]),
            marginals=marginals,
            ground_truth=tuple(float(v) for v in self._gts[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def scores(self) -> np.ndarray:
        return self._scores

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def means(self) -> np.ndarray:
        return self._means

    @property
    def variances(self) -> np.ndarray:
        return self._variances

    @property
    def ground_truths(self) -> np.ndarray:
        return self._gts

    def select(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            [self._ids[i] for i in indices],
            self._scores[indices].copy(),
            self._labels[indices].copy(),
            self._means[indices].copy(),
            self._variances[indices].copy(),
            self._gts[indices].copy(),
        )

    def with_variances(self, variances: np.ndarray) -> "Dataset":
        """Same dataset with replaced variance columns (means untouched)."""
        variances = np.ascontiguousarray(variances, dtype=np.float64)
        return Dataset(self._ids, self._scores, self._labels, self._means,
                       variances, self._gts)


def validate_dataset(records: Iterable[DetectionRecord], drop_invalid: bool = False):
    """Validate records and build a `Dataset`.

    With `drop_invalid=False` (default) any violation raises
    `DatasetValidationError` carrying the full violation list. With
    `drop_invalid=True` returns `(dataset, violations)` where the dataset
    holds only the records that passed.
    """
    records = list(records)
    if not records:
        raise DataError("dataset is empty")
    violations = []
    keep = []
    for i, rec in enumerate(records):
        v = _record_violations(i, rec)
        if v:
            violations.extend(v)
        else:
            keep.append(rec)
    if not drop_invalid:
        if violations:
            raise DatasetValidationError(violations)
        return Dataset.from_records(records)
    if not keep:
        raise DatasetValidationError(violations)
    return Dataset.from_records(keep), violations
