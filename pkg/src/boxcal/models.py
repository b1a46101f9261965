"""Calibration curves and fitted recalibration models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError
from .records import BoxElement

WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True, slots=True)
class CurvePoint:
    level: float
    empirical: Optional[float]  # None for bins that received no samples
    weight: float


@dataclass(frozen=True)
class CalibrationCurve:
    """Reliability-diagram data: predicted level vs empirical probability.

    `task` is "classification" or "regression"; regression curves carry the
    element they describe. Weights sum to one; empty bins carry weight zero
    and an absent empirical value.
    """

    task: str
    element: Optional[BoxElement]
    points: tuple[CurvePoint, ...]
    total_count: int

    def __post_init__(self):
        if self.task not in ("classification", "regression"):
            raise DataError(f"unknown curve task {self.task!r}")
        if self.task == "regression" and self.element is None:
            raise DataError("regression curve needs an element")
        if not self.points:
            raise DataError("curve has no points")
        levels = [p.level for p in self.points]
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise DataError("curve levels must be strictly increasing")
        wsum = math.fsum(p.weight for p in self.points)
        if abs(wsum - 1.0) > WEIGHT_SUM_TOL:
            raise DataError(f"curve weights sum to {wsum!r}, expected 1")
        for p in self.points:
            if not 0.0 <= p.level <= 1.0 or p.weight < 0.0:
                raise DataError("curve point out of range")
            if (p.empirical is None) != (p.weight == 0.0):
                raise DataError("empirical must be absent exactly for zero-weight bins")
            if p.empirical is not None and not 0.0 <= p.empirical <= 1.0:
                raise DataError("empirical probability out of [0, 1]")


@dataclass(frozen=True)
class IsotonicMap:
    """Monotone piecewise-linear map from probability to probability.

    Knot inputs are strictly increasing, outputs non-decreasing, everything
    inside [0, 1]. Between knots the map interpolates linearly; outside the
    knot range it clamps to the first/last knot output.
    """

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.knots:
            raise DataError("isotonic map has no knots")
        xs = [k[0] for k in self.knots]
        ys = [k[1] for k in self.knots]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise DataError("isotonic knot inputs must be strictly increasing")
        if any(b < a for a, b in zip(ys, ys[1:])):
            raise DataError("isotonic knot outputs must be non-decreasing")
        if min(xs) < 0.0 or max(xs) > 1.0 or min(ys) < 0.0 or max(ys) > 1.0:
            raise DataError("isotonic knots must lie in [0, 1]")

    @property
    def inputs(self) -> np.ndarray:
        return np.array([k[0] for k in self.knots])

    @property
    def outputs(self) -> np.ndarray:
        return np.array([k[1] for k in self.knots])

    def apply(self, p):
        """Evaluate the map at scalar or array `p` (clamping outside knots)."""
        xs = self.inputs
        ys = self.outputs
        if isinstance(p, np.ndarray):
            return np.interp(p, xs, ys)
        return float(np.interp(float(p), xs, ys))

    @classmethod
    def identity(cls) -> "IsotonicMap":
        return cls(knots=((0.0, 0.0), (1.0, 1.0)))


@dataclass(frozen=True)
class TemperatureModel:
    """One positive scaling temperature per regression element."""

    temperatures: tuple[float, ...]

    def __post_init__(self):
        if len(self.temperatures) != len(BoxElement):
            raise DataError(f"expected {len(BoxElement)} temperatures")
        for el, t in zip(BoxElement, self.temperatures):
            if not math.isfinite(t) or t <= 0.0:
                raise DataError(f"{el.key}: temperature {t!r} must be positive and finite")

    def for_element(self, element: BoxElement) -> float:
        return self.temperatures[int(element)]


@dataclass(frozen=True)
class ElementRecalibration:
    """Fitted recalibrators for one regression element.

    `active` names the model used for interval extraction and evaluation;
    at most one model is active per element.
    """

    isotonic: Optional[IsotonicMap] = None
    temperature: Optional[float] = None
    active: Optional[str] = None  # "isotonic" | "temperature" | None

    def __post_init__(self):
        if self.active not in (None, "isotonic", "temperature"):
            raise DataError(f"unknown active recalibrator {self.active!r}")
        if self.active == "isotonic" and self.isotonic is None:
            raise DataError("active isotonic recalibrator is missing")
        if self.active == "temperature" and self.temperature is None:
            raise DataError("active temperature recalibrator is missing")
        if self.temperature is not None and (
            not math.isfinite(self.temperature) or self.temperature <= 0.0
        ):
            raise DataError(f"temperature {self.temperature!r} must be positive and finite")


@dataclass(frozen=True)
class Provenance:
    dataset: str = ""
    fitted_at: Optional[str] = None


def _empty_regression() -> tuple[ElementRecalibration, ...]:
    return tuple(ElementRecalibration() for _ in BoxElement)


@dataclass(frozen=True)
class RecalibrationBundle:
    """Everything fitted in one recalibration pass, plus its provenance."""

    classification: Optional[IsotonicMap] = None
    regression: tuple[ElementRecalibration, ...] = field(default_factory=_empty_regression)
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self):
        if len(self.regression) != len(BoxElement):
            raise DataError(f"expected {len(BoxElement)} element recalibrations")

    def for_element(self, element: BoxElement) -> ElementRecalibration:
        return self.regression[int(element)]

    def replace_element(self, element: BoxElement,
                        recal: ElementRecalibration) -> "RecalibrationBundle":
        reg = list(self.regression)
        reg[int(element)] = recal
        return RecalibrationBundle(self.classification, tuple(reg), self.provenance)
