"""boxcal: calibration evaluation and repair for probabilistic object detections."""

from .models import (
    CalibrationCurve,
    CurvePoint,
    ElementRecalibration,
    IsotonicMap,
    Provenance,
    RecalibrationBundle,
    TemperatureModel,
)
from .records import (
    BoxElement,
    Dataset,
    DetectionRecord,
    GaussianMarginal,
    validate_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "BoxElement",
    "CalibrationCurve",
    "CurvePoint",
    "Dataset",
    "DetectionRecord",
    "ElementRecalibration",
    "GaussianMarginal",
    "IsotonicMap",
    "Provenance",
    "RecalibrationBundle",
    "TemperatureModel",
    "validate_dataset",
    "__version__",
]
