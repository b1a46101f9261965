"""Pydantic request/response models for the HTTP service.

The wire shapes mirror the file formats: records carry the same six-element
vectors as dump lines, and bundles use the same versioned structure as the
model file, so payloads and files are interchangeable.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..fileio import BUNDLE_SCHEMA
from ..records import ELEMENT_KEYS, N_ELEMENTS

ElementKey = Literal["cos_theta", "sin_theta", "dx", "dy", "log_l", "log_w"]


class RecordModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    score: float
    label: int
    mean: list[float] = Field(min_length=N_ELEMENTS, max_length=N_ELEMENTS)
    var: list[float] = Field(min_length=N_ELEMENTS, max_length=N_ELEMENTS)
    gt: list[float] = Field(min_length=N_ELEMENTS, max_length=N_ELEMENTS)


class DatasetModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    elements: list[str] = Field(default_factory=lambda: list(ELEMENT_KEYS))
    records: list[RecordModel] = Field(min_length=1)


class IsotonicMapModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    knots: list[tuple[float, float]] = Field(min_length=1)


class ElementRecalibrationModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    isotonic: Optional[IsotonicMapModel] = None
    temperature: Optional[float] = None
    active: Optional[Literal["isotonic", "temperature"]] = None


class ProvenanceModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dataset: str = ""
    fitted_at: Optional[str] = None


class BundleModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    schema_version: str = Field(default=BUNDLE_SCHEMA, alias="schema")
    provenance: ProvenanceModel = Field(default_factory=ProvenanceModel)
    classification: Optional[IsotonicMapModel] = None
    regression: dict[ElementKey, ElementRecalibrationModel]


class GenerateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(gt=0)
    seed: int = 0
    inflation: float = 1.0
    bias: list[float] = Field(default_factory=lambda: [0.0] * N_ELEMENTS,
                              min_length=N_ELEMENTS, max_length=N_ELEMENTS)
    variance_range: tuple[float, float] = (0.25, 1.0)
    score_law: Literal["calibrated", "shifted", "compressed"] = "calibrated"
    logit_shift: float = 0.0
    compress_gamma: float = 0.5
    compress_center: float = 0.7


class EvaluateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dataset: DatasetModel
    bins: int = Field(default=10, ge=1)
    levels: Optional[list[float]] = None
    bundle: Optional[BundleModel] = None


class CurveRowModel(BaseModel):
    task: str
    element: str
    level: float
    empirical: Optional[float]
    weight: float


class EvaluateResponse(BaseModel):
    summary: dict[str, float]
    rows: list[CurveRowModel]


class FitRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dataset: DatasetModel
    method: Literal["isotonic", "temperature"]
    targets: list[Literal["classification", "regression"]] = Field(
        default_factory=lambda: ["classification", "regression"]
    )
    bins: int = Field(default=10, ge=1)
    dataset_id: str = ""
    fitted_at: Optional[str] = None


class ApplyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dataset: DatasetModel
    bundle: BundleModel
    existing_annotation: Optional[BundleModel] = None


class ApplyResponse(BaseModel):
    dataset: DatasetModel
    annotation: Optional[BundleModel]


class SweepRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dataset: DatasetModel
    fractions: list[float] = Field(min_length=1)
    method: Literal["isotonic", "temperature"]
    seed: int = 0


class SweepRow(BaseModel):
    fraction: float
    ece: float


class SweepResponse(BaseModel):
    rows: list[SweepRow]


class CrossEvalRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    fit_dataset: DatasetModel
    eval_dataset: DatasetModel
    method: Literal["isotonic", "temperature"]


class CrossEvalResponse(BaseModel):
    baseline: float
    recalibrated: float


class TrainToyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lam: float = Field(default=0.1, ge=0.0)
    epochs: int = Field(default=400, gt=0)
    pretrain_epochs: int = Field(default=5, ge=0)
    learning_rate: float = Field(default=0.01, gt=0.0)
    pretrain_learning_rate: float = Field(default=0.05, gt=0.0)
    batch_size: int = Field(default=32, gt=0)
    seed: int = 0
    hidden: int = Field(default=32, gt=0)
    train_n: int = Field(default=200, gt=0)
    holdout_n: int = Field(default=2000, gt=0)
    norm: Literal["l1", "l2"] = "l1"
    init_log_variance: float = 2.0


class TraceEntryModel(BaseModel):
    epoch: int
    loss_reg: float
    loss_calib: float
    holdout_l2: float
    holdout_ece: float


class TrainToyResponse(BaseModel):
    trace: list[TraceEntryModel]
    summary: dict[str, float]


class IntervalRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    record: RecordModel
    element: ElementKey
    level: float = Field(gt=0.0, lt=1.0)
    bundle: Optional[BundleModel] = None


class IntervalResponse(BaseModel):
    low: float
    high: float


class CorrelationRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dataset: DatasetModel
    element_a: ElementKey
    element_b: ElementKey


class CorrelationResponse(BaseModel):
    pearson: float


class HealthResponse(BaseModel):
    status: str
    version: str
