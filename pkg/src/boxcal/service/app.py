"""FastAPI service exposing the calibration pipeline.

Each endpoint wraps the same `boxcal.pipeline` operations the CLI uses;
datasets and bundles travel as JSON mirroring the dump and model file
formats. Data problems map to 400, degenerate fits and unreachable interval
levels to 409.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, evaluate, pipeline, recalibrate, synth, toytrain
from ..errors import (
    DataError,
    DegenerateFitError,
    TrainingDivergedError,
    UnreachableLevelError,
    UsageError,
)
from ..fileio import bundle_from_json, bundle_to_json
from ..records import BoxElement, Dataset, DetectionRecord, ELEMENT_KEYS, GaussianMarginal, validate_dataset
from . import schemas


def _to_core_dataset(model: schemas.DatasetModel) -> Dataset:
    if model.elements != list(ELEMENT_KEYS):
        raise DataError(
            f"element order {model.elements!r} does not match {list(ELEMENT_KEYS)}"
        )
    records = [
        DetectionRecord(
            id=r.id,
            score=r.score,
            label=r.label,
            marginals=tuple(GaussianMarginal(m, v) for m, v in zip(r.mean, r.var)),
            ground_truth=tuple(r.gt),
        )
        for r in model.records
    ]
    return validate_dataset(records)


def _to_dataset_model(dataset: Dataset) -> schemas.DatasetModel:
    records = [
        schemas.RecordModel(
            id=rid,
            score=float(dataset.scores[i]),
            label=int(dataset.labels[i]),
            mean=[float(v) for v in dataset.means[i]],
            var=[float(v) for v in dataset.variances[i]],
            gt=[float(v) for v in dataset.ground_truths[i]],
        )
        for i, rid in enumerate(dataset.ids)
    ]
    return schemas.DatasetModel(elements=list(ELEMENT_KEYS), records=records)


def _to_core_bundle(model: schemas.BundleModel):
    return bundle_from_json(model.model_dump(by_alias=True))


def _to_bundle_model(bundle) -> schemas.BundleModel:
    return schemas.BundleModel.model_validate(bundle_to_json(bundle))


def _report_rows(report: pipeline.EvalReport) -> list[schemas.CurveRowModel]:
    rows = []
    curves = [report.classification] + [report.regression[el] for el in BoxElement]
    for curve in curves:
        element = curve.element.key if curve.element is not None else ""
        for pt in curve.points:
            rows.append(schemas.CurveRowModel(
                task=curve.task, element=element, level=pt.level,
                empirical=pt.empirical, weight=pt.weight,
            ))
    return rows


def create_app() -> FastAPI:
    app = FastAPI(
        title="boxcal",
        version=__version__,
        description="Calibration evaluation and repair for probabilistic object detections",
    )

    @app.exception_handler(DataError)
    async def _data_error(_: Request, exc: DataError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(UsageError)
    async def _usage_error(_: Request, exc: UsageError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(DegenerateFitError)
    async def _degenerate(_: Request, exc: DegenerateFitError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(TrainingDivergedError)
    async def _diverged(_: Request, exc: TrainingDivergedError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(UnreachableLevelError)
    async def _unreachable(_: Request, exc: UnreachableLevelError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/generate", response_model=schemas.DatasetModel)
    def generate(req: schemas.GenerateRequest):
        cfg = synth.SynthConfig(
            n=req.n,
            seed=req.seed,
            inflation=req.inflation,
            bias=tuple(req.bias),
            variance_ranges=tuple(req.variance_range for _ in ELEMENT_KEYS),
            score_law=req.score_law,
            logit_shift=req.logit_shift,
            compress_gamma=req.compress_gamma,
            compress_center=req.compress_center,
        )
        return _to_dataset_model(synth.generate(cfg))

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate_endpoint(req: schemas.EvaluateRequest):
        dataset = _to_core_dataset(req.dataset)
        bundle = _to_core_bundle(req.bundle) if req.bundle is not None else None
        levels = tuple(req.levels) if req.levels else evaluate.DEFAULT_LEVELS
        report = pipeline.evaluate_dataset(
            dataset, bundle, bin_edges=evaluate.uniform_bin_edges(req.bins), levels=levels
        )
        return schemas.EvaluateResponse(summary=report.ece_by_task(),
                                        rows=_report_rows(report))

    @app.post("/fit", response_model=schemas.BundleModel)
    def fit(req: schemas.FitRequest):
        dataset = _to_core_dataset(req.dataset)
        bundle = pipeline.fit_bundle(
            dataset, req.method, targets=tuple(req.targets),
            bin_edges=evaluate.uniform_bin_edges(req.bins),
            dataset_id=req.dataset_id, fitted_at=req.fitted_at,
        )
        return _to_bundle_model(bundle)

    @app.post("/apply", response_model=schemas.ApplyResponse)
    def apply(req: schemas.ApplyRequest):
        dataset = _to_core_dataset(req.dataset)
        bundle = _to_core_bundle(req.bundle)
        existing = (
            _to_core_bundle(req.existing_annotation)
            if req.existing_annotation is not None else None
        )
        out, annotation = pipeline.apply_bundle(dataset, bundle, existing)
        return schemas.ApplyResponse(
            dataset=_to_dataset_model(out),
            annotation=_to_bundle_model(annotation) if annotation is not None else None,
        )

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest):
        dataset = _to_core_dataset(req.dataset)
        rows = pipeline.sweep(dataset, req.fractions, req.method, req.seed)
        return schemas.SweepResponse(
            rows=[schemas.SweepRow(fraction=f, ece=e) for f, e in rows]
        )

    @app.post("/cross-eval", response_model=schemas.CrossEvalResponse)
    def cross_eval(req: schemas.CrossEvalRequest):
        result = pipeline.cross_eval(
            _to_core_dataset(req.fit_dataset), _to_core_dataset(req.eval_dataset), req.method
        )
        return schemas.CrossEvalResponse(**result)

    @app.post("/train-toy", response_model=schemas.TrainToyResponse)
    def train_toy_endpoint(req: schemas.TrainToyRequest):
        cfg = toytrain.TrainConfig(**req.model_dump())
        _, trace = toytrain.train_toy(cfg)
        return schemas.TrainToyResponse(
            trace=[schemas.TraceEntryModel(**e.__dict__) for e in trace.entries],
            summary=pipeline.train_summary(trace),
        )

    @app.post("/intervals", response_model=schemas.IntervalResponse)
    def intervals(req: schemas.IntervalRequest):
        record = DetectionRecord(
            id=req.record.id,
            score=req.record.score,
            label=req.record.label,
            marginals=tuple(GaussianMarginal(m, v)
                            for m, v in zip(req.record.mean, req.record.var)),
            ground_truth=tuple(req.record.gt),
        )
        validate_dataset([record])
        bundle = _to_core_bundle(req.bundle) if req.bundle is not None else None
        low, high = recalibrate.calibrated_interval(
            bundle, record, BoxElement.from_key(req.element), req.level
        )
        return schemas.IntervalResponse(low=low, high=high)

    @app.post("/correlation", response_model=schemas.CorrelationResponse)
    def correlation(req: schemas.CorrelationRequest):
        dataset = _to_core_dataset(req.dataset)
        r = evaluate.error_correlation(
            dataset, BoxElement.from_key(req.element_a), BoxElement.from_key(req.element_b)
        )
        return schemas.CorrelationResponse(pearson=r)

    return app


app = create_app()
