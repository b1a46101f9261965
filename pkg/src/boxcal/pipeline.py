"""End-to-end operations shared by the CLI and the HTTP service.

Everything here composes the core modules: evaluate a dump (optionally
through a recalibration bundle), fit bundles, apply them, run the
recalibration-set-size sweep and the cross-distribution comparison, and run
the toy trainer. All tabular output is delimited text with a schema-version
header and a fixed column order, so identical inputs give identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import evaluate, recalibrate, synth, toytrain
from .errors import UsageError
from .fileio import dataset_digest
from .models import (
    CalibrationCurve,
    ElementRecalibration,
    Provenance,
    RecalibrationBundle,
)
from .records import BoxElement, Dataset

SUMMARY_HEADER = "# boxcal ece-summary v1"
SWEEP_HEADER = "# boxcal sweep v1"
CROSS_EVAL_HEADER = "# boxcal cross-eval v1"
TRACE_HEADER = "# boxcal toy-trace v1"

FIT_METHODS = ("isotonic", "temperature")
FIT_TARGETS = ("classification", "regression")


def _fmt(x: float) -> str:
    return repr(float(x))


# -- evaluation ---------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    classification: CalibrationCurve
    regression: dict[BoxElement, CalibrationCurve]

    def ece_by_task(self) -> dict[str, float]:
        out = {"cls": evaluate.ece(self.classification)}
        for el, curve in self.regression.items():
            out[el.key] = evaluate.ece(curve)
        out["avg"] = sum(out.values()) / len(out)
        return out

    def regression_average_ece(self) -> float:
        values = [evaluate.ece(c) for c in self.regression.values()]
        return sum(values) / len(values)


def transformed_scores(dataset: Dataset,
                       bundle: Optional[RecalibrationBundle]) -> Optional[np.ndarray]:
    if bundle is None or bundle.classification is None:
        return None
    return bundle.classification.apply(dataset.scores)


def transformed_pits(dataset: Dataset, element: BoxElement,
                     bundle: Optional[RecalibrationBundle]) -> np.ndarray:
    """Predicted-CDF values honoring the active recalibrator for the element."""
    recal = bundle.for_element(element) if bundle is not None else None
    active = recal.active if recal is not None else None
    if active == "temperature":
        j = int(element)
        scaled = dataset.variances[:, j] / recal.temperature
        from .gaussian import marginal_cdf_columns

        return marginal_cdf_columns(dataset.means[:, j], scaled,
                                    dataset.ground_truths[:, j])
    pits = evaluate.regression_pits(dataset, element)
    if active == "isotonic":
        return recal.isotonic.apply(pits)
    return pits


def evaluate_dataset(dataset: Dataset,
                     bundle: Optional[RecalibrationBundle] = None,
                     bin_edges: Sequence[float] = evaluate.DEFAULT_BIN_EDGES,
                     levels: Sequence[float] = evaluate.DEFAULT_LEVELS) -> EvalReport:
    cls_curve = evaluate.classification_curve(
        dataset, bin_edges, scores=transformed_scores(dataset, bundle)
    )
    regression = {
        el: evaluate.regression_curve(dataset, el, levels,
                                      pits=transformed_pits(dataset, el, bundle))
        for el in BoxElement
    }
    return EvalReport(cls_curve, regression)


def plot_data_text(report: EvalReport) -> str:
    lines = [evaluate.PLOT_DATA_HEADER, evaluate.PLOT_DATA_COLUMNS]
    for curve in [report.classification] + [report.regression[el] for el in BoxElement]:
        lines.extend(evaluate.curve_rows(curve))
    return "\n".join(lines) + "\n"


def summary_text(report: EvalReport) -> str:
    ece = report.ece_by_task()
    columns = ["cls"] + [el.key for el in BoxElement] + ["avg"]
    values = ",".join(_fmt(ece[c]) for c in columns)
    return f"{SUMMARY_HEADER}\n{','.join(columns)}\n{values}\n"


# -- fitting and applying ------------------------------------------------------

def fit_bundle(dataset: Dataset, method: str,
               targets: Sequence[str] = FIT_TARGETS,
               bin_edges: Sequence[float] = evaluate.DEFAULT_BIN_EDGES,
               dataset_id: str = "",
               fitted_at: Optional[str] = None) -> RecalibrationBundle:
    """Fit the chosen recalibrator family and wrap it in a bundle.

    Isotonic fits a score map (classification target) plus one probability
    map per element (regression target); temperature fits one scalar per
    element and applies to the regression target only.
    """
    if method not in FIT_METHODS:
        raise UsageError(f"unknown method {method!r}; expected one of {FIT_METHODS}")
    targets = tuple(targets)
    unknown = set(targets) - set(FIT_TARGETS)
    if unknown or not targets:
        raise UsageError(f"bad fit targets {targets!r}")
    if method == "temperature" and "regression" not in targets:
        raise UsageError("temperature scaling applies to the regression target only")

    classification = None
    regression = [ElementRecalibration() for _ in BoxElement]
    if method == "isotonic":
        if "classification" in targets:
            classification = recalibrate.fit_isotonic_classification(dataset, bin_edges)
        if "regression" in targets:
            regression = [
                ElementRecalibration(
                    isotonic=recalibrate.fit_isotonic_regression_calibrator(dataset, el),
                    active="isotonic",
                )
                for el in BoxElement
            ]
    else:
        regression = [
            ElementRecalibration(
                temperature=recalibrate.fit_temperature(dataset, el),
                active="temperature",
            )
            for el in BoxElement
        ]
    provenance = Provenance(
        dataset=dataset_id or f"sha256:{dataset_digest(dataset)}",
        fitted_at=fitted_at,
    )
    return RecalibrationBundle(classification, tuple(regression), provenance)


def apply_bundle(dataset: Dataset, bundle: RecalibrationBundle,
                 existing: Optional[RecalibrationBundle] = None
                 ) -> tuple[Dataset, Optional[RecalibrationBundle]]:
    """Apply a bundle to a dataset, composing with any existing annotation.

    Active temperatures rewrite variances in place (the result is still a
    Gaussian per element). Active isotonic maps do not rewrite records; they
    are returned as an annotation to carry in the dump header, composed with
    whatever annotation the dump already carried.
    """
    variances = np.array(dataset.variances)
    touched = False
    for el in BoxElement:
        recal = bundle.for_element(el)
        if recal.active == "temperature":
            variances[:, int(el)] /= recal.temperature
            touched = True
    out = dataset.with_variances(variances) if touched else dataset

    def compose(new, old):
        if new is None:
            return old
        if old is None:
            return new
        return recalibrate.compose_isotonic(new, old)

    cls_map = compose(
        bundle.classification, existing.classification if existing else None
    )
    regression = []
    annotated = cls_map is not None
    for el in BoxElement:
        recal = bundle.for_element(el)
        old = existing.for_element(el) if existing is not None else None
        old_map = old.isotonic if old is not None and old.active == "isotonic" else None
        new_map = recal.isotonic if recal.active == "isotonic" else None
        merged = compose(new_map, old_map)
        if merged is not None:
            annotated = True
            regression.append(ElementRecalibration(isotonic=merged, active="isotonic"))
        else:
            regression.append(ElementRecalibration())
    if not annotated:
        return out, None
    annotation = RecalibrationBundle(cls_map, tuple(regression), bundle.provenance)
    return out, annotation


# -- experiments ---------------------------------------------------------------

def sweep(dataset: Dataset, fractions: Sequence[float], method: str,
          seed: int) -> list[tuple[float, float]]:
    """Recalibration-set-size robustness sweep.

    The dataset is split 50:50 into a recalibration half and a held-out
    evaluation half; each fraction subsamples the recalibration half, fits
    the chosen method on it, and reports the regression-average calibration
    error on the evaluation half.
    """
    if not fractions:
        raise UsageError("need at least one fraction")
    recal_half, eval_half = synth.split_half(dataset, seed)
    rows = []
    for i, fraction in enumerate(fractions):
        subset = synth.subsample(recal_half, fraction, seed=np.random.default_rng(
            [seed, i]).integers(0, 2**31))
        bundle = fit_bundle(subset, method)
        report = evaluate_dataset(eval_half, bundle)
        rows.append((float(fraction), report.regression_average_ece()))
    return rows


def sweep_text(rows: Sequence[tuple[float, float]]) -> str:
    lines = [SWEEP_HEADER, "fraction,ece"]
    lines.extend(f"{_fmt(f)},{_fmt(e)}" for f, e in rows)
    return "\n".join(lines) + "\n"


def cross_eval(fit_dataset: Dataset, eval_dataset: Dataset,
               method: str) -> dict[str, float]:
    """Fit on one distribution, evaluate on another; report average ECE."""
    baseline = evaluate_dataset(eval_dataset).ece_by_task()["avg"]
    bundle = fit_bundle(fit_dataset, method)
    recal = evaluate_dataset(eval_dataset, bundle).ece_by_task()["avg"]
    return {"baseline": baseline, "recalibrated": recal}


def cross_eval_text(result: dict[str, float]) -> str:
    return (
        f"{CROSS_EVAL_HEADER}\n"
        "condition,avg_ece\n"
        f"baseline,{_fmt(result['baseline'])}\n"
        f"recalibrated,{_fmt(result['recalibrated'])}\n"
    )


def trace_text(trace: toytrain.ToyTrainTrace) -> str:
    lines = [TRACE_HEADER, "epoch,loss_reg,loss_calib,holdout_l2,holdout_ece"]
    for e in trace.entries:
        lines.append(
            f"{e.epoch},{_fmt(e.loss_reg)},{_fmt(e.loss_calib)},"
            f"{_fmt(e.holdout_l2)},{_fmt(e.holdout_ece)}"
        )
    return "\n".join(lines) + "\n"


def train_summary(trace: toytrain.ToyTrainTrace) -> dict[str, float]:
    eces = [e.holdout_ece for e in trace.entries]
    best = int(np.argmin(eces))
    last = trace.entries[-1]
    return {
        "final_epoch": last.epoch,
        "final_loss_reg": last.loss_reg,
        "final_holdout_l2": last.holdout_l2,
        "final_holdout_ece": last.holdout_ece,
        "min_holdout_ece": trace.entries[best].holdout_ece,
        "min_holdout_ece_epoch": trace.entries[best].epoch,
    }


def train_summary_text(summary: dict[str, float]) -> str:
    lines = [
        f"final epoch: {summary['final_epoch']}",
        f"final loss_reg: {_fmt(summary['final_loss_reg'])}",
        f"final holdout l2: {_fmt(summary['final_holdout_l2'])}",
        f"final holdout ece: {_fmt(summary['final_holdout_ece'])}",
        f"min holdout ece: {_fmt(summary['min_holdout_ece'])} "
        f"at epoch {summary['min_holdout_ece_epoch']}",
    ]
    return "\n".join(lines) + "\n"
