"""Dump and model file formats.

Detection dump: line-delimited JSON. The first line is a header object
declaring the schema version and the element order; every following line is
one record with exactly the fields id, score, label, mean[6], var[6], gt[6].
Unknown fields are rejected. Floats are written with `repr`, so write-read
round-trips are exact.

Recalibration model file: a single JSON document carrying the fitted bundle
(knot lists, temperatures, provenance) under a versioned schema. A dump
header may embed the same structure under "recalibration" when isotonic
recalibration has been applied as an annotation.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError, DatasetValidationError
from .models import ElementRecalibration, IsotonicMap, Provenance, RecalibrationBundle
from .records import BoxElement, Dataset, ELEMENT_KEYS, N_ELEMENTS

DUMP_SCHEMA = "boxcal.detections/1"
BUNDLE_SCHEMA = "boxcal.recalibration/1"

_RECORD_FIELDS = ("id", "score", "label", "mean", "var", "gt")


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


# -- recalibration bundles ---------------------------------------------------

def _map_to_json(m: Optional[IsotonicMap]):
    if m is None:
        return None
    return {"knots": [[x, y] for x, y in m.knots]}


def _map_from_json(obj, where: str) -> Optional[IsotonicMap]:
    if obj is None:
        return None
    if not isinstance(obj, dict) or set(obj) != {"knots"}:
        raise DataError(f"{where}: expected an object with a 'knots' field")
    try:
        knots = tuple((float(x), float(y)) for x, y in obj["knots"])
        return IsotonicMap(knots=knots)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{where}: bad knots: {exc}") from exc


def bundle_to_json(bundle: RecalibrationBundle) -> dict:
    regression = {}
    for el in BoxElement:
        recal = bundle.for_element(el)
        regression[el.key] = {
            "isotonic": _map_to_json(recal.isotonic),
            "temperature": recal.temperature,
            "active": recal.active,
        }
    return {
        "schema": BUNDLE_SCHEMA,
        "provenance": {
            "dataset": bundle.provenance.dataset,
            "fitted_at": bundle.provenance.fitted_at,
        },
        "classification": _map_to_json(bundle.classification),
        "regression": regression,
    }


def bundle_from_json(obj) -> RecalibrationBundle:
    if not isinstance(obj, dict):
        raise DataError("recalibration model must be a JSON object")
    expected = {"schema", "provenance", "classification", "regression"}
    if set(obj) != expected:
        raise DataError(f"recalibration model fields {sorted(obj)} != {sorted(expected)}")
    if obj["schema"] != BUNDLE_SCHEMA:
        raise DataError(f"unsupported recalibration schema {obj['schema']!r}")
    prov = obj["provenance"]
    if not isinstance(prov, dict) or set(prov) != {"dataset", "fitted_at"}:
        raise DataError("bad provenance object")
    regression = []
    reg = obj["regression"]
    if not isinstance(reg, dict) or set(reg) != set(ELEMENT_KEYS):
        raise DataError("regression section must cover exactly the six elements")
    for el in BoxElement:
        entry = reg[el.key]
        if not isinstance(entry, dict) or set(entry) != {"isotonic", "temperature", "active"}:
            raise DataError(f"bad regression entry for {el.key}")
        temperature = entry["temperature"]
        if temperature is not None:
            temperature = float(temperature)
        regression.append(ElementRecalibration(
            isotonic=_map_from_json(entry["isotonic"], f"regression.{el.key}"),
            temperature=temperature,
            active=entry["active"],
        ))
    return RecalibrationBundle(
        classification=_map_from_json(obj["classification"], "classification"),
        regression=tuple(regression),
        provenance=Provenance(dataset=str(prov["dataset"]), fitted_at=prov["fitted_at"]),
    )


def write_bundle(path, bundle: RecalibrationBundle) -> None:
    Path(path).write_text(_dumps(bundle_to_json(bundle)) + "\n", encoding="utf-8")


def read_bundle(path) -> RecalibrationBundle:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc
    return bundle_from_json(obj)


# -- detection dumps ---------------------------------------------------------

def write_dump(path, dataset: Dataset,
               annotation: Optional[RecalibrationBundle] = None) -> None:
    header: dict = {"schema": DUMP_SCHEMA, "elements": list(ELEMENT_KEYS)}
    if annotation is not None:
        header["recalibration"] = bundle_to_json(annotation)
    lines = [_dumps(header)]
    scores = dataset.scores
    labels = dataset.labels
    means = dataset.means
    variances = dataset.variances
    gts = dataset.ground_truths
    for i, rid in enumerate(dataset.ids):
        lines.append(_dumps({
            "id": rid,
            "score": float(scores[i]),
            "label": int(labels[i]),
            "mean": [float(v) for v in means[i]],
            "var": [float(v) for v in variances[i]],
            "gt": [float(v) for v in gts[i]],
        }))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_header(line: str) -> Optional[RecalibrationBundle]:
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"line 1: header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise DataError("line 1: header must be a JSON object")
    allowed = {"schema", "elements", "recalibration"}
    unknown = set(header) - allowed
    if unknown:
        raise DataError(f"line 1: unknown header fields {sorted(unknown)}")
    if header.get("schema") != DUMP_SCHEMA:
        raise DataError(f"line 1: unsupported dump schema {header.get('schema')!r}")
    if header.get("elements") != list(ELEMENT_KEYS):
        raise DataError(
            f"line 1: element order {header.get('elements')!r} does not match {list(ELEMENT_KEYS)}"
        )
    if "recalibration" in header:
        return bundle_from_json(header["recalibration"])
    return None


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _vector(obj, name: str, lineno: int) -> list[float]:
    if not isinstance(obj, list) or len(obj) != N_ELEMENTS:
        raise DataError(f"line {lineno}: {name} must be a list of {N_ELEMENTS} numbers")
    if not all(_is_number(v) for v in obj):
        raise DataError(f"line {lineno}: {name} contains a non-numeric value")
    return [float(v) for v in obj]


def read_dump(path) -> tuple[Dataset, Optional[RecalibrationBundle]]:
    """Parse and validate a dump; raises `DataError` naming the first bad line."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    annotation = _parse_header(lines[0])
    n = len(lines) - 1
    if n == 0:
        raise DataError(f"{path}: dump contains no records")
    ids = []
    scores = np.empty(n)
    labels = np.empty(n, dtype=np.int64)
    means = np.empty((n, N_ELEMENTS))
    variances = np.empty((n, N_ELEMENTS))
    gts = np.empty((n, N_ELEMENTS))
    for i, line in enumerate(lines[1:]):
        lineno = i + 2
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {lineno}: not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise DataError(f"line {lineno}: record must be a JSON object")
        if set(obj) != set(_RECORD_FIELDS):
            unknown = set(obj) - set(_RECORD_FIELDS)
            missing = set(_RECORD_FIELDS) - set(obj)
            detail = []
            if unknown:
                detail.append(f"unknown fields {sorted(unknown)}")
            if missing:
                detail.append(f"missing fields {sorted(missing)}")
            raise DataError(f"line {lineno}: {'; '.join(detail)}")
        if not isinstance(obj["id"], str):
            raise DataError(f"line {lineno}: id must be a string")
        if isinstance(obj["label"], bool) or obj["label"] not in (0, 1):
            raise DataError(f"line {lineno}: label must be 0 or 1")
        if not _is_number(obj["score"]):
            raise DataError(f"line {lineno}: score is not numeric")
        scores[i] = float(obj["score"])
        ids.append(obj["id"])
        labels[i] = int(obj["label"])
        means[i] = _vector(obj["mean"], "mean", lineno)
        variances[i] = _vector(obj["var"], "var", lineno)
        gts[i] = _vector(obj["gt"], "gt", lineno)
    try:
        dataset = Dataset.from_columns(ids, scores, labels, means, variances, gts)
    except DatasetValidationError as exc:
        first = exc.violations[0]
        raise DataError(f"line {first.index + 2}: {first.reason}") from exc
    return dataset, annotation


def dataset_digest(dataset: Dataset) -> str:
    """Short content digest used as deterministic provenance."""
    h = hashlib.sha256()
    for rid in dataset.ids:
        h.update(rid.encode())
    for arr in (dataset.scores, dataset.labels, dataset.means,
                dataset.variances, dataset.ground_truths):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]
