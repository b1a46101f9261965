import json

import numpy as np
import pytest

from boxcal.errors import DataError
from boxcal.fileio import (
    BUNDLE_SCHEMA,
    DUMP_SCHEMA,
    bundle_from_json,
    bundle_to_json,
    dataset_digest,
    read_bundle,
    read_dump,
    write_bundle,
    write_dump,
)
from boxcal.models import (
    ElementRecalibration,
    IsotonicMap,
    Provenance,
    RecalibrationBundle,
)
from boxcal.records import BoxElement
from boxcal.synth import SynthConfig, generate


def sample_bundle():
    iso = IsotonicMap(knots=((0.1, 0.2), (0.5, 0.5), (0.9, 0.99)))
    regression = []
    for el in BoxElement:
        if el is BoxElement.DX:
            regression.append(ElementRecalibration(isotonic=iso, active="isotonic"))
        elif el is BoxElement.DY:
            regression.append(ElementRecalibration(temperature=3.75, active="temperature"))
        else:
            regression.append(ElementRecalibration())
    return RecalibrationBundle(
        classification=IsotonicMap(knots=((0.05, 0.0), (0.95, 1.0))),
        regression=tuple(regression),
        provenance=Provenance(dataset="sha256:abc", fitted_at="2024-06-01T00:00:00Z"),
    )


class TestDumpRoundTrip:
    def test_bit_exact_round_trip(self, tmp_path):
        ds = generate(SynthConfig(n=300, seed=1, inflation=1.7,
                                  bias=(0.1, 0, 0, 0, 0, -0.2), score_law="compressed"))
        path = tmp_path / "d.jsonl"
        write_dump(path, ds)
        back, annotation = read_dump(path)
        assert annotation is None
        assert list(back.ids) == list(ds.ids)
        for a, b in (
            (back.scores, ds.scores), (back.labels, ds.labels), (back.means, ds.means),
            (back.variances, ds.variances), (back.ground_truths, ds.ground_truths),
        ):
            assert np.array_equal(a, b)
        # a second write is byte-identical
        path2 = tmp_path / "d2.jsonl"
        write_dump(path2, back)
        assert path.read_bytes() == path2.read_bytes()

    def test_annotation_round_trip(self, tmp_path):
        ds = generate(SynthConfig(n=10, seed=2))
        path = tmp_path / "a.jsonl"
        write_dump(path, ds, annotation=sample_bundle())
        _, annotation = read_dump(path)
        assert annotation == sample_bundle()

    def test_header_rejections(self, tmp_path):
        ds = generate(SynthConfig(n=3, seed=3))
        path = tmp_path / "d.jsonl"
        write_dump(path, ds)
        lines = path.read_text().splitlines()

        bad_schema = dict(json.loads(lines[0]), schema="boxcal.detections/999")
        p = tmp_path / "bad1.jsonl"
        p.write_text("\n".join([json.dumps(bad_schema)] + lines[1:]) + "\n")
        with pytest.raises(DataError, match="line 1"):
            read_dump(p)

        wrong_order = dict(json.loads(lines[0]))
        wrong_order["elements"] = list(reversed(wrong_order["elements"]))
        p2 = tmp_path / "bad2.jsonl"
        p2.write_text("\n".join([json.dumps(wrong_order)] + lines[1:]) + "\n")
        with pytest.raises(DataError, match="element order"):
            read_dump(p2)

        unknown = dict(json.loads(lines[0]), extra=1)
        p3 = tmp_path / "bad3.jsonl"
        p3.write_text("\n".join([json.dumps(unknown)] + lines[1:]) + "\n")
        with pytest.raises(DataError, match="unknown header fields"):
            read_dump(p3)

    def test_record_errors_name_first_bad_line(self, tmp_path):
        ds = generate(SynthConfig(n=5, seed=4))
        path = tmp_path / "d.jsonl"
        write_dump(path, ds)
        lines = path.read_text().splitlines()

        rec = json.loads(lines[3])
        rec["score"] = 1.5
        p = tmp_path / "bad.jsonl"
        p.write_text("\n".join(lines[:3] + [json.dumps(rec)] + lines[4:]) + "\n")
        with pytest.raises(DataError, match="line 4"):
            read_dump(p)

        rec2 = json.loads(lines[2])
        rec2["surprise"] = True
        p2 = tmp_path / "bad2.jsonl"
        p2.write_text("\n".join(lines[:2] + [json.dumps(rec2)] + lines[3:]) + "\n")
        with pytest.raises(DataError, match="line 3.*surprise"):
            read_dump(p2)

        rec3 = {k: v for k, v in json.loads(lines[2]).items() if k != "gt"}
        p3 = tmp_path / "bad3.jsonl"
        p3.write_text("\n".join(lines[:2] + [json.dumps(rec3)] + lines[3:]) + "\n")
        with pytest.raises(DataError, match="missing fields.*gt"):
            read_dump(p3)

    def test_empty_and_garbage_files(self, tmp_path):
        p = tmp_path / "e.jsonl"
        p.write_text("")
        with pytest.raises(DataError):
            read_dump(p)
        p2 = tmp_path / "g.jsonl"
        p2.write_text("not json\n")
        with pytest.raises(DataError, match="line 1"):
            read_dump(p2)
        p3 = tmp_path / "h.jsonl"
        p3.write_text(json.dumps({"schema": DUMP_SCHEMA,
                                  "elements": list("abcdef")}) + "\n")
        with pytest.raises(DataError):
            read_dump(p3)


class TestBundleRoundTrip:
    def test_exact_round_trip(self, tmp_path):
        path = tmp_path / "m.json"
        bundle = sample_bundle()
        write_bundle(path, bundle)
        assert read_bundle(path) == bundle
        # byte-stable re-write
        path2 = tmp_path / "m2.json"
        write_bundle(path2, read_bundle(path))
        assert path.read_bytes() == path2.read_bytes()

    def test_schema_checked(self):
        obj = bundle_to_json(sample_bundle())
        obj["schema"] = "boxcal.recalibration/42"
        with pytest.raises(DataError, match="unsupported"):
            bundle_from_json(obj)

    def test_unknown_fields_rejected(self):
        obj = bundle_to_json(sample_bundle())
        obj["note"] = "hi"
        with pytest.raises(DataError):
            bundle_from_json(obj)
        obj2 = bundle_to_json(sample_bundle())
        obj2["regression"]["dx"]["extra"] = 1
        with pytest.raises(DataError):
            bundle_from_json(obj2)

    def test_schema_constant(self):
        assert BUNDLE_SCHEMA.endswith("/1")


class TestDigest:
    def test_stable_and_content_sensitive(self):
        a = generate(SynthConfig(n=50, seed=5))
        b = generate(SynthConfig(n=50, seed=5))
        c = generate(SynthConfig(n=50, seed=6))
        assert dataset_digest(a) == dataset_digest(b)
        assert dataset_digest(a) != dataset_digest(c)
