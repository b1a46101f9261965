import pytest
from fastapi.testclient import TestClient

from boxcal.service.app import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def gen_payload(client, n=2000, seed=7, inflation=4.0, **extra):
    body = {"n": n, "seed": seed, "inflation": inflation, **extra}
    res = client.post("/generate", json=body)
    assert res.status_code == 200, res.text
    return res.json()


class TestHealth:
    def test_ok(self, client):
        res = client.get("/health")
        assert res.status_code == 200
        assert res.json()["status"] == "ok"


class TestGenerate:
    def test_deterministic(self, client):
        a = gen_payload(client, n=50, seed=1)
        b = gen_payload(client, n=50, seed=1)
        assert a == b

    def test_rejects_bad_config(self, client):
        res = client.post("/generate", json={"n": 0})
        assert res.status_code == 422
        res2 = client.post("/generate", json={"n": 10, "inflation": -1.0})
        assert res2.status_code == 400


class TestEvaluate:
    def test_summary_and_rows(self, client):
        ds = gen_payload(client, n=3000, seed=2)
        res = client.post("/evaluate", json={"dataset": ds})
        assert res.status_code == 200
        body = res.json()
        assert set(body["summary"]) == {"cls", "cos_theta", "sin_theta", "dx", "dy",
                                        "log_l", "log_w", "avg"}
        assert body["summary"]["avg"] > 0.05  # inflated variances
        tasks = {row["task"] for row in body["rows"]}
        assert tasks == {"classification", "regression"}

    def test_unknown_field_rejected(self, client):
        ds = gen_payload(client, n=10, seed=3)
        ds["records"][0]["surprise"] = 1
        res = client.post("/evaluate", json={"dataset": ds})
        assert res.status_code == 422

    def test_invalid_record_rejected(self, client):
        ds = gen_payload(client, n=10, seed=4)
        ds["records"][0]["score"] = 1.5
        res = client.post("/evaluate", json={"dataset": ds})
        assert res.status_code == 400

    def test_wrong_element_order_rejected(self, client):
        ds = gen_payload(client, n=10, seed=5)
        ds["elements"] = list(reversed(ds["elements"]))
        res = client.post("/evaluate", json={"dataset": ds})
        assert res.status_code == 400


class TestFitApplyEvaluateLoop:
    def test_temperature_loop(self, client):
        ds = gen_payload(client, n=4000, seed=6)
        fit = client.post("/fit", json={"dataset": ds, "method": "temperature"})
        assert fit.status_code == 200
        bundle = fit.json()
        assert bundle["schema"] == "boxcal.recalibration/1"
        assert 3.3 <= bundle["regression"]["dx"]["temperature"] <= 4.7

        applied = client.post("/apply", json={"dataset": ds, "bundle": bundle})
        assert applied.status_code == 200
        body = applied.json()
        assert body["annotation"] is None
        before = client.post("/evaluate", json={"dataset": ds}).json()["summary"]["avg"]
        after = client.post("/evaluate", json={"dataset": body["dataset"]}).json()["summary"]["avg"]
        assert after < before

    def test_isotonic_annotation_composes_in_evaluate(self, client):
        ds = gen_payload(client, n=4000, seed=7)
        bundle = client.post("/fit", json={"dataset": ds, "method": "isotonic"}).json()
        applied = client.post("/apply", json={"dataset": ds, "bundle": bundle}).json()
        assert applied["annotation"] is not None
        res = client.post("/evaluate", json={"dataset": applied["dataset"],
                                             "bundle": applied["annotation"]})
        assert res.json()["summary"]["avg"] < 0.02

    def test_degenerate_fit_conflict(self, client):
        record = {"id": "r0", "score": 0.5, "label": 1,
                  "mean": [0.0] * 6, "var": [1.0] * 6, "gt": [0.0] * 6}
        ds = {"records": [dict(record, id=f"r{i}") for i in range(3)]}
        res = client.post("/fit", json={"dataset": ds, "method": "temperature"})
        assert res.status_code == 409


class TestSweepEndpoint:
    def test_rows(self, client):
        ds = gen_payload(client, n=4000, seed=8)
        res = client.post("/sweep", json={"dataset": ds, "fractions": [1.0, 0.05],
                                          "method": "temperature", "seed": 2})
        assert res.status_code == 200
        rows = res.json()["rows"]
        assert [r["fraction"] for r in rows] == [1.0, 0.05]
        assert all(r["ece"] < 0.05 for r in rows)


class TestCrossEvalEndpoint:
    def test_halves_average_ece(self, client):
        a = gen_payload(client, n=5000, seed=9, inflation=4.0)
        b = gen_payload(client, n=5000, seed=10, inflation=3.0)
        res = client.post("/cross-eval", json={"fit_dataset": a, "eval_dataset": b,
                                               "method": "isotonic"})
        assert res.status_code == 200
        body = res.json()
        assert body["recalibrated"] <= 0.5 * body["baseline"]


class TestTrainToyEndpoint:
    def test_small_run(self, client):
        res = client.post("/train-toy", json={"epochs": 5, "pretrain_epochs": 2,
                                              "train_n": 64, "holdout_n": 64, "seed": 1})
        assert res.status_code == 200
        body = res.json()
        assert len(body["trace"]) == 5
        assert body["summary"]["final_epoch"] == 6
        assert "final_holdout_ece" in body["summary"]

    def test_bad_lambda(self, client):
        res = client.post("/train-toy", json={"lam": -1.0})
        assert res.status_code == 422


class TestIntervalsEndpoint:
    def record(self):
        return {"id": "r0", "score": 0.9, "label": 1,
                "mean": [0.0] * 6, "var": [1.0] * 6, "gt": [0.1] * 6}

    def test_raw_gaussian(self, client):
        res = client.post("/intervals", json={"record": self.record(),
                                              "element": "dx", "level": 0.95})
        assert res.status_code == 200
        body = res.json()
        assert body["low"] == pytest.approx(-1.96, abs=1e-2)
        assert body["high"] == pytest.approx(1.96, abs=1e-2)

    def test_temperature_narrows(self, client):
        bundle = {
            "schema": "boxcal.recalibration/1",
            "provenance": {"dataset": "", "fitted_at": None},
            "classification": None,
            "regression": {
                key: {"isotonic": None,
                      "temperature": 4.0 if key == "dx" else None,
                      "active": "temperature" if key == "dx" else None}
                for key in ("cos_theta", "sin_theta", "dx", "dy", "log_l", "log_w")
            },
        }
        res = client.post("/intervals", json={"record": self.record(), "element": "dx",
                                              "level": 0.95, "bundle": bundle})
        body = res.json()
        assert body["high"] - body["low"] == pytest.approx(2 * 1.959964 / 2.0, abs=1e-2)

    def test_unreachable_level_conflict(self, client):
        bundle = {
            "schema": "boxcal.recalibration/1",
            "provenance": {"dataset": "", "fitted_at": None},
            "classification": None,
            "regression": {
                key: {"isotonic": {"knots": [[0.0, 0.4], [1.0, 0.6]]} if key == "dx" else None,
                      "temperature": None,
                      "active": "isotonic" if key == "dx" else None}
                for key in ("cos_theta", "sin_theta", "dx", "dy", "log_l", "log_w")
            },
        }
        res = client.post("/intervals", json={"record": self.record(), "element": "dx",
                                              "level": 0.95, "bundle": bundle})
        assert res.status_code == 409


class TestCorrelationEndpoint:
    def test_pearson(self, client):
        ds = gen_payload(client, n=2000, seed=11, inflation=1.0)
        res = client.post("/correlation", json={"dataset": ds, "element_a": "dx",
                                                "element_b": "dy"})
        assert res.status_code == 200
        assert abs(res.json()["pearson"]) < 0.1
