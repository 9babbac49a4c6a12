import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from energybench.pipeline import score_record
from energybench.registry import Registry
from energybench.service import ServiceConfig, create_app


def _csv_and_schema(n=200, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 10, n)
    b = rng.uniform(0, 10, n)
    y = 200.0 + 10.0 * a + 2.0 * b + rng.normal(0, 1.0, n)
    lines = ["a,b,energy"]
    lines += [f"{float(a[i])!r},{float(b[i])!r},{float(y[i])!r}" for i in range(n)]
    schema = {"columns": [
        {"name": "a", "kind": "numeric", "role": "predictor"},
        {"name": "b", "kind": "numeric", "role": "predictor"},
        {"name": "energy", "kind": "numeric", "role": "target"},
    ]}
    return "\n".join(lines) + "\n", schema, (a, b, y)


SINGLE_CELL_GRID = {"max_depth": [2], "nrounds": [10], "eta": [0.5],
                    "colsample_bytree": [0.5], "subsample": [1.0]}


@pytest.fixture
def client(tmp_path):
    config = ServiceConfig(registry_dir=str(tmp_path / "registry"))
    app = create_app(config)
    with TestClient(app) as c:
        c.registry_dir = config.registry_dir
        yield c


def _train(client, kind="gbt", seed=7, n=200, grid=SINGLE_CELL_GRID, k=5, **extra):
    csv, schema, _ = _csv_and_schema(n=n)
    body = {"kind": kind, "seed": seed, "csv": csv, "schema": schema, "k": k,
            "repeats": 1}
    if kind == "gbt":
        body["grid"] = grid
    body.update(extra)
    return client.post("/v1/train", json=body)


def test_healthz(client):
    assert client.get("/v1/healthz").json() == {"status": "ok"}


def test_train_single_cell_gbt(client):
    r = _train(client)
    assert r.status_code == 200
    body = r.json()
    assert body["model_id"]
    assert len(body["cv_report"]["cells"]) == 1
    assert body["metrics"]["n"] == 200


def test_budget_exceeded_maps_to_422_with_limit(client):
    # mlri3 over 2 predictors is tiny; shrink n instead so the budget bites
    csv, schema, _ = _csv_and_schema(n=12)
    r = client.post("/v1/train", json={
        "kind": "mlri2", "seed": 1, "csv": csv, "schema": schema, "k": 4})
    # q=3 with n=12 passes (limit 4); force a failure with n=8 -> limit 2
    csv, schema, _ = _csv_and_schema(n=8)
    r = client.post("/v1/train", json={
        "kind": "mlri2", "seed": 1, "csv": csv, "schema": schema, "k": 4})
    assert r.status_code == 422
    body = r.json()
    assert body["code"] == "predictor_budget_exceeded"
    assert body["details"]["limit"] == 2


def test_identical_request_identical_cv_report(client):
    a = _train(client, seed=42)
    b = _train(client, seed=42)
    assert a.content == b.content


def test_score_matches_direct_pipeline_call(client):
    r = _train(client)
    model_id = r.json()["model_id"]
    _, _, (a, b, y) = _csv_and_schema()
    record = {"a": float(a[0]), "b": float(b[0]), "energy": float(y[0])}
    wire = client.post("/v1/score", json={"model_id": model_id, "record": record})
    assert wire.status_code == 200
    entry = Registry(client.registry_dir).get(model_id)
    direct = score_record(entry, record).to_dict()
    assert wire.json() == json.loads(json.dumps(direct))


def test_score_missing_feature_names_it(client):
    model_id = _train(client).json()["model_id"]
    r = client.post("/v1/score", json={"model_id": model_id,
                                       "record": {"a": 1.0, "energy": 50.0}})
    assert r.status_code == 422
    fields = [f["field"] for f in r.json()["details"]["fields"]]
    assert "b" in fields


def test_efficient_building_is_certified(client):
    model_id = _train(client).json()["model_id"]
    _, _, (a, b, y) = _csv_and_schema()
    # actual far below predicted -> tiny efficiency ratio -> top score
    record = {"a": float(a[0]), "b": float(b[0]), "energy": 1.0}
    body = client.post("/v1/score", json={"model_id": model_id, "record": record}).json()
    assert body["score"] >= 75
    assert body["certified"] is True


def test_unknown_model_404(client):
    r = client.post("/v1/score", json={"model_id": "nope", "record": {}})
    assert r.status_code == 404
    assert r.json()["code"] == "not_found"


def test_invalid_body_400(client):
    r = client.post("/v1/score", json={"record": {}})
    assert r.status_code == 400
    assert r.json()["code"] == "invalid_request"


def test_explain_local_accuracy_over_the_wire(client):
    model_id = _train(client).json()["model_id"]
    _, _, (a, b, y) = _csv_and_schema()
    record = {"a": float(a[3]), "b": float(b[3]), "energy": float(y[3])}
    r = client.post("/v1/explain", json={"model_id": model_id, "record": record})
    body = r.json()
    expl = body["explanation"]
    total = expl["base_value"] + sum(expl["phi"])
    assert abs(total - expl["prediction"]) <= 1e-6 * max(1.0, abs(expl["prediction"]))
    # /score and /explain agree on the prediction
    score = client.post("/v1/score", json={"model_id": model_id, "record": record}).json()
    assert score["predicted"] == pytest.approx(expl["prediction"], abs=1e-9)


def test_explain_interactions_symmetric_matrix(client):
    model_id = _train(client).json()["model_id"]
    record = {"a": 5.0, "b": 5.0, "energy": 260.0}
    r = client.post("/v1/explain", json={"model_id": model_id, "record": record,
                                         "interactions": True})
    mat = np.asarray(r.json()["interactions"]["matrix"])
    assert mat.shape == (2, 2)
    assert np.array_equal(mat, mat.T)


def test_explain_depth_zero_model_all_zero_phi(client):
    grid = {"max_depth": [0], "nrounds": [3], "eta": [0.5], "colsample_bytree": [1.0],
            "subsample": [1.0], "allow_out_of_range": True}
    model_id = _train(client, grid=grid).json()["model_id"]
    r = client.post("/v1/explain", json={
        "model_id": model_id, "record": {"a": 1.0, "b": 2.0, "energy": 250.0}})
    assert all(v == 0.0 for v in r.json()["explanation"]["phi"])


def test_interactions_unsupported_for_linear(client):
    model_id = _train(client, kind="mlr").json()["model_id"]
    r = client.post("/v1/explain", json={
        "model_id": model_id, "record": {"a": 1.0, "b": 2.0, "energy": 250.0},
        "interactions": True})
    assert r.status_code == 422
    assert r.json()["code"] == "interactions_unsupported"


def test_whatif_empty_overrides_identity(client):
    model_id = _train(client).json()["model_id"]
    record = {"a": 4.0, "b": 6.0, "energy": 255.0}
    r = client.post("/v1/whatif", json={"model_id": model_id, "record": record,
                                        "overrides": {}})
    body = r.json()
    assert body["delta_score"] == 0
    assert body["baseline"] == body["modified"]


def test_whatif_override_direction(client):
    model_id = _train(client).json()["model_id"]
    record = {"a": 8.0, "b": 6.0, "energy": 290.0}
    r = client.post("/v1/whatif", json={"model_id": model_id, "record": record,
                                        "overrides": {"a": 0.5}})
    body = r.json()
    # the generator rises in a, so cutting a lowers predicted use, raising the
    # efficiency ratio for the same actual -> score cannot improve
    assert body["modified"]["predicted"] < body["baseline"]["predicted"]
    assert body["delta_score"] <= 0
    assert body["baseline"]["force"] and body["modified"]["force"]


def test_whatif_unknown_override_422(client):
    model_id = _train(client).json()["model_id"]
    r = client.post("/v1/whatif", json={
        "model_id": model_id,
        "record": {"a": 1.0, "b": 1.0, "energy": 215.0},
        "overrides": {"Foo": 1.0}})
    assert r.status_code == 422
    assert r.json()["details"]["fields"][0]["field"] == "Foo"


def test_models_listing_and_fetch(client):
    model_id = _train(client).json()["model_id"]
    listing = client.get("/v1/models").json()
    assert [m["model_id"] for m in listing] == [model_id]
    entry = client.get(f"/v1/models/{model_id}").json()
    assert entry["model_id"] == model_id
    assert {row["name"] for row in entry["feature_schema"]} == {"a", "b", "energy"}


def test_async_job_flow(tmp_path):
    config = ServiceConfig(registry_dir=str(tmp_path / "r"), train_sync_limit=10)
    app = create_app(config)
    with TestClient(app) as client:
        csv, schema, _ = _csv_and_schema(n=60)
        r = client.post("/v1/train", json={
            "kind": "gbt", "seed": 3, "csv": csv, "schema": schema, "k": 4,
            "repeats": 1, "grid": SINGLE_CELL_GRID})
        assert r.status_code == 202
        job_id = r.json()["job_id"]
        for _ in range(200):
            status = client.get(f"/v1/jobs/{job_id}").json()
            if status["status"] != "running":
                break
            time.sleep(0.05)
        assert status["status"] == "done"
        assert status["result"]["model_id"] == status["model_id"]
        assert client.get(f"/v1/models/{status['model_id']}").status_code == 200


def test_unknown_job_404(client):
    assert client.get("/v1/jobs/nothere").status_code == 404
