"""JSON-over-HTTP facade for training, scoring, explanation, and what-if.

Training runs synchronously for datasets at or under the configured row
limit and falls back to a background job otherwise. Registered models are
immutable; readers never block on a writer because publication is an atomic
rename.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from ..datamodel import (
    ColumnSpec,
    Dataset,
    PeerGroupSpec,
    build_peer_group,
    load_table,
    load_table_string,
    schema_from_json,
)
from ..errors import BenchError, NotFoundError, SchemaError
from ..gbt import TuneGrid
from ..pipeline import (
    TrainResult,
    explain_record,
    score_record,
    train_model,
    whatif_record,
)
from ..registry import Registry
from . import schemas

MAX_INLINE_CSV_BYTES = 32 * 1024 * 1024


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    registry_dir: str = "registry"
    train_sync_limit: int = 50_000

    @classmethod
    def load(cls, path: str | None = None) -> "ServiceConfig":
        """Config file first, then BENCH_* environment overrides."""
        cfg = cls()
        if path:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
            for key in ("host", "port", "registry_dir", "train_sync_limit"):
                if key in doc:
                    setattr(cfg, key, doc[key])
        if os.environ.get("BENCH_HOST"):
            cfg.host = os.environ["BENCH_HOST"]
        if os.environ.get("BENCH_PORT"):
            cfg.port = int(os.environ["BENCH_PORT"])
        if os.environ.get("BENCH_REGISTRY_DIR"):
            cfg.registry_dir = os.environ["BENCH_REGISTRY_DIR"]
        if os.environ.get("BENCH_TRAIN_SYNC_LIMIT"):
            cfg.train_sync_limit = int(os.environ["BENCH_TRAIN_SYNC_LIMIT"])
        return cfg


def _error_response(status: int, code: str, message: str, details: dict | None = None):
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "details": details or {}})


def _load_dataset(req: schemas.TrainRequest) -> Dataset:
    if req.table_schema is not None:
        schema = [ColumnSpec.from_dict(c.model_dump()) for c in req.table_schema.columns]
    elif req.schema_path:
        schema = schema_from_json(Path(req.schema_path).read_text(encoding="utf-8"))
    else:
        raise SchemaError("request needs either inline 'schema' or 'schema_path'")
    if req.csv is not None:
        if len(req.csv.encode()) > MAX_INLINE_CSV_BYTES:
            raise SchemaError("inline CSV exceeds the documented size cap",
                              cap_bytes=MAX_INLINE_CSV_BYTES)
        d = load_table_string(req.csv, schema)
    elif req.path:
        d = load_table(req.path, schema)
    else:
        raise SchemaError("request needs either inline 'csv' or a 'path'")
    if req.peer_group is not None:
        spec = PeerGroupSpec.from_dict(req.peer_group.model_dump())
        d, _ = build_peer_group(d, spec)
    return d


def _train_response(result: TrainResult) -> schemas.TrainResponse:
    return schemas.TrainResponse(
        model_id=result.model_id,
        kind=result.kind,
        peer_group=result.peer_group,
        metrics=schemas.MetricsBody(**result.metrics.to_dict()),
        cv_report=result.cv_report.to_dict() if result.cv_report else None,
        summary=result.summary,
    )


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="energybench", version="0.1.0")
    registry = Registry(config.registry_dir)
    jobs: dict[str, dict] = {}
    jobs_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        errors = [
            {"loc": [str(p) for p in e.get("loc", ())], "msg": e.get("msg", ""),
             "type": e.get("type", "")}
            for e in exc.errors()
        ]
        return _error_response(400, "invalid_request", "request body failed validation",
                               {"errors": errors})

    @app.exception_handler(BenchError)
    async def on_bench_error(request: Request, exc: BenchError):
        status = 404 if isinstance(exc, NotFoundError) else 422
        return _error_response(status, exc.code, exc.message, _safe_details(exc.details))

    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/v1/models", response_model=list[schemas.ModelSummary])
    def list_models():
        return registry.list()

    @app.get("/v1/models/{model_id}")
    def get_model(model_id: str):
        return registry.get(model_id)

    @app.get("/v1/jobs/{job_id}", response_model=schemas.JobStatus)
    def get_job(job_id: str):
        with jobs_lock:
            if job_id not in jobs:
                raise NotFoundError(f"no job {job_id!r}", job_id=job_id)
            return schemas.JobStatus(job_id=job_id, **jobs[job_id])

    def _run_training(req: schemas.TrainRequest, d: Dataset) -> TrainResult:
        grid = TuneGrid.from_dict(
            {k: v for k, v in req.grid.model_dump().items() if v is not None}
        ) if req.grid else None
        result = train_model(
            d, req.kind, seed=req.seed,
            peer_group=req.peer_group.name if req.peer_group else "",
            grid=grid, k=req.k, repeats=req.repeats,
            calibrate_in_sample=req.calibrate_in_sample)
        registry.put(result.to_entry())
        return result

    @app.post("/v1/train")
    def train(req: schemas.TrainRequest):
        d = _load_dataset(req)
        if d.n <= config.train_sync_limit:
            return _train_response(_run_training(req, d))
        job_id = "job-" + hashlib.sha256(req.model_dump_json().encode()).hexdigest()[:16]
        with jobs_lock:
            if job_id not in jobs or jobs[job_id]["status"] == "failed":
                jobs[job_id] = {"status": "running", "model_id": None,
                                "error": None, "result": None}
                worker = threading.Thread(
                    target=_job_body, args=(job_id, req, d), daemon=True)
                worker.start()
        return JSONResponse(status_code=202, content={"job_id": job_id, "status": "running"})

    def _job_body(job_id: str, req: schemas.TrainRequest, d: Dataset):
        try:
            result = _run_training(req, d)
            with jobs_lock:
                jobs[job_id] = {
                    "status": "done", "model_id": result.model_id, "error": None,
                    "result": _train_response(result).model_dump(),
                }
        except BenchError as exc:
            with jobs_lock:
                jobs[job_id] = {
                    "status": "failed", "model_id": None,
                    "error": {"code": exc.code, "message": exc.message},
                    "result": None,
                }

    @app.post("/v1/score", response_model=schemas.ScoreResponse)
    def score(req: schemas.ScoreRequest):
        entry = registry.get(req.model_id)
        return score_record(entry, req.record).to_dict()

    @app.post("/v1/explain", response_model=schemas.ExplainResponse)
    def explain(req: schemas.ExplainRequest):
        entry = registry.get(req.model_id)
        expl, force, inter = explain_record(entry, req.record, req.interactions)
        return {
            "explanation": expl.to_dict(),
            "force": force.to_dict(),
            "interactions": inter.to_dict() if inter else None,
        }

    @app.post("/v1/whatif", response_model=schemas.WhatIfResponse)
    def whatif(req: schemas.WhatIfRequest):
        entry = registry.get(req.model_id)
        return whatif_record(entry, req.record, req.overrides)

    return app


def _safe_details(details: dict) -> dict:
    out = {}
    for k, v in details.items():
        try:
            json.dumps(v)
            out[k] = v
        except TypeError:
            out[k] = repr(v)
    return out
