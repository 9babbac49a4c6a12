"""Pydantic request/response bodies for the /v1 API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ColumnDoc(BaseModel):
    name: str
    kind: str
    role: str = "predictor"
    unit: str = ""
    levels: list[str] = Field(default_factory=list)


class SchemaDoc(BaseModel):
    columns: list[ColumnDoc]


class PeerGroupDoc(BaseModel):
    name: str
    property_types: list[str]
    predictors: list[str]
    target: str
    property_column: str = "PropertyType"


class GridDoc(BaseModel):
    max_depth: list[int] | None = None
    nrounds: list[int] | None = None
    eta: list[float] | None = None
    colsample_bytree: list[float] | None = None
    subsample: list[float] | None = None
    min_leaf: int | None = None
    allow_out_of_range: bool | None = None


class TrainRequest(BaseModel):
    kind: str
    seed: int
    csv: str | None = None
    path: str | None = None
    table_schema: SchemaDoc | None = Field(default=None, alias="schema")
    schema_path: str | None = None
    peer_group: PeerGroupDoc | None = None
    grid: GridDoc | None = None
    k: int = 10
    repeats: int = 2
    calibrate_in_sample: bool = False

    model_config = {"populate_by_name": True}


class MetricsBody(BaseModel):
    r2: float
    adj_r2: float
    rmse: float
    nrmse_pct: float
    mape_pct: float
    n: int
    p: int
    mape_excluded: int


class TrainResponse(BaseModel):
    model_id: str
    kind: str
    peer_group: str
    metrics: MetricsBody
    cv_report: dict | None = None
    summary: dict | None = None

    model_config = {"protected_namespaces": ()}


class JobStatus(BaseModel):
    job_id: str
    status: str
    model_id: str | None = None
    error: dict | None = None
    result: TrainResponse | None = None

    model_config = {"protected_namespaces": ()}


class ScoreRequest(BaseModel):
    model_id: str
    record: dict[str, float]

    model_config = {"protected_namespaces": ()}


class ScoreResponse(BaseModel):
    score: int
    eer: float
    predicted: float
    certified: bool


class ExplainRequest(BaseModel):
    model_id: str
    record: dict[str, float]
    interactions: bool = False

    model_config = {"protected_namespaces": ()}


class ExplanationBody(BaseModel):
    base_value: float
    phi: list[float]
    feature_names: list[str]
    feature_values: list[float]
    prediction: float


class ForceBar(BaseModel):
    feature: str
    value: float
    phi: float


class ForceBody(BaseModel):
    base_value: float
    output_value: float
    positive: list[ForceBar]
    negative: list[ForceBar]


class InteractionBody(BaseModel):
    matrix: list[list[float]]
    base_value: float
    feature_names: list[str]
    feature_values: list[float]


class ExplainResponse(BaseModel):
    explanation: ExplanationBody
    force: ForceBody
    interactions: InteractionBody | None = None


class WhatIfRequest(BaseModel):
    model_id: str
    record: dict[str, float]
    overrides: dict[str, float] = Field(default_factory=dict)

    model_config = {"protected_namespaces": ()}


class WhatIfSide(BaseModel):
    score: int
    eer: float
    predicted: float
    certified: bool
    force: ForceBody
    explanation: ExplanationBody


class WhatIfResponse(BaseModel):
    baseline: WhatIfSide
    modified: WhatIfSide
    delta_score: int


class ModelSummary(BaseModel):
    model_id: str
    peer_group: str
    kind: str
    target: str

    model_config = {"protected_namespaces": ()}


class ErrorBody(BaseModel):
    code: str
    message: str
    details: dict = Field(default_factory=dict)
