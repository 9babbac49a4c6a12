"""Shared training, scoring, and explanation flows.

The CLI commands and the HTTP endpoints both call into this module, so a
record scored from either surface runs through literally the same code and
returns the same numbers. Nothing here touches wall-clock time or implicit
randomness: every artifact is a pure function of (data, config, seed).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .datamodel import Dataset
from .errors import (
    BudgetExceededError,
    DataError,
    InteractionsUnsupportedError,
    SchemaError,
)
from .features import DesignMatrix, check_budget, design_from_dataset, expand_interactions
from .gbt import (
    CvReport,
    GbtModel,
    TuneGrid,
    fit_gbt,
    fold_assignments,
    grid_search_cv_arrays,
)
from .linreg import (
    LinearModel,
    fit_wls,
    predict_linear,
    predict_record as predict_linear_record,
    summarize_model,
)
from .explain import (
    Explanation,
    ForceData,
    InteractionExplanation,
    force_data,
    shap_interactions,
    shap_linear,
    shap_tree,
)
from .scoring import (
    MetricReport,
    ScoreResult,
    ScoreTable,
    evaluate,
    fit_score_table,
    score_building,
)

MODEL_KINDS = ("mlr", "mlri2", "mlri3", "mlri4", "gbt")
_LINEAR_ORDER = {"mlr": 1, "mlri2": 2, "mlri3": 3, "mlri4": 4}


def data_fingerprint(d: Dataset) -> str:
    return hashlib.sha256(d.to_csv().encode()).hexdigest()[:16]


def fold_hash(assign: np.ndarray) -> str:
    return hashlib.sha256(assign.astype(np.int64).tobytes()).hexdigest()[:16]


def model_id_for(kind: str, seed: int, fingerprint: str, peer_group: str,
                 grid: TuneGrid | None) -> str:
    payload = json.dumps(
        {"kind": kind, "seed": seed, "data": fingerprint, "group": peer_group,
         "grid": grid.to_dict() if grid else None},
        sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _design_subset(design: DesignMatrix, terms) -> DesignMatrix:
    cols = [design.column_for(t) for t in terms]
    return DesignMatrix(np.column_stack(cols) if cols else np.empty((design.n, 0)),
                        tuple(terms), intercept=design.intercept)


def _oof_seed(seed: int, fold: int) -> int:
    ss = np.random.SeedSequence([seed, fold, 0x0F0F])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class TrainResult:
    """Everything one training run produces, ready for registration."""

    model_id: str
    peer_group: str
    kind: str
    model: LinearModel | GbtModel
    score_table: ScoreTable | None
    metrics: MetricReport
    cv_report: CvReport | None
    summary: dict | None            # linear significance table
    feature_schema: tuple[dict, ...]
    feature_means: dict[str, float]
    target: str
    seed: int
    data_fingerprint: str
    oof_fold_hash: str
    eer_skipped: int                # non-positive predictions left out of calibration

    def to_entry(self) -> dict:
        return {
            "model_id": self.model_id,
            "peer_group": self.peer_group,
            "kind": self.kind,
            "model": self.model.to_dict(),
            "score_table": self.score_table.to_dict() if self.score_table else None,
            "feature_schema": list(self.feature_schema),
            "feature_means": self.feature_means,
            "target": self.target,
            "metadata": {
                "seed": self.seed,
                "data_fingerprint": self.data_fingerprint,
                "oof_fold_hash": self.oof_fold_hash,
                "eer_skipped": self.eer_skipped,
                "cv_report": self.cv_report.to_dict() if self.cv_report else None,
                "metrics": self.metrics.to_dict(),
                "summary": self.summary,
            },
        }


def _feature_schema(d: Dataset, target: str) -> tuple[dict, ...]:
    rows = []
    for c in d.schema:
        if c.role == "predictor":
            rows.append({"name": c.name, "kind": c.kind, "role": "predictor"})
    rows.append({"name": target, "kind": d.spec(target).kind, "role": "target"})
    return tuple(rows)


def train_model(d: Dataset, kind: str, seed: int, peer_group: str = "",
                grid: TuneGrid | None = None, k: int = 10, repeats: int = 2,
                fold_assign: np.ndarray | None = None, calibrate_in_sample: bool = False,
                n_jobs: int | None = None) -> TrainResult:
    """Fit one model kind, derive out-of-fold predictions, and calibrate scores.

    The efficiency-ratio table is fitted on out-of-fold predictions by
    default so the score distribution is not optimistically tight; pass
    calibrate_in_sample=True to use the refit model's own predictions.
    """
    if kind not in MODEL_KINDS:
        raise SchemaError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    target = d.target_column
    if target is None:
        raise SchemaError("dataset declares no target column")
    y = np.asarray(d.column(target), dtype=float)
    w = d.weights
    n = d.n
    if fold_assign is None:
        k_eff = min(k, n)
        fold_assign = fold_assignments(n, k_eff, seed, repeats=1)[0]
    base = design_from_dataset(d)

    cv_report = None
    summary = None
    oof = np.empty(n)

    if kind == "gbt":
        grid = grid or TuneGrid()
        names = tuple(t.names[0] for t in base.terms)
        model, cv_report = grid_search_cv_arrays(
            base.matrix, y, w, feature_names=names, grid=grid, k=min(k, n),
            repeats=repeats, seed=seed, n_jobs=n_jobs)
        chosen = grid.cells()[cv_report.chosen_index]
        for f in np.unique(fold_assign):
            train = fold_assign != f
            fold_model = fit_gbt(base.matrix[train], y[train],
                                 None if w is None else w[train],
                                 params=chosen, seed=_oof_seed(seed, int(f)),
                                 feature_names=names)
            oof[~train] = fold_model.predict(base.matrix[~train])
        p_metric = len(names)
    else:
        order = _LINEAR_ORDER[kind]
        design = expand_interactions(base, order) if order > 1 else base
        budget = check_budget(design.q, n)
        if not budget.passed:
            raise BudgetExceededError(
                f"{design.q} terms exceed the budget of {budget.limit} (n={n})",
                q=design.q, limit=budget.limit)
        model = fit_wls(design, y, w)
        summary = summarize_model(model)
        for f in np.unique(fold_assign):
            train = fold_assign != f
            sub_train = DesignMatrix(design.matrix[train], design.terms,
                                     intercept=design.intercept)
            fold_model = fit_wls(sub_train, y[train], None if w is None else w[train])
            sub_valid = _design_subset(
                DesignMatrix(design.matrix[~train], design.terms,
                             intercept=design.intercept),
                fold_model.terms)
            oof[~train] = predict_linear(fold_model, sub_valid)
        p_metric = len(model.terms)

    metrics = evaluate(y, oof, w, p=p_metric)

    calib_pred = _in_sample_predictions(model, base, d) if calibrate_in_sample else oof
    positive = calib_pred > 0
    eer_skipped = int(np.sum(~positive))
    eers = y[positive] / calib_pred[positive]
    score_table = None
    if eers.size >= 30:
        score_table = fit_score_table(eers, None if w is None else w[positive])

    means = {
        t.names[0]: float(np.mean(base.matrix[:, j]))
        for j, t in enumerate(base.terms)
    }
    fingerprint = data_fingerprint(d)
    return TrainResult(
        model_id=model_id_for(kind, seed, fingerprint, peer_group, grid if kind == "gbt" else None),
        peer_group=peer_group,
        kind=kind,
        model=model,
        score_table=score_table,
        metrics=metrics,
        cv_report=cv_report,
        summary=summary,
        feature_schema=_feature_schema(d, target),
        feature_means=means,
        target=target,
        seed=seed,
        data_fingerprint=fingerprint,
        oof_fold_hash=fold_hash(fold_assign),
        eer_skipped=eer_skipped,
    )


def _in_sample_predictions(model, base: DesignMatrix, d: Dataset) -> np.ndarray:
    if isinstance(model, GbtModel):
        return model.predict(base.matrix)
    design = _design_subset(
        expand_interactions(base, max((t.order for t in model.terms), default=1)),
        model.terms)
    return predict_linear(model, design)


def compare_kinds(d: Dataset, kinds, seed: int, k: int = 10,
                  grid: TuneGrid | None = None, repeats: int = 2,
                  n_jobs: int | None = None) -> dict:
    """Train several kinds against one shared fold assignment; table sorted by NRMSE."""
    n = d.n
    fold_assign = fold_assignments(n, min(k, n), seed, repeats=1)[0]
    rows = []
    for kind in kinds:
        result = train_model(d, kind, seed=seed, grid=grid, k=k, repeats=repeats,
                             fold_assign=fold_assign, n_jobs=n_jobs)
        rows.append({
            "kind": kind,
            "adj_r2": result.metrics.adj_r2,
            "r2": result.metrics.r2,
            "rmse": result.metrics.rmse,
            "nrmse_pct": result.metrics.nrmse_pct,
            "mape_pct": result.metrics.mape_pct,
            "fold_hash": result.oof_fold_hash,
        })
    rows.sort(key=lambda r: r["nrmse_pct"])
    return {"seed": seed, "k": min(k, n), "n": n, "rows": rows}


def compare_markdown(report: dict) -> str:
    head = "| kind | adj R2 | NRMSE % | MAPE % |"
    sep = "|------|--------|---------|--------|"
    lines = [head, sep]
    for r in report["rows"]:
        lines.append(
            f"| {r['kind']} | {r['adj_r2']:.4f} | {r['nrmse_pct']:.4f} | "
            f"{r['mape_pct']:.4f} |")
    return "\n".join(lines) + "\n"


# --- registered-entry helpers (shared by CLI `explain`/`score` and the service) ---


def model_from_entry(entry: dict) -> LinearModel | GbtModel:
    doc = entry["model"]
    if doc.get("kind") == "gbt":
        return GbtModel.from_dict(doc)
    return LinearModel.from_dict(doc)


def validate_record(entry: dict, record: dict, require_target: bool = True) -> list[dict]:
    """Field-level problems (empty list when the record fits the schema)."""
    problems = []
    declared = {row["name"]: row for row in entry["feature_schema"]}
    for name, row in declared.items():
        if name not in record:
            if row["role"] == "target" and not require_target:
                continue
            problems.append({"field": name, "error": "missing"})
            continue
        v = record[name]
        if not isinstance(v, (int, float)):
            problems.append(
                {"field": name, "error": f"expected a number, got {type(v).__name__}"})
            continue
        if row["kind"] == "boolean" and float(v) not in (0.0, 1.0):
            problems.append({"field": name, "error": "expected 0 or 1"})
    for name in record:
        if name not in declared:
            problems.append({"field": name, "error": "unknown feature"})
    return problems


def predict_entry(entry: dict, record: dict) -> float:
    model = model_from_entry(entry)
    if isinstance(model, GbtModel):
        return model.predict_record(record)
    return predict_linear_record(model, record)


def score_record(entry: dict, record: dict) -> ScoreResult:
    problems = validate_record(entry, record)
    if problems:
        raise SchemaError("record does not match the model schema", fields=problems)
    if entry.get("score_table") is None:
        raise DataError("model has no calibrated score table")
    table = ScoreTable.from_dict(entry["score_table"])
    predicted = predict_entry(entry, record)
    actual = float(record[entry["target"]])
    return score_building(actual, predicted, table)


def explain_record(entry: dict, record: dict, interactions: bool = False
                   ) -> tuple[Explanation, ForceData, InteractionExplanation | None]:
    problems = validate_record(entry, record, require_target=False)
    if problems:
        raise SchemaError("record does not match the model schema", fields=problems)
    model = model_from_entry(entry)
    if isinstance(model, GbtModel):
        x = [float(record[name]) for name in model.feature_names]
        expl = shap_tree(model, np.asarray(x))
        inter = shap_interactions(model, np.asarray(x)) if interactions else None
    else:
        if interactions:
            raise InteractionsUnsupportedError(
                "interaction explanations need a tree model")
        expl = shap_linear(model, record, entry["feature_means"])
        inter = None
    return expl, force_data(expl), inter


def whatif_record(entry: dict, record: dict, overrides: dict) -> dict:
    """Score + explain the record as-is and with overrides applied."""
    declared = {row["name"] for row in entry["feature_schema"]}
    bad = [
        {"field": name, "error": "unknown feature"}
        for name in overrides if name not in declared
    ]
    for name, v in overrides.items():
        if name in declared and not isinstance(v, (int, float)):
            bad.append({"field": name, "error": f"expected a number, got {type(v).__name__}"})
    if bad:
        raise SchemaError("invalid overrides", fields=bad)
    modified = {**record, **overrides}
    base_score = score_record(entry, record)
    base_expl, base_force, _ = explain_record(entry, record)
    mod_score = score_record(entry, modified)
    mod_expl, mod_force, _ = explain_record(entry, modified)
    return {
        "baseline": {**base_score.to_dict(), "force": base_force.to_dict(),
                     "explanation": base_expl.to_dict()},
        "modified": {**mod_score.to_dict(), "force": mod_force.to_dict(),
                     "explanation": mod_expl.to_dict()},
        "delta_score": mod_score.score - base_score.score,
    }
