"""`bench` command line: ingest/train/compare/explain plus `serve`.

The CLI stays a thin front over the pipeline module -- the same functions
the HTTP service calls -- so a record scored here and over the wire yields
identical numbers. Every command that fits models requires an explicit
--seed; nothing is seeded from the clock.

Exit codes: 0 ok, 2 schema/input errors, 3 empty peer group,
4 model-contract errors, 5 internal errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .datamodel import (
    FilterSpec,
    PeerGroupSpec,
    apply_filters,
    build_peer_group,
    load_table,
    merge_sources,
    schema_from_json,
    schema_to_json,
)
from .errors import (
    BenchError,
    BudgetExceededError,
    CalibrationError,
    ConfigurationError,
    DataError,
    DomainError,
    EmptyInputError,
    EmptyPeerGroupError,
    NotFoundError,
    RowParseError,
    SchemaError,
    UnderdeterminedError,
)
from .gbt import TuneGrid
from .pipeline import compare_kinds, compare_markdown, explain_record, train_model
from .registry import Registry, load_entry_file
from .render import force_svg, force_text

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_EMPTY_GROUP = 3
EXIT_MODEL = 4
EXIT_INTERNAL = 5

_MODEL_ERRORS = (BudgetExceededError, UnderdeterminedError, ConfigurationError,
                 DomainError, CalibrationError, DataError)
_SCHEMA_ERRORS = (SchemaError, RowParseError, EmptyInputError, NotFoundError)


def _exit_code(exc: BenchError) -> int:
    if isinstance(exc, EmptyPeerGroupError):
        return EXIT_EMPTY_GROUP
    if isinstance(exc, _MODEL_ERRORS):
        return EXIT_MODEL
    if isinstance(exc, _SCHEMA_ERRORS):
        return EXIT_SCHEMA
    return EXIT_INTERNAL


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _json_dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def cmd_ingest(args) -> int:
    energy_schema = schema_from_json(Path(args.energy_schema).read_text(encoding="utf-8"))
    d = load_table(args.energy, energy_schema)
    report: dict = {}
    if args.assessor:
        if not args.key:
            raise SchemaError("--key is required when merging two sources")
        assessor_schema = schema_from_json(
            Path(args.assessor_schema).read_text(encoding="utf-8"))
        a = load_table(args.assessor, assessor_schema)
        d, join_stats = merge_sources(d, a, args.key)
        report["join"] = join_stats.to_dict()
    if args.filters:
        spec = FilterSpec.from_json(Path(args.filters).read_text(encoding="utf-8"))
        d, tally = apply_filters(d, spec)
        report["filters"] = tally
    group = PeerGroupSpec.from_json(Path(args.group).read_text(encoding="utf-8"))
    grouped, tally = build_peer_group(d, group)
    report["peer_group"] = {"name": group.name, **tally}

    out = Path(args.out)
    _write(out / f"{group.name}.csv", grouped.to_csv())
    _write(out / f"{group.name}.schema.json", schema_to_json(grouped.schema))
    _write(out / "report.json", _json_dumps(report))
    print(_json_dumps(report), end="")
    return EXIT_OK


def _load_clean(args):
    schema_path = args.schema or str(Path(args.data).with_suffix("")) + ".schema.json"
    schema = schema_from_json(Path(schema_path).read_text(encoding="utf-8"))
    return load_table(args.data, schema)


def _load_grid(args) -> TuneGrid | None:
    if not args.grid:
        return None
    return TuneGrid.from_dict(json.loads(Path(args.grid).read_text(encoding="utf-8")))


def cmd_train(args) -> int:
    d = _load_clean(args)
    result = train_model(d, args.kind, seed=args.seed, peer_group=args.group_name,
                         grid=_load_grid(args), k=args.k, repeats=args.repeats,
                         n_jobs=args.jobs)
    registry = Registry(args.out)
    registry.put(result.to_entry())
    summary = {
        "model_id": result.model_id,
        "kind": result.kind,
        "metrics": result.metrics.to_dict(),
    }
    if result.cv_report:
        summary["cv_report"] = result.cv_report.to_dict()
    if result.summary:
        summary["summary"] = result.summary
    _write(Path(args.out) / f"{result.model_id}.metrics.json",
           _json_dumps(result.metrics.to_dict()))
    print(_json_dumps(summary), end="")
    return EXIT_OK


def cmd_compare(args) -> int:
    d = _load_clean(args)
    report = compare_kinds(d, args.kinds, seed=args.seed, k=args.k,
                           grid=_load_grid(args), repeats=args.repeats,
                           n_jobs=args.jobs)
    if args.out:
        _write(Path(args.out) / "compare.json", _json_dumps(report))
        _write(Path(args.out) / "compare.md", compare_markdown(report))
    if args.format == "markdown":
        print(compare_markdown(report), end="")
    else:
        print(_json_dumps(report), end="")
    return EXIT_OK


def cmd_explain(args) -> int:
    entry = load_entry_file(args.model)
    if args.dependence:
        return _emit_dependence(entry, args)
    if not args.record:
        raise SchemaError("--record is required unless --dependence is used")
    record = json.loads(Path(args.record).read_text(encoding="utf-8"))
    expl, force, inter = explain_record(entry, record, interactions=args.interactions)
    if args.format == "json":
        doc = {"explanation": expl.to_dict(), "force": force.to_dict()}
        if inter is not None:
            doc["interactions"] = inter.to_dict()
        text = _json_dumps(doc)
    elif args.format == "svg":
        text = force_svg(force)
    else:
        text = force_text(force) + "\n"
    if args.out:
        _write(Path(args.out), text)
    else:
        print(text, end="")
    return EXIT_OK


def _emit_dependence(entry: dict, args) -> int:
    from .explain import importance
    from .gbt import GbtModel
    from .pipeline import model_from_entry

    if not args.data:
        raise SchemaError("--dependence needs --data with the rows to attribute")
    model = model_from_entry(entry)
    if not isinstance(model, GbtModel):
        raise SchemaError("dependence data is derived from tree attributions; "
                          "train a gbt model")
    schema_path = args.schema or str(Path(args.data).with_suffix("")) + ".schema.json"
    schema = schema_from_json(Path(schema_path).read_text(encoding="utf-8"))
    d = load_table(args.data, schema)
    report = importance(model, d, n_jobs=args.jobs)
    rows = report.dependence_data(args.dependence, color_by=args.color_by)
    text = _json_dumps({"feature": args.dependence, "color_by": args.color_by,
                        "points": rows, "ranking": report.to_dict()["ranking"]})
    if args.out:
        _write(Path(args.out), text)
    else:
        print(text, end="")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig.load(args.config)
    uvicorn.run(create_app(config), host=config.host, port=config.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench",
                                     description="building energy benchmarking toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="merge, clean, and split sources into peer groups")
    p.add_argument("--energy", required=True, help="energy-disclosure CSV")
    p.add_argument("--energy-schema", required=True, help="schema JSON for --energy")
    p.add_argument("--assessor", help="assessor CSV to join")
    p.add_argument("--assessor-schema", help="schema JSON for --assessor")
    p.add_argument("--key", help="join key column")
    p.add_argument("--filters", help="FilterSpec JSON")
    p.add_argument("--group", required=True, help="PeerGroupSpec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fit one model kind on a cleaned peer-group CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", help="schema JSON (default: <data>.schema.json)")
    p.add_argument("--kind", required=True,
                   choices=["mlr", "mlri2", "mlri3", "mlri4", "gbt"])
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--grid", help="TuneGrid JSON for gbt")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--repeats", type=int, default=2)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--group-name", default="")
    p.add_argument("--out", required=True, help="registry directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="train several kinds on identical folds")
    p.add_argument("--data", required=True)
    p.add_argument("--schema")
    p.add_argument("--kinds", required=True, nargs="+",
                   choices=["mlr", "mlri2", "mlri3", "mlri4", "gbt"])
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--grid")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--repeats", type=int, default=2)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--format", choices=["json", "markdown"], default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("explain", help="attribute one record's prediction")
    p.add_argument("--model", required=True, help="registered model JSON file")
    p.add_argument("--record", help="record JSON file")
    p.add_argument("--interactions", action="store_true")
    p.add_argument("--format", choices=["json", "text", "svg"], default="json")
    p.add_argument("--dependence", metavar="FEATURE",
                   help="emit dependence-plot JSON for FEATURE over --data instead")
    p.add_argument("--color-by", metavar="FEATURE")
    p.add_argument("--data", help="rows to attribute for --dependence")
    p.add_argument("--schema")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("serve", help="run the HTTP service until signaled")
    p.add_argument("--config", help="service config JSON")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BenchError as exc:
        print(f"error [{exc.code}]: {exc.message}", file=sys.stderr)
        if exc.details:
            print(json.dumps(exc.details, default=repr), file=sys.stderr)
        return _exit_code(exc)
    except FileNotFoundError as exc:
        print(f"error [missing_file]: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error [internal_error]: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
