"""Column-typed tabular data model and cleaning pipeline.

Datasets are immutable columnar tables: numeric and boolean columns are
float64 arrays (NaN marks a missing cell, booleans are 0.0/1.0), categorical
columns are object arrays of strings (None marks missing). All operations
are pure functions returning new Datasets, so instances are safe to share
across threads.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DataError,
    EmptyInputError,
    EmptyPeerGroupError,
    SchemaError,
    RowParseError,
)

KINDS = ("numeric", "boolean", "categorical")
ROLES = ("predictor", "target", "weight", "key", "metadata")

_TRUE = {"1", "yes", "true", "y"}
_FALSE = {"0", "no", "false", "n"}


@dataclass(frozen=True)
class ColumnSpec:
    """Declared name, kind, unit, and modeling role of one column."""

    name: str
    kind: str
    role: str = "predictor"
    unit: str = ""
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown column kind {self.kind!r}", column=self.name)
        if self.role not in ROLES:
            raise SchemaError(f"unknown column role {self.role!r}", column=self.name)
        if self.kind == "categorical" and not self.levels:
            raise SchemaError(
                f"categorical column {self.name!r} must declare its levels",
                column=self.name,
            )
        object.__setattr__(self, "levels", tuple(self.levels))

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind, "role": self.role, "unit": self.unit}
        if self.levels:
            d["levels"] = list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnSpec":
        return cls(
            name=d["name"],
            kind=d["kind"],
            role=d.get("role", "predictor"),
            unit=d.get("unit", ""),
            levels=tuple(d.get("levels", ())),
        )


def _parse_cell(raw: str, spec: ColumnSpec, line: int):
    raw = raw.strip()
    if raw == "":
        return math.nan if spec.kind in ("numeric", "boolean") else None
    if spec.kind == "numeric":
        try:
            return float(raw)
        except ValueError:
            raise RowParseError(
                f"line {line}: cannot parse {raw!r} as numeric in column {spec.name!r}",
                line=line, column=spec.name,
            ) from None
    if spec.kind == "boolean":
        low = raw.lower()
        if low in _TRUE:
            return 1.0
        if low in _FALSE:
            return 0.0
        raise RowParseError(
            f"line {line}: cannot parse {raw!r} as boolean in column {spec.name!r}",
            line=line, column=spec.name,
        )
    if raw not in spec.levels:
        raise RowParseError(
            f"line {line}: {raw!r} is not a declared level of column {spec.name!r}",
            line=line, column=spec.name,
        )
    return raw


class Dataset:
    """Immutable table of rows conforming to a list of ColumnSpecs.

    ``columns`` maps column name to a read-only ndarray. At most one column
    may carry role=target and at most one role=weight; operations that need
    a target (peer-group build, model training) check it is present.
    """

    def __init__(self, schema: list[ColumnSpec] | tuple[ColumnSpec, ...],
                 columns: dict[str, np.ndarray]):
        schema = tuple(schema)
        names = [c.name for c in schema]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names in schema")
        if sum(1 for c in schema if c.role == "target") > 1:
            raise SchemaError("more than one target column declared")
        if sum(1 for c in schema if c.role == "weight") > 1:
            raise SchemaError("more than one weight column declared")
        if set(columns) != set(names):
            raise SchemaError("column data does not match schema names")
        n = {len(v) for v in columns.values()}
        if len(n) > 1:
            raise SchemaError("ragged columns")
        self.schema = schema
        self._cols: dict[str, np.ndarray] = {}
        for c in schema:
            arr = np.asarray(columns[c.name],
                             dtype=float if c.kind in ("numeric", "boolean") else object)
            arr.setflags(write=False)
            self._cols[c.name] = arr
        wcol = self.weight_column
        if wcol is not None and self.n:
            w = self._cols[wcol]
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise DataError("weights must be strictly positive and finite")

    @property
    def n(self) -> int:
        return 0 if not self._cols else len(next(iter(self._cols.values())))

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.schema]

    def column(self, name: str) -> np.ndarray:
        if name not in self._cols:
            raise SchemaError(f"no such column {name!r}", column=name)
        return self._cols[name]

    def spec(self, name: str) -> ColumnSpec:
        for c in self.schema:
            if c.name == name:
                return c
        raise SchemaError(f"no such column {name!r}", column=name)

    @property
    def target_column(self) -> str | None:
        for c in self.schema:
            if c.role == "target":
                return c.name
        return None

    @property
    def weight_column(self) -> str | None:
        for c in self.schema:
            if c.role == "weight":
                return c.name
        return None

    @property
    def weights(self) -> np.ndarray | None:
        w = self.weight_column
        return None if w is None else self._cols[w]

    def row(self, i: int) -> dict:
        return {name: arr[i] for name, arr in self._cols.items()}

    def take(self, idx) -> "Dataset":
        """New Dataset with the rows selected by ``idx`` (order preserved)."""
        return Dataset(self.schema, {k: v[idx] for k, v in self._cols.items()})

    def to_csv(self) -> str:
        """Deterministic RFC-4180 rendering (floats via repr, round-trip exact)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.column_names)
        for i in range(self.n):
            row = []
            for c in self.schema:
                v = self._cols[c.name][i]
                if c.kind in ("numeric", "boolean"):
                    row.append("" if math.isnan(v) else repr(float(v)))
                else:
                    row.append("" if v is None else v)
            writer.writerow(row)
        return buf.getvalue()


def load_table(path: str, schema: list[ColumnSpec]) -> Dataset:
    """Parse a UTF-8, comma-separated, header-first CSV file against ``schema``.

    Columns in the file that the schema does not declare are ignored. Raises
    SchemaError for a missing column, RowParseError (with the 1-based file
    line) for an unparseable cell, and EmptyInputError for a header-only file.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return _load_csv(fh, schema, source=path)


def load_table_string(text: str, schema: list[ColumnSpec], source: str = "<inline>") -> Dataset:
    return _load_csv(io.StringIO(text), schema, source=source)


def _load_csv(fh, schema, source: str) -> Dataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyInputError(f"{source}: file is empty") from None
    header = [h.strip() for h in header]
    positions = {}
    for spec in schema:
        if spec.name not in header:
            raise SchemaError(f"{source}: header is missing column {spec.name!r}",
                              column=spec.name)
        positions[spec.name] = header.index(spec.name)
    data: dict[str, list] = {spec.name: [] for spec in schema}
    n = 0
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        for spec in schema:
            pos = positions[spec.name]
            raw = row[pos] if pos < len(row) else ""
            data[spec.name].append(_parse_cell(raw, spec, line_no))
        n += 1
    if n == 0:
        raise EmptyInputError(f"{source}: no data rows")
    return Dataset(schema, {k: np.asarray(v, dtype=object) for k, v in data.items()})


@dataclass(frozen=True)
class JoinStats:
    matched: int
    dropped_duplicate: int
    unmatched: int

    def to_dict(self) -> dict:
        return {"matched": self.matched, "dropped_duplicate": self.dropped_duplicate,
                "unmatched": self.unmatched}


def merge_sources(energy: Dataset, assessor: Dataset, key_column: str
                  ) -> tuple[Dataset, JoinStats]:
    """Inner-join two sources on ``key_column``.

    Keys duplicated on either side disqualify the key entirely: every row
    bearing it (both sides) is dropped and counted, so no record is silently
    chosen over another. Disjoint keys yield an empty Dataset, not an error.
    """
    for side, d in (("energy", energy), ("assessor", assessor)):
        if key_column not in d.column_names:
            raise SchemaError(f"{side} table has no key column {key_column!r}",
                              column=key_column)
    e_keys = list(energy.column(key_column))
    a_keys = list(assessor.column(key_column))

    def counts(keys):
        c: dict = {}
        for k in keys:
            c[k] = c.get(k, 0) + 1
        return c

    e_counts, a_counts = counts(e_keys), counts(a_keys)
    dup_keys = {k for k, c in e_counts.items() if c > 1} | \
               {k for k, c in a_counts.items() if c > 1}
    dropped_dup = sum(1 for k in e_keys if k in dup_keys) + \
                  sum(1 for k in a_keys if k in dup_keys)
    shared = (set(e_counts) & set(a_counts)) - dup_keys
    unmatched = sum(1 for k in e_keys if k not in dup_keys and k not in shared) + \
                sum(1 for k in a_keys if k not in dup_keys and k not in shared)

    e_idx = [i for i, k in enumerate(e_keys) if k in shared]
    a_pos = {k: i for i, k in enumerate(a_keys) if k in shared}

    extra = [c for c in assessor.schema if c.name != key_column]
    for c in extra:
        if c.name in set(energy.column_names):
            raise SchemaError(
                f"column {c.name!r} exists in both sources; only the key may repeat",
                column=c.name)
    schema = list(energy.schema) + extra
    cols = {c.name: energy.column(c.name)[e_idx] for c in energy.schema}
    order = [a_pos[e_keys[i]] for i in e_idx]
    for c in extra:
        cols[c.name] = assessor.column(c.name)[order]
    stats = JoinStats(matched=len(e_idx), dropped_duplicate=dropped_dup,
                      unmatched=unmatched)
    return Dataset(schema, cols), stats


@dataclass(frozen=True)
class RangeClause:
    column: str
    min: float | None = None
    max: float | None = None


@dataclass(frozen=True)
class PercentileClause:
    column: str
    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise SchemaError("percentile clause requires low < high", column=self.column)


@dataclass(frozen=True)
class RequiredValueClause:
    column: str
    allowed: tuple[str, ...]


@dataclass(frozen=True)
class FilterSpec:
    """Row filters: inclusive numeric ranges, percentile trims, categorical whitelists."""

    ranges: tuple[RangeClause, ...] = ()
    percentiles: tuple[PercentileClause, ...] = ()
    required: tuple[RequiredValueClause, ...] = ()

    @classmethod
    def from_dict(cls, d: dict) -> "FilterSpec":
        return cls(
            ranges=tuple(RangeClause(c["column"], c.get("min"), c.get("max"))
                         for c in d.get("ranges", ())),
            percentiles=tuple(PercentileClause(c["column"], c["low"], c["high"])
                              for c in d.get("percentiles", ())),
            required=tuple(RequiredValueClause(c["column"], tuple(c["allowed"]))
                           for c in d.get("required", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> "FilterSpec":
        return cls.from_dict(json.loads(text))


def apply_filters(d: Dataset, f: FilterSpec) -> tuple[Dataset, dict[str, int]]:
    """Drop rows violating any clause; returns the survivors and a per-clause tally.

    Percentile bounds are linearly interpolated percentiles of the *input*
    Dataset (inclusive). A missing value in a filtered column fails that
    clause: compliance cannot be verified, and outlier trims should not pass
    unknowns through.
    """
    keep = np.ones(d.n, dtype=bool)
    tally: dict[str, int] = {}

    def numeric_values(column: str) -> np.ndarray:
        spec = d.spec(column)
        if spec.kind == "categorical":
            raise SchemaError(f"range/percentile clause on non-numeric column {column!r}",
                              column=column)
        return d.column(column)

    for clause in f.ranges:
        v = numeric_values(clause.column)
        ok = np.isfinite(v)
        if clause.min is not None:
            ok &= v >= clause.min
        if clause.max is not None:
            ok &= v <= clause.max
        label = f"range:{clause.column}"
        tally[label] = tally.get(label, 0) + int(np.sum(keep & ~ok))
        keep &= ok
    for clause in f.percentiles:
        v = numeric_values(clause.column)
        finite = v[np.isfinite(v)]
        if finite.size == 0:
            raise DataError(f"percentile clause on all-missing column {clause.column!r}")
        lo = np.percentile(finite, clause.low)
        hi = np.percentile(finite, clause.high)
        ok = np.isfinite(v) & (v >= lo) & (v <= hi)
        label = f"percentile:{clause.column}"
        tally[label] = tally.get(label, 0) + int(np.sum(keep & ~ok))
        keep &= ok
    for clause in f.required:
        col = d.column(clause.column)
        allowed = set(clause.allowed)
        ok = np.fromiter((c in allowed for c in col), dtype=bool, count=d.n)
        label = f"required:{clause.column}"
        tally[label] = tally.get(label, 0) + int(np.sum(keep & ~ok))
        keep &= ok
    return d.take(np.nonzero(keep)[0]), tally


@dataclass(frozen=True)
class PeerGroupSpec:
    """Maps raw property-type labels into one benchmark group and names its model columns."""

    name: str
    property_types: tuple[str, ...]
    predictors: tuple[str, ...]
    target: str
    property_column: str = "PropertyType"

    def __post_init__(self):
        if not self.predictors:
            raise SchemaError("peer group needs a non-empty predictor list")

    @classmethod
    def from_dict(cls, d: dict) -> "PeerGroupSpec":
        return cls(
            name=d["name"],
            property_types=tuple(d["property_types"]),
            predictors=tuple(d["predictors"]),
            target=d["target"],
            property_column=d.get("property_column", "PropertyType"),
        )

    @classmethod
    def from_json(cls, text: str) -> "PeerGroupSpec":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {"name": self.name, "property_types": list(self.property_types),
                "predictors": list(self.predictors), "target": self.target,
                "property_column": self.property_column}


def _one_hot(d: Dataset, column: str, keep_idx: np.ndarray) -> tuple[list[ColumnSpec], dict[str, np.ndarray]]:
    """Encode a categorical column as k-1 indicators, dropping the modal level.

    The reference (dropped) level is the most frequent among surviving rows,
    ties broken lexicographically.
    """
    values = d.column(column)[keep_idx]
    counts: dict[str, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    top = max(counts.values())
    reference = min(lvl for lvl, c in counts.items() if c == top)
    specs, cols = [], {}
    for level in d.spec(column).levels:
        if level == reference or level not in counts:
            continue
        name = f"{column}={level}"
        specs.append(ColumnSpec(name=name, kind="boolean", role="predictor"))
        cols[name] = np.asarray([1.0 if v == level else 0.0 for v in values])
    return specs, cols


def build_peer_group(d: Dataset, spec: PeerGroupSpec) -> tuple[Dataset, dict[str, int]]:
    """Select and relabel the rows of one peer group, ready for model fitting.

    Keeps rows whose property-type label is in the group mapping, drops rows
    with any missing predictor/target cell (counted), restricts columns to
    keys + property type + predictors + target + weight, and one-hot encodes
    categorical predictors against their modal reference level.
    """
    if spec.property_column not in d.column_names:
        raise SchemaError(f"property-type column {spec.property_column!r} not found",
                          column=spec.property_column)
    for col in (*spec.predictors, spec.target):
        if col not in d.column_names:
            raise SchemaError(f"peer-group column {col!r} not found", column=col)

    labels = d.column(spec.property_column)
    wanted = set(spec.property_types)
    in_group = np.fromiter((v in wanted for v in labels), dtype=bool, count=d.n)

    missing = np.zeros(d.n, dtype=bool)
    for col in (*spec.predictors, spec.target):
        arr = d.column(col)
        if d.spec(col).kind == "categorical":
            missing |= np.fromiter((v is None for v in arr), dtype=bool, count=d.n)
        else:
            missing |= ~np.isfinite(arr)
    keep = np.nonzero(in_group & ~missing)[0]
    tally = {
        "out_of_group": int(np.sum(~in_group)),
        "missing_data": int(np.sum(in_group & missing)),
        "kept": int(keep.size),
    }
    if keep.size == 0:
        raise EmptyPeerGroupError(
            f"peer group {spec.name!r} has no surviving rows", group=spec.name)

    schema: list[ColumnSpec] = []
    cols: dict[str, np.ndarray] = {}
    for c in d.schema:
        if c.role == "key":
            schema.append(c)
            cols[c.name] = d.column(c.name)[keep]
    prop = d.spec(spec.property_column)
    schema.append(replace(prop, levels=prop.levels + ((spec.name,) if prop.kind == "categorical" and spec.name not in prop.levels else ())))
    cols[spec.property_column] = np.asarray([spec.name] * keep.size, dtype=object)

    for col in spec.predictors:
        cspec = d.spec(col)
        if cspec.kind == "categorical":
            one_specs, one_cols = _one_hot(d, col, keep)
            schema.extend(one_specs)
            cols.update(one_cols)
        else:
            schema.append(replace(cspec, role="predictor"))
            cols[col] = d.column(col)[keep]
    tspec = d.spec(spec.target)
    schema.append(replace(tspec, role="target"))
    cols[spec.target] = d.column(spec.target)[keep]
    wcol = d.weight_column
    if wcol is not None and wcol not in cols:
        schema.append(d.spec(wcol))
        cols[wcol] = d.column(wcol)[keep]
    return Dataset(schema, cols), tally


def schema_from_json(text: str) -> list[ColumnSpec]:
    doc = json.loads(text)
    cols = doc["columns"] if isinstance(doc, dict) else doc
    return [ColumnSpec.from_dict(c) for c in cols]


def schema_to_json(schema) -> str:
    return json.dumps({"columns": [c.to_dict() for c in schema]}, indent=2) + "\n"
