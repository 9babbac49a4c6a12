"""Interaction-term expansion of a predictor matrix.

Terms are products of raw (uncentered) predictor columns so fitted
coefficients keep their natural units. Expansion respects the hierarchy
rule: every order-k term implies all of its lower-order sub-terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .datamodel import Dataset
from .errors import ArgumentError, SchemaError


@dataclass(frozen=True)
class TermSpec:
    """One model term: a sorted tuple of distinct constituent feature names."""

    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise ArgumentError("a term needs at least one constituent feature")
        if list(self.names) != sorted(set(self.names)):
            raise ArgumentError(
                f"term constituents must be sorted and distinct, got {self.names}")

    @property
    def order(self) -> int:
        return len(self.names)

    @property
    def label(self) -> str:
        return ":".join(self.names)

    @classmethod
    def of(cls, *names: str) -> "TermSpec":
        return cls(tuple(sorted(set(names))))


@dataclass(frozen=True)
class DesignMatrix:
    """n x q matrix of term values with its TermSpecs in column order."""

    matrix: np.ndarray
    terms: tuple[TermSpec, ...]
    intercept: bool = True

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ArgumentError("design matrix must be 2-D")
        if m.shape[1] != len(self.terms):
            raise ArgumentError("column count does not match term count")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def q(self) -> int:
        return len(self.terms)

    @property
    def labels(self) -> list[str]:
        return [t.label for t in self.terms]

    def column_for(self, term: TermSpec) -> np.ndarray:
        for j, t in enumerate(self.terms):
            if t == term:
                return self.matrix[:, j]
        raise SchemaError(f"term {term.label!r} not in design matrix")


def design_from_dataset(d: Dataset) -> DesignMatrix:
    """Main-effect design over a Dataset's predictor columns, lexicographic order."""
    names = sorted(c.name for c in d.schema if c.role == "predictor")
    if not names:
        raise SchemaError("dataset has no predictor columns")
    cols = [np.asarray(d.column(n), dtype=float) for n in names]
    return DesignMatrix(np.column_stack(cols), tuple(TermSpec.of(n) for n in names))


def design_from_record(record: dict[str, float], terms: tuple[TermSpec, ...]) -> DesignMatrix:
    """Single-row design evaluating ``terms`` against a feature->value mapping."""
    row = []
    for t in terms:
        v = 1.0
        for name in t.names:
            if name not in record:
                raise SchemaError(f"record is missing feature {name!r}", column=name)
            v *= float(record[name])
        row.append(v)
    return DesignMatrix(np.asarray([row], dtype=float), terms)


def expand_interactions(base: DesignMatrix, m: int) -> DesignMatrix:
    """All main effects plus products of k distinct features for 2 <= k <= m.

    Column order is (term order, lexicographic constituent names), a pure
    function of the term names -- permuting input columns cannot change it.
    """
    if m < 1:
        raise ArgumentError(f"interaction order must be >= 1, got {m}")
    for t in base.terms:
        if t.order != 1:
            raise ArgumentError("expansion expects a main-effects-only design")
    by_name = {t.names[0]: base.matrix[:, j] for j, t in enumerate(base.terms)}
    names = sorted(by_name)
    terms: list[TermSpec] = [TermSpec.of(n) for n in names]
    cols: list[np.ndarray] = [by_name[n] for n in names]
    for k in range(2, m + 1):
        for combo in combinations(names, k):
            terms.append(TermSpec(tuple(combo)))
            col = by_name[combo[0]].copy()
            for n in combo[1:]:
                col = col * by_name[n]
            cols.append(col)
    return DesignMatrix(np.column_stack(cols), tuple(terms), intercept=base.intercept)


def expansion_size(p: int, m: int) -> int:
    """Term count of an m-order expansion over p features."""
    return sum(math.comb(p, k) for k in range(1, m + 1))


@dataclass(frozen=True)
class BudgetCheck:
    passed: bool
    q: int
    n: int
    limit: int

    def to_dict(self) -> dict:
        return {"passed": self.passed, "q": self.q, "n": self.n, "limit": self.limit}


def check_budget(q: int, n: int) -> BudgetCheck:
    """Pass iff the term count stays within a third of the sample count."""
    if n < 1:
        raise ArgumentError("sample count must be >= 1")
    limit = n // 3
    return BudgetCheck(passed=q <= limit, q=q, n=n, limit=limit)
