"""Depth-limited CART regression trees boosted with shrinkage and subsampling.

Trees are grown greedily on weighted squared-error reduction with candidate
thresholds at midpoints between consecutive sorted distinct values. Boosting
fits each round's tree to the current residuals; per-node cover counts are
re-measured on the full training set after each tree so explanation code can
form cover-weighted conditional expectations.

All randomness flows through numpy's PCG64 generator seeded from explicit
SeedSequence keys, so any (cell, repeat, fold) fit reproduces bit-for-bit
regardless of execution order or parallelism.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from itertools import product

import numpy as np

from .datamodel import Dataset
from .errors import ArgumentError, ConfigurationError, DataError, SchemaError
from .features import design_from_dataset

GBT_SCHEMA_VERSION = 1

# Tuning bounds from the published search ranges; a TuneGrid may leave them
# only when explicitly constructed with allow_out_of_range.
BOUNDS = {
    "max_depth": (2, 3),
    "nrounds": (1, 200),
    "eta": (0.1, 0.9),
    "colsample_bytree": (0.2, 0.8),
    "subsample": (0.25, 1.0),
}


@dataclass(frozen=True)
class TreeNode:
    """Binary regression tree node; ``feature is None`` marks a leaf."""

    cover: float
    value: float = 0.0
    feature: int | None = None
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def paths(self) -> list[list[int]]:
        """Feature indices along every root-to-leaf path."""
        if self.is_leaf:
            return [[]]
        out = []
        for child in (self.left, self.right):
            out.extend([self.feature] + p for p in child.paths())
        return out

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"cover": self.cover, "value": self.value}
        return {
            "cover": self.cover,
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "feature" not in d:
            return cls(cover=d["cover"], value=d["value"])
        return cls(
            cover=d["cover"],
            feature=d["feature"],
            threshold=d["threshold"],
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )


def tree_predict(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        nd, idx = stack.pop()
        if nd.is_leaf:
            out[idx] = nd.value
        else:
            mask = X[idx, nd.feature] < nd.threshold
            stack.append((nd.left, idx[mask]))
            stack.append((nd.right, idx[~mask]))
    return out


def _node_sse(wy2: float, wy: float, wsum: float) -> float:
    return wy2 - (wy * wy) / wsum


def _best_split(X, y, w, idx, min_leaf):
    """Scan all (feature, midpoint) candidates; return the max-gain split.

    Ties break to the lowest feature index, then the lowest threshold, which
    the ascending scan order delivers with a strict comparison.
    """
    n = idx.size
    wn = w[idx]
    yn = y[idx]
    parent_sse = _node_sse(float(np.sum(wn * yn * yn)), float(np.sum(wn * yn)),
                           float(np.sum(wn)))
    tol = 1e-12 * max(1.0, abs(parent_sse))
    best = None  # (gain, feature, threshold, mask_left)
    for j in range(X.shape[1]):
        v = X[idx, j]
        order = np.argsort(v, kind="stable")
        vs, ys, ws = v[order], yn[order], wn[order]
        cw = np.cumsum(ws)
        cwy = np.cumsum(ws * ys)
        cwy2 = np.cumsum(ws * ys * ys)
        tw, twy, twy2 = cw[-1], cwy[-1], cwy2[-1]
        pos = np.nonzero(vs[:-1] < vs[1:])[0]
        if pos.size == 0:
            continue
        left_n = pos + 1
        right_n = n - left_n
        valid = (left_n >= min_leaf) & (right_n >= min_leaf)
        thr = (vs[pos] + vs[pos + 1]) / 2.0
        valid &= (thr > vs[pos]) & (thr <= vs[pos + 1])  # guard float-degenerate midpoints
        if not np.any(valid):
            continue
        pos, thr = pos[valid], thr[valid]
        sse_l = cwy2[pos] - cwy[pos] ** 2 / cw[pos]
        sse_r = (twy2 - cwy2[pos]) - (twy - cwy[pos]) ** 2 / (tw - cw[pos])
        gains = parent_sse - sse_l - sse_r
        g = int(np.argmax(gains))
        if gains[g] > tol and (best is None or gains[g] > best[0]):
            best = (float(gains[g]), j, float(thr[g]))
    return best


def fit_cart(X, y, w=None, max_depth: int = 2, min_leaf: int = 1) -> TreeNode:
    """Greedy top-down CART minimizing weighted SSE; leaves hold weighted means."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("empty or non-matrix input")
    n = X.shape[0]
    if w is None:
        w = np.ones(n)
    else:
        w = np.asarray(w, dtype=float)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
        raise DataError("non-finite cell in tree input")
    if min_leaf < 1:
        raise ArgumentError("min_leaf must be >= 1")
    if n < 2 * min_leaf:
        raise DataError(f"need at least {2 * min_leaf} rows to grow a tree, got {n}")

    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        wn = w[idx]
        value = float(np.sum(wn * y[idx]) / np.sum(wn))
        if depth >= max_depth or idx.size < 2 * min_leaf:
            return TreeNode(cover=float(idx.size), value=value)
        split = _best_split(X, y, w, idx, min_leaf)
        if split is None:
            return TreeNode(cover=float(idx.size), value=value)
        _, j, thr = split
        mask = X[idx, j] < thr
        return TreeNode(
            cover=float(idx.size), feature=j, threshold=thr,
            left=grow(idx[mask], depth + 1), right=grow(idx[~mask], depth + 1),
        )

    return grow(np.arange(n), 0)


def _recount_covers(node: TreeNode, X: np.ndarray) -> TreeNode:
    """Rebuild the tree with cover = full-training-set rows routed per node."""

    def walk(nd: TreeNode, idx: np.ndarray) -> TreeNode:
        if nd.is_leaf:
            return replace(nd, cover=float(idx.size))
        mask = X[idx, nd.feature] < nd.threshold
        return replace(nd, cover=float(idx.size),
                       left=walk(nd.left, idx[mask]), right=walk(nd.right, idx[~mask]))

    return walk(node, np.arange(X.shape[0]))


@dataclass(frozen=True)
class GbtParams:
    """One grid cell of boosting hyper-parameters."""

    max_depth: int = 2
    nrounds: int = 50
    eta: float = 0.3
    colsample_bytree: float = 1.0
    subsample: float = 1.0
    min_leaf: int = 1

    def validate(self):
        if not 0.0 < self.eta <= 1.0:
            raise ConfigurationError(f"eta must be in (0, 1], got {self.eta}")
        if not 0.0 < self.subsample <= 1.0:
            raise ConfigurationError("subsample must be in (0, 1]")
        if not 0.0 < self.colsample_bytree <= 1.0:
            raise ConfigurationError("colsample_bytree must be in (0, 1]")
        if self.nrounds < 1:
            raise ConfigurationError("nrounds must be >= 1")
        if self.max_depth < 0:
            raise ConfigurationError("max_depth must be >= 0")

    def to_dict(self) -> dict:
        return {
            "max_depth": self.max_depth, "nrounds": self.nrounds, "eta": self.eta,
            "colsample_bytree": self.colsample_bytree, "subsample": self.subsample,
            "min_leaf": self.min_leaf,
        }


@dataclass(frozen=True)
class GbtModel:
    """Boosted ensemble: prediction = base_score + eta * sum of tree outputs."""

    base_score: float
    trees: tuple[TreeNode, ...]
    eta: float
    max_depth: int
    feature_names: tuple[str, ...]

    def predict(self, X, n_trees: int | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise SchemaError(
                f"expected {len(self.feature_names)} feature columns, got "
                f"{X.shape[1] if X.ndim == 2 else 'non-matrix'}")
        trees = self.trees if n_trees is None else self.trees[:n_trees]
        out = np.full(X.shape[0], self.base_score)
        for t in trees:
            out += self.eta * tree_predict(t, X)
        return out

    def predict_record(self, record: dict[str, float]) -> float:
        row = []
        for name in self.feature_names:
            if name not in record:
                raise SchemaError(f"record is missing feature {name!r}", column=name)
            row.append(float(record[name]))
        return float(self.predict(np.asarray([row]))[0])

    def to_dict(self) -> dict:
        return {
            "kind": "gbt",
            "schema_version": GBT_SCHEMA_VERSION,
            "base_score": self.base_score,
            "eta": self.eta,
            "max_depth": self.max_depth,
            "feature_names": list(self.feature_names),
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "GbtModel":
        if d.get("schema_version") != GBT_SCHEMA_VERSION:
            raise SchemaError(f"unsupported model schema version {d.get('schema_version')}")
        return cls(
            base_score=d["base_score"],
            trees=tuple(TreeNode.from_dict(t) for t in d["trees"]),
            eta=d["eta"],
            max_depth=d["max_depth"],
            feature_names=tuple(d["feature_names"]),
        )


def predict_gbt(m: GbtModel, X) -> np.ndarray:
    return m.predict(X)


def fit_gbt(X, y, w=None, params: GbtParams = GbtParams(), seed: int = 0,
            feature_names: tuple[str, ...] | None = None) -> GbtModel:
    """Boost CART trees against residuals with row/column subsampling.

    Each round draws floor(subsample*n) rows and ceil(colsample*p) features
    without replacement from the seeded PCG64 stream (rows first, then
    features), fits a tree to the current residuals on that sample, and
    shrinks its contribution by eta.
    """
    params.validate()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < 10:
        raise DataError(f"boosting needs at least 10 rows, got {n}")
    if w is None:
        w = np.ones(n)
    else:
        w = np.asarray(w, dtype=float)
    n_sub = int(math.floor(params.subsample * n))
    if n_sub < 2 * params.min_leaf:
        raise ConfigurationError(
            f"subsample={params.subsample} leaves {n_sub} rows; a tree cannot form",
            n_sub=n_sub)
    p_sub = int(math.ceil(params.colsample_bytree * p))
    if feature_names is None:
        feature_names = tuple(f"x{j}" for j in range(p))
    if len(feature_names) != p:
        raise SchemaError("feature name count does not match matrix width")

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    base = float(np.sum(w * y) / np.sum(w))
    pred = np.full(n, base)
    trees: list[TreeNode] = []
    for _ in range(params.nrounds):
        rows = np.sort(rng.choice(n, size=n_sub, replace=False))
        feats = np.sort(rng.choice(p, size=p_sub, replace=False))
        resid = y - pred
        tree = fit_cart(X[np.ix_(rows, feats)], resid[rows], w[rows],
                        max_depth=params.max_depth, min_leaf=params.min_leaf)
        tree = _remap_features(tree, feats)
        tree = _recount_covers(tree, X)
        trees.append(tree)
        pred += params.eta * tree_predict(tree, X)
    return GbtModel(base_score=base, trees=tuple(trees), eta=params.eta,
                    max_depth=params.max_depth, feature_names=feature_names)


def _remap_features(node: TreeNode, feats: np.ndarray) -> TreeNode:
    if node.is_leaf:
        return node
    return replace(node, feature=int(feats[node.feature]),
                   left=_remap_features(node.left, feats),
                   right=_remap_features(node.right, feats))


@dataclass(frozen=True)
class TuneGrid:
    """Grid-search values per hyper-parameter, validated against the search bounds."""

    max_depth: tuple[int, ...] = (2, 3)
    nrounds: tuple[int, ...] = (25, 50, 100, 150, 200)
    eta: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    colsample_bytree: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8)
    subsample: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    min_leaf: int = 1
    allow_out_of_range: bool = False

    def __post_init__(self):
        for name in ("max_depth", "nrounds", "eta", "colsample_bytree", "subsample"):
            vals = tuple(getattr(self, name))
            object.__setattr__(self, name, vals)
            if not vals:
                raise ConfigurationError(f"grid dimension {name} is empty")
            if not self.allow_out_of_range:
                lo, hi = BOUNDS[name]
                bad = [v for v in vals if not lo <= v <= hi]
                if bad:
                    raise ConfigurationError(
                        f"{name} values {bad} outside search range [{lo}, {hi}]; "
                        "set allow_out_of_range to override")

    def cells(self) -> list[GbtParams]:
        return [
            GbtParams(max_depth=d, nrounds=r, eta=e, colsample_bytree=c,
                      subsample=s, min_leaf=self.min_leaf)
            for d, r, e, c, s in product(self.max_depth, self.nrounds, self.eta,
                                         self.colsample_bytree, self.subsample)
        ]

    @classmethod
    def from_dict(cls, d: dict) -> "TuneGrid":
        kw = {}
        for name in ("max_depth", "nrounds", "eta", "colsample_bytree", "subsample"):
            if name in d:
                kw[name] = tuple(d[name])
        if "min_leaf" in d:
            kw["min_leaf"] = d["min_leaf"]
        if "allow_out_of_range" in d:
            kw["allow_out_of_range"] = d["allow_out_of_range"]
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "max_depth": list(self.max_depth), "nrounds": list(self.nrounds),
            "eta": list(self.eta), "colsample_bytree": list(self.colsample_bytree),
            "subsample": list(self.subsample), "min_leaf": self.min_leaf,
        }


@dataclass(frozen=True)
class CvReport:
    """Everything needed to replay a grid search: per-cell RMSE stats and the winner."""

    cells: tuple[dict, ...]   # {"params": ..., "mean_rmse": ..., "std_rmse": ...}
    chosen_index: int
    seed: int
    k: int
    repeats: int
    n: int

    def to_dict(self) -> dict:
        return {
            "cells": list(self.cells),
            "chosen_index": self.chosen_index,
            "chosen_params": self.cells[self.chosen_index]["params"],
            "seed": self.seed,
            "k": self.k,
            "repeats": self.repeats,
            "n": self.n,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def fold_assignments(n: int, k: int, seed: int, repeats: int = 1) -> list[np.ndarray]:
    """Per repeat, an array mapping each row to a fold id in [0, k)."""
    if k > n:
        raise ConfigurationError(f"k={k} folds exceed n={n} samples")
    if k < 2:
        raise ConfigurationError("need at least 2 folds")
    out = []
    for r in range(repeats):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, r])))
        perm = rng.permutation(n)
        assign = np.empty(n, dtype=int)
        sizes = [n // k + (1 if f < n % k else 0) for f in range(k)]
        start = 0
        for f, size in enumerate(sizes):
            assign[perm[start:start + size]] = f
            start += size
        out.append(assign)
    return out


def _rmse(y, yhat) -> float:
    d = np.asarray(y) - np.asarray(yhat)
    return float(np.sqrt(np.mean(d * d)))


def _fit_seed(seed: int, cell: int, repeat: int, fold: int) -> int:
    ss = np.random.SeedSequence([seed, cell, repeat, fold, 0xCF])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _eval_cell(args):
    (c, params, X, y, w, folds, seed) = args
    scores = []
    for r, assign in enumerate(folds):
        for f in range(int(assign.max()) + 1):
            train = assign != f
            valid = ~train
            model = fit_gbt(X[train], y[train], None if w is None else w[train],
                            params=params, seed=_fit_seed(seed, c, r, f))
            scores.append(_rmse(y[valid], model.predict(X[valid])))
    scores = np.asarray(scores)
    std = float(np.std(scores, ddof=1)) if scores.size > 1 else 0.0
    return c, float(np.mean(scores)), std


def grid_search_cv_arrays(X, y, w=None, feature_names=None, grid: TuneGrid = TuneGrid(),
                          k: int = 10, repeats: int = 2, seed: int = 0,
                          n_jobs: int | None = None) -> tuple[GbtModel, CvReport]:
    """Repeated k-fold grid search; winner refit on all rows.

    Per-fit seeds derive from (seed, cell, repeat, fold), so cell evaluations
    may run on any number of threads and still reduce, in declaration order,
    to an identical CvReport.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    folds = fold_assignments(n, k, seed, repeats)
    cells = grid.cells()
    jobs = [(c, params, X, y, w, folds, seed) for c, params in enumerate(cells)]
    if n_jobs is not None and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_eval_cell, jobs))
    else:
        results = [_eval_cell(j) for j in jobs]
    results.sort(key=lambda t: t[0])
    rows = tuple(
        {"params": cells[c].to_dict(), "mean_rmse": mean, "std_rmse": std}
        for c, mean, std in results
    )
    chosen = min(
        range(len(cells)),
        key=lambda c: (rows[c]["mean_rmse"], cells[c].nrounds, cells[c].max_depth, c),
    )
    final_seed = int(np.random.SeedSequence([seed, 0xF1A1]).generate_state(1, dtype=np.uint64)[0])
    model = fit_gbt(X, y, w, params=cells[chosen], seed=final_seed,
                    feature_names=feature_names)
    report = CvReport(cells=rows, chosen_index=chosen, seed=seed, k=k,
                      repeats=repeats, n=n)
    return model, report


def grid_search_cv(d: Dataset, grid: TuneGrid = TuneGrid(), k: int = 10,
                   repeats: int = 2, seed: int = 0,
                   n_jobs: int | None = None) -> tuple[GbtModel, CvReport]:
    """Dataset front end of grid_search_cv_arrays (target/weight roles resolved)."""
    target = d.target_column
    if target is None:
        raise SchemaError("dataset declares no target column")
    design = design_from_dataset(d)
    names = tuple(t.names[0] for t in design.terms)
    return grid_search_cv_arrays(
        design.matrix, np.asarray(d.column(target), dtype=float), d.weights,
        feature_names=names, grid=grid, k=k, repeats=repeats, seed=seed, n_jobs=n_jobs)
