"""Shapley-value explanations for fitted models.

Two independent routes exist on purpose. ``shap_exact`` enumerates all 2^M
feature subsets of a conditional-expectation evaluator and applies the
permutation weights directly; it is the oracle. ``shap_tree`` walks each
tree's root-to-leaf paths once and resolves the same cover-weighted
expectations with a per-path subset-size polynomial, which is polynomial in
tree size and never enumerates subsets of the full feature set.

Conditional expectations are path-dependent: when a split feature is
unknown, flow follows both children weighted by their training cover.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .datamodel import Dataset
from .errors import CapacityError, DataError, ModelFormatError, SchemaError
from .gbt import GbtModel, TreeNode
from .linreg import LinearModel, predict_record

EXACT_MAX_FEATURES = 15
INTERACTION_MAX_FEATURES = 64
_TREE_ENUM_LIMIT = 20  # distinct features per tree a subset scan will tolerate


@dataclass(frozen=True)
class Explanation:
    """Additive attribution of one prediction: base_value + sum(phi) = prediction."""

    base_value: float
    phi: np.ndarray
    feature_names: tuple[str, ...]
    feature_values: tuple[float, ...]
    prediction: float

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        if len(phi) != len(self.feature_names):
            raise SchemaError("phi length does not match feature names")

    def to_dict(self) -> dict:
        return {
            "base_value": self.base_value,
            "phi": [float(v) for v in self.phi],
            "feature_names": list(self.feature_names),
            "feature_values": [float(v) for v in self.feature_values],
            "prediction": self.prediction,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class InteractionExplanation:
    """Symmetric M x M attribution matrix; diagonal holds main effects."""

    matrix: np.ndarray
    base_value: float
    feature_names: tuple[str, ...]
    feature_values: tuple[float, ...]

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def phi_from_rows(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    def to_dict(self) -> dict:
        return {
            "matrix": [[float(v) for v in row] for row in self.matrix],
            "base_value": self.base_value,
            "feature_names": list(self.feature_names),
            "feature_values": [float(v) for v in self.feature_values],
        }


def _shapley_weights(M: int) -> np.ndarray:
    """w[s] = s! (M-s-1)! / M!, computed in log space."""
    s = np.arange(M)
    return np.exp(
        [math.lgamma(i + 1) + math.lgamma(M - i) - math.lgamma(M + 1) for i in s])


def shap_exact(f_cond, x, M: int, feature_names=None) -> Explanation:
    """Exact Shapley attribution by full subset enumeration (M <= 15).

    ``f_cond(S)`` must return the model's conditional expectation given the
    features in set ``S`` take their values from ``x``.
    """
    if M > EXACT_MAX_FEATURES:
        raise CapacityError(
            f"exact enumeration caps at {EXACT_MAX_FEATURES} features, got {M}; "
            "use shap_tree for tree ensembles", M=M)
    if M < 1:
        raise DataError("need at least one feature")
    names = tuple(feature_names) if feature_names else tuple(f"x{i}" for i in range(M))
    full = (1 << M) - 1
    F = np.empty(1 << M)
    for mask in range(1 << M):
        F[mask] = f_cond(frozenset(i for i in range(M) if mask >> i & 1))
    w = _shapley_weights(M)
    popcount = np.array([bin(m).count("1") for m in range(1 << M)])
    phi = np.zeros(M)
    for i in range(M):
        bit = 1 << i
        without = np.nonzero((np.arange(1 << M) & bit) == 0)[0]
        phi[i] = float(np.sum(w[popcount[without]] * (F[without | bit] - F[without])))
    x = np.asarray(x, dtype=float)
    return Explanation(
        base_value=float(F[0]), phi=phi, feature_names=names,
        feature_values=tuple(float(v) for v in x), prediction=float(F[full]))


def _validate_covers(node: TreeNode):
    if node.is_leaf:
        return
    if node.cover <= 0 or node.left.cover <= 0 or node.right.cover <= 0:
        raise ModelFormatError("tree is missing positive cover counts")
    if not math.isclose(node.cover, node.left.cover + node.right.cover,
                        rel_tol=1e-9, abs_tol=1e-6):
        raise ModelFormatError(
            "child covers do not sum to parent cover",
            parent=node.cover, children=node.left.cover + node.right.cover)
    _validate_covers(node.left)
    _validate_covers(node.right)


def _tree_expect(node: TreeNode, x: np.ndarray, S) -> float:
    """Cover-weighted conditional expectation of one tree given features in S."""
    if node.is_leaf:
        return node.value
    if node.feature in S:
        child = node.left if x[node.feature] < node.threshold else node.right
        return _tree_expect(child, x, S)
    return (node.left.cover * _tree_expect(node.left, x, S)
            + node.right.cover * _tree_expect(node.right, x, S)) / node.cover


def _tree_features(node: TreeNode, acc: set) -> set:
    if not node.is_leaf:
        acc.add(node.feature)
        _tree_features(node.left, acc)
        _tree_features(node.right, acc)
    return acc


def tree_conditional_evaluator(m: GbtModel, x):
    """f_cond for shap_exact, memoized per tree on the features the tree uses."""
    x = np.asarray(x, dtype=float)
    for t in m.trees:
        _validate_covers(t)
    per_tree = [(t, frozenset(_tree_features(t, set())), {}) for t in m.trees]

    def f_cond(S) -> float:
        total = m.base_score
        for tree, used, cache in per_tree:
            key = frozenset(S) & used
            if key not in cache:
                cache[key] = _tree_expect(tree, x, key)
            total += m.eta * cache[key]
        return total

    return f_cond


def _leaf_paths(node: TreeNode, x: np.ndarray):
    """Yield (leaf_value, fractions) per leaf; fractions maps feature -> (z, o).

    z is the product of cover shares along the path when the feature is
    unknown; o is 1 only if x follows every split of that feature on the path.
    """
    stack = [(node, {})]
    while stack:
        nd, frac = stack.pop()
        if nd.is_leaf:
            yield nd.value, frac
            continue
        hot_is_left = x[nd.feature] < nd.threshold
        for child, is_hot in ((nd.left, hot_is_left), (nd.right, not hot_is_left)):
            z0, o0 = frac.get(nd.feature, (1.0, 1.0))
            nxt = dict(frac)
            nxt[nd.feature] = (z0 * child.cover / nd.cover, o0 * (1.0 if is_hot else 0.0))
            stack.append((child, nxt))


def _single_tree_shap(tree: TreeNode, x: np.ndarray, phi: np.ndarray) -> float:
    """Add one tree's Shapley attributions into phi; returns E[tree] (all unknown).

    For a leaf reached through unique features U with fractions (z_u, o_u),
    that leaf contributes v * (o_i - z_i) * sum_j e_j * j!(u-1-j)!/u! to
    phi_i, where e_j collects products of j "present" and u-1-j "absent"
    fractions of the other path features -- the subset-size polynomial that
    replaces explicit subset enumeration.
    """
    expected = 0.0
    for value, frac in _leaf_paths(tree, x):
        feats = list(frac)
        u = len(feats)
        z_all = 1.0
        for z, _ in frac.values():
            z_all *= z
        expected += value * z_all
        if u == 0:
            continue
        fact = [math.factorial(j) for j in range(u + 1)]
        for i in feats:
            zi, oi = frac[i]
            if oi == zi:
                continue
            e = [1.0]
            for other in feats:
                if other == i:
                    continue
                z, o = frac[other]
                e = [
                    (e[j - 1] * o if j > 0 else 0.0) + (e[j] * z if j < len(e) else 0.0)
                    for j in range(len(e) + 1)
                ]
            w_sum = sum(e[j] * fact[j] * fact[u - 1 - j] for j in range(u)) / fact[u]
            phi[i] += value * (oi - zi) * w_sum
    return expected


def shap_tree(m: GbtModel, x) -> Explanation:
    """Polynomial tree-path SHAP over a boosted ensemble.

    Equivalent, by construction of the same cover-weighted conditional
    expectations, to shap_exact with tree_conditional_evaluator; verified to
    1e-8 in the acceptance suite.
    """
    x = np.asarray(x, dtype=float)
    M = len(m.feature_names)
    if x.shape != (M,):
        raise SchemaError(f"record has {x.shape} values, model expects {M}")
    for t in m.trees:
        _validate_covers(t)
    phi = np.zeros(M)
    base = m.base_score
    for tree in m.trees:
        tree_phi = np.zeros(M)
        base += m.eta * _single_tree_shap(tree, x, tree_phi)
        phi += m.eta * tree_phi
    return Explanation(
        base_value=float(base), phi=phi, feature_names=m.feature_names,
        feature_values=tuple(float(v) for v in x),
        prediction=float(m.predict(x[None, :])[0]))


def _pair_weights(u: int) -> list[float]:
    """w2[t] = t! (u-t-2)! / (2 (u-1)!) for subsets of the u path features."""
    return [
        math.exp(math.lgamma(t + 1) + math.lgamma(u - t - 1) - math.lgamma(u))
        / 2.0
        for t in range(max(u - 1, 0))
    ]


def shap_interactions(m: GbtModel, x) -> InteractionExplanation:
    """Pairwise Shapley interaction matrix with Eq-style inclusion-exclusion.

    Off-diagonals come from enumerating subsets of each tree's own feature
    set (features a tree never touches are provably inert); the diagonal is
    the per-feature attribution minus its off-diagonal row.
    """
    x = np.asarray(x, dtype=float)
    M = len(m.feature_names)
    if M > INTERACTION_MAX_FEATURES:
        raise CapacityError(f"interaction matrix caps at {INTERACTION_MAX_FEATURES} features")
    for t in m.trees:
        _validate_covers(t)
    Phi = np.zeros((M, M))
    for tree in m.trees:
        used = sorted(_tree_features(tree, set()))
        u = len(used)
        if u < 2:
            continue
        if u > _TREE_ENUM_LIMIT:
            raise CapacityError(
                f"tree touches {u} distinct features; interaction scan caps at "
                f"{_TREE_ENUM_LIMIT}")
        pos = {f: i for i, f in enumerate(used)}
        F = np.empty(1 << u)
        for mask in range(1 << u):
            F[mask] = _tree_expect(tree, x, frozenset(f for f in used if mask >> pos[f] & 1))
        w2 = _pair_weights(u)
        for ai in range(u):
            for bi in range(ai + 1, u):
                abit, bbit = 1 << ai, 1 << bi
                acc = 0.0
                for mask in range(1 << u):
                    if mask & (abit | bbit):
                        continue
                    t = bin(mask).count("1")
                    nabla = (F[mask | abit | bbit] - F[mask | abit]
                             - F[mask | bbit] + F[mask])
                    acc += w2[t] * nabla
                Phi[used[ai], used[bi]] += m.eta * acc
                Phi[used[bi], used[ai]] += m.eta * acc
    expl = shap_tree(m, x)
    for i in range(M):
        Phi[i, i] = expl.phi[i] - (Phi[i].sum() - Phi[i, i])
    return InteractionExplanation(
        matrix=Phi, base_value=expl.base_value,
        feature_names=m.feature_names, feature_values=expl.feature_values)


def linear_conditional_evaluator(model: LinearModel, record: dict, feature_means: dict):
    """Mean-imputation f_cond: absent features evaluate at their training mean."""
    features = sorted({name for t in model.terms for name in t.names})
    for name in features:
        if name not in record:
            raise SchemaError(f"record is missing feature {name!r}", column=name)
        if name not in feature_means:
            raise SchemaError(f"no training mean recorded for feature {name!r}",
                              column=name)

    def f_cond(S) -> float:
        present = {features[i] for i in S}
        filled = {
            name: (record[name] if name in present else feature_means[name])
            for name in features
        }
        return predict_record(model, filled)

    return features, f_cond


def shap_linear(model: LinearModel, record: dict, feature_means: dict) -> Explanation:
    """Exact Shapley attribution of a linear model via mean imputation."""
    features, f_cond = linear_conditional_evaluator(model, record, feature_means)
    x = [float(record[name]) for name in features]
    return shap_exact(f_cond, x, len(features), feature_names=features)


@dataclass(frozen=True)
class ImportanceReport:
    """Mean |SHAP| ranking plus the per-sample matrices behind summary plots."""

    feature_names: tuple[str, ...]           # model order
    importances: tuple[float, ...]           # aligned with ranking
    ranking: tuple[str, ...]                 # features sorted by importance desc
    shap_matrix: np.ndarray                  # n x M, model feature order
    feature_matrix: np.ndarray               # n x M raw feature values
    base_value: float

    def to_dict(self) -> dict:
        return {
            "ranking": [
                {"feature": f, "importance": v}
                for f, v in zip(self.ranking, self.importances)
            ],
            "base_value": self.base_value,
        }

    def summary_data(self) -> dict:
        """Per feature, (value, shap) pairs for every sample, importance order."""
        order = [self.feature_names.index(f) for f in self.ranking]
        return {
            self.feature_names[j]: [
                {"feature_value": float(self.feature_matrix[i, j]),
                 "shap_value": float(self.shap_matrix[i, j])}
                for i in range(self.shap_matrix.shape[0])
            ]
            for j in order
        }

    def dependence_data(self, feature: str, color_by: str | None = None) -> list[dict]:
        if feature not in self.feature_names:
            raise SchemaError(f"unknown feature {feature!r}", column=feature)
        j = self.feature_names.index(feature)
        cj = None
        if color_by is not None:
            if color_by not in self.feature_names:
                raise SchemaError(f"unknown coloring feature {color_by!r}", column=color_by)
            cj = self.feature_names.index(color_by)
        out = []
        for i in range(self.shap_matrix.shape[0]):
            row = {
                "feature_value": float(self.feature_matrix[i, j]),
                "shap_value": float(self.shap_matrix[i, j]),
                "color_value": float(self.feature_matrix[i, cj]) if cj is not None else None,
            }
            out.append(row)
        return out


def importance(m: GbtModel, d: Dataset, n_jobs: int | None = None) -> ImportanceReport:
    """Mean absolute per-sample attribution over a Dataset's rows."""
    if d.n == 0:
        raise DataError("cannot rank importances over an empty dataset")
    for name in m.feature_names:
        if name not in d.column_names:
            raise SchemaError(f"dataset is missing model feature {name!r}", column=name)
    X = np.column_stack([np.asarray(d.column(f), dtype=float) for f in m.feature_names])
    rows = list(X)
    if n_jobs is not None and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            expls = list(pool.map(lambda r: shap_tree(m, r), rows))
    else:
        expls = [shap_tree(m, r) for r in rows]
    shap_matrix = np.vstack([e.phi for e in expls])
    means = np.mean(np.abs(shap_matrix), axis=0)
    order = sorted(range(len(m.feature_names)), key=lambda j: (-means[j], m.feature_names[j]))
    return ImportanceReport(
        feature_names=m.feature_names,
        importances=tuple(float(means[j]) for j in order),
        ranking=tuple(m.feature_names[j] for j in order),
        shap_matrix=shap_matrix,
        feature_matrix=X,
        base_value=expls[0].base_value,
    )


@dataclass(frozen=True)
class ForceData:
    """Explanation split into prediction-raising and prediction-lowering groups."""

    base_value: float
    output_value: float
    positive: tuple[tuple[str, float, float], ...]  # (feature, value, phi), |phi| desc
    negative: tuple[tuple[str, float, float], ...]

    def to_dict(self) -> dict:
        def rows(group):
            return [
                {"feature": f, "value": v, "phi": p}
                for f, v, p in group
            ]
        return {
            "base_value": self.base_value,
            "output_value": self.output_value,
            "positive": rows(self.positive),
            "negative": rows(self.negative),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def force_data(e: Explanation) -> ForceData:
    """Partition attributions by sign; zero contributions are omitted."""
    pos, neg = [], []
    for name, value, phi in zip(e.feature_names, e.feature_values, e.phi):
        if phi > 0:
            pos.append((name, float(value), float(phi)))
        elif phi < 0:
            neg.append((name, float(value), float(phi)))
    pos.sort(key=lambda t: -abs(t[2]))
    neg.sort(key=lambda t: -abs(t[2]))
    return ForceData(
        base_value=e.base_value, output_value=e.prediction,
        positive=tuple(pos), negative=tuple(neg))
