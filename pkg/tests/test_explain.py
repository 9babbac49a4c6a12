import math

import numpy as np
import pytest

from energybench.datamodel import ColumnSpec, Dataset
from energybench.errors import CapacityError, ModelFormatError
from energybench.explain import (
    force_data,
    importance,
    shap_exact,
    shap_interactions,
    shap_linear,
    shap_tree,
    tree_conditional_evaluator,
    Explanation,
)
from energybench.features import DesignMatrix, TermSpec
from energybench.gbt import GbtModel, GbtParams, TreeNode, fit_gbt
from energybench.linreg import fit_wls


def test_single_feature_collapse():
    f = lambda S: 3.0 + (4.0 if 0 in S else 0.0)
    e = shap_exact(f, [1.0], 1)
    assert e.base_value == pytest.approx(3.0)
    assert e.phi[0] == pytest.approx(e.prediction - e.base_value)


def test_additive_model_attributions_match_both_orderings():
    # independent f_cond of an additive model: g1(x1) + g2(x2)
    g1, e1 = 5.0, 2.0   # value at x, expectation
    g2, e2 = -3.0, 1.0

    def f(S):
        return (g1 if 0 in S else e1) + (g2 if 1 in S else e2)

    # oracle: average marginal contributions over the two orderings
    phi0_o = 0.5 * ((f({0}) - f(set())) + (f({0, 1}) - f({1})))
    phi1_o = 0.5 * ((f({1}) - f(set())) + (f({0, 1}) - f({0})))
    assert phi0_o == pytest.approx(g1 - e1)
    assert phi1_o == pytest.approx(g2 - e2)

    e = shap_exact(f, [0.0, 0.0], 2)
    assert e.phi[0] == pytest.approx(phi0_o)
    assert e.phi[1] == pytest.approx(phi1_o)


def test_exact_local_accuracy_random_games():
    rng = np.random.default_rng(0)
    for M in (2, 3, 5):
        table = {frozenset(S): float(rng.normal())
                 for S in _powerset(range(M))}
        f = lambda S, t=table: t[frozenset(S)]
        e = shap_exact(f, np.zeros(M), M)
        assert abs(e.base_value + e.phi.sum() - e.prediction) <= 1e-10


def _powerset(items):
    import itertools
    items = list(items)
    for r in range(len(items) + 1):
        yield from itertools.combinations(items, r)


def test_exact_capacity_error():
    with pytest.raises(CapacityError):
        shap_exact(lambda S: 0.0, np.zeros(16), 16)


def _random_gbt(seed, M=6, trees=10, depth=3, n=80):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, M))
    beta = rng.normal(size=M)
    y = X @ beta + 0.5 * X[:, 0] * X[:, 1 % M] + 0.1 * rng.normal(size=n)
    params = GbtParams(max_depth=depth, nrounds=trees, eta=0.4,
                       colsample_bytree=1.0, subsample=1.0)
    return fit_gbt(X, y, params=params, seed=seed), X


def test_tree_shap_matches_exact_enumeration():
    for seed in range(5):
        m, X = _random_gbt(seed)
        x = X[seed]
        got = shap_tree(m, x)
        oracle = shap_exact(tree_conditional_evaluator(m, x), x, X.shape[1])
        assert np.max(np.abs(got.phi - oracle.phi)) < 1e-8
        assert got.base_value == pytest.approx(oracle.base_value, abs=1e-8)


def test_depth_zero_trees_zero_phi():
    trees = (TreeNode(cover=10, value=2.0), TreeNode(cover=10, value=-1.0))
    m = GbtModel(base_score=5.0, trees=trees, eta=0.5, max_depth=0,
                 feature_names=("a", "b"))
    e = shap_tree(m, np.asarray([1.0, 2.0]))
    assert np.all(e.phi == 0.0)
    assert e.base_value == pytest.approx(5.0 + 0.5 * (2.0 - 1.0))
    assert e.prediction == pytest.approx(e.base_value)


def _symmetric_and_tree(v_low=0.0, v_high=8.0):
    """Depth-2 AND tree, symmetric in features 0 and 1 (equal covers everywhere)."""
    left = TreeNode(cover=8, feature=1, threshold=0.0,
                    left=TreeNode(cover=4, value=v_low),
                    right=TreeNode(cover=4, value=v_low))
    right = TreeNode(cover=8, feature=1, threshold=0.0,
                     left=TreeNode(cover=4, value=v_low),
                     right=TreeNode(cover=4, value=v_high))
    return TreeNode(cover=16, feature=0, threshold=0.0, left=left, right=right)


def test_symmetry_axiom_for_interchangeable_features():
    m = GbtModel(base_score=0.0, trees=(_symmetric_and_tree(),), eta=1.0,
                 max_depth=2, feature_names=("a", "b"))
    e = shap_tree(m, np.asarray([1.0, 1.0]))
    assert e.phi[0] == pytest.approx(e.phi[1], abs=1e-12)


def test_dummy_axiom_unused_feature_exactly_zero():
    m, X = _random_gbt(3, M=4)
    used = set()
    for t in m.trees:
        for p in t.paths():
            used.update(p)
    extended = GbtModel(base_score=m.base_score, trees=m.trees, eta=m.eta,
                        max_depth=m.max_depth,
                        feature_names=m.feature_names + ("ghost",))
    x = np.append(X[0], 123.4)
    e = shap_tree(extended, x)
    assert e.phi[-1] == 0.0


def test_consistency_ordering_on_tree_pair():
    t1 = TreeNode(cover=10, feature=0, threshold=0.0,
                  left=TreeNode(cover=5, value=-1.0),
                  right=TreeNode(cover=5, value=1.0))
    # t2 strictly increases feature 0's marginal contribution for every subset
    t2 = TreeNode(cover=10, feature=0, threshold=0.0,
                  left=TreeNode(cover=5, value=0.0),
                  right=TreeNode(cover=5, value=2.0))
    base = GbtModel(base_score=0.0, trees=(t1,), eta=1.0, max_depth=1,
                    feature_names=("a", "b"))
    bigger = GbtModel(base_score=0.0, trees=(t1, t2), eta=1.0, max_depth=1,
                      feature_names=("a", "b"))
    x = np.asarray([1.0, 0.0])
    assert shap_tree(bigger, x).phi[0] >= shap_tree(base, x).phi[0]


def test_missing_covers_rejected():
    bad = TreeNode(cover=0.0, feature=0, threshold=0.0,
                   left=TreeNode(cover=0.0, value=1.0),
                   right=TreeNode(cover=0.0, value=2.0))
    m = GbtModel(base_score=0.0, trees=(bad,), eta=1.0, max_depth=1,
                 feature_names=("a",))
    with pytest.raises(ModelFormatError):
        shap_tree(m, np.asarray([1.0]))


# --- interactions ---


def eq8_brute_force(m, x, i, j):
    """Test-local Eq.-8 oracle: full-subset scan with its own tree descent."""
    def expect(node, S):
        if node.is_leaf:
            return node.value
        if node.feature in S:
            child = node.left if x[node.feature] < node.threshold else node.right
            return expect(child, S)
        return (node.left.cover * expect(node.left, S)
                + node.right.cover * expect(node.right, S)) / node.cover

    def f(S):
        return m.base_score + m.eta * sum(expect(t, S) for t in m.trees)

    M = len(m.feature_names)
    others = [k for k in range(M) if k not in (i, j)]
    total = 0.0
    for T in _powerset(others):
        S = set(T)
        s = len(S)
        wgt = (math.factorial(s) * math.factorial(M - s - 2)
               / (2.0 * math.factorial(M - 1)))
        nabla = (f(S | {i, j}) - f(S | {i}) - f(S | {j}) + f(S))
        total += wgt * nabla
    return total


def test_additive_model_has_zero_off_diagonals():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(60, 3))
    y = 2.0 * X[:, 0] - 3.0 * X[:, 1] + 0.5 * X[:, 2]
    m = fit_gbt(X, y, params=GbtParams(max_depth=1, nrounds=25, eta=0.5,
                                       colsample_bytree=1.0, subsample=1.0), seed=0)
    inter = shap_interactions(m, X[0])
    off = inter.matrix - np.diag(np.diag(inter.matrix))
    assert np.max(np.abs(off)) <= 1e-10


def test_and_tree_interaction_matches_eq8_oracle():
    m = GbtModel(base_score=0.0, trees=(_symmetric_and_tree(),), eta=1.0,
                 max_depth=2, feature_names=("a", "b"))
    x = np.asarray([1.0, 1.0])
    inter = shap_interactions(m, x)
    expected = eq8_brute_force(m, x, 0, 1)
    assert expected != 0.0
    assert inter.matrix[0, 1] == pytest.approx(expected, abs=1e-12)
    assert inter.matrix[1, 0] == pytest.approx(expected, abs=1e-12)


def test_interaction_row_sums_reconstruct_phi():
    for seed in (1, 2):
        m, X = _random_gbt(seed, M=5, trees=8)
        x = X[seed + 3]
        inter = shap_interactions(m, x)
        phi = shap_tree(m, x).phi
        assert np.max(np.abs(inter.matrix.sum(axis=1) - phi)) < 1e-8
        assert np.max(np.abs(inter.matrix - inter.matrix.T)) == 0.0


# --- dataset-level products ---


def _dataset_for(m, X):
    schema = [ColumnSpec(n, "numeric") for n in m.feature_names]
    schema.append(ColumnSpec("y", "numeric", role="target"))
    cols = {n: X[:, j] for j, n in enumerate(m.feature_names)}
    cols["y"] = np.zeros(X.shape[0])
    return Dataset(schema, cols)


def test_importance_zero_for_unused_features():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 4))
    y = 3.0 * X[:, 3]
    # train on the single usable column, then widen to the 4-feature space
    narrow = fit_gbt(X[:, [3]], y, params=GbtParams(max_depth=1, nrounds=15, eta=0.6,
                                                    colsample_bytree=1.0,
                                                    subsample=1.0), seed=1)

    def shift(node):
        if node.is_leaf:
            return node
        from dataclasses import replace
        return replace(node, feature=3, left=shift(node.left), right=shift(node.right))

    m = GbtModel(base_score=narrow.base_score,
                 trees=tuple(shift(t) for t in narrow.trees), eta=narrow.eta,
                 max_depth=narrow.max_depth,
                 feature_names=("x0", "x1", "x2", "x3"))
    rep = importance(m, _dataset_for(m, X))
    by_name = dict(zip(rep.ranking, rep.importances))
    assert rep.ranking[0] == "x3"
    for name in ("x0", "x1", "x2"):
        assert by_name[name] == 0.0


def test_importance_invariant_to_duplicated_rows():
    m, X = _random_gbt(5, M=3, trees=6, n=40)
    rep1 = importance(m, _dataset_for(m, X))
    rep2 = importance(m, _dataset_for(m, np.vstack([X, X])))
    assert rep1.ranking == rep2.ranking
    assert np.allclose(rep1.importances, rep2.importances)


def test_importance_orders_dominant_feature_first():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(100, 2))
    y = 10.0 * X[:, 0] + 1.0 * X[:, 1]
    m = fit_gbt(X, y, params=GbtParams(max_depth=2, nrounds=30, eta=0.4,
                                       colsample_bytree=1.0, subsample=1.0), seed=2)
    rep = importance(m, _dataset_for(m, X))
    assert rep.ranking[0] == "x0"
    assert rep.importances[0] > dict(zip(rep.ranking, rep.importances))["x1"]


def test_importance_parallel_matches_serial():
    m, X = _random_gbt(6, M=4, trees=5, n=30)
    d = _dataset_for(m, X)
    serial = importance(m, d)
    parallel = importance(m, d, n_jobs=4)
    assert np.array_equal(serial.shap_matrix, parallel.shap_matrix)


def test_dependence_export_shape():
    m, X = _random_gbt(7, M=3, trees=4, n=25)
    rep = importance(m, _dataset_for(m, X))
    rows = rep.dependence_data("x0", color_by="x1")
    assert len(rows) == 25
    assert set(rows[0]) == {"feature_value", "shap_value", "color_value"}


# --- force data ---


def test_force_partition():
    e = Explanation(base_value=1.0, phi=np.asarray([2.0, -3.0, 0.0]),
                    feature_names=("f1", "f2", "f3"),
                    feature_values=(1.0, 2.0, 3.0), prediction=0.0)
    f = force_data(e)
    assert [(n, p) for n, _, p in f.positive] == [("f1", 2.0)]
    assert [(n, p) for n, _, p in f.negative] == [("f2", -3.0)]


def test_force_all_zero():
    e = Explanation(base_value=4.0, phi=np.zeros(2), feature_names=("a", "b"),
                    feature_values=(0.0, 0.0), prediction=4.0)
    f = force_data(e)
    assert f.positive == () and f.negative == ()
    assert f.output_value == f.base_value


TABLE7_B1 = {
    "GFA": (919.7, 1.23), "OpenHours": (40.0, -0.87), "WorkersCnt": (17.0, -2.47),
    "ComputersCnt": (17.0, -2.62), "IsBank": (0.0, -0.35), "CGFA": (100.0, 0.66),
    "CDD65": (945.0, -0.73),
}


def test_low_eui_office_fixture_renders_five_negative_two_positive():
    names = tuple(TABLE7_B1)
    e = Explanation(base_value=16.9,
                    phi=np.asarray([TABLE7_B1[n][1] for n in names]),
                    feature_names=names,
                    feature_values=tuple(TABLE7_B1[n][0] for n in names),
                    prediction=11.8)
    f = force_data(e)
    assert len(f.positive) == 2 and len(f.negative) == 5
    assert [n for n, _, _ in f.positive] == ["GFA", "CGFA"]
    assert f.negative[0][0] == "ComputersCnt"  # largest magnitude first


# --- linear explanations ---


def test_linear_shap_closed_form():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 3))
    y = X @ [2.0, -1.5, 0.5] + rng.normal(0, 0.01, 60)
    terms = tuple(TermSpec.of(n) for n in ("a", "b", "c"))
    model = fit_wls(DesignMatrix(X, terms), y)
    means = {"a": float(X[:, 0].mean()), "b": float(X[:, 1].mean()),
             "c": float(X[:, 2].mean())}
    record = {"a": 1.0, "b": -2.0, "c": 0.5}
    e = shap_linear(model, record, means)
    coef = model.coef
    for i, name in enumerate(e.feature_names):
        expected = coef[name] * (record[name] - means[name])
        assert e.phi[i] == pytest.approx(expected, abs=1e-10)
    assert abs(e.base_value + e.phi.sum() - e.prediction) < 1e-10
