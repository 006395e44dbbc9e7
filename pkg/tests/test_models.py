import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

import cart_oracle
from conftest import toy_matrix
from stresswear.errors import CorruptModelFile, SchemaMismatch, SchemaVersionMismatch, SingleClassTraining
from stresswear.evaluation import auroc
from stresswear.features import HRV_EDA_SCHEMA, HRV_SCHEMA, FeatureMatrix, Scenario
from stresswear.ingest import DeviceKind
from stresswear.models import (
    ModelKind,
    RfConfig,
    SvmConfig,
    fit_model,
    load_model,
    model_from_dict,
    model_to_dict,
    predict_proba,
    rf_fit,
    save_model,
    svm_decision_function,
    svm_fit,
)
from stresswear.models.forest import Tree, fit_forest_arrays, forest_proba, grow_tree
from stresswear.models.svm import platt_fit, rbf_kernel, sigmoid_proba, smo_solve

# --- SVM ---------------------------------------------------------------------


def _dual_objective(alpha, Q):
    return 0.5 * alpha @ Q @ alpha - alpha.sum()


@pytest.mark.parametrize("seed", range(4))
def test_smo_matches_generic_dual_solver(seed):
    rng = np.random.default_rng(seed)
    n = 30
    X = rng.normal(size=(n, 3))
    y = np.where(X[:, 0] + 0.5 * rng.normal(size=n) > 0, 1.0, -1.0)
    K = rbf_kernel(X, X, 0.5)
    Q = K * np.outer(y, y)
    c = 2.0
    sol = smo_solve(K, y, c, tol=1e-9)
    ref = minimize(lambda a: _dual_objective(a, Q), np.zeros(n), jac=lambda a: Q @ a - 1,
                   bounds=[(0, c)] * n, constraints=[{"type": "eq", "fun": lambda a: a @ y, "jac": lambda a: y}],
                   method="SLSQP", options={"ftol": 1e-14, "maxiter": 2000})
    assert _dual_objective(sol.alpha, Q) <= ref.fun + 1e-8
    assert abs(sol.alpha @ y) <= 1e-9 and sol.alpha.min() >= 0 and sol.alpha.max() <= c
    # complementary slackness on free vectors: y f(x) == 1
    f = K @ (sol.alpha * y) + sol.bias
    free = (sol.alpha > 1e-8) & (sol.alpha < c - 1e-8)
    np.testing.assert_allclose(y[free] * f[free], 1.0, atol=1e-6)


def _blobs(n=40, seed=0, gap=6.0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.normal(size=(n, 16)) + gap * y[:, None] / 4
    return FeatureMatrix(HRV_SCHEMA, X, y, np.full(n, "S01"), np.zeros(n), np.full(n, 60.0),
                         Scenario.ALL_STRESSORS, DeviceKind.POLAR_H10)


def test_separable_blobs():
    m = _blobs()
    model = svm_fit(m)
    p = predict_proba(model, m)
    assert np.mean((p > 0.5) == (m.labels == 1)) == 1.0
    assert auroc(p, m.labels) == 1.0
    assert np.all((p >= 0) & (p <= 1))
    dec = svm_decision_function(model, m)
    assert np.all((dec > 0) == (m.labels == 1))


def test_single_class_training():
    m = _blobs()
    with pytest.raises(SingleClassTraining):
        svm_fit(m.subset(m.labels == 1))
    with pytest.raises(SingleClassTraining):
        rf_fit(m.subset(m.labels == 0))


def test_duplicated_rows_keep_decision_function():
    # hard-margin regime (no bound support vectors), where duplicating every row
    # leaves the primal solution unchanged; compare on a held-out grid
    m = _blobs(gap=10.0)
    cfg = SvmConfig(c=1e3, gamma=0.01, tol=1e-10)
    once = svm_fit(m, cfg)
    twice = svm_fit(FeatureMatrix.concatenate([m, m]), cfg)
    assert np.all(np.asarray(once.params["dual_coef"]) != 0)
    grid = np.random.default_rng(9).normal(size=(200, 16)) * 2
    np.testing.assert_allclose(svm_decision_function(once, grid), svm_decision_function(twice, grid), atol=1e-6)


def test_platt_sign_and_midpoint():
    m = toy_matrix(n_subjects=4, shift=2.0)
    model = svm_fit(m)
    sv = np.asarray(model.params["support_vectors"])
    coef = np.asarray(model.params["dual_coef"])
    deep = sv[np.argmax(coef)] * model.norm_stats.std + model.norm_stats.mean
    assert predict_proba(model, deep[None, :])[0] > 0.5
    A, B = model.params["platt_a"], model.params["platt_b"]
    assert A < 0
    assert sigmoid_proba(0.0, A, B) == pytest.approx(1 / (1 + np.exp(B)))
    assert abs(sigmoid_proba(0.0, A, B) - 0.5) < 0.15


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.floats(-50, 50), st.floats(-50, 50))
def test_sigmoid_range(dec, A, B):
    p = sigmoid_proba(np.asarray(dec), A, B)
    assert np.all((p >= 0) & (p <= 1)) and np.all(np.isfinite(p))


def test_platt_on_clean_separation_is_monotone():
    dec = np.linspace(-2, 2, 40)
    labels = (dec > 0).astype(int)
    A, B = platt_fit(dec, labels)
    assert A < 0 and abs(B) < 1e-6


# --- random forest -------------------------------------------------------------


def _tree_on(X, y):
    cfg = RfConfig(n_trees=1, bootstrap=False, features_per_split=X.shape[1])
    return fit_forest_arrays(X, y, cfg)[0]


@pytest.mark.parametrize("seed", [0, 3, 4, 5, 6, 9])
def test_single_tree_matches_exhaustive_cart(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(20, 3))
    y = (X[:, 0] + 0.8 * X[:, 1] + rng.normal(0, 0.7, 20) > 0).astype(float)
    ref = cart_oracle.build(X, y)
    tree = _tree_on(X, y)
    grid = rng.normal(size=(500, 3)) * 1.5
    np.testing.assert_array_equal(tree.predict_proba(grid), [cart_oracle.predict(ref, g) for g in grid])


@given(st.integers(0, 10_000))
def test_every_split_is_gini_optimal(seed):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(16, 3)), 1)  # coarse values create ties on purpose
    y = (X[:, 0] + rng.normal(0, 1, 16) > 0).astype(float)
    if y.min() == y.max():
        return
    tree = _tree_on(X, y)
    leaf = tree.apply(X)

    def rows_of(node):
        # rows reaching a node: descend with the tree's own routing
        out = []
        for i, x in enumerate(X):
            nd = 0
            path = [0]
            while tree.feature[nd] >= 0:
                nd = tree.left[nd] if x[tree.feature[nd]] <= tree.threshold[nd] else tree.right[nd]
                path.append(nd)
            if node in path:
                out.append(i)
        return np.array(out)

    for node in np.flatnonzero(tree.feature >= 0):
        idx = rows_of(node)
        best = min(s[0] for s in cart_oracle.all_splits(X[idx], y[idx]))
        f, thr = tree.feature[node], tree.threshold[node]
        left = X[idx, f] <= thr
        g = (left.sum() * cart_oracle.gini(y[idx][left]) + (~left).sum() * cart_oracle.gini(y[idx][~left])) / idx.size
        assert abs(g - best) <= 1e-12
    # grown to purity wherever the rows can be told apart
    for lf in np.unique(leaf):
        rows = np.flatnonzero(leaf == lf)
        if np.unique(X[rows], axis=0).shape[0] > 1:
            assert tree.value[lf] in (0.0, 1.0)


def test_threshold_data_every_tree_perfect():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 4))
    y = (X[:, 2] > 0.1).astype(float)
    # bootstrap off so each tree's training rows are all rows; features still subsampled
    trees = fit_forest_arrays(X, y, RfConfig(n_trees=25, bootstrap=False))
    for t in trees:
        assert np.all(t.predict_proba(X) == y)


def test_forest_determinism():
    m = toy_matrix(n_subjects=3)
    a = rf_fit(m, RfConfig(n_trees=10, seed=5))
    b = rf_fit(m, RfConfig(n_trees=10, seed=5))
    c = rf_fit(m, RfConfig(n_trees=10, seed=6))
    assert json.dumps(model_to_dict(a)) == json.dumps(model_to_dict(b))
    assert json.dumps(model_to_dict(a)) != json.dumps(model_to_dict(c))


def _stump(p_left, p_right):
    return Tree(np.array([0, -1, -1]), np.array([0.0, 0, 0]), np.array([1, -1, -1]),
                np.array([2, -1, -1]), np.array([0.5, p_left, p_right]))


def test_forest_probability_is_mean_leaf_fraction():
    x = np.array([[-1.0]])
    assert forest_proba([_stump(0.2, 0.9), _stump(0.6, 0.1)], x)[0] == pytest.approx(0.4)
    assert forest_proba([_stump(1.0, 0.0)] * 3, x)[0] == 1.0
    assert forest_proba([_stump(0.35, 0.0)] * 4, x)[0] == pytest.approx(0.35)


def test_grow_tree_respects_depth():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 2))
    y = (X[:, 0] * X[:, 1] > 0).astype(float)
    t = grow_tree(X, y, RfConfig(max_depth=1), rng, 2)
    assert (t.feature >= 0).sum() == 1


# --- persistence -------------------------------------------------------------


@pytest.mark.parametrize("kind", list(ModelKind))
def test_round_trip_bit_identical(tmp_path, kind):
    m = toy_matrix(n_subjects=5)
    model = fit_model(m, kind, rf_config=RfConfig(n_trees=20))
    path = tmp_path / "model.json"
    save_model(model, path)
    back = load_model(path)
    rows = np.random.default_rng(2).normal(size=(100, 16))
    assert np.array_equal(predict_proba(model, rows), predict_proba(back, rows))
    save_model(back, tmp_path / "again.json")
    assert path.read_bytes() == (tmp_path / "again.json").read_bytes()


def test_corrupt_and_mismatched_files(tmp_path):
    m = toy_matrix(n_subjects=3)
    model = fit_model(m, ModelKind.RANDOM_FOREST, rf_config=RfConfig(n_trees=3))
    path = tmp_path / "model.json"
    save_model(model, path)
    text = path.read_text(encoding="utf-8")
    path.write_text(text[: len(text) // 2], encoding="utf-8")
    with pytest.raises(CorruptModelFile):
        load_model(path)
    d = model_to_dict(model)
    with pytest.raises(SchemaVersionMismatch):
        model_from_dict({**d, "version": 99})
    with pytest.raises(CorruptModelFile):
        model_from_dict({**d, "format": "other"})
    with pytest.raises(CorruptModelFile):
        model_from_dict({k: v for k, v in d.items() if k != "schema"})


def test_schema_mismatch_at_predict_time():
    m = toy_matrix(n_subjects=3)
    model = fit_model(m, ModelKind.SVM_RBF)
    with pytest.raises(SchemaMismatch):
        predict_proba(model, np.zeros((2, 32)))
    wide = FeatureMatrix(HRV_EDA_SCHEMA, np.zeros((2, 32)), [0, 1], ["S01", "S01"], [0, 15], [60, 75],
                         Scenario.ALL_STRESSORS, DeviceKind.BIOPAC_MP160)
    with pytest.raises(SchemaMismatch):
        predict_proba(model, wide)
