import numpy as np
import pytest

from branchlab.forest import (
    Hyperparams,
    ModelLoadError,
    SCHEME_HYPERPARAMS,
    cross_validate,
    fit,
    load_model,
    save_model,
    training_mse,
)
from branchlab.rng import Rng


def _data(n=200, seed=0, signal="f7"):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, (n, 16))
    if signal == "f7":
        y = X[:, 6].copy()           # pure fractionality signal
    elif signal == "linear":
        y = 3.0 * X[:, 2] - 1.0
    else:
        y = np.full(n, 3.7)
    return X, y


def test_constant_targets_predict_exactly():
    X, y = _data(50, signal="const")
    forest = fit(X, y, Hyperparams(), seed=1)
    pred = forest.predict_batch(X[:10])
    assert (pred == 3.7).all()
    assert all(len(t) == 1 for t in forest.trees)


def test_single_sample_single_leaf():
    forest = fit(np.zeros((1, 16)), np.array([2.5]), Hyperparams(), seed=1)
    assert all(len(t) == 1 for t in forest.trees)
    assert forest.predict(np.ones(16)) == 2.5


def test_signal_beats_mean_predictor():
    # expected bound computed on the training set itself: MSE of the fitted
    # model must be below the variance of the targets (the mean predictor)
    X, y = _data(200, seed=3)
    forest = fit(X, y, Hyperparams(min_split=10, max_depth=12), seed=7)
    assert training_mse(forest, X, y) < float(np.var(y))


def test_prediction_within_target_range():
    X, y = _data(300, seed=5, signal="linear")
    forest = fit(X, y, Hyperparams(), seed=2)
    rng = np.random.default_rng(0)
    Z = rng.uniform(-2, 3, (50, 16))
    preds = forest.predict_batch(Z)
    assert (preds >= y.min() - 1e-12).all()
    assert (preds <= y.max() + 1e-12).all()


def test_tree_order_permutation_leaves_mean_unchanged():
    X, y = _data(120, seed=8)
    forest = fit(X, y, Hyperparams(n_trees=9), seed=3)
    base = forest.predict_batch(X[:20])
    forest.trees = forest.trees[::-1]
    forest._flat = None
    np.testing.assert_allclose(forest.predict_batch(X[:20]), base, atol=1e-12)


def test_seed_determinism_bit_identical():
    X, y = _data(150, seed=9)
    a = fit(X, y, Hyperparams(), seed=11)
    b = fit(X, y, Hyperparams(), seed=11)
    c = fit(X, y, Hyperparams(), seed=12)
    for ta, tb in zip(a.trees, b.trees):
        np.testing.assert_array_equal(ta.threshold, tb.threshold)
        np.testing.assert_array_equal(ta.feature, tb.feature)
        np.testing.assert_array_equal(ta.value, tb.value)
    assert any((ta.threshold != tc.threshold).any() or len(ta) != len(tc)
               for ta, tc in zip(a.trees, c.trees))


def test_min_split_respected():
    X, y = _data(80, seed=10)
    hp = Hyperparams(min_split=25, max_depth=20)
    forest = fit(X, y, hp, seed=4)
    for tree in forest.trees:
        sizes = _node_sizes(tree, X)
        for node, size in enumerate(sizes):
            if tree.left[node] >= 0:
                assert size >= hp.min_split


def _node_sizes(tree, X):
    sizes = np.zeros(len(tree), dtype=int)

    def walk(node, idx):
        sizes[node] = len(idx)
        if tree.left[node] >= 0:
            mask = X[idx, tree.feature[node]] <= tree.threshold[node]
            walk(tree.left[node], idx[mask])
            walk(tree.right[node], idx[~mask])

    walk(0, np.arange(len(X)))
    return sizes


def test_variance_reduction_nonnegative_and_leaf_means():
    X, y = _data(160, seed=12)
    forest = fit(X, y, Hyperparams(n_trees=5, min_split=8, max_depth=10), seed=5)
    for tree in forest.trees:
        _check_tree(tree, X, y, np.arange(len(X)), 0)


def _check_tree(tree, X, y, idx, node):
    ys = y[idx]
    if tree.left[node] < 0:
        assert tree.value[node] == pytest.approx(float(ys.mean()), rel=1e-12)
        return
    mask = X[idx, tree.feature[node]] <= tree.threshold[node]
    yl, yr = ys[mask], ys[~mask]
    assert len(yl) and len(yr)
    reduction = ys.var() - (len(yl) * yl.var() + len(yr) * yr.var()) / len(ys)
    assert reduction >= -1e-9
    _check_tree(tree, X, y, idx[mask], tree.left[node])
    _check_tree(tree, X, y, idx[~mask], tree.right[node])


def test_depth_capacity_weak_monotonicity():
    # without shared per-path randomness the strict nesting need not hold;
    # the weak form bounds training MSE by target variance at every depth
    X, y = _data(240, seed=13)
    var = float(np.var(y))
    for depth in (1, 2, 4, 8, 16):
        forest = fit(X, y, Hyperparams(max_depth=depth, min_split=5), seed=6)
        assert training_mse(forest, X, y) <= var + 1e-12


def test_empty_sample_set_rejected():
    with pytest.raises(ValueError, match="empty"):
        fit(np.zeros((0, 16)), np.zeros(0), Hyperparams(), seed=1)


def test_cross_validate_constant_targets_zero():
    X, y = _data(60, signal="const")
    mses = cross_validate(X, y, Hyperparams(), folds=5, seed=1)
    assert len(mses) == 5
    assert all(m == 0.0 for m in mses)


def test_cross_validate_two_samples_two_folds():
    X = np.array([[0.0] * 16, [1.0] * 16])
    y = np.array([1.0, 3.0])
    mses = cross_validate(X, y, Hyperparams(), folds=2, seed=2)
    # each fold trains on the other single sample, so each squared error is 4
    assert mses == [pytest.approx(4.0), pytest.approx(4.0)]


def test_cross_validate_linear_signal_beats_variance():
    X, y = _data(400, seed=14, signal="linear")
    mses = cross_validate(X, y, Hyperparams(min_split=10, max_depth=12), folds=5, seed=3)
    assert float(np.mean(mses)) < float(np.var(y))


def test_cross_validate_too_few_samples():
    X, y = _data(3)
    with pytest.raises(ValueError):
        cross_validate(X, y, Hyperparams(), folds=5, seed=1)
    with pytest.raises(ValueError):
        cross_validate(X, y, Hyperparams(), folds=1, seed=1)


def test_save_load_roundtrip_bitwise(tmp_path):
    X, y = _data(150, seed=15)
    forest = fit(X, y, Hyperparams(n_trees=7, min_split=5, max_depth=9), seed=8)
    path = tmp_path / "model.json"
    save_model(forest, path)
    loaded = load_model(path)
    rng = np.random.default_rng(1)
    Z = rng.uniform(-1, 2, (100, 16))
    np.testing.assert_array_equal(forest.predict_batch(Z), loaded.predict_batch(Z))
    assert loaded.hyperparams == forest.hyperparams
    assert loaded.seed == forest.seed


def test_tampered_layout_version_rejected(tmp_path):
    X, y = _data(30, seed=16)
    forest = fit(X, y, Hyperparams(n_trees=2), seed=9)
    path = tmp_path / "model.json"
    save_model(forest, path)
    text = path.read_text().replace('"fv1"', '"fv0"')
    path.write_text(text)
    with pytest.raises(ModelLoadError, match="layout"):
        load_model(path)


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("")
    with pytest.raises(ModelLoadError):
        load_model(path)


def test_scheme_hyperparameters_match_protocol():
    # settings used throughout: general model 10/25, per-variable and
    # per-generator 5/12, per-time 8/12, per-name 8/16, 25 trees everywhere
    assert SCHEME_HYPERPARAMS["et"].min_split == 10
    assert SCHEME_HYPERPARAMS["et"].max_depth == 25
    assert SCHEME_HYPERPARAMS["pv"].min_split == 5
    assert SCHEME_HYPERPARAMS["pv"].max_depth == 12
    assert SCHEME_HYPERPARAMS["pge"].min_split == 5
    assert SCHEME_HYPERPARAMS["pge"].max_depth == 12
    assert SCHEME_HYPERPARAMS["pti"].min_split == 8
    assert SCHEME_HYPERPARAMS["pti"].max_depth == 12
    assert SCHEME_HYPERPARAMS["pna"].min_split == 8
    assert SCHEME_HYPERPARAMS["pna"].max_depth == 16
    assert all(hp.n_trees == 25 for hp in SCHEME_HYPERPARAMS.values())
