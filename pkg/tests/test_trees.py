import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nowcast.errors import ConfigError, DimensionError, EmptyModelError
from nowcast.trees import (BoostedModel, ForestModel, RegressionTree, fit_gbm, fit_random_forest,
                           fit_tree, predict_ensemble, tree_rng)

from oracles import friedman1


def leaf(value, p=1):
    return RegressionTree(feature=np.array([-1]), threshold=np.array([0.0]), left=np.array([-1]),
                          right=np.array([-1]), value=np.array([float(value)]), n_rows=np.array([1]),
                          missing_left=np.array([False]), n_features=p)


def test_stump_predicts_bootstrap_mean(rng):
    X = rng.standard_normal((30, 3))
    y = rng.standard_normal(30)
    forest = fit_random_forest(X, y, n_trees=1, max_depth=0, seed=4)
    rows = tree_rng(4, 0).integers(0, 30, size=30)
    assert np.allclose(forest.predict(X), y[rows].mean(), atol=1e-12)


def test_tuned_forest_size_accepted(rng):
    X = rng.standard_normal((40, 5))
    forest = fit_random_forest(X, X[:, 0], n_trees=281, seed=1)
    assert forest.n_trees == 281 and len(forest.trees) == 281


def test_oob_beats_variance_on_friedman():
    X, y = friedman1(200, seed=0)
    forest = fit_random_forest(X, y, n_trees=200, seed=0)
    assert forest.oob_mse < np.var(y)


def test_zero_boosting_rounds(rng):
    X = rng.standard_normal((20, 2))
    y = rng.standard_normal(20)
    model = fit_gbm(X, y, n_trees=0)
    assert np.all(model.predict(X) == np.mean(y))


def test_two_cluster_split():
    x = np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0])[:, None]
    y = np.where(x[:, 0] < 0, 0.0, 4.0)
    model = fit_gbm(x, y, n_trees=1, shrinkage=1.0, tree_depth=1)
    tree = model.trees[0]
    leaves = np.sort(tree.value[tree.feature == -1] + model.initial_value)
    assert np.allclose(leaves, [0.0, 4.0])
    assert model.training_mse_path[-1] == pytest.approx(0.0, abs=1e-24)
    assert -1.0 < tree.threshold[0] < 1.0


def test_tuned_gbm_configuration(rng):
    X = rng.standard_normal((50, 4))
    model = fit_gbm(X, X[:, 0] ** 2, n_trees=19, shrinkage=0.3)
    assert model.n_trees == 19 and model.shrinkage == 0.3


def test_predict_ensemble_examples():
    forest = ForestModel(trees=(leaf(1.0), leaf(3.0)), n_trees=2, mtry=1, min_leaf_size=1, seed=0)
    assert predict_ensemble(forest, [0.0]) == 2.0
    boosted = BoostedModel(initial_value=1.0, trees=(leaf(2.0),), shrinkage=0.5, tree_depth=0)
    assert predict_ensemble(boosted, [0.0]) == 2.0
    with pytest.raises(EmptyModelError):
        predict_ensemble(ForestModel(trees=(), n_trees=0, mtry=1, min_leaf_size=1, seed=0), [0.0])
    with pytest.raises(DimensionError):
        predict_ensemble(forest, [0.0, 1.0])


def test_config_errors(rng):
    X = rng.standard_normal((20, 3))
    y = rng.standard_normal(20)
    with pytest.raises(ConfigError):
        fit_random_forest(X, y, mtry=4)
    with pytest.raises(ConfigError):
        fit_random_forest(X, y, n_trees=0)
    with pytest.raises(ConfigError):
        fit_random_forest(X[:9], y[:9], min_leaf_size=5)
    for bad in (0.0, 1.5):
        with pytest.raises(ConfigError):
            fit_gbm(X, y, shrinkage=bad)


def test_leaf_values_are_means(rng):
    X = rng.standard_normal((60, 3))
    y = rng.standard_normal(60)
    tree = fit_tree(X, y, max_depth=3, min_leaf_size=4)
    routed = tree.predict(X)
    for v in np.unique(routed):
        assert v == pytest.approx(y[routed == v].mean(), abs=1e-12)
        assert np.sum(routed == v) >= 4


def test_missing_values_route_to_a_leaf(rng):
    X = rng.standard_normal((40, 3))
    X[rng.random((40, 3)) < 0.2] = np.nan
    y = rng.standard_normal(40)
    tree = fit_tree(X, y, max_depth=4)
    out = tree.predict(np.full((3, 3), np.nan))
    assert np.all(np.isfinite(out))
    assert np.all(np.isin(out, tree.value[tree.feature == -1]))


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.sampled_from([1, 3, None]))
def test_forest_predictions_within_training_range(seed, depth):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((30, 4))
    y = rng.standard_normal(30)
    forest = fit_random_forest(X, y, n_trees=10, max_depth=depth, min_leaf_size=2, seed=seed)
    out = forest.predict(rng.normal(0, 5, (50, 4)))
    assert np.all(out >= y.min() - 1e-12) and np.all(out <= y.max() + 1e-12)


def test_thread_count_does_not_change_forest():
    X, y = friedman1(120, seed=3)
    one = fit_random_forest(X, y, n_trees=40, seed=9, n_jobs=1)
    many = fit_random_forest(X, y, n_trees=40, seed=9, n_jobs=4)
    assert one.to_json() == many.to_json()
    assert np.array_equal(one.predict(X), many.predict(X))


def test_prefix_stability(rng):
    X = rng.standard_normal((40, 5))
    y = rng.standard_normal(40)
    small = fit_random_forest(X, y, n_trees=5, seed=2)
    large = fit_random_forest(X, y, n_trees=12, seed=2)
    for a, b in zip(small.trees, large.trees[:5]):
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_diagnostic_forest_equals_plain_tree(rng):
    X = rng.standard_normal((35, 4))
    y = rng.standard_normal(35)
    forest = fit_random_forest(X, y, n_trees=1, mtry=4, bootstrap=False, min_leaf_size=3)
    tree = fit_tree(X, y, min_leaf_size=3)
    assert forest.trees[0].to_dict() == tree.to_dict()


@pytest.mark.parametrize("nu", [0.1, 0.3, 1.0])
def test_gbm_path_non_increasing(nu):
    X, y = friedman1(150, seed=5)
    model = fit_gbm(X, y, n_trees=60, shrinkage=nu, tree_depth=3)
    assert np.all(np.diff(model.training_mse_path) <= 1e-12)


def test_gbm_interpolates_with_full_depth(rng):
    X = rng.standard_normal((25, 2))
    y = rng.standard_normal(25)
    model = fit_gbm(X, y, n_trees=1, shrinkage=1.0, tree_depth=None)
    assert model.training_mse_path[-1] < 1e-20


def test_gbm_prediction_is_sum(rng):
    X = rng.standard_normal((30, 3))
    y = rng.standard_normal(30)
    model = fit_gbm(X, y, n_trees=7, shrinkage=0.3, tree_depth=2)
    manual = model.initial_value + 0.3 * sum(t.predict(X) for t in model.trees)
    assert np.allclose(model.predict(X), manual, atol=1e-12)
