"""Regression trees, random forests and squared-error gradient boosting."""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._kernels import LEAF, grow_tree, predict_tree
from .errors import ConfigError, DimensionError, EmptyModelError

UNLIMITED_DEPTH = 10_000


def default_threads() -> int:
    env = os.environ.get("NOWCAST_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class RegressionTree:
    """Flat node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_rows: np.ndarray
    missing_left: np.ndarray
    n_features: int
    max_depth: int = UNLIMITED_DEPTH
    min_leaf_size: int = 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X, self.n_features)
        return predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value,
                            self.missing_left)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
            "left": self.left.tolist(), "right": self.right.tolist(), "value": self.value.tolist(),
            "n_rows": self.n_rows.tolist(), "missing_left": self.missing_left.tolist(),
            "n_features": self.n_features, "max_depth": self.max_depth, "min_leaf_size": self.min_leaf_size,
        }

    @classmethod
    def from_dict(cls, d) -> "RegressionTree":
        return cls(
            feature=np.array(d["feature"], dtype=np.int64), threshold=np.array(d["threshold"], dtype=float),
            left=np.array(d["left"], dtype=np.int64), right=np.array(d["right"], dtype=np.int64),
            value=np.array(d["value"], dtype=float), n_rows=np.array(d["n_rows"], dtype=np.int64),
            missing_left=np.array(d["missing_left"], dtype=bool), n_features=d["n_features"],
            max_depth=d["max_depth"], min_leaf_size=d["min_leaf_size"],
        )


def _as_matrix(X, p=None) -> np.ndarray:
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
    if p is not None and X.shape[1] != p:
        raise DimensionError(f"expected {p} features, got {X.shape[1]}")
    return X


def fit_tree(X, y, rows=None, max_depth=None, min_leaf_size=1, mtry=None, rng=None) -> RegressionTree:
    """Grow one CART tree by exhaustive midpoint splits minimizing child SSE.

    ``rows`` selects (possibly repeated) training rows. With ``mtry`` below the
    number of features, each node considers a random subset drawn from ``rng``.
    """
    X = _as_matrix(X)
    y = np.ascontiguousarray(y, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise DimensionError("X and y have different numbers of rows")
    rows = np.arange(n, dtype=np.int64) if rows is None else np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ConfigError("cannot grow a tree on zero rows")
    mtry = p if mtry is None else int(mtry)
    if not 1 <= mtry <= p:
        raise ConfigError(f"mtry={mtry} outside 1..{p}")
    depth = UNLIMITED_DEPTH if max_depth is None else int(max_depth)
    if mtry < p:
        keys = (rng or np.random.default_rng(0)).random((2 * rows.size + 1, p))
    else:
        keys = np.zeros((1, 1))
    arrays = grow_tree(X, y, rows, mtry, int(min_leaf_size), depth, keys)
    return RegressionTree(*arrays, n_features=p, max_depth=depth, min_leaf_size=int(min_leaf_size))


@dataclass(frozen=True)
class ForestModel:
    trees: tuple
    n_trees: int
    mtry: int
    min_leaf_size: int
    seed: int
    oob_mse: float = float("nan")
    bootstrap: bool = True

    def predict(self, X) -> np.ndarray:
        if not self.trees:
            raise EmptyModelError("forest has no trees")
        X = _as_matrix(X, self.trees[0].n_features)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)

    def to_json(self) -> str:
        return json.dumps({
            "kind": "forest", "n_trees": self.n_trees, "mtry": self.mtry, "min_leaf_size": self.min_leaf_size,
            "seed": self.seed, "oob_mse": self.oob_mse, "bootstrap": self.bootstrap,
            "trees": [t.to_dict() for t in self.trees],
        })


def tree_rng(seed: int, index: int) -> np.random.Generator:
    """Random stream of tree ``index``; independent of how many trees exist."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def fit_random_forest(X, y, n_trees=281, mtry=None, min_leaf_size=5, seed=0, max_depth=None,
                      bootstrap=True, n_jobs=None) -> ForestModel:
    """Bagged CART trees with per-node feature subsampling.

    Tree ``i`` draws its bootstrap sample and feature subsets from its own
    stream (see :func:`tree_rng`), so results do not depend on ``n_jobs``.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n_trees < 1:
        raise ConfigError("n_trees must be >= 1")
    if n < 2 * min_leaf_size and max_depth != 0:
        raise ConfigError(f"need at least {2 * min_leaf_size} rows, got {n}")
    mtry = max(1, p // 3) if mtry is None else int(mtry)
    if mtry > p or mtry < 1:
        raise ConfigError(f"mtry={mtry} must lie in 1..{p}")

    def build(i):
        rng = tree_rng(seed, i)
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        tree = fit_tree(X, y, rows=rows, max_depth=max_depth, min_leaf_size=min_leaf_size, mtry=mtry, rng=rng)
        return tree, rows

    n_jobs = default_threads() if n_jobs is None else max(1, int(n_jobs))
    if n_jobs == 1:
        built = [build(i) for i in range(n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            built = list(pool.map(build, range(n_trees)))

    oob_mse = float("nan")
    if bootstrap:
        oob_sum = np.zeros(n)
        oob_cnt = np.zeros(n)
        for tree, rows in built:
            out = np.ones(n, dtype=bool)
            out[rows] = False
            if out.any():
                oob_sum[out] += tree.predict(X[out])
                oob_cnt[out] += 1
        seen = oob_cnt > 0
        if seen.any():
            oob_mse = float(np.mean((y[seen] - oob_sum[seen] / oob_cnt[seen]) ** 2))
    return ForestModel(trees=tuple(t for t, _ in built), n_trees=n_trees, mtry=mtry,
                       min_leaf_size=min_leaf_size, seed=seed, oob_mse=oob_mse, bootstrap=bootstrap)


@dataclass(frozen=True)
class BoostedModel:
    initial_value: float
    trees: tuple
    shrinkage: float
    tree_depth: int
    training_mse_path: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        out = np.full(X.shape[0], self.initial_value)
        if self.trees:
            X = _as_matrix(X, self.trees[0].n_features)
        for tree in self.trees:
            out += self.shrinkage * tree.predict(X)
        return out

    def to_json(self) -> str:
        return json.dumps({
            "kind": "boosted", "initial_value": self.initial_value, "shrinkage": self.shrinkage,
            "tree_depth": self.tree_depth, "training_mse_path": list(map(float, self.training_mse_path)),
            "trees": [t.to_dict() for t in self.trees],
        })


def fit_gbm(X, y, n_trees=19, shrinkage=0.3, tree_depth=3, seed=0, min_leaf_size=1,
            subsample=1.0) -> BoostedModel:
    """Least-squares boosting: start at mean(y), then add ``shrinkage`` times a
    depth-limited tree fitted to the current residuals.

    ``training_mse_path[z]`` is the training MSE after ``z`` trees. With
    ``subsample < 1`` each tree sees a random fraction of rows (drawn from
    ``seed``) and the path is no longer guaranteed to be monotone.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if not 0.0 < shrinkage <= 1.0:
        raise ConfigError(f"shrinkage must lie in (0, 1], got {shrinkage}")
    if n_trees < 0:
        raise ConfigError("n_trees must be >= 0")
    if not 0.0 < subsample <= 1.0:
        raise ConfigError("subsample must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    f0 = float(np.mean(y))
    fitted = np.full(n, f0)
    path = [float(np.mean((y - fitted) ** 2))]
    trees = []
    size = max(1, int(round(subsample * n)))
    for _ in range(n_trees):
        resid = y - fitted
        rows = None if subsample == 1.0 else np.sort(rng.choice(n, size=size, replace=False))
        tree = fit_tree(X, resid, rows=rows, max_depth=tree_depth, min_leaf_size=min_leaf_size)
        fitted = fitted + shrinkage * tree.predict(X)
        trees.append(tree)
        path.append(float(np.mean((y - fitted) ** 2)))
    depth = UNLIMITED_DEPTH if tree_depth is None else int(tree_depth)
    return BoostedModel(initial_value=f0, trees=tuple(trees), shrinkage=float(shrinkage),
                        tree_depth=depth, training_mse_path=np.array(path))


def predict_ensemble(model, x_new) -> np.ndarray | float:
    """Forest mean or boosted sum; a 1-D ``x_new`` returns a scalar."""
    single = np.ndim(x_new) == 1
    if isinstance(model, ForestModel):
        out = model.predict(x_new)
    elif isinstance(model, BoostedModel):
        out = model.predict(x_new)
    else:
        raise TypeError(f"not an ensemble: {type(model).__name__}")
    return float(out[0]) if single else out
