"""Model families behind a common fit/predict interface.

A family turns a panel plus a set of training rows into a fitted object and
predicts the target at arbitrary rows. Linear models see the design with
missing entries imputed at zero (the training mean after standardization);
trees route missing values themselves; factor models use the masked design.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import MonthlyPanel
from .dfm import fit_dfm_em, kalman_filter_smoother
from .errors import ConfigError, NumericInputError
from .linear import PenaltySpec, derive_adaptive_weights, fit_ar1_pairs, fit_penalized
from .trees import fit_gbm, fit_random_forest

MODEL_IDS = ("ar", "ridge", "lasso", "elastic_net", "adaptive_lasso", "random_forest", "gbm",
             "dfm_full", "dfm_best", "dfm_structured", "dfm_electricity")
ML_IDS = ("ridge", "lasso", "elastic_net", "adaptive_lasso", "random_forest", "gbm")


class Family:
    id = ""
    defaults: dict = {}
    tunable = True

    def params(self, overrides=None) -> dict:
        merged = dict(self.defaults)
        for key, value in (overrides or {}).items():
            if key not in self.defaults:
                raise ConfigError(f"{self.id}: unknown hyperparameter {key!r}")
            merged[key] = value
        return merged

    def fit(self, panel: MonthlyPanel, rows, params: dict, seed: int = 0, warm=None):
        raise NotImplementedError

    def predict(self, fitted, panel: MonthlyPanel, rows) -> np.ndarray:
        raise NotImplementedError


def _rows(rows) -> np.ndarray:
    return np.asarray(rows, dtype=np.int64)


def _target(panel, rows) -> np.ndarray:
    y = panel.target[rows]
    if not np.all(np.isfinite(y)):
        raise NumericInputError("target missing in the fit rows")
    return y


class ARFamily(Family):
    id = "ar"
    defaults = {}
    tunable = False

    def fit(self, panel, rows, params, seed=0, warm=None):
        rows = _rows(rows)
        rows = rows[rows >= 1]
        y = panel.target
        ok = np.isfinite(y[rows]) & np.isfinite(y[rows - 1])
        rows = rows[ok]
        return fit_ar1_pairs(y[rows - 1], y[rows])

    def predict(self, fitted, panel, rows):
        rows = _rows(rows)
        if np.any(rows < 1):
            raise ConfigError("AR prediction needs a preceding month")
        return fitted.intercept + fitted.coefficients[0] * panel.target[rows - 1]


class _PenalizedFamily(Family):
    tol = 1e-7
    max_sweeps = 20_000

    def spec(self, params, X, y) -> PenaltySpec:
        raise NotImplementedError

    def fit(self, panel, rows, params, seed=0, warm=None):
        rows = _rows(rows)
        X = np.nan_to_num(panel.design[rows], nan=0.0)
        y = _target(panel, rows)
        init = None if warm is None else warm.coefficients
        return fit_penalized(X, y, self.spec(self.params(params), X, y), tol=self.tol,
                             max_sweeps=self.max_sweeps, init=init)

    def predict(self, fitted, panel, rows):
        X = np.nan_to_num(panel.design[_rows(rows)], nan=0.0)
        return fitted.intercept + X @ fitted.coefficients


class RidgeFamily(_PenalizedFamily):
    id = "ridge"
    defaults = {"lambda": 0.31}

    def spec(self, params, X, y):
        return PenaltySpec.ridge(float(params["lambda"]))


class LassoFamily(_PenalizedFamily):
    id = "lasso"
    defaults = {"lambda": 0.007}

    def spec(self, params, X, y):
        return PenaltySpec.lasso(float(params["lambda"]))


class ElasticNetFamily(_PenalizedFamily):
    id = "elastic_net"
    defaults = {"lambda": 0.04, "alpha": 0.5}

    def spec(self, params, X, y):
        return PenaltySpec(lam=float(params["lambda"]), alpha=float(params["alpha"]))


class AdaptiveLassoFamily(_PenalizedFamily):
    id = "adaptive_lasso"
    defaults = {"lambda": 0.67, "gamma": 0.34}

    def spec(self, params, X, y):
        gamma = float(params["gamma"])
        w = derive_adaptive_weights(X, y, gamma)
        return PenaltySpec(lam=float(params["lambda"]), alpha=1.0, weights=w, adapt_exponent=gamma)


class RandomForestFamily(Family):
    id = "random_forest"
    defaults = {"n_trees": 281, "mtry": None, "min_leaf_size": 5, "max_depth": None}

    def fit(self, panel, rows, params, seed=0, warm=None):
        rows = _rows(rows)
        p = self.params(params)
        return fit_random_forest(panel.design[rows], _target(panel, rows), n_trees=int(p["n_trees"]),
                                 mtry=p["mtry"], min_leaf_size=int(p["min_leaf_size"]),
                                 max_depth=p["max_depth"], seed=seed)

    def predict(self, fitted, panel, rows):
        return fitted.predict(panel.design[_rows(rows)])


class GbmFamily(Family):
    id = "gbm"
    defaults = {"n_trees": 19, "shrinkage": 0.3, "tree_depth": 3, "min_leaf_size": 1, "subsample": 1.0}

    def fit(self, panel, rows, params, seed=0, warm=None):
        rows = _rows(rows)
        p = self.params(params)
        return fit_gbm(panel.design[rows], _target(panel, rows), n_trees=int(p["n_trees"]),
                       shrinkage=float(p["shrinkage"]), tree_depth=int(p["tree_depth"]),
                       min_leaf_size=int(p["min_leaf_size"]), subsample=float(p["subsample"]), seed=seed)

    def predict(self, fitted, panel, rows):
        return fitted.predict(panel.design[_rows(rows)])


@dataclass(frozen=True)
class DfmState:
    fit: object
    columns: np.ndarray
    target_mean: float
    target_std: float


class _DfmFamily(Family):
    """Factor model on a column subset with the target as an extra series.

    The target enters standardized with the fit rows' mean and deviation;
    it is masked from the first predicted month onward so each nowcast uses
    only target values released before that month.
    """

    tunable = False
    defaults = {"r_factors": 1, "p_lags": 1, "max_iter": 100, "tol": 1e-5, "warm_iter": 10,
                "columns": None}

    def select(self, panel, params) -> np.ndarray:
        raise NotImplementedError

    def _data(self, panel, cols, end, target_until, mean, std):
        x = panel.masked_design()[:end, cols].T
        y = (np.array(panel.target[:end], dtype=float) - mean) / std
        y[target_until:] = np.nan
        return np.vstack([x, y[None, :]])

    def fit(self, panel, rows, params, seed=0, warm=None):
        rows = _rows(rows)
        p = self.params(params)
        cols = self.select(panel, p)
        if rows.size == 0 or not np.array_equal(rows, np.arange(rows[0], rows[-1] + 1)):
            raise ConfigError(f"{self.id}: factor models need a contiguous fit window")
        end = int(rows[-1]) + 1
        y = _target(panel, rows)
        mean, std = float(y.mean()), float(y.std(ddof=1))
        if not std > 0:
            raise NumericInputError("target has zero variance in the fit window")
        data = self._data(panel, cols, end, end, mean, std)
        data[:, :rows[0]] = np.nan
        r = int(p["r_factors"])
        init = None
        max_iter = int(p["max_iter"])
        if warm is not None and np.array_equal(warm.columns, cols) and warm.fit.model.r_factors == r:
            init = warm.fit.model
            max_iter = int(p["warm_iter"])
        fit = fit_dfm_em(data, r_factors=r, p_lags=int(p["p_lags"]), max_iter=max_iter,
                         tol=float(p["tol"]), init=init)
        return DfmState(fit=fit, columns=cols, target_mean=mean, target_std=std)

    def predict(self, fitted, panel, rows):
        model = fitted.fit.model
        out = np.empty(len(rows))
        for i, t in enumerate(_rows(rows)):
            data = self._data(panel, fitted.columns, t + 1, t, fitted.target_mean, fitted.target_std)
            smooth = kalman_filter_smoother(model, data)
            z = float(model.loadings[-1] @ smooth.smoothed_means[-1, :model.r_factors])
            out[i] = z * fitted.target_std + fitted.target_mean
        return out


class DfmFullFamily(_DfmFamily):
    id = "dfm_full"

    def select(self, panel, params):
        return np.arange(panel.p)


class DfmBestFamily(_DfmFamily):
    id = "dfm_best"

    def select(self, panel, params):
        if not params.get("columns"):
            raise ConfigError("dfm_best needs 'columns' (the selected predictors)")
        return panel.columns(params["columns"])


class DfmStructuredFamily(_DfmFamily):
    id = "dfm_structured"

    def select(self, panel, params):
        if params.get("columns"):
            return panel.columns(params["columns"])
        cols = np.flatnonzero(np.array(panel.column_categories) == "structured")
        if cols.size == 0:
            raise ConfigError("panel has no structured columns")
        return cols


class DfmElectricityFamily(_DfmFamily):
    id = "dfm_electricity"
    defaults = {**_DfmFamily.defaults, "columns": ("electricity",)}

    def select(self, panel, params):
        try:
            return panel.columns(params["columns"])
        except KeyError as exc:
            raise ConfigError(f"dfm_electricity: column {exc} not in panel") from None


FAMILIES = {f.id: f for f in (ARFamily(), RidgeFamily(), LassoFamily(), ElasticNetFamily(),
                              AdaptiveLassoFamily(), RandomForestFamily(), GbmFamily(), DfmFullFamily(),
                              DfmBestFamily(), DfmStructuredFamily(), DfmElectricityFamily())}


def get_family(family) -> Family:
    if isinstance(family, Family):
        return family
    try:
        return FAMILIES[family]
    except KeyError:
        raise ConfigError(f"unknown model family {family!r}; expected one of {MODEL_IDS}") from None
