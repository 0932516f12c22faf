"""AR(1) benchmark and penalized least squares by cyclic coordinate descent.

The penalized objective is the unscaled one

    sum_i (y_i - b0 - x_i . b)^2 + lam * sum_j (alpha * w_j * |b_j| + (1 - alpha) * b_j^2)

which covers Ridge (alpha=0), LASSO (alpha=1), Elastic Net and, with
non-unit ``w``, the Adaptive LASSO. The intercept is never penalized.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ._kernels import coordinate_descent
from .errors import ConfigError, DegenerateRegressorError, DimensionError, NumericInputError

ADAPTIVE_EPS = 1e-6
PILOT_RIDGE_LAMBDA = 1e-3


@dataclass(frozen=True)
class PenaltySpec:
    lam: float = 0.0
    alpha: float = 1.0
    weights: tuple | None = None
    adapt_exponent: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError(f"lambda must be a finite non-negative number, got {self.lam}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.adapt_exponent < 0:
            raise ConfigError("adapt_exponent must be >= 0")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if np.any(~np.isfinite(w)) or np.any(w < 0):
                raise ConfigError("penalty weights must be finite and non-negative")
            object.__setattr__(self, "weights", tuple(float(v) for v in w))

    @classmethod
    def ridge(cls, lam):
        return cls(lam=lam, alpha=0.0)

    @classmethod
    def lasso(cls, lam, weights=None):
        return cls(lam=lam, alpha=1.0, weights=weights)


@dataclass(frozen=True)
class LinearFit:
    intercept: float
    coefficients: np.ndarray
    spec: PenaltySpec = field(default_factory=PenaltySpec)
    n_iterations: int = 0
    converged: bool = True
    training_mse: float = float("nan")
    objective_path: tuple = ()

    @property
    def p(self) -> int:
        return len(self.coefficients)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.p:
            raise DimensionError(f"expected {self.p} predictors, got {X.shape[1]}")
        return self.intercept + X @ self.coefficients

    def to_json(self) -> str:
        spec = asdict(self.spec)
        return json.dumps({
            "intercept": self.intercept,
            "coefficients": [float(b) for b in self.coefficients],
            "spec": spec,
            "n_iterations": self.n_iterations,
            "converged": self.converged,
            "training_mse": self.training_mse,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "LinearFit":
        d = json.loads(text)
        spec = d["spec"]
        return cls(
            intercept=d["intercept"], coefficients=np.array(d["coefficients"], dtype=float),
            spec=PenaltySpec(lam=spec["lam"], alpha=spec["alpha"], weights=spec["weights"],
                             adapt_exponent=spec["adapt_exponent"]),
            n_iterations=d["n_iterations"], converged=d["converged"], training_mse=d["training_mse"],
        )


def predict_linear(fit: LinearFit, x_new) -> float:
    x_new = np.asarray(x_new, dtype=float)
    if x_new.ndim != 1 or x_new.shape[0] != fit.p:
        raise DimensionError(f"expected a vector of {fit.p} predictors, got shape {x_new.shape}")
    return float(fit.intercept + x_new @ fit.coefficients)


def fit_ar1(y) -> LinearFit:
    """OLS of ``y_t`` on ``(1, y_{t-1})``."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size < 3 or np.any(~np.isfinite(y)):
        raise NumericInputError("AR(1) needs at least 3 finite observations")
    return fit_ar1_pairs(y[:-1], y[1:])


def fit_ar1_pairs(lag, cur) -> LinearFit:
    """OLS of ``cur`` on ``(1, lag)`` for explicitly paired observations."""
    lag = np.asarray(lag, dtype=float)
    cur = np.asarray(cur, dtype=float)
    if lag.shape != cur.shape or lag.ndim != 1:
        raise DimensionError("lag and cur must be vectors of equal length")
    if lag.size < 2 or not (np.all(np.isfinite(lag)) and np.all(np.isfinite(cur))):
        raise NumericInputError("AR(1) needs at least 2 finite pairs")
    lag_c = lag - lag.mean()
    sxx = lag_c @ lag_c
    if not sxx > 1e-14 * max(1.0, lag @ lag):
        raise DegenerateRegressorError("lagged regressor has zero variance")
    b1 = (lag_c @ (cur - cur.mean())) / sxx
    b0 = cur.mean() - b1 * lag.mean()
    resid = cur - b0 - b1 * lag
    return LinearFit(intercept=float(b0), coefficients=np.array([b1]), training_mse=float(resid @ resid / resid.size))


def ar1_forecast(fit: LinearFit, y_last: float) -> float:
    return predict_linear(fit, [y_last])


def penalized_objective(X, y, intercept, beta, spec: PenaltySpec) -> float:
    w = np.ones(len(beta)) if spec.weights is None else np.asarray(spec.weights)
    r = y - intercept - X @ beta
    pen = spec.alpha * np.sum(w * np.abs(beta)) + (1.0 - spec.alpha) * np.sum(beta**2)
    return float(r @ r + spec.lam * pen)


def _check_inputs(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DimensionError(f"X {X.shape} and y {y.shape} do not conform")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NumericInputError("X and y must be finite")
    return X, y


def fit_penalized(X, y, spec: PenaltySpec, tol: float = 1e-8, max_sweeps: int = 10_000,
                  fit_intercept: bool = True, init=None, record_objective: bool = False) -> LinearFit:
    """Cyclic coordinate descent with soft-thresholding.

    Coordinates are visited in ascending column order. Iteration stops once the
    largest absolute coefficient change within a sweep drops below ``tol``;
    hitting ``max_sweeps`` returns the current iterate with ``converged=False``.
    ``init`` warm-starts the coefficients.
    """
    X, y = _check_inputs(X, y)
    n, p = X.shape
    w = np.ones(p) if spec.weights is None else np.asarray(spec.weights, dtype=float)
    if w.shape != (p,):
        raise DimensionError(f"{w.shape[0]} penalty weights for {p} columns")
    if fit_intercept:
        x_mean, y_mean = X.mean(axis=0), y.mean()
    else:
        x_mean, y_mean = np.zeros(p), 0.0
    Xc = X - x_mean
    yc = y - y_mean
    gram = Xc.T @ Xc
    xty = Xc.T @ yc

    beta = np.zeros(p) if init is None else np.array(init, dtype=float)
    if beta.shape != (p,):
        raise DimensionError("init has the wrong length")
    sweeps, converged, path = coordinate_descent(
        gram, xty, float(yc @ yc), beta, float(spec.lam), float(spec.alpha), w,
        float(tol), int(max_sweeps), bool(record_objective))

    intercept = float(y_mean - x_mean @ beta)
    resid = y - intercept - X @ beta
    return LinearFit(intercept=intercept, coefficients=beta, spec=spec, n_iterations=int(sweeps),
                     converged=bool(converged), training_mse=float(resid @ resid / n),
                     objective_path=tuple(float(v) for v in path))


def ridge_closed_form(X, y, lam, fit_intercept=True):
    """(X'X + lam I)^{-1} X'y on centered data; returns (intercept, beta)."""
    X, y = _check_inputs(X, y)
    if fit_intercept:
        x_mean, y_mean = X.mean(axis=0), y.mean()
    else:
        x_mean, y_mean = np.zeros(X.shape[1]), 0.0
    Xc, yc = X - x_mean, y - y_mean
    beta = np.linalg.solve(Xc.T @ Xc + lam * np.eye(X.shape[1]), Xc.T @ yc)
    return float(y_mean - x_mean @ beta), beta


def adaptive_weights_from_pilot(pilot, gamma: float, eps: float = ADAPTIVE_EPS) -> np.ndarray:
    return 1.0 / (np.abs(np.asarray(pilot, dtype=float)) + eps) ** gamma


def derive_adaptive_weights(X, y, gamma: float = 1.0) -> np.ndarray:
    """``w_j = 1 / (|b_j| + 1e-6)^gamma`` from an OLS pilot, or a ridge pilot
    when the design is wide or rank deficient."""
    X, y = _check_inputs(X, y)
    n, p = X.shape
    Xc = X - X.mean(axis=0)
    if n > p and np.linalg.matrix_rank(Xc) == p:
        pilot = np.linalg.lstsq(Xc, y - y.mean(), rcond=None)[0]
    else:
        _, pilot = ridge_closed_form(X, y, PILOT_RIDGE_LAMBDA)
    return adaptive_weights_from_pilot(pilot, gamma)


def fit_adaptive_lasso(X, y, lam: float, gamma: float = 1.0, **kwargs) -> LinearFit:
    weights = derive_adaptive_weights(X, y, gamma)
    return fit_penalized(X, y, PenaltySpec(lam=lam, alpha=1.0, weights=weights, adapt_exponent=gamma), **kwargs)
