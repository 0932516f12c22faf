"""Contiguous k-fold cross-validation and Gaussian-process Bayesian optimization."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.stats import norm, qmc

from .data import month_range, to_month
from .errors import ConfigError, FoldFitError, NowcastError, OptimizationFailedError
from .models import get_family

JITTER = 1e-6
LENGTH_SCALES = np.geomspace(0.03, 3.0, 25)


@dataclass(frozen=True)
class Dimension:
    name: str
    low: float
    high: float
    scale: str = "linear"
    integer: bool = False

    def __post_init__(self):
        if not self.low < self.high:
            raise ConfigError(f"{self.name}: need low < high, got [{self.low}, {self.high}]")
        if self.scale not in ("linear", "log"):
            raise ConfigError(f"{self.name}: scale must be 'linear' or 'log'")
        if self.scale == "log" and self.low <= 0:
            raise ConfigError(f"{self.name}: log scale needs a positive lower bound")
        if self.integer and (self.low != int(self.low) or self.high != int(self.high)):
            raise ConfigError(f"{self.name}: integer dimension needs integral bounds")

    def _warp(self, v):
        return np.log(v) if self.scale == "log" else v

    def to_unit(self, value) -> float:
        lo, hi = self._warp(self.low), self._warp(self.high)
        return float((self._warp(value) - lo) / (hi - lo))

    def from_unit(self, u):
        u = float(np.clip(u, 0.0, 1.0))
        lo, hi = self._warp(self.low), self._warp(self.high)
        v = lo + u * (hi - lo)
        v = float(np.exp(v)) if self.scale == "log" else float(v)
        if self.integer:
            return int(np.clip(round(v), self.low, self.high))
        return float(np.clip(v, self.low, self.high))


@dataclass(frozen=True)
class SearchSpace:
    dimensions: tuple

    def __post_init__(self):
        names = [d.name for d in self.dimensions]
        if not names or len(set(names)) != len(names):
            raise ConfigError("a search space needs distinct, non-empty dimension names")

    @classmethod
    def from_dict(cls, spec: dict) -> "SearchSpace":
        return cls(tuple(Dimension(name, float(d["low"]), float(d["high"]), d.get("scale", "linear"),
                                   bool(d.get("integer", False))) for name, d in spec.items()))

    @property
    def names(self) -> tuple:
        return tuple(d.name for d in self.dimensions)

    def decode(self, u) -> dict:
        return {d.name: d.from_unit(v) for d, v in zip(self.dimensions, u)}

    def encode(self, params: dict) -> np.ndarray:
        return np.array([d.to_unit(params[d.name]) for d in self.dimensions])

    def contains(self, params: dict) -> bool:
        return all(d.low <= params[d.name] <= d.high for d in self.dimensions)


# Ranges of the printed hyperparameter table; override per model in the config.
DEFAULT_SPACES = {
    "ridge": {"lambda": {"low": 0.01, "high": 0.09}},
    "lasso": {"lambda": {"low": 0.001, "high": 0.009}},
    "elastic_net": {"lambda": {"low": 0.01, "high": 0.09}, "alpha": {"low": 0.1, "high": 0.9}},
    "adaptive_lasso": {"lambda": {"low": 0.01, "high": 0.09}, "gamma": {"low": 0.1, "high": 0.9}},
    "random_forest": {"n_trees": {"low": 1, "high": 400, "integer": True}},
    "gbm": {"n_trees": {"low": 1, "high": 5000, "integer": True},
            "shrinkage": {"low": 0.001, "high": 0.009}},
}


@dataclass(frozen=True)
class CvPlan:
    """Half-open ``(start, stop)`` row ranges, offsets from the window start."""

    folds: tuple
    start: int = 0
    months: tuple = ()

    @property
    def k(self) -> int:
        return len(self.folds)

    @property
    def n(self) -> int:
        return self.folds[-1][1]

    def validation_rows(self, i) -> np.ndarray:
        a, b = self.folds[i]
        return np.arange(self.start + a, self.start + b)

    def fit_rows(self, i) -> np.ndarray:
        a, b = self.folds[i]
        rows = np.arange(self.start, self.start + self.n)
        return np.concatenate([rows[:a], rows[b:]])

    def sizes(self) -> list:
        return [b - a for a, b in self.folds]


def make_time_folds(window, k: int = 5, start: int = 0) -> CvPlan:
    """Split a window into ``k`` contiguous chronological blocks.

    ``window`` is a length or a ``(first_month, last_month)`` pair. Sizes
    differ by at most one, with the larger blocks first.
    """
    months = ()
    if isinstance(window, (int, np.integer)):
        n = int(window)
    else:
        first, last = window
        span = month_range(to_month(first), to_month(last))
        months = tuple(span)
        n = len(span)
    if k < 1:
        raise ConfigError("k must be >= 1")
    if k > n:
        raise ConfigError(f"cannot split {n} months into {k} folds")
    base, extra = divmod(n, k)
    folds = []
    a = 0
    for i in range(k):
        b = a + base + (1 if i < extra else 0)
        folds.append((a, b))
        a = b
    return CvPlan(tuple(folds), start=start, months=months)


def cv_mse(family, params: dict, panel, plan: CvPlan, seed: int = 0) -> float:
    """Mean squared validation error pooled over all held-out rows."""
    fam = get_family(family)
    sq = []
    for i in range(plan.k):
        try:
            fitted = fam.fit(panel, plan.fit_rows(i), params, seed=seed)
            rows = plan.validation_rows(i)
            pred = fam.predict(fitted, panel, rows)
        except (NowcastError, np.linalg.LinAlgError, ValueError) as exc:
            raise FoldFitError(i, exc) from exc
        sq.append((panel.target[rows] - pred) ** 2)
    return float(np.mean(np.concatenate(sq)))


@dataclass
class TraceRow:
    iteration: int
    params: dict
    value: float
    incumbent: bool = False
    error: str = ""


@dataclass
class OptimizationResult:
    best_params: dict
    best_value: float
    trace: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        names = list(self.trace[0].params) if self.trace else []
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", *names, "cv_mse", "incumbent"])
            for row in self.trace:
                w.writerow([row.iteration, *(repr(row.params[k]) for k in names), repr(row.value),
                            int(row.incumbent)])


def _matern52(A, B, length):
    d = np.sqrt(np.maximum(((A[:, None, :] - B[None, :, :]) ** 2).sum(-1), 0.0)) / length
    s5 = np.sqrt(5.0) * d
    return (1.0 + s5 + s5**2 / 3.0) * np.exp(-s5)


class _GaussianProcess:
    """Zero-mean GP on standardized targets; the length scale maximizes the
    marginal likelihood over a fixed grid."""

    def __init__(self, U, y):
        self.U = U
        self.mu = y.mean()
        self.sd = y.std() if y.std() > 0 else 1.0
        z = (y - self.mu) / self.sd
        best = None
        for length in LENGTH_SCALES:
            K = _matern52(U, U, length) + JITTER * np.eye(len(U))
            try:
                L = linalg.cholesky(K, lower=True)
            except linalg.LinAlgError:
                continue
            alpha = linalg.cho_solve((L, True), z)
            ll = -0.5 * z @ alpha - np.log(np.diag(L)).sum()
            if best is None or ll > best[0]:
                best = (ll, length, L, alpha)
        if best is None:
            raise np.linalg.LinAlgError("GP covariance is not positive definite")
        _, self.length, self.L, self.alpha = best

    def predict(self, V):
        Ks = _matern52(V, self.U, self.length)
        mean = Ks @ self.alpha
        v = linalg.solve_triangular(self.L, Ks.T, lower=True)
        var = np.maximum(1.0 - (v**2).sum(axis=0), 1e-12)
        return mean * self.sd + self.mu, np.sqrt(var) * self.sd


def expected_improvement(mean, sd, best):
    z = (best - mean) / sd
    return (best - mean) * norm.cdf(z) + sd * norm.pdf(z)


def _sobol(d, n, rng):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return qmc.Sobol(d, scramble=True, seed=rng).random(n)


def gp_minimize(objective, space: SearchSpace, budget: int, seed: int = 0, n_initial: int = 8,
                n_candidates: int = 2048) -> OptimizationResult:
    """Sequential GP/expected-improvement minimization of ``objective(params)``.

    The first ``n_initial`` points come from a scrambled Sobol design. Each
    later proposal maximizes EI over fresh Sobol candidates plus local
    perturbations of the incumbent; proposals that decode to an already
    evaluated point are skipped in favour of the next-best candidate. Failed
    evaluations (package errors) are recorded with a NaN value.
    """
    if budget < n_initial:
        raise ConfigError(f"budget {budget} is below the initial design size {n_initial}")
    rng = np.random.default_rng(seed)
    d = len(space.dimensions)
    design = _sobol(d, n_initial, rng)
    trace: list = []
    seen = set()
    U, vals = [], []
    best_value, best_params, best_row = np.inf, None, None

    def key(params):
        return tuple(sorted(params.items()))

    def evaluate(u):
        nonlocal best_value, best_params, best_row
        params = space.decode(u)
        seen.add(key(params))
        row = TraceRow(iteration=len(trace) + 1, params=params, value=float("nan"))
        try:
            row.value = float(objective(params))
        except NowcastError as exc:
            row.error = str(exc)
        trace.append(row)
        if np.isfinite(row.value):
            U.append(space.encode(params))
            vals.append(row.value)
            if row.value < best_value:
                best_value, best_params, best_row = row.value, params, row

    for u in design:
        evaluate(u)
    while len(trace) < budget:
        cand = _sobol(d, n_candidates, rng)
        if best_params is not None:
            local = space.encode(best_params) + 0.05 * rng.standard_normal((256, d))
            cand = np.vstack([cand, np.clip(local, 0.0, 1.0)])
        if len(vals) >= 2 and np.ptp(vals) > 0:
            gp = _GaussianProcess(np.array(U), np.array(vals))
            mean, sd = gp.predict(cand)
            score = expected_improvement(mean, sd, best_value)
        else:
            score = rng.random(len(cand))
        picked = None
        for j in np.argsort(-score, kind="stable"):
            if key(space.decode(cand[j])) not in seen:
                picked = cand[j]
                break
        if picked is None:
            picked = rng.random(d)
        evaluate(picked)

    if best_row is None:
        raise OptimizationFailedError("every evaluation failed", trace=trace)
    best_row.incumbent = True
    return OptimizationResult(best_params=best_params, best_value=best_value, trace=trace)


def bayes_optimize(family, space: SearchSpace, panel, plan: CvPlan, budget: int = 30, seed: int = 0,
                   fixed: dict | None = None, n_initial: int = 8) -> OptimizationResult:
    """Tune ``family`` by minimizing :func:`cv_mse` over ``space``.

    ``fixed`` holds hyperparameters that stay constant during the search.
    """
    fam = get_family(family)
    fixed = dict(fixed or {})

    def objective(params):
        return cv_mse(fam, {**fixed, **params}, panel, plan, seed=seed)

    return gp_minimize(objective, space, budget, seed=seed, n_initial=n_initial)
