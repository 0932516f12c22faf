"""Out-of-sample nowcast tracks and the accuracy test battery."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .data import month_str
from .errors import (AlignmentError, CollinearityError, ConfigError, DegenerateBaselineError,
                     DegenerateDifferentialError, NowcastError)
from .models import get_family


@dataclass(frozen=True)
class ForecastTrack:
    model_id: str
    months: np.ndarray
    predictions: np.ndarray
    actuals: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        months = np.asarray(self.months, dtype="datetime64[M]")
        pred = np.asarray(self.predictions, dtype=float)
        act = np.asarray(self.actuals, dtype=float)
        if not (months.shape == pred.shape == act.shape) or months.ndim != 1:
            raise AlignmentError(f"{self.model_id}: months, predictions and actuals differ in length")
        if months.size > 1 and np.any(np.diff(months).astype(int) <= 0):
            raise AlignmentError(f"{self.model_id}: months must be strictly increasing")
        for name, arr in (("months", months), ("predictions", pred), ("actuals", act)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.months.size

    @property
    def errors(self) -> np.ndarray:
        return self.actuals - self.predictions

    def subset(self, keep) -> "ForecastTrack":
        return ForecastTrack(self.model_id, self.months[keep], self.predictions[keep], self.actuals[keep],
                             dict(self.diagnostics))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["month", "actual", "prediction"])
            for m, a, p in zip(self.months, self.actuals, self.predictions):
                w.writerow([month_str(m), repr(float(a)), repr(float(p))])

    @classmethod
    def from_csv(cls, path, model_id) -> "ForecastTrack":
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(model_id, np.array([r["month"] for r in rows], dtype="datetime64[M]"),
                   np.array([float(r["prediction"]) for r in rows]),
                   np.array([float(r["actual"]) for r in rows]))


def expanding_window_forecast(family, params: dict, panel, test_start=None, test_end=None, seed: int = 0,
                              refit_each_month: bool = True, warm_start: bool = True) -> ForecastTrack:
    """One nowcast per test month from fits on the months before it.

    With ``refit_each_month`` the model is re-estimated on every month before
    ``t``; otherwise it is fitted once on the months before the test start.
    A failing month yields NaN and a diagnostic instead of an exception.
    """
    fam = get_family(family)
    start = panel.n_train if test_start is None else panel.row_of(test_start)
    stop = panel.row_of(panel.test_end if test_end is None else test_end) + 1
    if stop <= start:
        raise ConfigError("test range is empty")
    preds = np.full(stop - start, np.nan)
    diagnostics = {}
    fitted = None
    for i, t in enumerate(range(start, stop)):
        month = month_str(panel.months[t])
        try:
            if refit_each_month or fitted is None:
                rows = np.arange(t if refit_each_month else start)
                rows = rows[np.isfinite(panel.target[rows])]
                fitted = fam.fit(panel, rows, params, seed=seed, warm=fitted if warm_start else None)
            preds[i] = fam.predict(fitted, panel, [t])[0]
        except (NowcastError, np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            diagnostics[month] = f"{type(exc).__name__}: {exc}"
            if refit_each_month:
                fitted = None
    return ForecastTrack(fam.id, panel.months[start:stop], preds, panel.target[start:stop], diagnostics)


def _check_aligned(a: ForecastTrack, b: ForecastTrack):
    if a.months.shape != b.months.shape or np.any(a.months != b.months):
        raise AlignmentError(f"tracks {a.model_id!r} and {b.model_id!r} cover different months")


def rmse(errors) -> float:
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0 or not np.all(np.isfinite(errors)):
        raise AlignmentError("RMSE needs a non-empty, fully observed error vector")
    return float(np.sqrt(np.mean(errors**2)))


def rmse_report(track: ForecastTrack, baseline: ForecastTrack) -> tuple:
    """(RMSE of ``track``, RMSE ratio against ``baseline``)."""
    _check_aligned(track, baseline)
    base = rmse(baseline.errors)
    if base == 0:
        raise DegenerateBaselineError(f"baseline {baseline.model_id!r} has zero RMSE")
    value = rmse(track.errors)
    return value, (1.0 if track is baseline else value / base)


def _harvey_factor(T, h):
    return np.sqrt((T + 1 - 2 * h + h * (h - 1) / T) / T)


def dm_statistic(d, horizon: int = 1, small_sample_adjust: bool = True) -> float:
    """Diebold-Mariano statistic of a loss differential series.

    The long-run variance uses Bartlett weights on ``horizon - 1`` lags with
    ``1/T`` autocovariances, so at horizon 1 it is the variance of ``d``.
    """
    d = np.asarray(d, dtype=float)
    T = d.size
    if T < 5:
        raise ConfigError("DM test needs at least 5 paired errors")
    dc = d - d.mean()
    lrv = dc @ dc / T
    for lag in range(1, horizon):
        lrv += 2.0 * (1.0 - lag / horizon) * (dc[lag:] @ dc[:-lag]) / T
    if not lrv > 1e-14 * max(1.0, float(np.mean(d**2))):
        raise DegenerateDifferentialError("loss differential has zero variance")
    stat = d.mean() / np.sqrt(lrv / T)
    if small_sample_adjust:
        stat *= _harvey_factor(T, horizon)
    return float(stat)


def _p_value(stat, T, small_sample_adjust, alternative):
    dist = stats.t(T - 1) if small_sample_adjust else stats.norm()
    if alternative == "two-sided":
        return float(2.0 * dist.sf(abs(stat)))
    if alternative == "less":
        return float(dist.cdf(stat))
    if alternative == "greater":
        return float(dist.sf(stat))
    raise ConfigError(f"unknown alternative {alternative!r}")


def dm_test(track_a: ForecastTrack, track_b: ForecastTrack, horizon: int = 1, small_sample_adjust: bool = True,
            alternative: str = "two-sided") -> tuple:
    """Equal-accuracy test on squared errors, ``d_t = e_a^2 - e_b^2``.

    ``alternative="less"`` tests whether ``track_a`` is more accurate.
    Returns (statistic, p-value).
    """
    _check_aligned(track_a, track_b)
    return dm_from_errors(track_a.errors, track_b.errors, horizon, small_sample_adjust, alternative)


def dm_from_errors(e_a, e_b, horizon=1, small_sample_adjust=True, alternative="two-sided") -> tuple:
    d = np.asarray(e_a, dtype=float) ** 2 - np.asarray(e_b, dtype=float) ** 2
    stat = dm_statistic(d, horizon, small_sample_adjust)
    return stat, _p_value(stat, d.size, small_sample_adjust, alternative)


def combine_mean(tracks) -> ForecastTrack:
    tracks = list(tracks)
    if not tracks:
        raise ConfigError("nothing to combine")
    for other in tracks[1:]:
        _check_aligned(tracks[0], other)
    preds = np.mean([t.predictions for t in tracks], axis=0)
    return ForecastTrack("combination", tracks[0].months, preds, tracks[0].actuals)


@dataclass(frozen=True)
class ConsistencyResult:
    beta1: float
    beta2: float
    aic: float
    p_value: float
    dm_pvalue: float
    intercept: float | None = None
    residuals: np.ndarray | None = None


def consistency_regression(y, dfme, ml, intercept: bool = False, small_sample_adjust: bool = True):
    """OLS of ``y`` on the electricity-factor nowcast and one ML nowcast.

    ``p_value`` tests ``beta2 = 0`` with homoskedastic standard errors. The
    DM p-value is one-sided: the regression's residuals are more accurate
    than the errors of the electricity-factor nowcast alone.
    """
    a = dfme.predictions if isinstance(dfme, ForecastTrack) else np.asarray(dfme, dtype=float)
    b = ml.predictions if isinstance(ml, ForecastTrack) else np.asarray(ml, dtype=float)
    if isinstance(dfme, ForecastTrack) and isinstance(ml, ForecastTrack):
        _check_aligned(dfme, ml)
    y = np.asarray(y.actuals if isinstance(y, ForecastTrack) else y, dtype=float)
    T = y.size
    if not (a.shape == b.shape == (T,)):
        raise AlignmentError("y, dfme and ml differ in length")
    if T < 5:
        raise ConfigError("consistency regression needs at least 5 observations")
    if not np.all(np.isfinite(np.concatenate([y, a, b]))):
        raise AlignmentError("consistency regression inputs must be fully observed")
    if np.std(a) == 0 or np.std(b) == 0 or abs(np.corrcoef(a, b)[0, 1]) > 1 - 1e-10:
        raise CollinearityError("the two nowcasts are collinear")
    cols = [a, b] if not intercept else [np.ones(T), a, b]
    X = np.column_stack(cols)
    k = X.shape[1]
    XtX = X.T @ X
    coef = np.linalg.solve(XtX, X.T @ y)
    resid = y - X @ coef
    rss = float(resid @ resid)
    aic = T * np.log(rss / T) + 2 * k
    s2 = rss / (T - k)
    se = np.sqrt(s2 * np.diag(np.linalg.inv(XtX)))
    tstat = coef[-1] / se[-1] if se[-1] > 0 else np.inf
    p_val = float(2.0 * stats.t(T - k).sf(abs(tstat)))
    dfme_err = y - a
    try:
        _, dm_p = dm_from_errors(resid, dfme_err, 1, small_sample_adjust, alternative="less")
    except DegenerateDifferentialError:
        dm_p = float("nan")
    return ConsistencyResult(beta1=float(coef[-2]), beta2=float(coef[-1]), aic=float(aic), p_value=p_val,
                             dm_pvalue=float(dm_p), intercept=float(coef[0]) if intercept else None,
                             residuals=resid)


def common_support(tracks) -> list:
    """Restrict aligned tracks to months where every track has a prediction."""
    tracks = list(tracks)
    for other in tracks[1:]:
        _check_aligned(tracks[0], other)
    keep = np.logical_and.reduce([np.isfinite(t.predictions) for t in tracks])
    return [t.subset(keep) for t in tracks]


@dataclass
class EvalReport:
    rows: list            # model, rmse, relative_rmse, dm_stat, dm_pvalue
    consistency: list     # model, beta1, beta2, aic, p_value, dm_pvalue
    baseline_id: str = "ar"
    n_months: int = 0
    dropped_months: list = field(default_factory=list)
    failed_models: list = field(default_factory=list)

    def row(self, model_id) -> dict:
        for r in self.rows:
            if r["model"] == model_id:
                return r
        raise KeyError(model_id)

    def to_json(self) -> str:
        return json.dumps({"baseline": self.baseline_id, "n_months": self.n_months,
                           "dropped_months": self.dropped_months, "failed_models": self.failed_models,
                           "models": self.rows,
                           "consistency": self.consistency}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text) -> "EvalReport":
        d = json.loads(text)
        return cls(rows=d["models"], consistency=d["consistency"], baseline_id=d["baseline"],
                   n_months=d["n_months"], dropped_months=d["dropped_months"],
                   failed_models=d.get("failed_models", []))

    def to_csv(self, path) -> None:
        keys = ["model", "rmse", "relative_rmse", "dm_stat", "dm_pvalue"]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(keys)
            for r in self.rows:
                w.writerow([r["model"], *(repr(float(r[k])) for k in keys[1:])])


def evaluate_tracks(tracks: dict, baseline_id: str = "ar", ml_ids=(), dfme_id: str = "dfm_electricity",
                    small_sample_adjust: bool = True, intercept: bool = False) -> EvalReport:
    """Table-style comparison of every track against ``baseline_id``.

    Tracks without a single prediction are set aside in ``failed_models``;
    the rest are cut to their common months. ``ml_ids`` present in
    ``tracks`` are averaged into a "combination" track and, when the
    electricity-factor track exists, each enters a consistency regression.
    """
    if baseline_id not in tracks:
        raise ConfigError(f"baseline track {baseline_id!r} missing")
    failed = [i for i in tracks if not np.isfinite(tracks[i].predictions).any()]
    if baseline_id in failed:
        raise ConfigError(f"baseline track {baseline_id!r} has no predictions")
    ids = [i for i in tracks if i not in failed]
    aligned = dict(zip(ids, common_support([tracks[i] for i in ids])))
    full = tracks[baseline_id].months
    kept = aligned[baseline_id].months
    dropped = [month_str(m) for m in full[~np.isin(full, kept)]]
    ml = [i for i in ml_ids if i in aligned]
    if ml:
        aligned["combination"] = combine_mean([aligned[i] for i in ml])
    base = aligned[baseline_id]
    rows = []
    for mid, track in aligned.items():
        value, rel = rmse_report(track, base)
        if mid == baseline_id:
            stat, p = float("nan"), float("nan")
        else:
            try:
                stat, p = dm_test(track, base, small_sample_adjust=small_sample_adjust)
            except DegenerateDifferentialError:
                stat, p = float("nan"), float("nan")
        rows.append({"model": mid, "rmse": value, "relative_rmse": rel, "dm_stat": stat, "dm_pvalue": p})
    consistency = []
    if dfme_id in aligned:
        for mid in ml:
            res = consistency_regression(aligned[mid], aligned[dfme_id], aligned[mid], intercept=intercept,
                                         small_sample_adjust=small_sample_adjust)
            consistency.append({"model": mid, "beta1": res.beta1, "beta2": res.beta2, "aic": res.aic,
                                "p_value": res.p_value, "dm_pvalue": res.dm_pvalue})
    return EvalReport(rows=rows, consistency=consistency, baseline_id=baseline_id, n_months=int(kept.size),
                      dropped_months=dropped, failed_models=failed)
