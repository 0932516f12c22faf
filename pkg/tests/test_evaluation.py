import json

import numpy as np
import pytest
from scipy import stats

from nowcast.errors import (AlignmentError, CollinearityError, ConfigError, DegenerateBaselineError,
                            DegenerateDifferentialError)
from nowcast.evaluation import (EvalReport, ForecastTrack, combine_mean, consistency_regression, dm_statistic,
                                dm_test, evaluate_tracks, expanding_window_forecast, rmse, rmse_report)

from oracles import ols_fractions

MONTHS = np.arange("2018-01", "2023-01", dtype="datetime64[M]")


def track(pred, actual=None, model_id="m", months=None):
    pred = np.asarray(pred, dtype=float)
    actual = np.zeros_like(pred) if actual is None else np.asarray(actual, dtype=float)
    months = MONTHS[:pred.size] if months is None else months
    return ForecastTrack(model_id, months, pred, actual)


# expanding window

def test_printed_test_span(demo_panel):
    out = expanding_window_forecast("ar", {}, demo_panel, test_start="2014-09", test_end="2023-05")
    assert len(out) == 105
    assert str(out.months[0]) == "2014-09" and str(out.months[-1]) == "2023-05"
    assert np.all(np.isfinite(out.predictions)) and not out.diagnostics


def test_single_month(demo_panel):
    out = expanding_window_forecast("ridge", {"lambda": 10.0}, demo_panel, "2016-03", "2016-03")
    assert len(out) == 1 and str(out.months[0]) == "2016-03"


def test_ar_manual_chain(demo_panel):
    out = expanding_window_forecast("ar", {}, demo_panel, "2015-01", "2015-03")
    y = demo_panel.target
    start = demo_panel.row_of("2015-01")
    for i, t in enumerate(range(start, start + 3)):
        slope, icpt = np.polyfit(y[:t - 1], y[1:t], 1)
        assert out.predictions[i] == pytest.approx(icpt + slope * y[t - 1], abs=1e-10)
        assert out.actuals[i] == y[t]


def test_fit_once_switch(demo_panel):
    once = expanding_window_forecast("ar", {}, demo_panel, "2015-01", "2015-06", refit_each_month=False)
    y = demo_panel.target
    t0 = demo_panel.row_of("2015-01")
    slope, icpt = np.polyfit(y[:t0 - 1], y[1:t0], 1)
    rows = np.arange(t0, t0 + 6)
    assert np.allclose(once.predictions, icpt + slope * y[rows - 1], atol=1e-10)


def test_failing_months_become_diagnostics(demo_panel):
    out = expanding_window_forecast("dfm_best", {}, demo_panel, "2015-01", "2015-02")
    assert np.all(np.isnan(out.predictions)) and set(out.diagnostics) == {"2015-01", "2015-02"}


def test_track_validation(tmp_path):
    with pytest.raises(AlignmentError):
        ForecastTrack("m", MONTHS[:3], [1.0, 2.0], [1.0, 2.0])
    with pytest.raises(AlignmentError):
        ForecastTrack("m", MONTHS[[1, 0]], [1.0, 2.0], [1.0, 2.0])
    t = track([0.5, 1.25, -2.0], [1.0, 1.0, 1.0])
    t.to_csv(tmp_path / "t.csv")
    back = ForecastTrack.from_csv(tmp_path / "t.csv", "m")
    assert np.array_equal(back.predictions, t.predictions) and np.array_equal(back.months, t.months)


# rmse

def test_rmse_examples():
    assert rmse([1, 1, 1, 1]) == 1.0
    assert rmse([3, -4]) == pytest.approx(3.5355, abs=1e-4)
    assert round(0.26 / 2.55, 2) == 0.10


def test_relative_rmse(rng):
    a = track(rng.standard_normal(8), model_id="a")
    b = track(2 * rng.standard_normal(8), model_id="b")
    value, rel = rmse_report(a, b)
    assert rel == pytest.approx(value / rmse(b.errors))
    assert rmse_report(a, a)[1] == 1.0
    with pytest.raises(AlignmentError):
        rmse_report(a, track(np.ones(7)))
    with pytest.raises(DegenerateBaselineError):
        rmse_report(a, track(np.zeros(8)))


def test_rmse_permutation_invariant(rng):
    e = rng.standard_normal(50)
    assert rmse(e) == pytest.approx(rmse(rng.permutation(e)), rel=1e-14)


# Diebold-Mariano

def test_dm_identical_tracks():
    t = track(np.arange(10.0), np.ones(10))
    with pytest.raises(DegenerateDifferentialError):
        dm_test(t, t)


def test_dm_hand_value():
    d = np.array([1, 2, 3, 2, 1, 0, 1, 2, 3, 2], dtype=float)
    # mean 1.7, variance (1/T) 0.81, so var/T = 0.081
    assert dm_statistic(d, small_sample_adjust=False) == pytest.approx(1.7 / np.sqrt(0.081), rel=1e-12)
    adjusted = dm_statistic(d) / dm_statistic(d, small_sample_adjust=False)
    assert adjusted == pytest.approx(np.sqrt((10 + 1 - 2) / 10), rel=1e-12)


def test_dm_horizon_two_uses_one_lag():
    d = np.array([1, 2, 3, 2, 1, 0, 1, 2, 3, 2], dtype=float)
    dc = d - d.mean()
    lrv = (dc @ dc + 2 * 0.5 * (dc[1:] @ dc[:-1])) / 10
    assert dm_statistic(d, horizon=2, small_sample_adjust=False) == pytest.approx(1.7 / np.sqrt(lrv / 10))


def test_dm_antisymmetric(rng):
    actual = rng.standard_normal(30)
    a = track(actual + rng.standard_normal(30), actual, "a", np.arange("2018-01", "2020-07", dtype="datetime64[M]"))
    b = track(actual + 1.3 * rng.standard_normal(30), actual, "b", a.months)
    s_ab, p_ab = dm_test(a, b)
    s_ba, p_ba = dm_test(b, a)
    assert s_ab == pytest.approx(-s_ba) and p_ab == pytest.approx(p_ba)
    _, less = dm_test(a, b, alternative="less")
    _, greater = dm_test(a, b, alternative="greater")
    assert less + greater == pytest.approx(1.0)


def test_dm_minimum_length():
    with pytest.raises(ConfigError):
        dm_statistic([1.0, 2.0, 3.0, 4.0])


def test_dm_null_calibration_small():
    rng = np.random.default_rng(0)
    p = []
    for _ in range(400):
        e = rng.standard_normal((2, 100))
        d = e[0] ** 2 - e[1] ** 2
        p.append(2 * stats.t(99).sf(abs(dm_statistic(d))))
    assert stats.kstest(p, "uniform").pvalue > 0.01


# combination

def test_combine_mean_examples():
    a = track([1.0, 3.0], model_id="a")
    b = track([3.0, 5.0], model_id="b")
    comb = combine_mean([a, b])
    assert comb.model_id == "combination" and np.array_equal(comb.predictions, [2.0, 4.0])
    assert np.array_equal(combine_mean([a]).predictions, a.predictions)
    with pytest.raises(ConfigError):
        combine_mean([])
    with pytest.raises(AlignmentError):
        combine_mean([a, track([1.0])])


def test_combination_never_worse_than_worst(rng):
    for _ in range(50):
        actual = rng.standard_normal(20)
        tracks = [track(actual + rng.normal(0, rng.uniform(0.1, 3), 20), actual, f"m{i}") for i in range(6)]
        comb = combine_mean(tracks)
        assert rmse(comb.errors) <= max(rmse(t.errors) for t in tracks) + 1e-12


# consistency regression

def test_perfect_ml_regressor(rng):
    y = rng.standard_normal(40)
    res = consistency_regression(y, rng.standard_normal(40), y)
    assert res.beta2 == pytest.approx(1.0, abs=1e-6) and res.beta1 == pytest.approx(0.0, abs=1e-6)


def test_five_point_exact():
    y = [1, 3, 2, 5, 4]
    a = [1, 2, 2, 4, 3]
    b = [2, 3, 1, 5, 5]
    beta, rss = ols_fractions(y, [a, b])
    res = consistency_regression(np.array(y, float), np.array(a, float), np.array(b, float))
    assert res.beta1 == pytest.approx(float(beta[0]), abs=1e-8)
    assert res.beta2 == pytest.approx(float(beta[1]), abs=1e-8)
    assert res.aic == pytest.approx(5 * np.log(float(rss) / 5) + 4, abs=1e-8)


def test_intercept_variant():
    y = np.array([1, 3, 2, 5, 4, 6], float)
    a = np.array([1, 2, 2, 4, 3, 5], float)
    b = np.array([2, 3, 1, 5, 5, 4], float)
    res = consistency_regression(y, a, b, intercept=True)
    ref = np.linalg.lstsq(np.column_stack([np.ones(6), a, b]), y, rcond=None)[0]
    assert np.allclose([res.intercept, res.beta1, res.beta2], ref, atol=1e-10)


def test_collinear_inputs(rng):
    x = rng.standard_normal(20)
    with pytest.raises(CollinearityError):
        consistency_regression(rng.standard_normal(20), x, x)
    with pytest.raises(AlignmentError):
        consistency_regression(np.ones(20), x, x[:19])


def test_consistency_dm_is_one_sided(rng):
    y = rng.standard_normal(60)
    dfme = y + rng.standard_normal(60)
    ml = y + 0.3 * rng.standard_normal(60)
    res = consistency_regression(y, dfme, ml)
    stat = dm_statistic(res.residuals ** 2 - (y - dfme) ** 2)
    assert res.dm_pvalue == pytest.approx(stats.t(59).cdf(stat))
    assert res.dm_pvalue < 0.05 and res.p_value < 0.05


# report

def test_evaluate_tracks(rng):
    months = np.arange("2015-01", "2016-09", dtype="datetime64[M]")
    actual = rng.standard_normal(20)
    tracks = {
        "ar": track(actual + rng.standard_normal(20), actual, "ar", months),
        "ridge": track(actual + 0.5 * rng.standard_normal(20), actual, "ridge", months),
        "lasso": track(actual + 0.6 * rng.standard_normal(20), actual, "lasso", months),
        "dfm_electricity": track(actual + 0.9 * rng.standard_normal(20), actual, "dfm_electricity", months),
    }
    gap = np.array(tracks["lasso"].predictions)
    gap[3] = np.nan
    tracks["lasso"] = ForecastTrack("lasso", months, gap, actual)
    report = evaluate_tracks(tracks, ml_ids=("ridge", "lasso"))
    assert report.n_months == 19 and report.dropped_months == ["2015-04"]
    assert report.row("ar")["relative_rmse"] == 1.0
    assert [r["model"] for r in report.consistency] == ["ridge", "lasso"]
    comb = report.row("combination")["rmse"]
    assert comb <= max(report.row("ridge")["rmse"], report.row("lasso")["rmse"])
    back = EvalReport.from_json(report.to_json())
    assert back.to_json() == report.to_json()
    assert json.loads(report.to_json())["baseline"] == "ar"


def test_model_without_predictions_is_set_aside(rng):
    months = np.arange("2015-01", "2015-11", dtype="datetime64[M]")
    actual = rng.standard_normal(10)
    tracks = {"ar": track(actual + rng.standard_normal(10), actual, "ar", months),
              "ridge": track(actual + 0.3 * rng.standard_normal(10), actual, "ridge", months),
              "dfm_full": track(np.full(10, np.nan), actual, "dfm_full", months)}
    report = evaluate_tracks(tracks, ml_ids=("ridge",))
    assert report.failed_models == ["dfm_full"] and report.n_months == 10
    assert [r["model"] for r in report.rows] == ["ar", "ridge", "combination"]
    tracks["ar"] = track(np.full(10, np.nan), actual, "ar", months)
    with pytest.raises(ConfigError):
        evaluate_tracks(tracks)
