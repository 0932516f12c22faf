import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nowcast.synthetic import generate_synthetic_panel
from nowcast.dfm import (StateSpace, dfm_nowcast, em_step, fit_dfm_em, kalman_filter,
                         kalman_filter_smoother, pca_initialize, write_factors_csv)
from nowcast.errors import ConfigError, TargetMissingError

from oracles import joint_gaussian_smoother


def scalar_model(a=0.0, q=1.0, c=1.0, r=1.0, m0=0.0, p0=1.0):
    return StateSpace(np.array([[c]]), np.array([[a]]), np.array([[q]]), np.array([r]),
                      np.array([m0]), np.array([[p0]]))


def random_model(rng, n, r, p=1):
    m = r * p
    transition = 0.4 * rng.standard_normal((r, m)) / np.sqrt(m)
    B = rng.standard_normal((r, r))
    P0 = rng.standard_normal((m, m))
    return StateSpace(rng.standard_normal((n, r)), transition, B @ B.T + 0.1 * np.eye(r),
                      rng.uniform(0.2, 1.5, n), rng.standard_normal(m), P0 @ P0.T + 0.5 * np.eye(m))


def check_oracle(model, data):
    out = kalman_filter_smoother(model, data)
    ref, ll = joint_gaussian_smoother(model.C, model.A, model.Q, model.obs_var, model.initial_mean,
                                      model.initial_cov, data)
    assert np.allclose(out.smoothed_means, ref, atol=1e-8)
    assert out.log_likelihood == pytest.approx(ll, abs=1e-8)


def test_scalar_update():
    out = kalman_filter_smoother(scalar_model(), np.array([[2.0]]))
    assert out.filtered_means[0, 0] == pytest.approx(1.0, abs=1e-14)
    assert out.filtered_covs[0, 0, 0] == pytest.approx(0.5, abs=1e-14)


def test_missing_time_point_is_prediction():
    model = scalar_model(a=0.8, q=0.5)
    out = kalman_filter_smoother(model, np.array([[1.0, np.nan, 0.3]]))
    assert out.filtered_means[1, 0] == pytest.approx(0.8 * out.filtered_means[0, 0], abs=1e-15)
    assert out.filtered_covs[1, 0, 0] == out.predicted_covs[1, 0, 0]


def test_scalar_brute_force():
    check_oracle(scalar_model(a=0.7, q=0.4, c=1.3, r=0.6, m0=0.2, p0=1.1), np.array([[0.5, -1.0, 2.0]]))


def test_three_series_brute_force(rng):
    for r, p in ((1, 1), (2, 1), (1, 2), (2, 2)):
        model = random_model(rng, 3, r, p)
        data = rng.standard_normal((3, 5))
        data[rng.random((3, 5)) < 0.25] = np.nan
        data[:, 2] = np.nan
        check_oracle(model, data)


@given(st.integers(0, 10_000))
def test_row_deletion_equivalence(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 4, 2)
    data = rng.standard_normal((4, 6))
    t, i = rng.integers(6), rng.integers(4)
    deleted = data.copy()
    deleted[i, t] = np.nan
    mp, Pp, mf, Pf, _ = kalman_filter(model, deleted)
    # manual filter excluding row i at time t
    m, P = model.initial_mean, model.initial_cov
    for s in range(6):
        if s:
            m, P = model.A @ m, model.A @ P @ model.A.T + model.Q
            P = 0.5 * (P + P.T)
        keep = np.arange(4) != i if s == t else np.ones(4, dtype=bool)
        C = model.C[keep]
        S = C @ P @ C.T + np.diag(model.obs_var[keep])
        K = np.linalg.solve(S, C @ P).T
        m = m + K @ (data[keep, s] - C @ m)
        P = P - K @ C @ P
        assert np.allclose(mf[s], m, atol=1e-12, rtol=0)


@given(st.integers(0, 10_000))
def test_smoothed_below_filtered(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 3, 2)
    data = rng.standard_normal((3, 8))
    data[rng.random((3, 8)) < 0.3] = np.nan
    out = kalman_filter_smoother(model, data)
    for t in range(8):
        gap = out.filtered_covs[t] - out.smoothed_covs[t]
        assert np.linalg.eigvalsh(0.5 * (gap + gap.T)).min() > -1e-10
        assert np.allclose(out.smoothed_covs[t], out.smoothed_covs[t].T, atol=1e-12)


@given(st.integers(0, 10_000), st.floats(0.0, 2 * np.pi))
def test_rotation_invariant_likelihood(seed, theta):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 4, 2)
    U = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    rotated = StateSpace(model.loadings @ U.T, U @ model.transition @ U.T, U @ model.state_cov @ U.T,
                         model.obs_var, U @ model.initial_mean, U @ model.initial_cov @ U.T)
    data = rng.standard_normal((4, 7))
    a = kalman_filter_smoother(model, data).log_likelihood
    b = kalman_filter_smoother(rotated, data).log_likelihood
    assert a == pytest.approx(b, abs=1e-8)


def test_fully_observed_matches_textbook(rng):
    model = random_model(rng, 3, 1)
    data = rng.standard_normal((3, 6))
    _, _, mf, _, _ = kalman_filter(model, data)
    m, P = model.initial_mean, model.initial_cov
    for t in range(6):
        if t:
            m, P = model.A @ m, model.A @ P @ model.A.T + model.Q
        S = model.C @ P @ model.C.T + model.R
        K = P @ model.C.T @ np.linalg.inv(S)
        m, P = m + K @ (data[:, t] - model.C @ m), P - K @ model.C @ P
        assert np.allclose(mf[t], m, atol=1e-12)


def test_em_monotone_on_synthetic_panel():
    panel, _ = generate_synthetic_panel(5, n_months=120, p=12)
    data = panel.masked_design()[:, :12].T
    fit = fit_dfm_em(data, r_factors=2, max_iter=500, tol=0.0)
    assert fit.n_iter == 500 and not fit.converged
    assert np.all(np.diff(fit.loglik_path) >= -1e-8)


def test_em_stops_at_tolerance(rng):
    panel, _ = generate_synthetic_panel(2, n_months=80, p=8, r_factors=1)
    fit = fit_dfm_em(panel.masked_design()[:, :8].T, r_factors=1, tol=1e-6)
    assert fit.converged and fit.n_iter < 500


def test_noiseless_rank_one_factor(rng):
    f = np.cumsum(rng.standard_normal(60)) * 0.3
    f = f - f.mean()
    c = rng.uniform(0.5, 2.0, 5)
    fit = fit_dfm_em(np.outer(c, f), r_factors=1, max_iter=50)
    est = fit.output.smoothed_means[:, 0]
    assert abs(np.corrcoef(est, f)[0, 1]) > 1 - 1e-6


def test_dimension_checks(rng):
    with pytest.raises(ConfigError):
        fit_dfm_em(rng.standard_normal((2, 1)), r_factors=2)
    with pytest.raises(ConfigError):
        fit_dfm_em(rng.standard_normal((3, 3)), r_factors=1, p_lags=2)
    with pytest.raises(ConfigError):
        scalar_model(r=1e-10)


def test_target_copy_nowcast(rng):
    T = 50
    f = np.zeros(T)
    for t in range(1, T):
        f[t] = 0.7 * f[t - 1] + rng.standard_normal()
    x = np.vstack([f, 0.5 * f + 0.8 * rng.standard_normal(T), -f + 0.8 * rng.standard_normal(T)])
    x = (x - x.mean(1, keepdims=True)) / x.std(1, ddof=1, keepdims=True)
    target = x[0].copy()
    target[-1] = np.nan
    data = np.vstack([x, target])
    fit = fit_dfm_em(data, r_factors=1, max_iter=300)
    assert dfm_nowcast(fit.model, data, target_row=3) == pytest.approx(x[0, -1], abs=1e-6)


def test_nowcast_plug_in():
    model = scalar_model(a=0.5, q=1.0, c=2.0, r=1.0)
    data = np.array([[1.0, 3.0]])
    out = kalman_filter_smoother(model, data)
    expected = 2.0 * out.smoothed_means[-1, 0] * 1.5 + 0.25
    assert dfm_nowcast(model, data, 0, target_mean=0.25, target_std=1.5) == pytest.approx(expected)
    with pytest.raises(TargetMissingError):
        dfm_nowcast(model, np.array([[np.nan, np.nan]]), 0)


def test_serialization(rng, tmp_path):
    model = random_model(rng, 3, 2, 2)
    back = StateSpace.from_json(model.to_json())
    for name in ("loadings", "transition", "state_cov", "obs_var", "initial_mean", "initial_cov"):
        assert np.array_equal(getattr(back, name), getattr(model, name))
    out = kalman_filter_smoother(model, rng.standard_normal((3, 4)))
    months = np.arange("2020-01", "2020-05", dtype="datetime64[M]")
    write_factors_csv(tmp_path / "f.csv", months, out, 2)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "month,factor_1,factor_2" and len(lines) == 5


def test_companion_structure(rng):
    model = random_model(rng, 3, 2, 3)
    A = model.A
    assert A.shape == (6, 6)
    assert np.array_equal(A[2:, :4], np.eye(4)) and np.all(A[2:, 4:] == 0)
    assert np.all(model.Q[2:] == 0)


def test_em_step_keeps_variance_floor():
    data = np.outer([1.0, 2.0], np.linspace(-1, 1, 10))
    model = pca_initialize(data, 1)
    out = kalman_filter_smoother(model, data)
    assert np.all(em_step(model, data, out).obs_var >= 1e-8)
