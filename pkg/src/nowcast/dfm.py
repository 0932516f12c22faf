"""Dynamic factor model: Kalman filter/smoother with missing data and EM.

Measurement ``x_t = C0 f_t + e_t`` with diagonal ``R``; transition
``f_t = sum_j A_j f_{t-j} + u_t`` with ``u_t ~ N(0, Q0)``, handled in
companion form with state ``F_t = (f_t, ..., f_{t-p+1})``. Data matrices
are ``n_series x T`` with NaN marking missing observations. The state prior
``F_1 ~ N(initial_mean, initial_cov)`` applies to the first time point and is
held fixed during EM.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .errors import ConfigError, DimensionError, NumericalStabilityError, TargetMissingError

R_FLOOR = 1e-8
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class StateSpace:
    loadings: np.ndarray      # C0, (n, r)
    transition: np.ndarray    # [A_1 ... A_p], (r, r * p)
    state_cov: np.ndarray     # Q0, (r, r)
    obs_var: np.ndarray       # diagonal of R, (n,)
    initial_mean: np.ndarray  # (r * p,)
    initial_cov: np.ndarray   # (r * p, r * p)

    def __post_init__(self):
        n, r = self.loadings.shape
        if self.transition.shape[0] != r or self.transition.shape[1] % r:
            raise DimensionError("transition must be r x (r * p_lags)")
        m = self.transition.shape[1]
        if self.state_cov.shape != (r, r) or self.obs_var.shape != (n,):
            raise DimensionError("state_cov or obs_var has the wrong shape")
        if self.initial_mean.shape != (m,) or self.initial_cov.shape != (m, m):
            raise DimensionError("initial state has the wrong shape")
        if np.any(self.obs_var < R_FLOOR * (1 - 1e-12)):
            raise ConfigError(f"measurement variances must be >= {R_FLOOR}")

    @property
    def n_series(self) -> int:
        return self.loadings.shape[0]

    @property
    def r_factors(self) -> int:
        return self.loadings.shape[1]

    @property
    def p_lags(self) -> int:
        return self.transition.shape[1] // self.r_factors

    @property
    def state_dim(self) -> int:
        return self.transition.shape[1]

    @property
    def C(self) -> np.ndarray:
        out = np.zeros((self.n_series, self.state_dim))
        out[:, :self.r_factors] = self.loadings
        return out

    @property
    def A(self) -> np.ndarray:
        r, m = self.r_factors, self.state_dim
        out = np.zeros((m, m))
        out[:r] = self.transition
        if m > r:
            out[r:, :m - r] = np.eye(m - r)
        return out

    @property
    def Q(self) -> np.ndarray:
        out = np.zeros((self.state_dim, self.state_dim))
        out[:self.r_factors, :self.r_factors] = self.state_cov
        return out

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.obs_var)

    def is_stationary(self) -> bool:
        return bool(np.max(np.abs(np.linalg.eigvals(self.A))) < 1.0)

    def to_json(self) -> str:
        return json.dumps({
            "loadings": self.loadings.tolist(), "transition": self.transition.tolist(),
            "state_cov": self.state_cov.tolist(), "obs_var": self.obs_var.tolist(),
            "initial_mean": self.initial_mean.tolist(), "initial_cov": self.initial_cov.tolist(),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "StateSpace":
        d = json.loads(text)
        return cls(**{k: np.array(v, dtype=float) for k, v in d.items()})


def stationary_cov(A, Q) -> np.ndarray:
    return linalg.solve_discrete_lyapunov(A, Q)


@dataclass(frozen=True)
class KalmanOutput:
    predicted_means: np.ndarray    # (T, m), E[F_t | x_1..x_{t-1}]
    predicted_covs: np.ndarray     # (T, m, m)
    filtered_means: np.ndarray     # (T, m)
    filtered_covs: np.ndarray      # (T, m, m)
    smoothed_means: np.ndarray     # (T, m)
    smoothed_covs: np.ndarray      # (T, m, m)
    lag_one_covs: np.ndarray       # (T, m, m); [t] = Cov(F_t, F_{t-1} | all), [0] unused
    log_likelihood: float

    @property
    def factors(self) -> np.ndarray:
        return self.smoothed_means


def _observed_update(m_pred, P_pred, x_obs, C_obs, r_obs, t):
    """Measurement update using only the observed rows of ``x_t``."""
    v = x_obs - C_obs @ m_pred
    PCt = P_pred @ C_obs.T
    F = C_obs @ PCt
    F[np.diag_indices_from(F)] += r_obs
    try:
        chol = linalg.cho_factor(F, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise NumericalStabilityError("innovation covariance is not positive definite", t=t) from None
    Finv_v = linalg.cho_solve(chol, v, check_finite=False)
    K_T = linalg.cho_solve(chol, PCt.T, check_finite=False)  # F^{-1} C P
    m_f = m_pred + PCt @ Finv_v
    P_f = P_pred - PCt @ K_T
    P_f = 0.5 * (P_f + P_f.T)
    logdet = 2.0 * np.sum(np.log(np.diag(chol[0])))
    ll = -0.5 * (v.size * LOG_2PI + logdet + v @ Finv_v)
    return m_f, P_f, ll


def kalman_filter(model: StateSpace, data):
    """Forward pass; returns (pred means, pred covs, filt means, filt covs, loglik)."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] != model.n_series:
        raise DimensionError(f"data must be {model.n_series} x T, got {data.shape}")
    T = data.shape[1]
    m = model.state_dim
    A, Q, C, R = model.A, model.Q, model.C, model.obs_var
    mp = np.zeros((T, m))
    Pp = np.zeros((T, m, m))
    mf = np.zeros((T, m))
    Pf = np.zeros((T, m, m))
    observed = np.isfinite(data)
    loglik = 0.0
    for t in range(T):
        if t == 0:
            mp[t], Pp[t] = model.initial_mean, model.initial_cov
        else:
            mp[t] = A @ mf[t - 1]
            Pp[t] = A @ Pf[t - 1] @ A.T + Q
            Pp[t] = 0.5 * (Pp[t] + Pp[t].T)
        obs = observed[:, t]
        if not obs.any():
            mf[t], Pf[t] = mp[t], Pp[t]
            continue
        mf[t], Pf[t], ll = _observed_update(mp[t], Pp[t], data[obs, t], C[obs], R[obs], t)
        loglik += ll
    return mp, Pp, mf, Pf, float(loglik)


def _solve_psd(P, B):
    try:
        return linalg.solve(P, B, assume_a="pos", check_finite=False)
    except (linalg.LinAlgError, ValueError):
        return np.linalg.lstsq(P, B, rcond=None)[0]


def kalman_filter_smoother(model: StateSpace, data) -> KalmanOutput:
    """Filter, fixed-interval (RTS) smoother and lag-one smoothed covariances."""
    mp, Pp, mf, Pf, loglik = kalman_filter(model, data)
    if not np.isfinite(loglik):
        raise NumericalStabilityError("log-likelihood is not finite")
    T, m = mf.shape
    A = model.A
    ms = mf.copy()
    Ps = Pf.copy()
    lag1 = np.zeros((T, m, m))
    for t in range(T - 2, -1, -1):
        # J_t = Pf_t A' Pp_{t+1}^{-1}
        J = _solve_psd(Pp[t + 1], A @ Pf[t]).T
        ms[t] = mf[t] + J @ (ms[t + 1] - mp[t + 1])
        Ps[t] = Pf[t] + J @ (Ps[t + 1] - Pp[t + 1]) @ J.T
        Ps[t] = 0.5 * (Ps[t] + Ps[t].T)
        lag1[t + 1] = Ps[t + 1] @ J.T
    return KalmanOutput(mp, Pp, mf, Pf, ms, Ps, lag1, loglik)


def _standard_prior(transition, state_cov):
    r = state_cov.shape[0]
    m = transition.shape[1]
    A = np.zeros((m, m))
    A[:r] = transition
    if m > r:
        A[r:, :m - r] = np.eye(m - r)
    Q = np.zeros((m, m))
    Q[:r, :r] = state_cov
    if np.max(np.abs(np.linalg.eigvals(A))) < 0.999:
        P0 = stationary_cov(A, Q)
        P0 = 0.5 * (P0 + P0.T)
        if np.all(np.linalg.eigvalsh(P0) > 0):
            return np.zeros(m), P0
    return np.zeros(m), np.eye(m)


def pca_initialize(data, r_factors=1, p_lags=1) -> StateSpace:
    """Principal-components start: missing entries filled by row means, loadings
    from the SVD, a VAR(p) fitted to the component scores, diagonal residual R."""
    data = np.asarray(data, dtype=float)
    n, T = data.shape
    obs = np.isfinite(data)
    row_mean = np.array([data[i, obs[i]].mean() if obs[i].any() else 0.0 for i in range(n)])
    Z = np.where(obs, data, row_mean[:, None]).T  # (T, n)
    Zc = Z - Z.mean(axis=0)
    U, S, Vt = np.linalg.svd(Zc, full_matrices=False)
    r = r_factors
    scale = np.sqrt(T)
    factors = U[:, :r] * scale
    loadings = Vt[:r].T * (S[:r] / scale)
    if r > len(S):
        raise ConfigError("more factors than available components")

    lagged = np.hstack([factors[p_lags - j - 1:T - j - 1] for j in range(p_lags)])
    target = factors[p_lags:]
    coef, *_ = np.linalg.lstsq(lagged, target, rcond=None)
    transition = coef.T
    resid = target - lagged @ coef
    Q0 = resid.T @ resid / max(1, resid.shape[0])
    Q0 = 0.5 * (Q0 + Q0.T) + 1e-8 * np.eye(r)

    fitted = factors @ loadings.T
    err = np.where(obs.T, Z - Z.mean(axis=0) - fitted, np.nan)
    obs_var = np.array([np.nanmean(err[:, i] ** 2) if obs[i].any() else 1.0 for i in range(n)])
    obs_var = np.maximum(obs_var, R_FLOOR)
    mean0, cov0 = _standard_prior(transition, Q0)
    return StateSpace(loadings, transition, Q0, obs_var, mean0, cov0)


@dataclass(frozen=True)
class DfmFit:
    model: StateSpace
    output: KalmanOutput
    loglik_path: tuple
    n_iter: int
    converged: bool


def em_step(model: StateSpace, data, out: KalmanOutput) -> StateSpace:
    """Closed-form M-step from smoothed moments, restricted to observed entries."""
    data = np.asarray(data, dtype=float)
    n, T = data.shape
    r = model.r_factors
    ms, Ps, lag1 = out.smoothed_means, out.smoothed_covs, out.lag_one_covs
    Eff = Ps + ms[:, :, None] * ms[:, None, :]  # (T, m, m)

    # transition block rows
    S11 = Eff[1:, :r, :r].sum(axis=0)
    S10 = (lag1[1:, :r, :] + ms[1:, :r, None] * ms[:-1, None, :]).sum(axis=0)
    S00 = Eff[:-1].sum(axis=0)
    transition = linalg.solve(S00, S10.T, assume_a="sym").T
    Q0 = (S11 - transition @ S10.T) / (T - 1)
    Q0 = 0.5 * (Q0 + Q0.T)

    # loadings and measurement variances, row by row over observed times
    W = np.isfinite(data).astype(float)
    Xz = np.where(W > 0, data, 0.0)
    num = Xz @ ms[:, :r]                                    # (n, r)
    den = np.tensordot(W, Eff[:, :r, :r], axes=(1, 0))      # (n, r, r)
    counts = W.sum(axis=1)
    loadings = model.loadings.copy()
    obs_var = model.obs_var.copy()
    seen = counts > 0
    if seen.any():
        loadings[seen] = np.linalg.solve(den[seen], num[seen][..., None])[..., 0]
        sxx = (Xz**2).sum(axis=1)
        var = (sxx[seen] - np.einsum("ij,ij->i", loadings[seen], num[seen])) / counts[seen]
        obs_var[seen] = np.maximum(var, R_FLOOR)
    return StateSpace(loadings, transition, Q0, obs_var, model.initial_mean, model.initial_cov)


def fit_dfm_em(data, r_factors=1, p_lags=1, max_iter=500, tol=1e-6, init: StateSpace | None = None) -> DfmFit:
    """EM estimation of the factor model on an ``n x T`` standardized matrix.

    Stops when the relative change of the log-likelihood falls below ``tol``
    (``tol=0`` runs all ``max_iter`` iterations). ``init`` warm-starts from an
    earlier fit of the same shape instead of principal components.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise DimensionError("data must be a 2-D n_series x T matrix")
    n, T = data.shape
    if r_factors < 1 or p_lags < 1:
        raise ConfigError("r_factors and p_lags must be >= 1")
    if r_factors * p_lags >= n * T:
        raise ConfigError("r_factors * p_lags must be smaller than n_series * T")
    if T < r_factors * p_lags + 2:
        raise ConfigError(f"need at least {r_factors * p_lags + 2} time points, got {T}")
    if r_factors > n:
        raise ConfigError("more factors than series")
    model = init if init is not None else pca_initialize(data, r_factors, p_lags)
    if model.n_series != n or model.r_factors != r_factors or model.p_lags != p_lags:
        raise ConfigError("init model does not match the requested dimensions")

    path = []
    out = kalman_filter_smoother(model, data)
    path.append(out.log_likelihood)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new_model = em_step(model, data, out)
        new_out = kalman_filter_smoother(new_model, data)
        model, out = new_model, new_out
        path.append(out.log_likelihood)
        prev, cur = path[-2], path[-1]
        if tol > 0 and abs(cur - prev) / max((abs(cur) + abs(prev)) / 2.0, 1e-300) < tol:
            converged = True
            break
    return DfmFit(model=model, output=out, loglik_path=tuple(path), n_iter=it, converged=converged)


def dfm_nowcast(model: StateSpace, data, target_row: int, target_mean: float = 0.0,
                target_std: float = 1.0, output: KalmanOutput | None = None) -> float:
    """Smoothed fitted value of the target row at the last time point,
    mapped back to original units."""
    data = np.asarray(data, dtype=float)
    if not np.isfinite(data[target_row]).any():
        raise TargetMissingError("target series has no observations")
    out = output if output is not None else kalman_filter_smoother(model, data)
    z = float(model.loadings[target_row] @ out.smoothed_means[-1, :model.r_factors])
    return z * target_std + target_mean


def write_factors_csv(path, months, out: KalmanOutput, r_factors: int) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["month", *(f"factor_{k + 1}" for k in range(r_factors))])
        for m, row in zip(months, out.smoothed_means[:, :r_factors]):
            w.writerow([str(m), *(repr(float(v)) for v in row)])
