"""Factor-model data generator used by the demo and the acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import default_column_ids
from .data import MonthlyPanel, build_panel, month_range, to_month
from .errors import DimensionError


@dataclass(frozen=True)
class SyntheticTruth:
    factors: np.ndarray         # (n_months, r)
    transition: np.ndarray      # (r, r), diagonal VAR(1)
    loadings: np.ndarray        # (p, r) on the raw predictor scale
    idio_sd: np.ndarray         # (p,)
    intercept: float
    factor_coefs: np.ndarray    # (r,)
    nonlinear: np.ndarray       # (n_months,) nonlinear contribution to the target
    noise: np.ndarray           # (n_months,) target noise
    publication_lags: np.ndarray  # (p,) months missing at the panel end


def generate_synthetic_panel(seed: int, n_months: int = 185, p: int = 91, r_factors: int = 2,
                             nonlinear_share: float = 0.5, start="2008-01", train_end=None,
                             noise_sd: float = 0.3, ragged_edge: bool = True):
    """Simulate a standardized monthly panel from an ``r``-factor Gaussian DGP.

    Predictors are ``mu_i + s_i * (loadings_i . f_t + e_it)``; the target is
    ``3 + b . f_t + nonlinear_share * 2 * 1[f_1t > 0] * f_kt + noise`` where
    ``k`` is the second factor when there is one. Returns ``(panel, truth)``.
    """
    if n_months <= 24:
        raise DimensionError("n_months must exceed 24")
    if r_factors < 1 or p < r_factors:
        raise DimensionError("need p >= r_factors >= 1")
    if not 0.0 <= nonlinear_share:
        raise DimensionError("nonlinear_share must be non-negative")
    rng = np.random.default_rng(seed)
    r = r_factors

    phi = np.linspace(0.8, 0.5, r) if r > 1 else np.array([0.8])
    burn = 60
    f = np.zeros((n_months + burn, r))
    shocks = rng.standard_normal((n_months + burn, r)) * np.sqrt(1.0 - phi**2)
    f[0] = rng.standard_normal(r)
    for t in range(1, n_months + burn):
        f[t] = phi * f[t - 1] + shocks[t]
    f = f[burn:]

    loadings = rng.standard_normal((p, r))
    idio_sd = rng.uniform(0.5, 1.0, p)
    offsets = rng.normal(0.0, 2.0, p)
    scales = rng.uniform(0.5, 5.0, p)
    common = f @ loadings.T
    raw = offsets + scales * (common + idio_sd * rng.standard_normal((n_months, p)))

    coefs = np.array([1.5, 1.0, 0.8, 0.6, 0.4][:r] + [0.3] * max(0, r - 5))
    other = f[:, 1] if r > 1 else f[:, 0]
    nonlinear = nonlinear_share * 2.0 * (f[:, 0] > 0) * other
    noise = noise_sd * rng.standard_normal(n_months)
    intercept = 3.0
    target = intercept + f @ coefs + nonlinear + noise

    lags = np.zeros(p, dtype=int)
    if ragged_edge:
        lags = rng.choice([0, 1, 2], size=p, p=[0.6, 0.3, 0.1])
        for j, lag in enumerate(lags):
            if lag:
                raw[-lag:, j] = np.nan

    months = month_range(start, to_month(start) + (n_months - 1))
    if train_end is None:
        train_end = months[max(2, round(n_months * 80 / 185)) - 1]
    ids, cats = default_column_ids(p)
    panel: MonthlyPanel = build_panel(
        months, target, raw, ids, train_end, months[-1], target_id="gdp", categories=cats,
        meta={"synthetic_seed": int(seed)},
    )
    truth = SyntheticTruth(
        factors=f, transition=np.diag(phi), loadings=loadings * scales[:, None], idio_sd=idio_sd * scales,
        intercept=intercept, factor_coefs=coefs, nonlinear=nonlinear, noise=noise, publication_lags=lags,
    )
    return panel, truth
