"""Monthly GDP nowcasting with penalized regressions, tree ensembles and factor models."""

from .data import MonthlyPanel, RawSeries, TransformSpec, aggregate_to_monthly, assemble_panel, load_series_csv, yoy_transform
from .dfm import StateSpace, fit_dfm_em, kalman_filter_smoother
from .evaluation import (ForecastTrack, combine_mean, consistency_regression, dm_test,
                         expanding_window_forecast, rmse_report)
from .linear import PenaltySpec, fit_adaptive_lasso, fit_ar1, fit_penalized
from .selection import SelectionConfig, exact_posterior_enumeration, gibbs_spike_slab
from .synthetic import generate_synthetic_panel
from .trees import fit_gbm, fit_random_forest, predict_ensemble
from .tuning import SearchSpace, bayes_optimize, cv_mse, make_time_folds

__version__ = "0.1.0"
