"""Spike-and-slab variable selection with a Zellner g-prior.

Model: ``y = b0 + X_g beta_g + e``, ``e ~ N(0, s2 I)``, flat prior on ``b0``,
``beta_g | s2 ~ N(0, g s2 (X_g' X_g)^{-1})`` on centered columns,
``s2 ~ InvGamma(a, b)`` (``a = b = 0`` gives the ``1/s2`` reference prior) and
independent ``Bernoulli(pi)`` inclusion indicators. Up to a constant,

    log p(y | gamma) = -k/2 log(1 + g) - (a + (n - 1)/2) log(b + S_gamma / 2),
    S_gamma = y'y - g/(1 + g) * y'X_g (X_g'X_g)^{-1} X_g'y      (centered),

The Gibbs sampler evaluates it with rank-one updates in a compiled kernel;
the exact enumeration recomputes it from scratch for every pattern. Patterns
whose centered Gram matrix is numerically singular get zero mass in both.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from ._kernels import gibbs_inclusion
from .errors import ConfigError, NumericInputError

MAX_ENUMERATION_P = 12
SINGULAR_TOL = 1e-10


@dataclass(frozen=True)
class SelectionConfig:
    n_iterations: int = 50_000
    burn_in: int = 1_000
    prior_inclusion_prob: float = 0.5
    g: float | None = None  # None means g = n
    noise_shape: float = 0.0
    noise_scale: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_iterations < 1 or not 0 <= self.burn_in < self.n_iterations:
            raise ConfigError("need 0 <= burn_in < n_iterations")
        if not 0.0 < self.prior_inclusion_prob < 1.0:
            raise ConfigError("prior_inclusion_prob must lie strictly between 0 and 1")
        if self.g is not None and not self.g > 0:
            raise ConfigError("g must be positive")
        if self.noise_shape < 0 or self.noise_scale < 0:
            raise ConfigError("inverse-gamma shape and scale must be >= 0")


@dataclass(frozen=True)
class InclusionReport:
    column_ids: tuple
    categories: tuple
    probabilities: np.ndarray

    def __post_init__(self):
        probs = np.clip(np.asarray(self.probabilities, dtype=float), 0.0, 1.0)
        probs.setflags(write=False)
        object.__setattr__(self, "probabilities", probs)

    @property
    def ranking(self) -> list:
        """Column ids by descending probability, ties broken by id."""
        order = sorted(range(len(self.column_ids)),
                       key=lambda j: (-self.probabilities[j], self.column_ids[j]))
        return [self.column_ids[j] for j in order]

    def probability(self, column_id) -> float:
        return float(self.probabilities[self.column_ids.index(column_id)])

    def to_csv(self, path) -> None:
        prob = dict(zip(self.column_ids, self.probabilities))
        cat = dict(zip(self.column_ids, self.categories))
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "category", "probability"])
            for cid in self.ranking:
                w.writerow([cid, cat[cid], repr(float(prob[cid]))])

    @classmethod
    def from_csv(cls, path) -> "InclusionReport":
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(tuple(r["id"] for r in rows), tuple(r["category"] for r in rows),
                   np.array([float(r["probability"]) for r in rows]))


def top_k_variables(report: InclusionReport, k: int) -> list:
    if k > len(report.column_ids) or k < 0:
        raise ConfigError(f"k={k} exceeds the {len(report.column_ids)} available columns")
    return report.ranking[:k]


class _MarginalLikelihood:
    """Cached log marginal likelihood of inclusion patterns."""

    def __init__(self, X, y, config: SelectionConfig):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ConfigError("X and y do not conform")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise NumericInputError("selection needs a complete training slice")
        n = X.shape[0]
        Xc = X - X.mean(axis=0)
        yc = y - y.mean()
        self.gram = Xc.T @ Xc
        self.xty = Xc.T @ yc
        self.yty = float(yc @ yc)
        self.g = float(n if config.g is None else config.g)
        self.shape = config.noise_shape + (n - 1) / 2.0
        self.scale = config.noise_scale
        self.log1pg = np.log1p(self.g)
        self.shrink = self.g / (1.0 + self.g)
        self.floor = 1e-300 + 1e-14 * self.yty
        self.cache: dict = {}

    def __call__(self, gamma: np.ndarray) -> float:
        key = np.packbits(gamma).tobytes()
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        idx = np.flatnonzero(gamma)
        k = idx.size
        if k == 0:
            fit = 0.0
        else:
            c = self.xty[idx]
            G = self.gram[np.ix_(idx, idx)]
            try:
                L = linalg.cholesky(G, lower=True, check_finite=False)
            except linalg.LinAlgError:
                L = None
            if L is None or np.min(np.diag(L) ** 2 / np.maximum(np.diag(G), 1e-300)) <= SINGULAR_TOL:
                self.cache[key] = -np.inf
                return -np.inf
            fit = float(c @ linalg.cho_solve((L, True), c, check_finite=False))
        S = max(self.yty - self.shrink * fit, self.floor)
        value = -0.5 * k * self.log1pg - self.shape * np.log(self.scale + 0.5 * S)
        self.cache[key] = value
        return value


def _report(ids, categories, p, probs):
    ids = tuple(ids) if ids is not None else tuple(f"x{j + 1}" for j in range(p))
    categories = tuple(categories) if categories is not None else ("structured",) * p
    return InclusionReport(ids, categories, probs)


def gibbs_spike_slab(X, y, config: SelectionConfig = SelectionConfig(), ids=None,
                     categories=None) -> InclusionReport:
    """Single-chain systematic-scan Gibbs sampler over inclusion indicators.

    Each indicator is drawn from its full conditional using the ratio of
    marginal likelihoods; probabilities are post-burn-in inclusion frequencies.
    """
    lml = _MarginalLikelihood(X, y, config)
    p = lml.gram.shape[0]
    rng = np.random.default_rng(config.seed)
    prior_logit = np.log(config.prior_inclusion_prob) - np.log1p(-config.prior_inclusion_prob)
    u = rng.random((config.n_iterations, p))
    counts = gibbs_inclusion(lml.gram, lml.xty, lml.yty, lml.log1pg, lml.shrink, lml.shape, lml.scale,
                             lml.floor, prior_logit, u, config.burn_in, SINGULAR_TOL)
    return _report(ids, categories, p, counts / (config.n_iterations - config.burn_in))


def exact_posterior_enumeration(X, y, config: SelectionConfig = SelectionConfig(), ids=None,
                                categories=None) -> InclusionReport:
    """Exact inclusion probabilities by summing over all ``2^p`` models."""
    lml = _MarginalLikelihood(X, y, config)
    p = lml.gram.shape[0]
    if p > MAX_ENUMERATION_P:
        raise ConfigError(f"enumeration limited to p <= {MAX_ENUMERATION_P}, got {p}")
    log_pi, log_1mpi = np.log(config.prior_inclusion_prob), np.log1p(-config.prior_inclusion_prob)
    patterns = np.array(list(itertools.product([False, True], repeat=p)), dtype=bool).reshape(-1, p)
    logpost = np.array([lml(g) + g.sum() * log_pi + (p - g.sum()) * log_1mpi for g in patterns])
    weights = np.exp(logpost - logsumexp(logpost))
    return _report(ids, categories, p, weights @ patterns)
