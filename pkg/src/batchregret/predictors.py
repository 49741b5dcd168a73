"""Conditional batch predictors: Bayes mixture, add-beta and alpha-NML.

Every predictor here is exchangeable, so it is stored as a table of
per-sequence log-probabilities ``log p(y | x^n)`` indexed by
(training count class, test count class) for one :class:`BatchSetup`.

The table is built lazily on first access and never mutated afterwards.
Regret sweeps touch it once from the calling thread before fanning out to
workers, so concurrent readers only ever see a fully built table.
"""

from __future__ import annotations

import math
import warnings
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import roots_jacobi

from .errors import DomainError, UnsupportedClassError
from .logmath import log_sum_exp
from .source import (
    BatchSetup,
    CountStat,
    ParamGrid,
    Prior,
    class_index,
    count_matrix,
    log_likelihood_matrix,
    log_multinomial,
    log_posterior_matrix,
    posterior,
)

__all__ = [
    "Prior",
    "Predictor",
    "Mixture",
    "AddBeta",
    "AlphaNML",
    "mixture_predict",
    "add_beta_predict",
    "alpha_nml_predict",
    "dirichlet_quadrature",
]

# Upper bound on G * rows * Ky elements materialised at once.
_CHUNK_ELEMS = 2_000_000

CERTIFIED_BETA = (0.5, 1.0)


def _row_chunks(rows: int, per_row: int):
    step = max(1, _CHUNK_ELEMS // max(per_row, 1))
    for start in range(0, rows, step):
        yield slice(start, min(rows, start + step))


def _mixture_table(prior: Prior, train_counts: np.ndarray, test_counts: np.ndarray) -> np.ndarray:
    log_post = log_posterior_matrix(prior, train_counts)
    ll_test = log_likelihood_matrix(prior.grid.log_points, test_counts)
    out = np.empty((train_counts.shape[0], test_counts.shape[0]))
    for sl in _row_chunks(train_counts.shape[0], prior.grid.size * test_counts.shape[0]):
        out[sl] = log_sum_exp(log_post[:, sl, None] + ll_test[:, None, :], axis=0)
    return out


def _alpha_nml_table(prior: Prior, alpha: float, train_counts: np.ndarray, test_counts: np.ndarray) -> np.ndarray:
    log_post = log_posterior_matrix(prior, train_counts)
    ll_test = log_likelihood_matrix(prior.grid.log_points, test_counts)
    log_mult = log_multinomial(test_counts)
    out = np.empty((train_counts.shape[0], test_counts.shape[0]))
    for sl in _row_chunks(train_counts.shape[0], prior.grid.size * test_counts.shape[0]):
        # log of the 1/alpha power mean, per test sequence
        unnorm = log_sum_exp(log_post[:, sl, None] + alpha * ll_test[:, None, :], axis=0) / alpha
        norm = log_sum_exp(unnorm + log_mult[None, :], axis=1)
        safe = np.where(np.isfinite(norm), norm, 0.0)
        block = unnorm - safe[:, None]
        block[~np.isfinite(norm)] = -math.inf
        out[sl] = block
    return out


def _add_beta_table(beta: float, train_counts: np.ndarray, test_counts: np.ndarray) -> np.ndarray:
    """Closed-form add-beta table for binary counts ``(zeros, ones)``."""
    t = int(train_counts[0].sum())
    ell = int(test_counts[0].sum())
    steps = np.arange(ell)
    # cum[c, k] = sum_{i<k} log(c + beta + i): rising factorial in log form
    base = np.arange(t + 1)[:, None] + beta + steps[None, :]
    cum = np.zeros((t + 1, ell + 1))
    cum[:, 1:] = np.cumsum(np.log(base), axis=1)
    denom = np.concatenate([[0.0], np.cumsum(np.log(t + 2.0 * beta + steps))])[ell]
    t0, t1 = train_counts[:, 0], train_counts[:, 1]
    l0, l1 = test_counts[:, 0], test_counts[:, 1]
    return cum[t1[:, None], l1[None, :]] + cum[t0[:, None], l0[None, :]] - denom


class Predictor:
    """A conditional distribution over test batches given training counts."""

    exchangeable = True

    def __init__(self, setup: BatchSetup):
        self.setup = setup

    @cached_property
    def train_counts(self) -> np.ndarray:
        return count_matrix(self.setup.t, self.setup.alphabet_size)

    @cached_property
    def test_counts(self) -> np.ndarray:
        return count_matrix(self.setup.ell, self.setup.alphabet_size)

    @cached_property
    def _train_index(self) -> dict[tuple[int, ...], int]:
        return class_index(self.train_counts)

    @cached_property
    def _test_index(self) -> dict[tuple[int, ...], int]:
        return class_index(self.test_counts)

    @cached_property
    def log_table(self) -> np.ndarray:
        table = self._build_table()
        table.setflags(write=False)
        return table

    def _build_table(self) -> np.ndarray:
        raise NotImplementedError

    def log_prob(self, training: CountStat, test: CountStat) -> float:
        """Per-sequence ``log p(y | x^n)`` looked up by count classes."""
        try:
            i = self._train_index[training.counts]
            j = self._test_index[test.counts]
        except KeyError:
            raise DomainError(f"counts {training.counts}/{test.counts} do not fit setup {self.setup}") from None
        return float(self.log_table[i, j])

    def normalization_error(self) -> float:
        """Largest deviation from 1 of the total mass over test sequences."""
        log_mult = log_multinomial(self.test_counts)
        mass = np.exp(log_sum_exp(self.log_table + log_mult[None, :], axis=1))
        return float(np.max(np.abs(mass - 1.0)))

    def describe(self) -> str:
        return type(self).__name__


class Mixture(Predictor):
    """Bayes predictive distribution under ``prior``."""

    def __init__(self, prior: Prior, setup: BatchSetup):
        if prior.grid.alphabet_size != setup.alphabet_size:
            raise DomainError("prior grid alphabet does not match the setup")
        super().__init__(setup)
        self.prior = prior

    def _build_table(self) -> np.ndarray:
        return _mixture_table(self.prior, self.train_counts, self.test_counts)

    def describe(self) -> str:
        return f"mixture(G={self.prior.grid.size})"


class AddBeta(Predictor):
    """Binary add-beta rule; ``beta = 1/2`` is Krichevsky-Trofimov."""

    def __init__(self, beta: float, setup: BatchSetup):
        if setup.alphabet_size != 2:
            raise UnsupportedClassError("add-beta is defined for binary sources only")
        if not beta > 0:
            raise DomainError(f"beta must be positive, got {beta}")
        super().__init__(setup)
        self.beta = float(beta)
        self.certified = CERTIFIED_BETA[0] <= beta <= CERTIFIED_BETA[1]
        if not self.certified:
            warnings.warn(f"beta={beta} is outside [1/2, 1]; results are exploratory", stacklevel=2)

    def _build_table(self) -> np.ndarray:
        return _add_beta_table(self.beta, self.train_counts, self.test_counts)

    def describe(self) -> str:
        return f"add_beta({self.beta:g})"


class AlphaNML(Predictor):
    """Normalised ``1/alpha`` power mean of the posterior-averaged ``p^alpha``."""

    def __init__(self, prior: Prior, alpha: float, setup: BatchSetup):
        if not alpha >= 1:
            raise DomainError(f"alpha must be >= 1, got {alpha}")
        if prior.grid.alphabet_size != setup.alphabet_size:
            raise DomainError("prior grid alphabet does not match the setup")
        super().__init__(setup)
        self.prior = prior
        self.alpha = float(alpha)

    def _build_table(self) -> np.ndarray:
        if self.alpha == 1.0:
            return _mixture_table(self.prior, self.train_counts, self.test_counts)
        return _alpha_nml_table(self.prior, self.alpha, self.train_counts, self.test_counts)

    def describe(self) -> str:
        return f"alpha_nml(alpha={self.alpha:g}, G={self.prior.grid.size})"


def _single(stat: CountStat) -> np.ndarray:
    return np.array([stat.counts], dtype=np.int64)


def mixture_predict(prior: Prior, training: CountStat, test: CountStat) -> float:
    posterior(prior, training)  # raises on degenerate evidence
    return float(_mixture_table(prior, _single(training), _single(test))[0, 0])


def add_beta_predict(beta: float, training: CountStat, test_sequence: Sequence[int]) -> float:
    """Sequential add-beta probability of ``test_sequence`` after ``training``.

    The product is formed exactly over rationals, so any two orderings of
    the same test symbols give the same float.
    """
    if len(training) != 2 or any(s not in (0, 1) for s in test_sequence):
        raise UnsupportedClassError("add-beta is defined for binary sources only")
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta}")
    if not CERTIFIED_BETA[0] <= beta <= CERTIFIED_BETA[1]:
        warnings.warn(f"beta={beta} is outside [1/2, 1]; results are exploratory", stacklevel=2)
    b = Fraction(beta)
    ones = training.counts[1]
    t = training.total
    prob = Fraction(1)
    for i, sym in enumerate(test_sequence):
        p_one = (ones + b) / (t + i + 2 * b)
        prob *= p_one if sym == 1 else 1 - p_one
        ones += sym
    return math.log(prob.numerator) - math.log(prob.denominator)


def alpha_nml_predict(prior: Prior, alpha: float, training: CountStat, test: CountStat) -> float:
    if not alpha >= 1:
        raise DomainError(f"alpha must be >= 1, got {alpha}")
    posterior(prior, training)
    ell, m = test.total, len(test)
    tests = count_matrix(ell, m)
    row = _alpha_nml_table(prior, alpha, _single(training), tests)[0]
    return float(row[class_index(tests)[test.counts]])


def dirichlet_quadrature(beta: float, grid_size: int) -> Prior:
    """Symmetric Beta(beta, beta) law as Gauss-Jacobi nodes and weights on [0, 1]."""
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta}")
    if grid_size < 8:
        raise DomainError(f"grid_size must be at least 8, got {grid_size}")
    x, w = roots_jacobi(grid_size, beta - 1.0, beta - 1.0)
    theta = (x + 1.0) / 2.0
    w = np.asarray(w, dtype=float)
    return Prior.from_weights(ParamGrid.binary(theta), w / w.sum())
