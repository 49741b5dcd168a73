"""Parametric i.i.d. sources, batch geometry and count-class reduction.

Binary grids are parametrised by ``theta = P(symbol 1)``, so the point for
``theta`` is the pmf ``(1 - theta, theta)`` and a binary count vector is
``(zeros, ones)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .errors import DegenerateEvidenceError, DomainError
from .logmath import log_sum_exp, safe_log

SUM_TOL = 1e-12


@dataclass(eq=False)
class ParamGrid:
    """A finite list of symbol distributions standing in for the class."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] < 2:
            raise DomainError(f"grid points must form a nonempty (G, m>=2) array, got {pts.shape}")
        if np.any(pts < 0):
            raise DomainError("grid points must be nonnegative")
        sums = pts.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > SUM_TOL)
        if bad.size:
            raise DomainError(f"grid point {bad[0]} sums to {sums[bad[0]]!r}, not 1")
        if pts.shape[0] > 1:
            # Sorting by the first coordinates makes near-duplicates adjacent
            # for binary grids; fall back to all pairs for small general grids.
            if pts.shape[1] == 2:
                order = np.argsort(pts[:, 1], kind="stable")
                gaps = np.abs(np.diff(pts[order], axis=0)).sum(axis=1)
                if np.any(gaps <= SUM_TOL):
                    raise DomainError("grid contains duplicate points")
            else:
                dist = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2)
                np.fill_diagonal(dist, np.inf)
                if np.any(dist <= SUM_TOL):
                    raise DomainError("grid contains duplicate points")
        pts.setflags(write=False)
        self.points = pts

    @classmethod
    def binary(cls, thetas: Sequence[float]) -> "ParamGrid":
        th = np.asarray(thetas, dtype=float).reshape(-1)
        if np.any(th < 0) or np.any(th > 1):
            raise DomainError("binary parameters must lie in [0, 1]")
        return cls(np.column_stack([1.0 - th, th]))

    @classmethod
    def uniform_binary(cls, size: int, lo: float, hi: float) -> "ParamGrid":
        """``size`` equally spaced binary parameters on ``[lo, hi]``."""
        if size < 1:
            raise DomainError("grid size must be positive")
        if size == 1:
            return cls.binary([lo])
        return cls.binary(np.linspace(lo, hi, size))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def alphabet_size(self) -> int:
        return self.points.shape[1]

    @property
    def is_binary(self) -> bool:
        return self.alphabet_size == 2

    @cached_property
    def log_points(self) -> np.ndarray:
        return safe_log(self.points)

    def theta_repr(self, j: int) -> str:
        if self.is_binary:
            return f"{self.points[j, 1]:.17g}"
        return "|".join(f"{v:.17g}" for v in self.points[j])

    def __len__(self) -> int:
        return self.size


@dataclass(frozen=True)
class BatchSetup:
    """``n`` training batches of ``ell`` symbols each, plus one test batch."""

    n: int
    ell: int
    alphabet_size: int = 2

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 0:
            raise DomainError(f"n must be a nonnegative integer, got {self.n!r}")
        if not isinstance(self.ell, (int, np.integer)) or self.ell < 1:
            raise DomainError(f"ell must be a positive integer, got {self.ell!r}")
        if self.alphabet_size < 2:
            raise DomainError("alphabet size must be at least 2")

    @property
    def t(self) -> int:
        return self.n * self.ell


@dataclass(frozen=True)
class CountStat:
    counts: tuple[int, ...]

    def __post_init__(self):
        c = tuple(int(v) for v in self.counts)
        if any(v < 0 for v in c):
            raise DomainError(f"counts must be nonnegative, got {c}")
        object.__setattr__(self, "counts", c)

    @classmethod
    def of(cls, *counts: int) -> "CountStat":
        return cls(tuple(counts))

    @classmethod
    def from_sequence(cls, seq: Sequence[int], alphabet_size: int = 2) -> "CountStat":
        c = [0] * alphabet_size
        for s in seq:
            c[s] += 1
        return cls(tuple(c))

    @classmethod
    def empty(cls, alphabet_size: int = 2) -> "CountStat":
        return cls((0,) * alphabet_size)

    @property
    def total(self) -> int:
        return sum(self.counts)

    def __add__(self, other: "CountStat") -> "CountStat":
        if len(self.counts) != len(other.counts):
            raise DomainError("cannot add counts over different alphabets")
        return CountStat(tuple(a + b for a, b in zip(self.counts, other.counts)))

    def __len__(self) -> int:
        return len(self.counts)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def count_matrix(total: int, alphabet_size: int) -> np.ndarray:
    """All count vectors summing to ``total``, lexicographic, as a (K, m) array."""
    if total < 0:
        raise DomainError("total must be nonnegative")
    if alphabet_size == 2:
        first = np.arange(total + 1)
        return np.column_stack([first, total - first])
    return np.array(list(_compositions(total, alphabet_size)), dtype=np.int64).reshape(-1, alphabet_size)


def enumerate_counts(total: int, alphabet_size: int) -> list[CountStat]:
    return [CountStat(tuple(row)) for row in count_matrix(total, alphabet_size).tolist()]


def log_multinomial(counts: np.ndarray) -> np.ndarray:
    """Log number of sequences in each count class (rows of ``counts``)."""
    counts = np.asarray(counts)
    return gammaln(counts.sum(axis=-1) + 1.0) - gammaln(counts + 1.0).sum(axis=-1)


def log_likelihood_matrix(log_points: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Per-sequence log-probabilities, shape (G, K), with 0 * log 0 = 0."""
    log_points = np.asarray(log_points, dtype=float)
    counts = np.asarray(counts, dtype=float)
    finite = np.isfinite(log_points)
    lp = np.where(finite, log_points, 0.0)
    # Accumulate symbol by symbol rather than through BLAS, so an entry does
    # not depend on how many rows were evaluated together.
    out = np.zeros((lp.shape[0], counts.shape[0]))
    for k in range(lp.shape[1]):
        out += lp[:, k, None] * counts[None, :, k]
    impossible = (~finite).astype(float) @ (counts > 0).T.astype(float)
    out[impossible > 0] = -math.inf
    return out


def _point(theta, alphabet_size: int | None = None) -> np.ndarray:
    arr = np.asarray(theta, dtype=float)
    if arr.ndim == 0:
        if alphabet_size not in (None, 2):
            raise DomainError("a scalar parameter only describes a binary source")
        return np.array([1.0 - float(arr), float(arr)])
    return arr.reshape(-1)


def log_likelihood(theta, stat: CountStat) -> float:
    """Log-probability of one particular sequence with counts ``stat``."""
    pt = _point(theta, len(stat))
    if pt.size != len(stat):
        raise DomainError(f"counts over {len(stat)} symbols, parameter over {pt.size}")
    return float(log_likelihood_matrix(safe_log(pt)[None, :], np.array([stat.counts]))[0, 0])


def count_weight(theta, stat: CountStat) -> float:
    """Log-probability of observing *some* sequence with counts ``stat``."""
    ll = log_likelihood(theta, stat)
    return float(log_multinomial(np.array(stat.counts))) + ll


@dataclass(eq=False)
class Prior:
    """Weights on the points of a :class:`ParamGrid`."""

    grid: ParamGrid
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size != self.grid.size:
            raise DomainError(f"{w.size} weights for a grid of {self.grid.size} points")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("prior weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > SUM_TOL:
            raise DomainError(f"prior weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        self.weights = w

    @classmethod
    def from_weights(cls, grid: ParamGrid, weights) -> "Prior":
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if not total > 0:
            raise DomainError("prior weights have no mass")
        return cls(grid, w / total)

    @classmethod
    def uniform(cls, grid: ParamGrid) -> "Prior":
        return cls(grid, np.full(grid.size, 1.0 / grid.size))

    @classmethod
    def point(cls, grid: ParamGrid, index: int) -> "Prior":
        w = np.zeros(grid.size)
        w[index] = 1.0
        return cls(grid, w)

    @cached_property
    def log_weights(self) -> np.ndarray:
        return safe_log(self.weights)


def log_posterior_matrix(prior: Prior, train_counts: np.ndarray) -> np.ndarray:
    """Normalised log posterior for each training class, shape (G, Kx).

    Columns with no evidence at all come back as ``-inf`` throughout.
    """
    joint = prior.log_weights[:, None] + log_likelihood_matrix(prior.grid.log_points, train_counts)
    evidence = log_sum_exp(joint, axis=0)
    safe = np.where(np.isfinite(evidence), evidence, 0.0)
    out = joint - safe[None, :]
    out[:, ~np.isfinite(evidence)] = -math.inf
    return out


def posterior(prior: Prior, training_stat: CountStat) -> Prior:
    if len(training_stat) != prior.grid.alphabet_size:
        raise DomainError("training counts do not match the grid alphabet")
    log_post = log_posterior_matrix(prior, np.array([training_stat.counts]))[:, 0]
    if not np.any(np.isfinite(log_post)):
        raise DegenerateEvidenceError(f"no grid point can produce counts {training_stat.counts}")
    w = np.exp(log_post)
    return Prior(prior.grid, w / w.sum())


def all_sequences(length: int, alphabet_size: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(alphabet_size), repeat=length))


def class_index(counts: np.ndarray) -> dict[tuple[int, ...], int]:
    return {tuple(row): i for i, row in enumerate(np.asarray(counts).tolist())}


def num_classes(total: int, alphabet_size: int) -> int:
    return math.comb(total + alphabet_size - 1, alphabet_size - 1)
