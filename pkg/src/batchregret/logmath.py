"""Log-domain arithmetic shared by the rest of the package.

Everything is in natural-log units. ``-inf`` stands for an exact zero and
the usual ``0 * log 0 = 0`` convention applies wherever a count or a
probability multiplies a log.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .errors import DomainError

LOG_ZERO = -math.inf

# Orders in [1, 1 + KL_ROUTE_WIDTH) are evaluated with the KL branch; the
# 1/(alpha - 1) prefactor cancels catastrophically below this width.
KL_ROUTE_WIDTH = 1e-6


def log_sum_exp(terms: Iterable[float] | np.ndarray, axis: int | None = None):
    """Return ``log(sum(exp(terms)))`` with max-shift stabilisation.

    An empty input, or one made only of ``-inf``, gives ``-inf``. With
    ``axis`` set the reduction runs along that axis of an array and an
    array is returned.
    """
    a = np.asarray(terms if isinstance(terms, np.ndarray) else list(terms), dtype=float)
    if np.any(a == math.inf):
        raise DomainError("log_sum_exp received +inf")
    if axis is None:
        if a.size == 0:
            return LOG_ZERO
        top = a.max()
        if top == LOG_ZERO:
            return LOG_ZERO
        return float(top + math.log(np.exp(a - top).sum()))
    if a.shape[axis] == 0:
        shape = list(a.shape)
        del shape[axis]
        return np.full(shape, LOG_ZERO)
    top = a.max(axis=axis, keepdims=True)
    safe_top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(a - safe_top).sum(axis=axis, keepdims=True)) + safe_top
    out = np.where(top == LOG_ZERO, LOG_ZERO, out)
    return np.squeeze(out, axis=axis)


def log_binomial(n: int, k: int) -> float:
    """``ln C(n, k)`` via log-gamma."""
    if n < 0 or k < 0 or k > n:
        raise DomainError(f"log_binomial needs 0 <= k <= n, got n={n}, k={k}")
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def safe_log(p) -> np.ndarray:
    """Elementwise log with ``log 0 = -inf`` and no warnings."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(p)


def _pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise DomainError(f"distributions must share one support, got shapes {p.shape} and {q.shape}")
    if np.any(p < 0) or np.any(q < 0):
        raise DomainError("distributions must be nonnegative")
    return p, q


def kl_divergence(p, q) -> float:
    """``sum p log(p/q)``; ``+inf`` when ``p`` charges a zero of ``q``."""
    p, q = _pair(p, q)
    support = p > 0
    if np.any(q[support] == 0):
        return math.inf
    ps, qs = p[support], q[support]
    return float(np.sum(ps * (np.log(ps) - np.log(qs))))


def renyi_divergence(p, q, alpha: float) -> float:
    """Renyi divergence of order ``alpha >= 1`` between two pmfs.

    ``alpha`` at 1 (or within ``KL_ROUTE_WIDTH`` above it) uses the KL
    branch and ``alpha = inf`` gives ``max log(p/q)`` over the support of p.
    """
    if not alpha >= 1:
        raise DomainError(f"Renyi order must be >= 1, got {alpha}")
    if alpha < 1 + KL_ROUTE_WIDTH:
        return kl_divergence(p, q)
    p, q = _pair(p, q)
    support = p > 0
    if np.any(q[support] == 0):
        return math.inf
    log_p = np.log(p[support])
    log_ratio = log_p - np.log(q[support])
    if math.isinf(alpha):
        return float(log_ratio.max())
    return log_sum_exp(log_p + (alpha - 1.0) * log_ratio) / (alpha - 1.0)
