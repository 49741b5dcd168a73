"""Exact batch regret, batch alpha-regret and worst-case regret.

Sums run over count classes rather than sequences. A class weight
``count_weight`` already carries the multinomial multiplicity, while the
log-ratio inside the sum is taken between per-sequence probabilities.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .logmath import KL_ROUTE_WIDTH, log_sum_exp, safe_log
from .predictors import Predictor
from .source import BatchSetup, ParamGrid, log_likelihood_matrix, log_multinomial

CLAMP = 1e-9
LN2 = math.log(2.0)


# Block evaluation keeps (block, Kx, Ky) arrays under this many elements.
_BLOCK_ELEMS = 1 << 21


def _theta_point(theta, setup: BatchSetup) -> np.ndarray:
    pt = np.asarray(theta, dtype=float)
    if pt.ndim == 0:
        if setup.alphabet_size != 2:
            raise DomainError("a scalar parameter only describes a binary source")
        pt = np.array([1.0 - float(pt), float(pt)])
    if pt.shape != (setup.alphabet_size,):
        raise DomainError(f"parameter has shape {pt.shape}, setup alphabet is {setup.alphabet_size}")
    if np.any(pt < 0) or abs(pt.sum() - 1.0) > 1e-12:
        raise DomainError("parameter is not a distribution")
    return pt


def _check_pred(pred: Predictor, setup: BatchSetup | None) -> BatchSetup:
    setup = setup or pred.setup
    if setup != pred.setup:
        raise DomainError(f"predictor built for {pred.setup}, asked about {setup}")
    if not pred.exchangeable:
        raise DomainError("count-class regret needs an exchangeable predictor")
    return setup


def _block(pred: Predictor, points: np.ndarray, alpha: float) -> np.ndarray:
    """Regret of ``pred`` at each row of ``points`` (shape (B, m)).

    ``alpha`` is 1 for the batch regret, inf for the worst case, and the
    Renyi order otherwise. Every row is reduced on its own, so a value does
    not depend on which block it was computed in.
    """
    log_pts = safe_log(points)
    ll_x = log_likelihood_matrix(log_pts, pred.train_counts)
    ll_y = log_likelihood_matrix(log_pts, pred.test_counts)
    lw_x = log_multinomial(pred.train_counts)[None, :] + ll_x
    lw_y = log_multinomial(pred.test_counts)[None, :] + ll_y
    table = pred.log_table
    b = points.shape[0]
    live = np.isfinite(lw_x)[:, :, None] & np.isfinite(lw_y)[:, None, :]
    with np.errstate(invalid="ignore"):
        ratio = np.where(live, ll_y[:, None, :] - table[None, :, :], 0.0).reshape(b, -1)
    weight_live = live
    live = live.reshape(b, -1)
    unbounded = np.any(np.isinf(ratio) & live, axis=1)
    if math.isinf(alpha):
        out = np.where(live, ratio, -math.inf).max(axis=1)
    else:
        weight = np.where(weight_live, lw_x[:, :, None] + lw_y[:, None, :], -math.inf).reshape(b, -1)
        safe = np.where(np.isinf(ratio), 0.0, ratio)
        if alpha == 1:
            out = np.sum(np.exp(weight) * safe, axis=1)
        else:
            out = log_sum_exp(weight + (alpha - 1.0) * safe, axis=1) / (alpha - 1.0)
        out = np.where(unbounded, math.inf, out)
    return np.asarray(out, dtype=float)


def _one(pred: Predictor, theta, alpha: float, setup: BatchSetup | None) -> float:
    setup = _check_pred(pred, setup)
    return float(_block(pred, _theta_point(theta, setup)[None, :], alpha)[0])


def batch_regret(pred: Predictor, theta, setup: BatchSetup | None = None) -> float:
    """Expected log-loss excess of ``pred`` over the true source ``theta``."""
    return _one(pred, theta, 1.0, setup)


def alpha_batch_regret(pred: Predictor, theta, alpha: float, setup: BatchSetup | None = None) -> float:
    """Conditional Renyi divergence of order ``alpha`` between source and predictor."""
    if not alpha >= 1:
        raise DomainError(f"alpha must be >= 1, got {alpha}")
    if alpha < 1 + KL_ROUTE_WIDTH:
        return batch_regret(pred, theta, setup)
    return _one(pred, theta, alpha, setup)


def worst_case_regret(pred: Predictor, theta, setup: BatchSetup | None = None) -> float:
    """Largest per-sequence log-ratio over pairs the source can produce."""
    return _one(pred, theta, math.inf, setup)


@dataclass
class RegretReport:
    per_theta: list[tuple[int, float]]
    max_value: float
    argmax_index: int
    setup: BatchSetup
    alpha: float
    grid: ParamGrid = field(repr=False)
    raw_values: list[float] = field(repr=False, default_factory=list)

    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.per_theta])

    def csv_rows(self) -> list[list[str]]:
        rows = []
        for j, v in self.per_theta:
            rows.append([
                str(j),
                self.grid.theta_repr(j),
                fmt_float(self.alpha),
                str(self.setup.n),
                str(self.setup.ell),
                fmt_float(v),
                fmt_float(v / LN2),
            ])
        return rows

    CSV_COLUMNS = ("theta_index", "theta_repr", "alpha", "n", "ell", "regret_nats", "regret_bits")


def fmt_float(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def clamp_regret(value: float) -> float:
    return 0.0 if -CLAMP <= value < 0.0 else value


def regret_profile(pred: Predictor, grid: ParamGrid, alpha: float = 1.0,
                   setup: BatchSetup | None = None, workers: int = 1) -> np.ndarray:
    """Raw (unclamped) regret for every grid point, in grid order.

    Points are cut into fixed blocks independent of ``workers``; the
    shared table is built before any worker reads it.
    """
    setup = _check_pred(pred, setup)
    if grid.alphabet_size != setup.alphabet_size:
        raise DomainError("grid alphabet does not match the setup")
    if not alpha >= 1:
        raise DomainError(f"alpha must be >= 1, got {alpha}")
    if alpha < 1 + KL_ROUTE_WIDTH:
        alpha = 1.0
    pred.log_table
    per_row = max(1, pred.log_table.size)
    size = max(1, _BLOCK_ELEMS // per_row)
    blocks = [grid.points[i:i + size] for i in range(0, grid.size, size)]
    if workers <= 1 or len(blocks) == 1:
        parts = [_block(pred, b, alpha) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _block(pred, b, alpha), blocks))
    return np.concatenate(parts)


def max_regret(pred: Predictor, grid: ParamGrid, alpha: float = 1.0,
               setup: BatchSetup | None = None, workers: int = 1) -> RegretReport:
    setup = setup or pred.setup
    raw = regret_profile(pred, grid, alpha, setup, workers)
    vals = [clamp_regret(float(v)) for v in raw]
    best = int(np.argmax(vals))
    return RegretReport(
        per_theta=list(enumerate(vals)),
        max_value=vals[best],
        argmax_index=best,
        setup=setup,
        alpha=alpha,
        grid=grid,
        raw_values=[float(v) for v in raw],
    )
