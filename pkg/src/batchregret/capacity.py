"""Conditional mutual / Sibson information and capacity-achieving priors.

Both solvers start from the uniform prior and run multiplicative weights,
``w'(theta) ~ w(theta) exp(step * s * D(theta))`` with ``s = 1`` at order 1
and ``s = alpha - 1`` above it. ``step = 1`` at order 1 is the Arimoto
update; the step grows while the directional derivative stays positive
and is halved otherwise.

Neither iteration is trusted on its own; ``saddle_check`` recomputes the
per-point divergences at the returned prior and certifies the equalizer
conditions directly. The capacity is a maximum over priors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .logmath import KL_ROUTE_WIDTH, log_sum_exp
from .predictors import AlphaNML, Mixture
from .regret import regret_profile
from .source import (
    BatchSetup,
    ParamGrid,
    Prior,
    count_matrix,
    log_likelihood_matrix,
    log_multinomial,
)

SUPPORT_THRESHOLD = 1e-6
_MIN_STEP = 2.0 ** -30
STEP_CAP = 64.0


def _check(prior: Prior, setup: BatchSetup):
    if prior.grid.alphabet_size != setup.alphabet_size:
        raise DomainError("prior grid alphabet does not match the setup")


def divergence_profile(prior: Prior, setup: BatchSetup, alpha: float = 1.0, workers: int = 1) -> np.ndarray:
    """Per-point ``D_theta`` (or ``D_alpha``) of the optimal predictor for ``prior``."""
    _check(prior, setup)
    if alpha < 1 + KL_ROUTE_WIDTH:
        return regret_profile(Mixture(prior, setup), prior.grid, 1.0, setup, workers)
    return regret_profile(AlphaNML(prior, alpha, setup), prior.grid, alpha, setup, workers)


def _weighted_mean(prior: Prior, values: np.ndarray) -> float:
    on = prior.weights > 0
    return float(np.dot(prior.weights[on], values[on]))


def cond_mutual_info(prior: Prior, setup: BatchSetup, workers: int = 1) -> float:
    """``I_w(theta; Y | X^n)`` as the Bayes risk of the mixture predictor."""
    return _weighted_mean(prior, divergence_profile(prior, setup, 1.0, workers))


def cond_sibson(prior: Prior, alpha: float, setup: BatchSetup) -> float:
    """Closed-form conditional Sibson information of order ``alpha``.

    ``(1/(alpha-1)) log sum_x { sum_y ( sum_theta w p(x) p(y)^alpha )^(1/alpha) }^alpha``
    with the x and y sums taken over count classes times multiplicities.
    """
    _check(prior, setup)
    if not alpha >= 1:
        raise DomainError(f"alpha must be >= 1, got {alpha}")
    if alpha < 1 + KL_ROUTE_WIDTH:
        return cond_mutual_info(prior, setup)
    m = setup.alphabet_size
    xs = count_matrix(setup.t, m)
    ys = count_matrix(setup.ell, m)
    logp = prior.grid.log_points
    ll_x = log_likelihood_matrix(logp, xs)
    ll_y = log_likelihood_matrix(logp, ys)
    log_a = log_sum_exp(
        prior.log_weights[:, None, None] + ll_x[:, :, None] + alpha * ll_y[:, None, :], axis=0
    )
    log_s = log_sum_exp(log_a / alpha + log_multinomial(ys)[None, :], axis=1)
    log_f = log_sum_exp(alpha * log_s + log_multinomial(xs))
    return log_f / (alpha - 1.0)


@dataclass
class CapacityResult:
    prior_star: Prior
    capacity: float
    equalizer_gap: float
    support_gap: float
    iterations: int
    trace: list[float]
    upper_trace: list[float] = field(default_factory=list)
    converged: bool = True
    alpha: float = 1.0
    tol: float = 1e-7
    setup: BatchSetup | None = None
    divergences: np.ndarray | None = field(default=None, repr=False)

    def to_json(self, bits: bool = False) -> dict:
        grid = self.prior_star.grid
        out = {
            "capacity_nats": self.capacity,
            "equalizer_gap": self.equalizer_gap,
            "support_gap": self.support_gap,
            "iterations": self.iterations,
            "converged": self.converged,
            "alpha": self.alpha,
            "tol": self.tol,
            "prior": [
                {"theta_repr": grid.theta_repr(j), "weight": float(w)}
                for j, w in enumerate(self.prior_star.weights)
            ],
            "trace": list(self.trace),
            "upper_trace": list(self.upper_trace),
        }
        if bits:
            out["capacity_bits"] = self.capacity / math.log(2.0)
        return out


def _gaps(prior: Prior, d: np.ndarray, value: float) -> tuple[float, float]:
    support = prior.weights > SUPPORT_THRESHOLD
    return float(d.max() - value), float(value - d[support].min())


def _result(prior, d, value, it, trace, upper, tol, alpha, setup) -> CapacityResult:
    eq_gap, sup_gap = _gaps(prior, d, value)
    return CapacityResult(
        prior_star=prior,
        capacity=value,
        equalizer_gap=eq_gap,
        support_gap=sup_gap,
        iterations=it,
        trace=trace,
        upper_trace=upper,
        converged=max(eq_gap, sup_gap) <= tol,
        alpha=alpha,
        tol=tol,
        setup=setup,
        divergences=d,
    )


def _reweight(prior: Prior, log_factor: np.ndarray) -> Prior:
    lw = prior.log_weights + log_factor
    lw = lw - log_sum_exp(lw)
    w = np.exp(lw)
    return Prior(prior.grid, w / w.sum())


def _ascend(grid: ParamGrid, setup: BatchSetup, alpha: float, tol: float, max_iter: int,
            workers: int) -> CapacityResult:
    """Multiplicative-weights ascent shared by both solvers.

    A candidate is accepted when the directional derivative along the step,
    taken at the candidate, is nonnegative. By concavity that already
    implies the information did not drop, and unlike comparing two values
    it keeps working once the gain falls below round-off.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    order_one = alpha == 1.0
    scale = 1.0 if order_one else alpha - 1.0

    def evaluate(prior):
        d = divergence_profile(prior, setup, alpha, workers)
        value = _weighted_mean(prior, d) if order_one else cond_sibson(prior, alpha, setup)
        # gradient of I (alpha = 1) or of exp((alpha-1) I), up to a positive factor
        grad = d if order_one else np.exp(scale * (d - value))
        return d, value, grad

    prior = Prior.uniform(grid)
    d, value, _ = evaluate(prior)
    trace, upper = [value], [float(d.max())]
    it = 1
    step = 0.5
    while max(_gaps(prior, d, value)) > tol and it < max_iter:
        step = min(STEP_CAP, 2.0 * step)
        while True:
            cand = _reweight(prior, step * scale * (d - d.max()))
            d_c, v_c, g_c = evaluate(cand)
            slope = float(np.dot(cand.weights - prior.weights, g_c - g_c.max()))
            if slope >= 0 or v_c >= value or step <= _MIN_STEP:
                break
            step /= 2
        prior, d, value = cand, d_c, v_c
        trace.append(value)
        upper.append(float(d.max()))
        it += 1
    return _result(prior, d, value, it, trace, upper, tol, alpha, setup)


def capacity_solve(grid: ParamGrid, setup: BatchSetup, tol: float = 1e-7, max_iter: int = 100_000,
                   workers: int = 1) -> CapacityResult:
    """Maximise ``I_w(theta; Y | X^n)`` over priors on ``grid``.

    Each step multiplies the weights by ``exp(step * D_theta)``; ``step = 1``
    is the plain Arimoto update. The step doubles after every accepted
    iteration (up to ``STEP_CAP``) and is halved until the step no longer
    overshoots, so the recorded trace does not decrease.
    """
    return _ascend(grid, setup, 1.0, tol, max_iter, workers)


def alpha_capacity_solve(grid: ParamGrid, setup: BatchSetup, alpha: float, tol: float = 1e-7,
                         max_iter: int = 100_000, workers: int = 1) -> CapacityResult:
    """Maximise the conditional Sibson information of order ``alpha``.

    Same safeguarded ascent as :func:`capacity_solve` with the update
    ``w * exp(step * (alpha - 1) * D_alpha)``. Nothing here proves
    convergence for ``alpha > 1``; use :func:`saddle_check` on the result.
    """
    if not alpha >= 1:
        raise DomainError(f"alpha must be >= 1, got {alpha}")
    if alpha < 1 + KL_ROUTE_WIDTH:
        return capacity_solve(grid, setup, tol, max_iter, workers)
    return _ascend(grid, setup, float(alpha), tol, max_iter, workers)


@dataclass
class SaddleReport:
    overshoot: float
    max_shortfall: float
    shortfalls: dict[int, float]
    tol: float
    passed: bool
    divergences: list[float] = field(repr=False, default_factory=list)

    def to_json(self) -> dict:
        return {
            "status": "PASS" if self.passed else "FAIL",
            "overshoot": self.overshoot,
            "max_shortfall": self.max_shortfall,
            "tol": self.tol,
            "shortfalls": {str(k): v for k, v in self.shortfalls.items()},
        }


def saddle_check(result: CapacityResult, alpha: float, setup: BatchSetup, tol: float | None = None,
                 workers: int = 1) -> SaddleReport:
    """Recompute every ``D_theta`` at the returned prior and test the equalizer conditions."""
    tol = result.tol if tol is None else tol
    prior = result.prior_star
    d = divergence_profile(prior, setup, alpha, workers)
    overshoot = max(0.0, float(d.max() - result.capacity))
    shortfalls = {
        int(j): float(result.capacity - d[j])
        for j in np.flatnonzero(prior.weights > SUPPORT_THRESHOLD)
    }
    worst = max(0.0, max(shortfalls.values()))
    return SaddleReport(
        overshoot=overshoot,
        max_shortfall=worst,
        shortfalls=shortfalls,
        tol=tol,
        passed=overshoot <= tol and worst <= tol,
        divergences=[float(v) for v in d],
    )
