"""Experiment drivers behind the CLI subcommands, plus atomic output helpers."""

from __future__ import annotations

import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .capacity import cond_mutual_info
from .config import ell_from_rule, sweep_grid
from .oracle import (
    check_size,
    oracle_alpha_batch_regret,
    oracle_batch_regret,
    oracle_cond_mi,
    oracle_worst_case_regret,
)
from .predictors import AddBeta, AlphaNML, Mixture, Predictor, dirichlet_quadrature
from .regret import alpha_batch_regret, batch_regret, fmt_float, max_regret, worst_case_regret
from .source import BatchSetup, ParamGrid, Prior

LN2 = math.log(2.0)


def half_log_term(n: int) -> float:
    return 0.5 * math.log1p(1.0 / n)


def exact_quadrature_size(setup: BatchSetup, floor: int = 64) -> int:
    """Smallest Gauss rule (at least ``floor``) that integrates the mixture exactly.

    The uniform-prior predictive needs ``int theta^a (1-theta)^b`` with
    ``a + b = t + ell``, a polynomial a ``G``-node rule integrates exactly
    once ``2G - 1 >= t + ell``.
    """
    return max(floor, (setup.t + setup.ell + 2) // 2)


def uniform_prior_information(setup: BatchSetup, quad_size: int = 64, workers: int = 1) -> float:
    prior = dirichlet_quadrature(1.0, exact_quadrature_size(setup, quad_size))
    return cond_mutual_info(prior, setup, workers)


@dataclass
class LowerBoundRow:
    n: int
    ell: int
    lower_bound_Iw: float
    add_half_max_regret: float
    half_log_term: float

    @property
    def residual_lower(self) -> float:
        t = self.n * self.ell
        return (self.half_log_term - self.lower_bound_Iw) * t / math.log(t)

    @property
    def residual_upper(self) -> float:
        return (self.add_half_max_regret - self.half_log_term) * self.n * self.ell

    COLUMNS = ("n", "ell", "lower_bound_Iw", "add_half_max_regret", "half_log_term",
               "residual_lower", "residual_upper")

    def cells(self) -> list[str]:
        return [str(self.n), str(self.ell), fmt_float(self.lower_bound_Iw),
                fmt_float(self.add_half_max_regret), fmt_float(self.half_log_term),
                fmt_float(self.residual_lower), fmt_float(self.residual_upper)]


def lowerbound_rows(ns: Sequence[int], gamma: float, delta: float = 0.1, beta: float = 0.5,
                    quad_size: int = 64, step: float = 0.01, workers: int = 1) -> list[LowerBoundRow]:
    rows = []
    grid = sweep_grid(delta, 1.0 - delta, step)
    for n in ns:
        if n < 1:
            raise ValueError(f"lowerbound needs n >= 1, got {n}")
        ell = ell_from_rule(n, gamma)
        if n * ell < 2:
            raise ValueError(f"n * ell must be at least 2 for the log(n ell) scaling, got n={n}, ell={ell}")
        setup = BatchSetup(n, ell)
        report = max_regret(AddBeta(beta, setup), grid, 1.0, setup, workers)
        rows.append(LowerBoundRow(
            n=n,
            ell=ell,
            lower_bound_Iw=uniform_prior_information(setup, quad_size, workers),
            add_half_max_regret=report.max_value,
            half_log_term=half_log_term(n),
        ))
    return rows


@dataclass
class AuditRow:
    theta: float
    regret: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.regret >= self.bound

    COLUMNS = ("theta", "regret_nats", "bound_nats", "slack_nats", "holds")

    def cells(self) -> list[str]:
        return [fmt_float(self.theta), fmt_float(self.regret), fmt_float(self.bound),
                fmt_float(self.regret - self.bound), "1" if self.holds else "0"]


def pointwise_bound(n: int, ell: int, theta: float) -> float:
    t = n * ell
    return half_log_term(n) - 5.0 / t - 5.0 / (t * theta * (1.0 - theta))


def pointwise_audit(n: int, ell: int, step: float = 0.01, quad_size: int = 64) -> list[AuditRow]:
    """Uniform-prior mixture regret against the pointwise lower bound on the interior grid."""
    setup = BatchSetup(n, ell)
    t = setup.t
    pred = Mixture(dirichlet_quadrature(1.0, exact_quadrature_size(setup, quad_size)), setup)
    lattice = np.round(step * np.arange(int(round(1.0 / step)) + 1), 12)
    interior = lattice[(lattice >= 1.0 / t - 1e-12) & (lattice <= 1.0 - 1.0 / t + 1e-12)]
    interior = interior[(interior > 0) & (interior < 1)]
    return [AuditRow(float(th), batch_regret(pred, th), pointwise_bound(n, ell, float(th))) for th in interior]


def limits_table(pred: Predictor, theta, alphas: Iterable[float]) -> tuple[list[tuple[float, float]], float, float]:
    """Alpha-regret across ``alphas`` with the two limiting endpoints."""
    rows = [(a, alpha_batch_regret(pred, theta, a)) for a in alphas]
    return rows, batch_regret(pred, theta), worst_case_regret(pred, theta)


@dataclass
class CheckLine:
    name: str
    max_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol

    def __str__(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: max |fast - oracle| = {self.max_error:.3e} (tol {self.tol:g})"


def oracle_predictors(prior: Prior, setup: BatchSetup) -> list[Predictor]:
    return [Mixture(prior, setup), AddBeta(0.5, setup), AddBeta(1.0, setup), AlphaNML(prior, 2.0, setup)]


def oracle_check(grid: ParamGrid, prior: Prior, ns: Sequence[int], ells: Sequence[int],
                 alphas: Sequence[float] = (1.0, 2.0, 4.0), tol: float = 1e-10) -> list[CheckLine]:
    """Fast paths against the brute-force oracle on every guarded (n, ell)."""
    errs = {"batch_regret": 0.0, "alpha_batch_regret": 0.0, "worst_case_regret": 0.0, "cond_mutual_info": 0.0}
    for n in ns:
        for ell in ells:
            setup = BatchSetup(n, ell, grid.alphabet_size)
            check_size(setup)
            for pred in oracle_predictors(prior, setup):
                if isinstance(pred, AddBeta) and not grid.is_binary:
                    continue
                for pt in grid.points:
                    errs["batch_regret"] = max(errs["batch_regret"],
                                               _gap(batch_regret(pred, pt), oracle_batch_regret(pred, pt)))
                    for a in alphas:
                        ref = oracle_batch_regret(pred, pt) if a == 1 else oracle_alpha_batch_regret(pred, pt, a)
                        errs["alpha_batch_regret"] = max(errs["alpha_batch_regret"],
                                                         _gap(alpha_batch_regret(pred, pt, a), ref))
                    errs["worst_case_regret"] = max(errs["worst_case_regret"],
                                                    _gap(worst_case_regret(pred, pt), oracle_worst_case_regret(pred, pt)))
            errs["cond_mutual_info"] = max(errs["cond_mutual_info"],
                                           _gap(cond_mutual_info(prior, setup), oracle_cond_mi(prior, setup)))
    return [CheckLine(k, v, tol) for k, v in errs.items()]


def _gap(a: float, b: float) -> float:
    if math.isinf(a) or math.isinf(b):
        return 0.0 if a == b else math.inf
    return abs(a - b)


# output ---------------------------------------------------------------


def header_lines(command: str, resolved: dict) -> list[str]:
    dumped = yaml.safe_dump({"command": command, **resolved}, sort_keys=True, default_flow_style=False)
    return [f"# {line}" if line else "#" for line in dumped.rstrip("\n").split("\n")]


def render_csv(comments: list[str], columns: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(c + "\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def write_atomic(path: str | os.PathLike | None, text: str) -> None:
    """Write ``text`` to ``path`` via a sibling temp file and rename; ``None`` means stdout."""
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=False) + "\n"
