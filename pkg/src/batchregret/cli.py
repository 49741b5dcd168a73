"""Command-line driver: ``batchregret <subcommand> [-c config.yaml] [--set key=value ...]``.

Exit codes: 0 success, 1 config error, 2 solver did not converge,
3 oracle size guard refused the instance, 4 oracle-check found a mismatch.
"""

from __future__ import annotations

import argparse
import math
import sys

from . import __version__
from .capacity import alpha_capacity_solve, capacity_solve, saddle_check
from .config import Config, ConfigError
from .errors import DomainError, SizeGuardError, UnsupportedClassError
from .experiments import (
    LN2,
    AuditRow,
    LowerBoundRow,
    header_lines,
    limits_table,
    lowerbound_rows,
    oracle_check,
    pointwise_audit,
    render_csv,
    render_json,
    write_atomic,
)
from .regret import RegretReport, fmt_float, max_regret
from .source import ParamGrid, Prior

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_SIZE_GUARD, EXIT_CHECK_FAILED = 0, 1, 2, 3, 4

DEFAULT_ALPHAS = [1, 2, 4, 8, 16, 32, 64, 128, 256]


def _common(cfg: Config, args) -> tuple[str | None, int, str]:
    output = args.output if args.output is not None else cfg.raw("output")
    workers = args.workers if args.workers is not None else cfg.get_int("workers", 1, minimum=1)
    unit = args.unit or cfg.get_choice("unit", ("nats", "bits"), "nats")
    return output, workers, unit


def _in_unit(x: float, unit: str) -> str:
    v = x / LN2 if unit == "bits" else x
    return f"{fmt_float(v)} {unit}"


def _say(output: str | None, message: str) -> None:
    # keep stdout clean when the data itself goes there
    stream = sys.stderr if output in (None, "-") else sys.stdout
    print(message, file=stream)


def cmd_regret(cfg: Config, args) -> int:
    output, workers, unit = _common(cfg, args)
    setup = cfg.setup()
    grid = cfg.grid()
    if grid.alphabet_size != setup.alphabet_size:
        raise cfg.error("grid", "alphabet size differs from setup.alphabet_size")
    pred = cfg.predictor(setup, grid)
    alpha = cfg.get_float("alpha", 1.0)
    if not alpha >= 1:
        raise cfg.error("alpha", f"must be >= 1, got {alpha}")
    report: RegretReport = max_regret(pred, grid, alpha, setup, workers)
    text = render_csv(header_lines("regret", cfg.resolved()), RegretReport.CSV_COLUMNS, report.csv_rows())
    write_atomic(output, text)
    _say(output, f"max regret {_in_unit(report.max_value, unit)} at theta_index {report.argmax_index} "
                 f"(theta={grid.theta_repr(report.argmax_index)}), predictor {pred.describe()}")
    return EXIT_OK


def cmd_capacity(cfg: Config, args) -> int:
    output, workers, unit = _common(cfg, args)
    setup = cfg.setup()
    grid = cfg.grid()
    alpha = cfg.get_float("alpha", 1.0)
    if not alpha >= 1 or math.isinf(alpha):
        raise cfg.error("alpha", f"must be a finite number >= 1, got {alpha}")
    tol = cfg.get_float("tol", 1e-7)
    if not tol > 0:
        raise cfg.error("tol", "must be positive")
    max_iter = cfg.get_int("max_iter", 100_000, minimum=1)
    if alpha == 1:
        result = capacity_solve(grid, setup, tol, max_iter, workers)
    else:
        result = alpha_capacity_solve(grid, setup, alpha, tol, max_iter, workers)
    saddle = saddle_check(result, alpha, setup, workers=workers)
    payload = result.to_json(bits=unit == "bits")
    payload["saddle"] = saddle.to_json()
    if cfg.has("refine"):
        payload["refinement"] = _refinement(cfg, setup, alpha, tol, max_iter, workers)
    payload["config"] = cfg.resolved()
    write_atomic(output, render_json(payload))
    _say(output, f"capacity {_in_unit(result.capacity, unit)} after {result.iterations} iterations, "
                 f"equalizer gap {result.equalizer_gap:.3e}, saddle {payload['saddle']['status']}")
    if not result.converged:
        _say(output, f"solver stopped at max_iter={max_iter} with gap {result.equalizer_gap:.3e} > tol {tol:g}")
        return EXIT_CONVERGENCE
    return EXIT_OK


def _refinement(cfg: Config, setup, alpha: float, tol: float, max_iter: int, workers: int) -> list[dict]:
    """Capacity on successively finer uniform grids over ``[refine.lo, refine.hi]``."""
    sizes = cfg.get_int_list("refine.sizes")
    lo = cfg.get_float("refine.lo", 0.0)
    hi = cfg.get_float("refine.hi", 1.0)
    if not 0 <= lo < hi <= 1:
        raise cfg.error("refine", f"needs 0 <= lo < hi <= 1, got lo={lo}, hi={hi}")
    if any(s < 1 for s in sizes):
        raise cfg.error("refine.sizes", "sizes must be positive")
    out = []
    for size in sizes:
        g = ParamGrid.uniform_binary(size, lo, hi)
        r = capacity_solve(g, setup, tol, max_iter, workers) if alpha == 1 else \
            alpha_capacity_solve(g, setup, alpha, tol, max_iter, workers)
        out.append({"size": size, "capacity_nats": r.capacity, "converged": r.converged})
    return out


def cmd_lowerbound(cfg: Config, args) -> int:
    output, workers, unit = _common(cfg, args)
    ns = cfg.get_int_list("ns", [4, 8, 16, 32])
    gkey = "ell_rule.gamma" if cfg.has("ell_rule.gamma") else "gamma"
    gamma = cfg.get_float(gkey, 1.0)
    if not gamma > 0:
        raise cfg.error(gkey, f"must be > 0, got {gamma}")
    delta = cfg.delta()
    beta = cfg.get_float("beta", 0.5)
    quad = cfg.get_int("quad_size", 64, minimum=8)
    step = cfg.get_float("step", 0.01)
    if not 0 < step <= 0.5:
        raise cfg.error("step", f"must lie in (0, 1/2], got {step}")
    if any(n < 1 for n in ns):
        raise cfg.error("ns", "every n must be >= 1")
    try:
        rows = lowerbound_rows(ns, gamma, delta, beta, quad, step, workers)
    except ValueError as exc:
        raise cfg.error("ns", str(exc)) from None
    text = render_csv(header_lines("lowerbound", cfg.resolved()), LowerBoundRow.COLUMNS, [r.cells() for r in rows])
    write_atomic(output, text)
    for r in rows:
        _say(output, f"n={r.n} ell={r.ell}: I_w={_in_unit(r.lower_bound_Iw, unit)} "
                     f"<= max R(add-beta)={_in_unit(r.add_half_max_regret, unit)}; "
                     f"residual_lower={r.residual_lower:.4g} residual_upper={r.residual_upper:.4g}")
    audit_path = args.audit_output if args.audit_output is not None else cfg.raw("audit_output")
    if audit_path is not None:
        an = cfg.get_int("audit.n", 4, minimum=1)
        aell = cfg.get_int("audit.ell", an, minimum=1)
        audit = pointwise_audit(an, aell, step, quad)
        meta = header_lines("lowerbound-audit", {"n": an, "ell": aell, "step": step})
        write_atomic(audit_path, render_csv(meta, AuditRow.COLUMNS, [r.cells() for r in audit]))
        bad = sum(not r.holds for r in audit)
        _say(output, f"pointwise bound audit n={an} ell={aell}: {len(audit) - bad}/{len(audit)} interior points hold")
    return EXIT_OK


def cmd_limits(cfg: Config, args) -> int:
    output, workers, unit = _common(cfg, args)
    setup = cfg.setup()
    grid = cfg.grid()
    pred = cfg.predictor(setup, grid)
    theta = cfg.raw("theta")
    if theta is None:
        raise cfg.error("theta", "is required")
    alphas = cfg.get_float_list("alphas", DEFAULT_ALPHAS)
    if any(not a >= 1 for a in alphas):
        raise cfg.error("alphas", "every alpha must be >= 1")
    try:
        rows, avg, worst = limits_table(pred, theta, alphas)
    except DomainError as exc:
        raise cfg.error("theta", str(exc)) from None
    comments = header_lines("limits", cfg.resolved()) + [
        f"# batch_regret_nats: {fmt_float(avg)}",
        f"# worst_case_regret_nats: {fmt_float(worst)}",
    ]
    body = [[fmt_float(a), fmt_float(v), fmt_float(v / LN2)] for a, v in rows]
    write_atomic(output, render_csv(comments, ("alpha", "regret_nats", "regret_bits"), body))
    _say(output, f"batch regret {_in_unit(avg, unit)}, worst case {_in_unit(worst, unit)}, "
                 f"alpha={fmt_float(rows[-1][0])} gives {_in_unit(rows[-1][1], unit)}")
    return EXIT_OK


def cmd_oracle_check(cfg: Config, args) -> int:
    output, _, _ = _common(cfg, args)
    grid = cfg.grid("grid") if cfg.has("grid") else ParamGrid.binary([0.1, 0.3, 0.5, 0.7, 0.9])
    prior = cfg.prior(grid, "prior") if cfg.has("prior") else Prior.uniform(grid)
    ns = cfg.get_int_list("ns", [0, 1, 2])
    ells = cfg.get_int_list("ells", [1, 2, 3])
    alphas = cfg.get_float_list("alphas", [1.0, 2.0, 4.0])
    tol = cfg.get_float("tol", 1e-10)
    lines = oracle_check(grid, prior, ns, ells, alphas, tol)
    text = "\n".join(str(line) for line in lines) + "\n"
    write_atomic(output, text)
    return EXIT_OK if all(line.passed for line in lines) else EXIT_CHECK_FAILED


COMMANDS = {
    "regret": cmd_regret,
    "capacity": cmd_capacity,
    "lowerbound": cmd_lowerbound,
    "limits": cmd_limits,
    "oracle-check": cmd_oracle_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="batchregret", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", help="YAML config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (dotted path), may repeat")
        p.add_argument("-o", "--output", help="output path ('-' for stdout)")
        p.add_argument("--workers", type=int, help="worker threads for per-theta sweeps")
        p.add_argument("--unit", choices=("nats", "bits"), help="unit for printed summaries")
        if name == "lowerbound":
            p.add_argument("--audit-output", help="also write the pointwise-bound audit CSV here")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = Config.load(args.config, args.set)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SizeGuardError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_SIZE_GUARD
    except (DomainError, UnsupportedClassError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
