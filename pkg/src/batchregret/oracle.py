"""Brute-force references for tiny instances.

Everything here enumerates individual sequences and works with plain
probabilities in extended precision. Nothing is routed through the
log-domain helpers or the count-class tables used by the fast paths, so
agreement between the two is meaningful.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SizeGuardError
from .predictors import AddBeta, AlphaNML, Mixture, Predictor
from .source import BatchSetup, ParamGrid, Prior

MAX_JOINT = 4096
MAX_CAPACITY_GRID = 3

_F = np.longdouble


def check_size(setup: BatchSetup) -> None:
    size = setup.alphabet_size ** (setup.t + setup.ell)
    if size > MAX_JOINT:
        raise SizeGuardError(
            f"m^(n*ell+ell) = {size} exceeds the oracle limit {MAX_JOINT} for {setup}"
        )


def _sequences(length: int, m: int) -> np.ndarray:
    rows = list(itertools.product(range(m), repeat=length))
    return np.array(rows, dtype=np.int64).reshape(len(rows), length)


def _seq_probs(points: np.ndarray, seqs: np.ndarray) -> np.ndarray:
    """``p_theta(s)`` for every grid row and sequence, as a plain product."""
    pts = np.asarray(points, dtype=_F)
    out = np.ones((pts.shape[0], seqs.shape[0]), dtype=_F)
    for col in range(seqs.shape[1]):
        out *= pts[:, seqs[:, col]]
    return out


def _as_point(theta, m: int) -> np.ndarray:
    arr = np.asarray(theta, dtype=float)
    if arr.ndim == 0:
        arr = np.array([1.0 - float(arr), float(arr)])
    if arr.shape != (m,):
        raise DomainError("parameter does not match the alphabet")
    return arr


@dataclass
class JointTable:
    """``p_theta(x^n) p_theta(y)`` for every grid point, training and test sequence."""

    grid: ParamGrid
    setup: BatchSetup
    train_seqs: np.ndarray
    test_seqs: np.ndarray
    p_train: np.ndarray  # (G, Nx)
    p_test: np.ndarray  # (G, Ny)

    @classmethod
    def build(cls, grid: ParamGrid, setup: BatchSetup) -> "JointTable":
        check_size(setup)
        if grid.alphabet_size != setup.alphabet_size:
            raise DomainError("grid alphabet does not match the setup")
        xs = _sequences(setup.t, setup.alphabet_size)
        ys = _sequences(setup.ell, setup.alphabet_size)
        return cls(grid, setup, xs, ys, _seq_probs(grid.points, xs), _seq_probs(grid.points, ys))

    @property
    def entries(self) -> np.ndarray:
        return self.p_train[:, :, None] * self.p_test[:, None, :]

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.grid.size, self.train_seqs.shape[0], self.test_seqs.shape[0])

    def weighted(self, prior: Prior) -> np.ndarray:
        return np.asarray(prior.weights, dtype=_F)[:, None, None] * self.entries


def _posterior(weights: np.ndarray, p_train: np.ndarray) -> np.ndarray:
    joint = np.asarray(weights, dtype=_F)[:, None] * p_train
    evidence = joint.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return joint / evidence[None, :]


def predictor_probs(pred: Predictor) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Literal ``p_hat(y | x^n)`` for every (training, test) sequence pair.

    Returns ``(table, train_seqs, test_seqs)``. Rows for training data no
    grid point can produce are NaN.
    """
    setup = pred.setup
    check_size(setup)
    m = setup.alphabet_size
    xs = _sequences(setup.t, m)
    ys = _sequences(setup.ell, m)
    if isinstance(pred, AddBeta):
        b = _F(pred.beta)
        table = np.ones((xs.shape[0], ys.shape[0]), dtype=_F)
        for i, x in enumerate(xs):
            t1 = int(x.sum())
            for j, y in enumerate(ys):
                ones = 0
                prob = _F(1)
                for k, sym in enumerate(y):
                    p1 = (t1 + ones + b) / (setup.t + k + 2 * b)
                    prob *= p1 if sym == 1 else 1 - p1
                    ones += int(sym)
                table[i, j] = prob
        return table, xs, ys
    if isinstance(pred, (Mixture, AlphaNML)):
        pts = pred.prior.grid.points
        post = _posterior(pred.prior.weights, _seq_probs(pts, xs))  # (G, Nx)
        py = _seq_probs(pts, ys)  # (G, Ny)
        alpha = getattr(pred, "alpha", 1.0)
        if isinstance(pred, Mixture) or alpha == 1.0:
            return post.T @ py, xs, ys
        a = _F(alpha)
        root = (post.T @ py ** a) ** (1 / a)
        return root / root.sum(axis=1, keepdims=True), xs, ys
    raise DomainError(f"no oracle for predictor type {type(pred).__name__}")


def _source_pairs(pred: Predictor, theta):
    setup = pred.setup
    table, xs, ys = predictor_probs(pred)
    pt = _as_point(theta, setup.alphabet_size)[None, :]
    px = _seq_probs(pt, xs)[0]
    py = _seq_probs(pt, ys)[0]
    live = (px[:, None] > 0) & (py[None, :] > 0)
    return table, px, py, live


def oracle_batch_regret(pred: Predictor, theta, setup: BatchSetup | None = None) -> float:
    """The defining double sum over every training and test sequence."""
    if setup is not None and setup != pred.setup:
        raise DomainError("setup mismatch")
    table, px, py, live = _source_pairs(pred, theta)
    total = _F(0)
    for i in range(px.shape[0]):
        for j in range(py.shape[0]):
            if not live[i, j]:
                continue
            q = table[i, j]
            if not q > 0:
                return math.inf
            total += px[i] * py[j] * np.log(py[j] / q)
    return float(total)


def oracle_alpha_batch_regret(pred: Predictor, theta, alpha: float) -> float:
    if not alpha > 1:
        raise DomainError("oracle alpha-regret needs alpha > 1")
    table, px, py, live = _source_pairs(pred, theta)
    a = _F(alpha)
    total = _F(0)
    for i in range(px.shape[0]):
        for j in range(py.shape[0]):
            if not live[i, j]:
                continue
            q = table[i, j]
            if not q > 0:
                return math.inf
            total += px[i] * py[j] * (py[j] / q) ** (a - 1)
    return float(np.log(total) / (a - 1))


def oracle_worst_case_regret(pred: Predictor, theta) -> float:
    table, px, py, live = _source_pairs(pred, theta)
    best = -math.inf
    for i, j in zip(*np.nonzero(live)):
        q = table[i, j]
        if not q > 0:
            return math.inf
        best = max(best, float(np.log(py[j] / q)))
    return best


def oracle_cond_mi(prior: Prior, setup: BatchSetup) -> float:
    """``sum p(theta, x, y) log(p_theta(y) / p(y | x))`` from the joint table."""
    jt = JointTable.build(prior.grid, setup)
    joint = jt.weighted(prior)
    p_xy = joint.sum(axis=0)
    p_x = p_xy.sum(axis=1)
    total = _F(0)
    for g, x, y in zip(*np.nonzero(joint > 0)):
        total += joint[g, x, y] * np.log(jt.p_test[g, y] * p_x[x] / p_xy[x, y])
    return float(total)


@dataclass
class SibsonMinimum:
    value: float  # closed-form route
    value_gradient: float  # projected-gradient route
    minimizers: np.ndarray  # (Nx, Ny) closed-form minimiser, NaN rows for impossible x
    minimizers_gradient: np.ndarray
    stationarity: float
    flagged: bool
    train_seqs: np.ndarray
    test_seqs: np.ndarray


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex."""
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, v.shape[1] + 1)
    cond = u - css / ind > 0
    rho = v.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    shift = css[np.arange(v.shape[0]), rho] / (rho + 1)
    return np.maximum(v - shift[:, None], 0.0)


def _spg_row(a: np.ndarray, alpha: float, tol: float, max_iter: int) -> tuple[np.ndarray, float]:
    """Minimise ``sum_y a_y q_y^(1-alpha)`` over the simplex by projected gradient.

    Spectral (Barzilai-Borwein) step lengths with a nonmonotone Armijo
    search, started at the uniform distribution. ``a`` must be positive.
    """
    d = a.size

    def f(q):
        if np.any(q <= 0):
            return math.inf
        return float(np.sum(a * q ** (1.0 - alpha)))

    def grad(q):
        return (1.0 - alpha) * a * q ** (-alpha)

    def residual(q, g):
        # at an interior optimum all partial derivatives coincide
        return float((g.max() - g.min()) / abs(np.dot(q, g)))

    q = np.full(d, 1.0 / d)
    fq, g = f(q), grad(q)
    history = [fq]
    step = 1.0 / np.abs(g).max()
    res = residual(q, g)
    for _ in range(max_iter):
        if res <= tol:
            break
        direction = _project_simplex((q - step * g)[None, :])[0] - q
        slope = float(np.dot(g, direction))
        ref = max(history[-10:])
        lam = 1.0
        while lam > 1e-30:
            trial = q + lam * direction
            ft = f(trial)
            if ft <= ref + 1e-4 * lam * slope + 1e-15 * abs(ref):
                break
            lam /= 2
        else:
            break
        gt = grad(trial)
        sv, yv = trial - q, gt - g
        curv = float(np.dot(sv, yv))
        step = float(np.dot(sv, sv)) / curv if curv > 0 else 1.0 / np.abs(gt).max()
        q, fq, g = trial, ft, gt
        history.append(fq)
        res = residual(q, g)
    return q, res


def _pgd_minimize(a: np.ndarray, alpha: float, tol: float = 1e-12, max_iter: int = 20_000):
    """Row-wise projected-gradient minimisers and the worst KKT residual.

    Coordinates with ``a_y = 0`` get zero mass; the rest are optimised.
    """
    out = np.zeros_like(a)
    worst = 0.0
    for r in range(a.shape[0]):
        keep = a[r] > 0
        if keep.sum() == 1:
            out[r, keep] = 1.0
            continue
        q, res = _spg_row(a[r, keep], alpha, tol, max_iter)
        out[r, keep] = q
        worst = max(worst, res)
    return out, worst


def oracle_sibson_min(prior: Prior, alpha: float, setup: BatchSetup, route_tol: float = 1e-7) -> SibsonMinimum:
    """Minimise ``D_alpha(Y || Y_hat | theta, X^n)`` separately for every training sequence.

    Route one uses the normalised ``alpha``-th power mean; route two runs
    projected gradient descent from the uniform test distribution.
    """
    if not alpha > 1:
        raise DomainError("oracle_sibson_min needs alpha > 1")
    jt = JointTable.build(prior.grid, setup)
    w = np.asarray(prior.weights, dtype=_F)
    a = _F(alpha)
    # A[x, y] = sum_theta w p_theta(x) p_theta(y)^alpha
    big_a = np.einsum("g,gx,gy->xy", w, jt.p_train, jt.p_test ** a)
    live = big_a.sum(axis=1) > 0
    nx, ny = big_a.shape

    closed = np.full((nx, ny), np.nan)
    root = big_a[live] ** (1 / a)
    closed[live] = (root / root.sum(axis=1, keepdims=True)).astype(float)

    scale = big_a[live].sum(axis=1, keepdims=True)
    normed = (big_a[live] / scale).astype(float)
    q_pgd, stationarity = _pgd_minimize(normed, float(alpha))
    grad_route = np.full((nx, ny), np.nan)
    grad_route[live] = q_pgd

    def value(q):
        qq = np.asarray(q[live], dtype=_F)
        with np.errstate(divide="ignore"):
            inner = np.where(big_a[live] > 0, big_a[live] * qq ** (1 - a), 0)
        return float(np.log(inner.sum()) / (a - 1))

    v_closed = value(closed)
    v_grad = value(grad_route)
    disagree = max(abs(v_closed - v_grad), float(np.nanmax(np.abs(closed - grad_route))))
    return SibsonMinimum(
        value=v_closed,
        value_gradient=v_grad,
        minimizers=closed,
        minimizers_gradient=grad_route,
        stationarity=stationarity,
        flagged=stationarity > 1e-9 or disagree > route_tol,
        train_seqs=jt.train_seqs,
        test_seqs=jt.test_seqs,
    )


def _simplex_lattice(size: int, resolution: int) -> np.ndarray:
    if size == 1:
        return np.ones((1, 1))
    if size == 2:
        i = np.arange(resolution + 1)
        return np.column_stack([i, resolution - i]) / resolution
    i, j = np.meshgrid(np.arange(resolution + 1), np.arange(resolution + 1), indexing="ij")
    keep = i + j <= resolution
    i, j = i[keep], j[keep]
    return np.column_stack([i, j, resolution - i - j]) / resolution


def _class_probs(points: np.ndarray, total: int):
    m = points.shape[1]
    comps = [c for c in itertools.product(range(total + 1), repeat=m) if sum(c) == total]
    counts = np.array(comps, dtype=float).reshape(-1, m)
    mult = np.array([math.factorial(total) / math.prod(math.factorial(int(v)) for v in c) for c in comps])
    per_seq = np.prod(points[:, None, :] ** counts[None, :, :], axis=2)  # 0**0 == 1
    return per_seq, mult


def _objective_batch(weights: np.ndarray, grid: ParamGrid, setup: BatchSetup, alpha: float) -> np.ndarray:
    """Information value for each row of ``weights`` (P, G) in plain arithmetic."""
    px, mx = _class_probs(grid.points, setup.t)
    py, my = _class_probs(grid.points, setup.ell)
    if alpha == 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = np.where(py > 0, py * np.log(py), 0.0)
        # sum_theta w * sum_{x,y} mult p(x) p(y) log p(y)
        own = weights @ ((px * mx) @ np.ones(px.shape[1]) * (ent @ my))
        joint = np.einsum("pg,gx,gy->pxy", weights, px, py)
        marg = np.einsum("pg,gx->px", weights, px)
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(joint > 0, joint * np.log(joint / marg[:, :, None]), 0.0)
        return own - np.einsum("pxy,x,y->p", cond, mx, my)
    big_a = np.einsum("pg,gx,gy->pxy", weights, px, py ** alpha)
    s = np.einsum("pxy,y->px", big_a ** (1.0 / alpha), my)
    return np.log((s ** alpha) @ mx) / (alpha - 1.0)


def oracle_capacity(grid: ParamGrid, setup: BatchSetup, alpha: float = 1.0, step: float = 1e-3,
                    return_prior: bool = False):
    """Exhaustive lattice search over priors with spacing ``step``."""
    if grid.size > MAX_CAPACITY_GRID:
        raise SizeGuardError(f"oracle_capacity handles at most {MAX_CAPACITY_GRID} grid points")
    if not 0 < step <= 1e-2:
        raise DomainError("step must lie in (0, 1e-2]")
    if grid.size == 1:
        return (0.0, np.ones(1)) if return_prior else 0.0
    resolution = int(round(1.0 / step))
    lattice = _simplex_lattice(grid.size, resolution)
    best, best_w = -math.inf, None
    for start in range(0, lattice.shape[0], 20_000):
        block = lattice[start:start + 20_000]
        vals = _objective_batch(block, grid, setup, alpha)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, best_w = float(vals[k]), block[k]
    return (best, best_w) if return_prior else best
