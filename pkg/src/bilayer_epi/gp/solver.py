"""Barrier interior-point solver for geometric programs in log space.

Phase I finds a strictly feasible point by minimising the largest
constraint value ``s`` (itself a GP in ``(y, s)``); phase II runs the
standard barrier method: centre ``t*F0 - sum log(-F_i)`` with damped Newton
and Armijo backtracking, then multiply ``t`` by ``mu_factor`` until the
duality-gap estimate ``m / t`` drops below ``gap_tol``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.optimize import nnls

from .expr import GeometricProgram, evaluate
from .transform import ConvexProgram, StackedLSE, log_transform

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration-limit"


class NumericalFailure(RuntimeError):
    """Newton produced a non-descent direction; the problem is badly conditioned."""


@dataclass
class SolverOptions:
    gap_tol: float = 1e-8
    mu0: float = 1.0
    mu_factor: float = 10.0
    max_newton: int = 500
    armijo: float = 0.01
    backtrack: float = 0.5
    centering_tol: float = 1e-9
    phase1_margin: float = 1e-6
    phase1_box: float = 40.0  # phase I keeps |log x - log x0| below this


@dataclass
class GPSolution:
    values: dict[str, float]
    objective_value: float
    kkt_residual: float
    status: str
    newton_steps: int = 0
    duals: np.ndarray = field(default_factory=lambda: np.empty(0))
    constraint_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    phase1_value: float = float("nan")

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Counter:
    def __init__(self, limit):
        self.n = 0
        self.limit = limit

    def tick(self):
        self.n += 1
        return self.n <= self.limit


def _newton_direction(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    # symmetric Jacobi scaling keeps the factorisation usable when barrier
    # terms span many orders of magnitude
    d = np.sqrt(np.maximum(np.abs(np.diag(H)), 1e-300))
    Hs = H / d[:, None] / d[None, :]
    gs = g / d
    n = len(g)
    for reg in (0.0, 1e-14, 1e-12, 1e-10, 1e-8):
        try:
            c = sla.cho_factor(Hs + reg * np.eye(n), check_finite=True)
            return -sla.cho_solve(c, gs) / d
        except (np.linalg.LinAlgError, ValueError):
            continue
    step = np.linalg.lstsq(Hs, -gs, rcond=None)[0]
    return step / d


class _Barrier:
    """``t * F0(y) - sum log(-F_i(y))`` restricted to ``y = y0 + N w``."""

    def __init__(self, obj: StackedLSE, cons: StackedLSE | None, y0: np.ndarray, N: np.ndarray):
        self.obj, self.cons, self.y0, self.N = obj, cons, y0, N

    def y(self, w):
        return self.y0 + self.N @ w

    def slack(self, y):
        if self.cons is None:
            return np.empty(0)
        return -self.cons.values(y)

    def value(self, w, t):
        y = self.y(w)
        s = self.slack(y)
        if s.size and (not np.all(np.isfinite(s)) or s.min() <= 0):
            return np.inf, 0.0
        f0 = float(self.obj.values(y)[0])
        bar = -float(np.sum(np.log(s))) if s.size else 0.0
        noise = 1e-14 * (abs(t * f0) + np.sum(np.abs(np.log(s))) if s.size else abs(t * f0))
        return t * f0 + bar, noise

    def grad_hess(self, w, t):
        y = self.y(w)
        _, w0, g0 = self.obj.evaluate(y)
        g0d = g0.toarray()[0]
        grad = t * g0d
        H = self.obj._weighted(w0, g0, np.array([t]), np.zeros(1))
        if self.cons is not None:
            F, wc, G = self.cons.evaluate(y)
            s = -F
            grad = grad + G.T @ (1.0 / s)
            H = H + self.cons._weighted(wc, G, 1.0 / s, 1.0 / s ** 2)
        N = self.N
        return N.T @ grad, N.T @ H @ N, y


def _center(bar: _Barrier, w, t, opts: SolverOptions, counter: _Counter, stop=None):
    """Damped Newton centring. Returns (w, status) with status in {'ok', 'limit', 'stop'}."""
    while True:
        g, H, y = bar.grad_hess(w, t)
        if stop is not None and stop(y):
            return w, "stop"
        dw = _newton_direction(H, g)
        slope = float(g @ dw)
        dec2 = -slope
        if dec2 / 2.0 <= opts.centering_tol:
            return w, "ok"
        if slope >= 0:
            if dec2 < 1e-6 or abs(slope) < 1e-10:
                return w, "ok"
            raise NumericalFailure(f"non-descent Newton direction (slope {slope:.3g})")
        if not counter.tick():
            return w, "limit"
        f, noise = bar.value(w, t)
        step = 1.0
        while True:
            fn, _ = bar.value(w + step * dw, t)
            if np.isfinite(fn) and fn <= f + opts.armijo * step * slope + noise:
                break
            step *= opts.backtrack
            if step < 1e-14:
                if dec2 < 1e-5:
                    return w, "ok"
                raise NumericalFailure(f"line search failed to make progress (t={t:.3g}, decrement {dec2:.3g})")
        w_next = w + step * dw
        if np.abs(w_next - w).max() <= 1e-12 * (1.0 + np.abs(w).max()):
            # relative change in x below 1e-12: the slack is resolved no finer
            return w_next, "ok"
        w = w_next


def _barrier_method(bar: _Barrier, w, m: int, opts: SolverOptions, counter: _Counter, stop=None,
                    lower_bound_stop=None):
    t = 1.0 / opts.mu0
    while True:
        w, status = _center(bar, w, t, opts, counter, stop)
        if status != "ok":
            return w, t, status
        if m == 0 or m / t < opts.gap_tol:
            return w, t, "ok"
        # on the central path the optimum is at least F0 - m/t
        if lower_bound_stop is not None and lower_bound_stop(bar.y(w), m / t):
            return w, t, "stop"
        t *= opts.mu_factor


def _equality_parametrisation(cp: ConvexProgram):
    n = len(cp.variables)
    if cp.eq_matrix.shape[0] == 0:
        return np.zeros(n), np.eye(n)
    E, h = cp.eq_matrix, cp.eq_rhs
    y0 = np.linalg.lstsq(E, h, rcond=None)[0]
    if np.abs(E @ y0 - h).max() > 1e-9:
        raise ValueError("monomial equality constraints are inconsistent")
    return y0, sla.null_space(E)


def _phase1(cp: ConvexProgram, y0: np.ndarray, N: np.ndarray, opts: SolverOptions, counter: _Counter,
            y_start: np.ndarray | None = None):
    """Minimise ``s`` s.t. ``F_i(y) <= s``, ``s >= -1`` and a log-space box. Returns (y, s).

    The box keeps variables that no constraint pushes back on from drifting
    towards 0 or infinity, which would leave phase II with a singular Hessian.
    """
    cons = cp.constraints
    nv = len(cp.variables)
    if y_start is not None:
        y0 = y0 + N @ np.linalg.lstsq(N, y_start - y0, rcond=None)[0]
    F = cons.values(y0)
    if F.max() < -opts.phase1_margin:
        return y0, float(F.max())
    # augmented variable vector (y, s)
    A_aug = sp.hstack([cons.A, -np.ones((cons.A.shape[0], 1))]).tocsr()
    floor_row = sp.csr_matrix(([-1.0], ([0], [nv])), shape=(1, nv + 1))
    eye = sp.eye(nv, nv + 1, format="csr")
    r = opts.phase1_box
    rows = sp.vstack([A_aug, floor_row, eye, -eye]).tocsr()
    cons_aug = StackedLSE(
        rows,
        np.concatenate([cons.b, [-1.0], -y0 - r, y0 - r]),
        np.concatenate([cons.starts, A_aug.shape[0] + np.arange(1 + 2 * nv)]),
    )
    obj_aug = StackedLSE(
        sp.csr_matrix(([1.0], ([0], [nv])), shape=(1, nv + 1)), np.zeros(1), np.zeros(1, dtype=np.int64)
    )
    N_aug = sp.block_diag([N, np.ones((1, 1))]).toarray()
    y0_aug = np.append(y0, 0.0)
    s0 = float(F.max()) + 1.0
    bar = _Barrier(obj_aug, cons_aug, y0_aug, N_aug)
    w = np.append(np.zeros(N.shape[1]), s0)

    def feasible(ya):
        return cons.values(ya[:nv]).max() < -opts.phase1_margin

    def certified_infeasible(ya, gap):
        return ya[nv] - gap > 0

    w, _, status = _barrier_method(bar, w, cons_aug.m, opts, counter, stop=feasible,
                                   lower_bound_stop=certified_infeasible)
    ya = bar.y(w)
    y = ya[:nv]
    return y, float(cons.values(y).max())


def solve(gp: GeometricProgram, options: SolverOptions | None = None,
          x0: dict[str, float] | None = None) -> GPSolution:
    """Solve a geometric program; see the module docstring for the method.

    ``x0`` is an optional positive starting guess. It need not be feasible;
    a strictly feasible guess skips phase I.
    """
    opts = options or SolverOptions()
    cp = log_transform(gp)
    y_start = None if x0 is None else cp.to_log(x0)
    return solve_convex(cp, opts, y_start)


def solve_convex(cp: ConvexProgram, opts: SolverOptions, y_start: np.ndarray | None = None) -> GPSolution:
    counter = _Counter(opts.max_newton)
    y0, N = _equality_parametrisation(cp)
    m = 0 if cp.constraints is None else cp.constraints.m
    phase1_value = float("nan")

    if m:
        y_start, phase1_value = _phase1(cp, y0, N, opts, counter, y_start)
        if phase1_value >= -opts.phase1_margin:
            status = INFEASIBLE if counter.n <= counter.limit else ITERATION_LIMIT
            log.info("phase I ended with max constraint value %.3g (%s)", phase1_value, status)
            return _package(cp, y_start, N, np.inf, status, counter.n, phase1_value)
        w0 = np.linalg.lstsq(N, y_start - y0, rcond=None)[0]
    elif y_start is not None:
        w0 = np.linalg.lstsq(N, y_start - y0, rcond=None)[0]
    else:
        w0 = np.zeros(N.shape[1])

    bar = _Barrier(cp.objective, cp.constraints, y0, N)
    w, t, status = _barrier_method(bar, w0, m, opts, counter)
    y = bar.y(w)
    return _package(cp, y, N, t, OPTIMAL if status == "ok" else ITERATION_LIMIT,
                    counter.n, phase1_value)


def _package(cp, y, N, t, status, steps, phase1_value) -> GPSolution:
    values = {v: float(np.exp(yi)) for v, yi in zip(cp.variables, y)}
    obj = float(np.exp(cp.objective_value(y)))
    F = cp.constraint_values(y)
    if np.isfinite(t) and F.size:
        g0 = cp.objective_grad(y)
        M = N.T @ cp.constraint_grads(y).T
        r = N.T @ g0
        scale = max(1.0, float(np.abs(g0).max()))

        def residual(lam):
            station = float(np.abs(r + M @ lam).max()) if r.size else 0.0
            return max(station / scale, float(np.max(lam * -F)))

        # barrier multipliers lose accuracy once slacks approach rounding
        # level, so also try a nonnegative least-squares fit and keep the better
        candidates = [1.0 / (t * -F)]
        if r.size:
            candidates.append(nnls(M, -r)[0])
        kkt, duals = min(((residual(lam), lam) for lam in candidates), key=lambda p: p[0])
    elif np.isfinite(t):
        duals = np.empty(0)
        kkt = float(np.abs(N.T @ cp.objective_grad(y)).max())
    else:
        duals = np.full(F.size, np.nan)
        kkt = float("inf")
    return GPSolution(values, obj, kkt, status, steps, duals, np.exp(F), phase1_value)


def check_solution(gp: GeometricProgram, sol: GPSolution, tol: float = 1e-8) -> float:
    """Largest constraint excess ``g(x) - 1`` over all inequality rows."""
    worst = -np.inf
    for c in gp.all_constraints():
        worst = max(worst, evaluate(c, sol.values) - 1.0)
    return float(worst)
