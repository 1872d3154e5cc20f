"""Experiment pipelines: threshold sweep, budget sweep and mean-field comparison."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import svg
from .allocate import (
    AllocationResult,
    BudgetInfeasible,
    CostModel,
    layer_stats,
    sensitivity_sweep,
    solve_budget,
    solve_extinction,
    steady_state_row,
)
from .config import Tolerances
from .dynamics import (
    MeanFieldState,
    Trajectory,
    compute_equilibrium_b,
    default_dt,
    integrate_mean_field,
)
from .graph import BilayerNetwork, GraphSpec
from .stochastic import EnsembleTrace, InitialCondition, simulate_ensemble

log = logging.getLogger(__name__)

TRAJECTORY_HEADER = ["t", "phi_a_mean", "phi_a_min", "phi_a_max", "phi_b_mean", "phi_b_min", "phi_b_max"]
ENSEMBLE_HEADER = ["t", "frac_a_mean", "frac_a_q20", "frac_a_q80", "frac_b_mean", "frac_b_q20", "frac_b_q80"]
COMPARE_HEADER = ENSEMBLE_HEADER + ["mf_a", "mf_b", "abs_err_a", "abs_err_b"]
SWEEP_ALPHA_HEADER = ["alpha", "phi_a_min", "phi_a_mean", "phi_a_max",
                      "phi_b_min", "phi_b_mean", "phi_b_max", "converged", "t_final"]
SWEEP_BUDGET_HEADER = ["alpha", "budget", "status", "lambda_max_j11", "total_cost",
                       "phi_a_mean", "phi_b_mean", "converged", "t_final"]


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {cause}")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def json_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    def conv(v):
        if isinstance(v, (np.bool_, bool)):
            return bool(v)
        if isinstance(v, (np.floating, float)):
            return None if not math.isfinite(v) else float(v)
        if isinstance(v, np.integer):
            return int(v)
        return v

    return json.dumps([dict(zip(header, map(conv, r))) for r in rows], indent=1) + "\n"


def table_text(header: Sequence[str], rows: Iterable[Sequence], fmt: str = "csv") -> str:
    if fmt == "csv":
        return csv_text(header, rows)
    if fmt == "json":
        return json_text(header, rows)
    raise ValueError(f"unknown format {fmt!r}")


def parse_grid(text: str) -> np.ndarray:
    """``lo:hi:step`` (inclusive) or a comma-separated list."""
    text = text.strip()
    if not text:
        raise ValueError("empty grid")
    if ":" in text:
        lo, hi, step = (float(p) for p in text.split(":"))
        if step <= 0 or hi < lo:
            raise ValueError(f"bad grid {text!r}")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return np.round(lo + step * np.arange(count), 12)
    return np.array([float(p) for p in text.split(",")])


def trajectory_rows(net: BilayerNetwork, traj: Trajectory, every: int = 1):
    for k in range(0, len(traj.times), every):
        a = layer_stats(traj.phi_a[k], net.a.mask)
        b = layer_stats(traj.phi_b[k], net.b.mask)
        yield traj.times[k], a[1], a[0], a[2], b[1], b[0], b[2]


# --- threshold sweep ----------------------------------------------------------------------


@dataclass
class Figure2Config:
    graph: GraphSpec = field(default_factory=GraphSpec)
    epsilon: float | None = None
    delta_bar: float | None = None
    alphas: Sequence[float] = tuple(np.round(np.arange(0.5, 1.501, 0.05), 10))
    init: tuple[float, float] = (0.1, 0.1)
    t_max: float = 500.0
    tol: Tolerances = field(default_factory=Tolerances)


@dataclass
class Figure2Output:
    design: AllocationResult
    csv: str
    svg: str


def run_figure2(cfg: Figure2Config, net: BilayerNetwork | None = None) -> Figure2Output:
    net = _stage("generate", lambda: cfg.graph.build()) if net is None else net
    costs = CostModel.standard(net)
    design = _stage("design", lambda: solve_extinction(
        net, costs, cfg.epsilon, cfg.delta_bar, options=cfg.tol.solver_options()))
    rows = _stage("sweep", lambda: sensitivity_sweep(design, net, list(cfg.alphas), cfg.init, cfg.t_max))
    text = csv_text(SWEEP_ALPHA_HEADER, (list(r.as_dict().values()) for r in rows))
    x = np.array([r.alpha for r in rows])
    chart = svg.Chart("Steady states under scaled spreading rates", "alpha", "steady state", [
        svg.Series("A max", x, [r.phi_a_max for r in rows]),
        svg.Series("A mean", x, [r.phi_a_mean for r in rows]),
        svg.Series("A min", x, [r.phi_a_min for r in rows]),
        svg.Series("B max", x, [r.phi_b_max for r in rows], dashed=True),
        svg.Series("B mean", x, [r.phi_b_mean for r in rows], dashed=True),
        svg.Series("B min", x, [r.phi_b_min for r in rows], dashed=True),
    ])
    return Figure2Output(design, text, svg.render(chart))


# --- budget sweep -------------------------------------------------------------------------


@dataclass
class Figure3Config:
    graph: GraphSpec = field(default_factory=GraphSpec)
    multipliers: Sequence[float] = tuple(np.round(np.arange(0.5, 1.501, 0.1), 10))
    epsilon_star: float = 1e-4
    delta_bar: float | None = None
    init: tuple[float, float] = (0.1, 0.1)
    t_max: float = 500.0
    tol: Tolerances = field(default_factory=Tolerances)


@dataclass
class BudgetPoint:
    alpha: float
    budget: float
    status: str
    lambda_max_j11: float = float("nan")
    total_cost: float = float("nan")
    phi_a_mean: float = float("nan")
    phi_b_mean: float = float("nan")
    converged: bool = False
    t_final: float = float("nan")

    def row(self):
        return [self.alpha, self.budget, self.status, self.lambda_max_j11, self.total_cost,
                self.phi_a_mean, self.phi_b_mean, self.converged, self.t_final]


def budget_sweep(net: BilayerNetwork, costs: CostModel, c_star: float, multipliers: Sequence[float],
                 delta_bar: float | None = None, init=(0.1, 0.1), t_max: float = 500.0,
                 tol: Tolerances | None = None) -> list[BudgetPoint]:
    tol = tol or Tolerances()
    eq = compute_equilibrium_b(net, tol=tol.equilibrium_tol)
    points = []
    for a in multipliers:
        budget = float(a) * c_star
        try:
            res = solve_budget(net, costs, budget, delta_bar, eq=eq, options=tol.solver_options())
        except BudgetInfeasible as exc:
            log.info("alpha=%g: %s", a, exc)
            points.append(BudgetPoint(float(a), budget, "infeasible"))
            continue
        designed = res.designed_network(net)
        row = steady_state_row(float(a), designed, MeanFieldState.uniform(designed, *init), t_max, None)
        points.append(BudgetPoint(float(a), budget, "optimal", res.achieved_eigenvalue, res.total_cost,
                                  row.phi_a_mean, row.phi_b_mean, row.converged, row.t_final))
    return points


@dataclass
class Figure3Output:
    c_star: float
    points: list[BudgetPoint]
    csv: str
    svg: str


def run_figure3(cfg: Figure3Config, net: BilayerNetwork | None = None) -> Figure3Output:
    if len(cfg.multipliers) == 0:
        raise ValueError("budget multiplier grid is empty")
    net = _stage("generate", lambda: cfg.graph.build()) if net is None else net
    costs = CostModel.standard(net)
    ref = _stage("design", lambda: solve_extinction(
        net, costs, cfg.epsilon_star, cfg.delta_bar, options=cfg.tol.solver_options()))
    points = _stage("sweep", lambda: budget_sweep(
        net, costs, ref.total_cost, cfg.multipliers, cfg.delta_bar, cfg.init, cfg.t_max, cfg.tol))
    text = csv_text(SWEEP_BUDGET_HEADER, (p.row() for p in points))
    x = np.array([p.alpha for p in points])
    chart = svg.Chart("Mean steady states under a scaled budget", "budget / optimal cost", "mean steady state", [
        svg.Series("A mean", x, [p.phi_a_mean for p in points]),
        svg.Series("B mean", x, [p.phi_b_mean for p in points], dashed=True),
    ])
    return Figure3Output(ref.total_cost, points, text, svg.render(chart))


# --- stochastic vs mean field -------------------------------------------------------------


@dataclass
class CompareConfig:
    init: tuple[float, float] = (0.1, 0.1)
    t_end: float = 50.0
    trials: int = 150
    grid_points: int = 101
    seed: int = 0
    dt: float | None = None
    workers: int = 1


@dataclass
class Comparison:
    trace: EnsembleTrace
    mf_a: np.ndarray
    mf_b: np.ndarray

    @property
    def err_a(self) -> np.ndarray:
        return np.abs(self.trace.frac_a_mean - self.mf_a)

    @property
    def err_b(self) -> np.ndarray:
        return np.abs(self.trace.frac_b_mean - self.mf_b)

    def summary(self) -> dict:
        return {"max_abs_err_a": float(self.err_a.max()), "max_abs_err_b": float(self.err_b.max())}

    def csv(self) -> str:
        rows = (list(r) + [a, b, ea, eb] for r, a, b, ea, eb in
                zip(self.trace.rows(), self.mf_a, self.mf_b, self.err_a, self.err_b))
        return csv_text(COMPARE_HEADER, rows)

    def svg(self, title: str) -> str:
        t = self.trace.times
        lo_a, hi_a = self.trace.band("a")
        lo_b, hi_b = self.trace.band("b")
        chart = svg.Chart(title, "time", "fraction infected", [
            svg.Series("A ensemble", t, self.trace.frac_a_mean),
            svg.Series("B ensemble", t, self.trace.frac_b_mean),
            svg.Series("A mean field", t, self.mf_a, dashed=True),
            svg.Series("B mean field", t, self.mf_b, dashed=True),
        ], [svg.Band(t, lo_a, hi_a, 0), svg.Band(t, lo_b, hi_b, 1)])
        return svg.render(chart)


def mean_field_on_grid(net: BilayerNetwork, init: tuple[float, float], times: np.ndarray,
                       dt: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Layer-averaged mean-field trajectories interpolated onto ``times``."""
    dt = default_dt(net) if dt is None else dt
    traj = integrate_mean_field(net, MeanFieldState.uniform(net, *init), float(times[-1]) + dt, dt)
    a = traj.phi_a[:, net.a.mask].mean(axis=1)
    b = traj.phi_b[:, net.b.mask].mean(axis=1)
    return np.interp(times, traj.times, a), np.interp(times, traj.times, b)


def compare(net: BilayerNetwork, cfg: CompareConfig) -> Comparison:
    trace = simulate_ensemble(net, InitialCondition(*cfg.init), cfg.t_end, cfg.trials,
                              cfg.grid_points, cfg.seed, workers=cfg.workers)
    mf_a, mf_b = mean_field_on_grid(net, cfg.init, trace.times, cfg.dt)
    return Comparison(trace, mf_a, mf_b)


@dataclass
class Figure45Config:
    designed_graph: GraphSpec = field(default_factory=GraphSpec)
    endemic_graph: GraphSpec = field(default_factory=lambda: GraphSpec(seed=1, beta_range=(0.2, 0.6)))
    compare: CompareConfig = field(default_factory=CompareConfig)
    epsilon: float | None = None
    tol: Tolerances = field(default_factory=Tolerances)


@dataclass
class Figure45Output:
    designed: Comparison
    endemic: Comparison


def run_figure45(cfg: Figure45Config) -> Figure45Output:
    net = _stage("generate", lambda: cfg.designed_graph.build())
    design = _stage("design", lambda: solve_extinction(
        net, CostModel.standard(net), cfg.epsilon, options=cfg.tol.solver_options()))
    designed = _stage("simulate-designed", lambda: compare(design.designed_network(net), cfg.compare))
    endemic_net = _stage("generate-endemic", lambda: cfg.endemic_graph.build())
    endemic = _stage("simulate-endemic", lambda: compare(endemic_net, cfg.compare))
    return Figure45Output(designed, endemic)


def _stage(name, fn):
    try:
        return fn()
    except Exception as exc:  # re-raised with the stage name for the CLI
        raise StageError(name, exc) from exc
