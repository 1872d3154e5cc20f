"""Command-line entry point: ``bilayer-epi <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import pipelines as pl
from .allocate import (
    AllocationError,
    AllocationResult,
    CostModel,
    sensitivity_sweep,
    solve_budget,
    solve_extinction,
)
from .config import PROFILES, profile
from .dynamics import MeanFieldState, compute_equilibrium_b, default_dt, integrate_mean_field
from .graph import GraphSpec, load_network, save_network
from .stochastic import InitialCondition, simulate_ensemble

log = logging.getLogger("bilayer_epi")


class UsageError(ValueError):
    pass


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}") from None
    return lo, hi


def _grid(text: str) -> np.ndarray:
    try:
        grid = pl.parse_grid(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if grid.size == 0:
        raise UsageError("grid is empty")
    return grid


def _write(path: str | None, text: str | bytes) -> None:
    if path in (None, "-"):
        sys.stdout.write(text.decode() if isinstance(text, bytes) else text)
        return
    p = Path(path)
    if p.parent and not p.parent.exists():
        raise UsageError(f"output directory {p.parent} does not exist")
    p.write_bytes(text if isinstance(text, bytes) else text.encode())


def _read(path: str) -> bytes:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"file not found: {path}")
    return p.read_bytes()


def _seed(args) -> int:
    return args.sub_seed if getattr(args, "sub_seed", None) is not None else args.seed


def _costs(args, net):
    return CostModel.loads(_read(args.costs)) if args.costs else CostModel.standard(net)


def _graph_spec(args) -> GraphSpec:
    return GraphSpec(args.n, args.na, args.nb, args.overlap, args.density,
                     tuple(args.beta_range), tuple(args.delta_range), _seed(args))


# --- subcommands --------------------------------------------------------------------------


def cmd_gen_graph(args):
    _write(args.out, save_network(_graph_spec(args).build()))


def cmd_design_extinction(args):
    net = load_network(_read(args.graph))
    eq = compute_equilibrium_b(net, tol=args.tol.equilibrium_tol)
    res = solve_extinction(net, _costs(args, net), args.epsilon, args.delta_bar, eq=eq,
                           options=args.tol.solver_options())
    _write(args.out, res.dumps())
    log.info("design verified: lam_max(J11) = %.6g", res.achieved_eigenvalue)


def cmd_design_budget(args):
    net = load_network(_read(args.graph))
    eq = compute_equilibrium_b(net, tol=args.tol.equilibrium_tol)
    res = solve_budget(net, _costs(args, net), args.budget, args.delta_bar, eq=eq,
                       options=args.tol.solver_options())
    _write(args.out, res.dumps())


def cmd_sweep_alpha(args):
    net = load_network(_read(args.graph))
    design = AllocationResult.loads(_read(args.design), net)
    rows = sensitivity_sweep(design, net, _grid(args.alphas), (args.init_a, args.init_b), args.t_max)
    _write(args.out, pl.table_text(pl.SWEEP_ALPHA_HEADER, (list(r.as_dict().values()) for r in rows), args.format))


def cmd_sweep_budget(args):
    net = load_network(_read(args.graph))
    costs = _costs(args, net)
    ref = solve_extinction(net, costs, args.epsilon_star, args.delta_bar, options=args.tol.solver_options())
    pts = pl.budget_sweep(net, costs, ref.total_cost, _grid(args.multipliers), args.delta_bar,
                          (args.init_a, args.init_b), args.t_max, args.tol)
    _write(args.out, pl.table_text(pl.SWEEP_BUDGET_HEADER, (p.row() for p in pts), args.format))


def cmd_simulate_mf(args):
    net = load_network(_read(args.graph))
    dt = args.dt or default_dt(net)
    traj = integrate_mean_field(net, MeanFieldState.uniform(net, args.init_a, args.init_b), args.t_end, dt,
                                converged_deriv=args.tol.converged_deriv)
    every = max(1, int(round(args.sample_every / dt))) if args.sample_every else 1
    if args.wide:
        header = ["t"] + [f"phi_a_{i}" for i in range(net.n)] + [f"phi_b_{i}" for i in range(net.n)]
        rows = ([traj.times[k], *traj.phi_a[k], *traj.phi_b[k]] for k in range(0, len(traj.times), every))
    else:
        header, rows = pl.TRAJECTORY_HEADER, pl.trajectory_rows(net, traj, every)
    _write(args.out, pl.table_text(header, rows, args.format))


def cmd_simulate_stochastic(args):
    net = load_network(_read(args.graph))
    trace = simulate_ensemble(net, InitialCondition(args.init_a, args.init_b), args.t_end, args.trials,
                              args.grid_points, _seed(args), workers=args.threads, record_nodes=False)
    _write(args.out, pl.table_text(pl.ENSEMBLE_HEADER, trace.rows(), args.format))


def _compare_config(args) -> pl.CompareConfig:
    return pl.CompareConfig((args.init_a, args.init_b), args.t_end, args.trials, args.grid_points,
                            _seed(args), args.dt, args.threads)


def cmd_compare(args):
    net = load_network(_read(args.graph))
    cmp = pl.compare(net, _compare_config(args))
    if args.format == "json":
        rows = (list(r) + [a, b, ea, eb] for r, a, b, ea, eb in
                zip(cmp.trace.rows(), cmp.mf_a, cmp.mf_b, cmp.err_a, cmp.err_b))
        _write(args.out, pl.json_text(pl.COMPARE_HEADER, rows))
    else:
        _write(args.out, cmp.csv())
    if args.svg:
        _write(args.svg, cmp.svg("Stochastic ensemble and mean field"))
    print(json.dumps(cmp.summary()), file=sys.stderr)


def _outdir(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_fig2(args):
    cfg = pl.Figure2Config(graph=_graph_spec(args), epsilon=args.epsilon, alphas=_grid(args.alphas),
                           t_max=args.t_max, tol=args.tol)
    net = load_network(_read(args.graph)) if args.graph else None
    out = pl.run_figure2(cfg, net)
    d = _outdir(args)
    (d / "fig2.csv").write_text(out.csv)
    (d / "fig2.svg").write_text(out.svg)
    (d / "fig2_design.json").write_text(out.design.dumps())


def cmd_fig3(args):
    grid = _grid(args.multipliers)
    cfg = pl.Figure3Config(graph=_graph_spec(args), multipliers=grid, epsilon_star=args.epsilon_star,
                           t_max=args.t_max, tol=args.tol)
    net = load_network(_read(args.graph)) if args.graph else None
    out = pl.run_figure3(cfg, net)
    d = _outdir(args)
    (d / "fig3.csv").write_text(out.csv)
    (d / "fig3.svg").write_text(out.svg)


def cmd_fig45(args):
    spec = _graph_spec(args)
    endemic = GraphSpec(spec.n, spec.n_a, spec.n_b, spec.n_overlap, args.endemic_density,
                        tuple(args.endemic_beta_range), spec.delta_range, spec.seed + 1)
    cfg = pl.Figure45Config(spec, endemic, _compare_config(args), args.epsilon, args.tol)
    out = pl.run_figure45(cfg)
    d = _outdir(args)
    for name, cmp, title in (("fig4", out.designed, "Extinction-designed network"),
                             ("fig5", out.endemic, "Endemic random network")):
        (d / f"{name}.csv").write_text(cmp.csv())
        (d / f"{name}.svg").write_text(cmp.svg(title))
    summary = {"fig4": out.designed.summary(), "fig5": out.endemic.summary()}
    (d / "fig45_summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    print(json.dumps(summary), file=sys.stderr)


# --- parser -------------------------------------------------------------------------------


def _add_graph_gen(p, density=0.1):
    d = GraphSpec()
    p.add_argument("--n", type=int, default=d.n)
    p.add_argument("--na", type=int, default=d.n_a)
    p.add_argument("--nb", type=int, default=d.n_b)
    p.add_argument("--overlap", type=int, default=d.n_overlap)
    p.add_argument("--density", type=float, default=density)
    p.add_argument("--beta-range", type=_range, default=d.beta_range, metavar="LO:HI")
    p.add_argument("--delta-range", type=_range, default=d.delta_range, metavar="LO:HI")


def _add_seed(p):
    p.add_argument("--seed", dest="sub_seed", type=int, default=None, help="overrides the global --seed")


def _add_init(p):
    p.add_argument("--init-a", type=float, default=0.1, help="initial infection probability for A")
    p.add_argument("--init-b", type=float, default=0.1, help="initial infection probability for B")


def _add_sim(p):
    _add_init(p)
    p.add_argument("--t-end", type=float, default=50.0)
    p.add_argument("--trials", type=int, default=150)
    p.add_argument("--grid-points", type=int, default=101)
    p.add_argument("--dt", type=float, default=None)
    _add_seed(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bilayer-epi", description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1, help="worker processes for stochastic trials")
    parser.add_argument("--tol-profile", choices=sorted(PROFILES), default="default")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-graph", help="generate a random bilayer network")
    _add_graph_gen(p)
    _add_seed(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_gen_graph)

    p = sub.add_parser("design-extinction", help="minimum-cost rates that extinguish A")
    p.add_argument("--graph", required=True)
    p.add_argument("--costs", default=None, help="cost-model JSON (default: 1/beta and t^2 + t)")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--delta-bar", type=float, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_design_extinction)

    p = sub.add_parser("design-budget", help="rates minimising A's growth rate within a budget")
    p.add_argument("--graph", required=True)
    p.add_argument("--costs", default=None)
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--delta-bar", type=float, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_design_budget)

    p = sub.add_parser("sweep-alpha", help="steady states of a design with scaled spreading rates")
    p.add_argument("--design", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--alphas", default="0.5:1.5:0.05")
    p.add_argument("--t-max", type=float, default=500.0)
    _add_init(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sweep_alpha)

    p = sub.add_parser("sweep-budget", help="budget designs at multiples of the optimal extinction cost")
    p.add_argument("--graph", required=True)
    p.add_argument("--costs", default=None)
    p.add_argument("--multipliers", default="0.5:1.5:0.1")
    p.add_argument("--epsilon-star", type=float, default=1e-4)
    p.add_argument("--delta-bar", type=float, default=None)
    p.add_argument("--t-max", type=float, default=500.0)
    _add_init(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sweep_budget)

    p = sub.add_parser("simulate-mf", help="integrate the mean-field equations")
    p.add_argument("--graph", required=True)
    _add_init(p)
    p.add_argument("--t-end", type=float, default=50.0)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--sample-every", type=float, default=None, help="output spacing in time units")
    p.add_argument("--wide", action="store_true", help="one column per node")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate_mf)

    p = sub.add_parser("simulate-stochastic", help="Gillespie ensemble with 60%% bands")
    p.add_argument("--graph", required=True)
    _add_sim(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate_stochastic)

    p = sub.add_parser("compare", help="stochastic ensemble against mean field")
    p.add_argument("--graph", required=True)
    _add_sim(p)
    p.add_argument("--out", default="-")
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fig2", help="threshold sweep of an extinction design")
    _add_graph_gen(p)
    _add_seed(p)
    p.add_argument("--graph", default=None, help="use this network instead of generating one")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--alphas", default="0.5:1.5:0.05")
    p.add_argument("--t-max", type=float, default=500.0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_fig2)

    p = sub.add_parser("fig3", help="budget sweep")
    _add_graph_gen(p)
    _add_seed(p)
    p.add_argument("--graph", default=None)
    p.add_argument("--multipliers", default="0.5:1.5:0.1")
    p.add_argument("--epsilon-star", type=float, default=1e-4)
    p.add_argument("--t-max", type=float, default=500.0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_fig3)

    p = sub.add_parser("fig45", help="stochastic vs mean field on a designed and an endemic network")
    _add_graph_gen(p, density=0.5)
    _add_sim(p)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--endemic-density", type=float, default=0.1)
    p.add_argument("--endemic-beta-range", type=_range, default=(0.2, 0.6), metavar="LO:HI")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_fig45)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("BILAYER_EPI_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    args.tol = profile(args.tol_profile)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        args.func(args)
    except pl.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (AllocationError, ValueError, RuntimeError) as exc:
        print(f"error ({args.command}): {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
