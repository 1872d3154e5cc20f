"""Rate design for the unwanted process A.

Two geometric programs over layer-A rates are built here. Both replace
the eigenvalue condition on ``J11`` by Perron-vector inequalities with
``t_i = delta_bar - delta_i``:

* extinction: minimise total cost subject to ``lam_max(J11) <= -epsilon``;
* budget: minimise ``lam`` (hence ``lam_max(J11)``) subject to a total cost cap.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from . import gp
from .dynamics import (
    EquilibriumB,
    MeanFieldState,
    compute_equilibrium_b,
    extinction_certificate,
    integrate_to_steady_state,
)
from .graph import BilayerNetwork

log = logging.getLogger(__name__)

TIGHT_TOL = 1e-6
CERT_TOL = 1e-6


class AllocationError(RuntimeError):
    pass


class BudgetInfeasible(AllocationError):
    def __init__(self, budget: float, violation: float):
        self.budget = budget
        self.violation = violation
        super().__init__(
            f"budget {budget:.6g} is infeasible (phase-I max log-constraint value {violation:.3g}); "
            f"the budget must exceed the minimum achievable cost"
        )


class VerificationError(AllocationError):
    pass


Terms = list[tuple[float, float]]


def beta_var(j: int, i: int) -> str:
    return f"b_{j}_{i}"


def t_var(i: int) -> str:
    return f"t_{i}"


def u_var(i: int) -> str:
    return f"u_{i}"


LAM = "lam"


@dataclass
class CostModel:
    """Per-edge costs ``sum c*beta**p`` (all ``p < 0``) and per-node costs ``sum c*t**p``.

    ``delta_caps`` holds the largest achievable healing rate of each layer-A node.
    """

    edge_terms: dict[tuple[int, int], Terms]
    node_terms: dict[int, Terms]
    delta_caps: dict[int, float]

    @classmethod
    def standard(cls, net: BilayerNetwork, delta_caps: dict[int, float] | None = None) -> "CostModel":
        """``f = 1/beta`` on every edge and ``t**2 + t`` on every node; caps default to the network's rates."""
        edges = {(j, i): [(1.0, -1.0)] for j, i in net.a.edge_list()}
        nodes = {i: [(1.0, 2.0), (1.0, 1.0)] for i in net.a.nodes.tolist()}
        if delta_caps is None:
            delta_caps = {i: float(net.delta_a[i]) for i in net.a.nodes.tolist()}
        return cls(edges, nodes, dict(delta_caps))

    def validate(self, net: BilayerNetwork) -> None:
        edges = set(net.a.edge_list())
        if set(self.edge_terms) != edges:
            missing = sorted(edges - set(self.edge_terms))
            extra = sorted(set(self.edge_terms) - edges)
            raise ValueError(f"edge costs do not match layer A (missing {missing[:3]}, extra {extra[:3]})")
        nodes = set(net.a.nodes.tolist())
        for name, d in (("node cost", self.node_terms), ("delta cap", self.delta_caps)):
            if set(d) != nodes:
                raise ValueError(f"{name} entries do not match layer-A nodes")
        for e, terms in self.edge_terms.items():
            if not terms:
                raise ValueError(f"edge {e} has no cost terms")
            for c, p in terms:
                if not c > 0 or not p < 0:
                    raise ValueError(f"edge {e}: cost must be decreasing (c > 0, p < 0), got ({c}, {p})")
        for i, terms in self.node_terms.items():
            if not terms:
                raise ValueError(f"node {i} has no cost terms")
            for c, _ in terms:
                if not c > 0:
                    raise ValueError(f"node {i}: cost coefficients must be positive")
        for i, cap in self.delta_caps.items():
            if not cap > 0:
                raise ValueError(f"node {i}: delta cap must be positive")

    def edge_cost(self, j: int, i: int) -> gp.Posynomial:
        v = beta_var(j, i)
        return gp.Posynomial([gp.Monomial(c, {v: p}) for c, p in self.edge_terms[(j, i)]])

    def node_cost(self, i: int) -> gp.Posynomial:
        return gp.posynomial_transform(self.node_terms[i], self.delta_caps[i], var=t_var(i))

    def total(self, net: BilayerNetwork, beta: np.ndarray, t: np.ndarray) -> float:
        """Cost of edge rates ``beta`` (layer edge order) and slack values ``t`` (length n)."""
        cost = 0.0
        for (j, i), b in zip(net.a.edge_list(), beta.tolist()):
            cost += sum(c * b ** p for c, p in self.edge_terms[(j, i)])
        for i in net.a.nodes.tolist():
            cost += sum(c * t[i] ** p for c, p in self.node_terms[i])
        return cost

    def min_cap(self) -> float:
        return min(self.delta_caps.values())

    def max_cap(self) -> float:
        return max(self.delta_caps.values())

    def to_dict(self) -> dict:
        return {
            "edge_costs": [
                {"from": j, "to": i, "terms": [{"c": c, "p": p} for c, p in terms]}
                for (j, i), terms in sorted(self.edge_terms.items())
            ],
            "node_costs": [
                {"node": i, "delta_hat": self.delta_caps[i], "terms": [{"c": c, "p": p} for c, p in terms]}
                for i, terms in sorted(self.node_terms.items())
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CostModel":
        edges = {
            (int(e["from"]), int(e["to"])): [(float(t["c"]), float(t["p"])) for t in e["terms"]]
            for e in doc["edge_costs"]
        }
        nodes, caps = {}, {}
        for item in doc["node_costs"]:
            i = int(item["node"])
            nodes[i] = [(float(t["c"]), float(t["p"])) for t in item["terms"]]
            caps[i] = float(item["delta_hat"])
        return cls(edges, nodes, caps)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def loads(cls, text: str | bytes) -> "CostModel":
        return cls.from_dict(json.loads(text))


def default_parameters(costs: CostModel, epsilon: float | None = None,
                       delta_bar: float | None = None) -> tuple[float, float]:
    """``epsilon = 0.01 * min cap`` and ``delta_bar = 1.05 * max cap`` unless given."""
    if epsilon is None:
        epsilon = 0.01 * costs.min_cap()
    if delta_bar is None:
        delta_bar = 1.05 * costs.max_cap()
    return epsilon, delta_bar


def _check_delta_bar(costs: CostModel, delta_bar: float) -> None:
    if not delta_bar > costs.max_cap():
        raise ValueError(f"delta_bar={delta_bar} must exceed the largest delta cap {costs.max_cap()}")


def _eigen_rows(net: BilayerNetwork, z: np.ndarray, epsilon: float | None) -> list[gp.Posynomial]:
    lam = gp.Variable(LAM)
    rows = []
    src, dst = net.a.src, net.a.dst
    for i in net.a.nodes.tolist():
        ui = gp.Variable(u_var(i))
        terms = []
        for e in np.flatnonzero(dst == i).tolist():
            j = int(src[e])
            terms.append(gp.Variable(beta_var(j, i)) * gp.Variable(u_var(j)) * float(z[i]))
        terms.append(gp.Variable(t_var(i)) * ui)
        if epsilon is not None:
            terms.append(ui * epsilon)
        rows.append(gp.Posynomial(terms) / (lam * ui))
    return rows


def _t_rows(net: BilayerNetwork, costs: CostModel, delta_bar: float):
    rows, names = [], []
    for i in net.a.nodes.tolist():
        t = gp.Variable(t_var(i))
        rows.append(t / delta_bar)
        names.append(f"tmax_{i}")
    for i in net.a.nodes.tolist():
        t = gp.Variable(t_var(i))
        rows.append((delta_bar - costs.delta_caps[i]) / t)
        names.append(f"tmin_{i}")
    return rows, names


def _variables(net: BilayerNetwork) -> list[str]:
    names = [beta_var(j, i) for j, i in net.a.edge_list()]
    names += [t_var(i) for i in net.a.nodes.tolist()]
    names += [LAM]
    names += [u_var(i) for i in net.a.nodes.tolist()]
    return names


def _cost_posynomial(net: BilayerNetwork, costs: CostModel) -> gp.Posynomial:
    total = None
    for j, i in net.a.edge_list():
        f = costs.edge_cost(j, i)
        total = f if total is None else total + f
    for i in net.a.nodes.tolist():
        g = costs.node_cost(i)
        total = g if total is None else total + g
    return total


def _normalisation(net: BilayerNetwork) -> gp.Monomial:
    # the Perron vector is defined up to scale
    return gp.Variable(u_var(int(net.a.nodes[0])))


def build_extinction_program(
    net: BilayerNetwork,
    eq: EquilibriumB,
    costs: CostModel,
    epsilon: float,
    delta_bar: float,
    extra_constraints: Sequence[gp.Posynomial] = (),
    extra_equalities: Sequence[gp.Monomial] = (),
) -> gp.GeometricProgram:
    """Minimum-cost program whose optimum has ``lam_max(J11) = lam - delta_bar - epsilon``."""
    costs.validate(net)
    _check_delta_bar(costs, delta_bar)
    if not 0 < epsilon < costs.min_cap():
        raise ValueError(f"epsilon={epsilon} must lie in (0, {costs.min_cap()})")
    z = eq.z
    eig = _eigen_rows(net, z, epsilon)
    names = [f"eig_{i}" for i in net.a.nodes.tolist()]
    trows, tnames = _t_rows(net, costs, delta_bar)
    lam_row = gp.Variable(LAM) / delta_bar
    constraints = eig + trows + [lam_row] + list(extra_constraints)
    names = names + tnames + ["lam_max"] + [f"extra_{k}" for k in range(len(extra_constraints))]
    return gp.GeometricProgram(
        _cost_posynomial(net, costs),
        constraints,
        [_normalisation(net)] + list(extra_equalities),
        variables=_variables(net),
        names=names,
    )


def build_budget_program(
    net: BilayerNetwork,
    eq: EquilibriumB,
    costs: CostModel,
    budget: float,
    delta_bar: float,
    extra_constraints: Sequence[gp.Posynomial] = (),
    extra_equalities: Sequence[gp.Monomial] = (),
) -> gp.GeometricProgram:
    """Program minimising ``lam`` under ``total cost <= budget``; ``lam_max(J11) = lam - delta_bar``."""
    costs.validate(net)
    _check_delta_bar(costs, delta_bar)
    if not budget > 0:
        raise ValueError("budget must be positive")
    eig = _eigen_rows(net, eq.z, None)
    names = [f"eig_{i}" for i in net.a.nodes.tolist()]
    trows, tnames = _t_rows(net, costs, delta_bar)
    budget_row = _cost_posynomial(net, costs) / budget
    constraints = eig + [budget_row] + trows + list(extra_constraints)
    names = names + ["budget"] + tnames + [f"extra_{k}" for k in range(len(extra_constraints))]
    return gp.GeometricProgram(
        gp.Variable(LAM),
        constraints,
        [_normalisation(net)] + list(extra_equalities),
        variables=_variables(net),
        names=names,
    )


@dataclass
class AllocationResult:
    kind: str
    beta_a_star: np.ndarray  # layer-A edge order
    delta_a_star: np.ndarray  # length n, zero outside layer A
    lambda_star: float
    u_star: np.ndarray  # length n, zero outside layer A, max 1
    total_cost: float
    achieved_eigenvalue: float
    epsilon: float | None
    delta_bar: float
    budget: float | None = None
    tightness: float = float("nan")
    gp_status: str = gp.OPTIMAL
    newton_steps: int = 0
    kkt_residual: float = float("nan")
    edges: list[tuple[int, int]] = field(default_factory=list)

    @property
    def predicted_eigenvalue(self) -> float:
        """``lam_max(J11)`` implied by the solver's ``lam`` when the eigen rows are tight."""
        return self.lambda_star - self.delta_bar - (self.epsilon or 0.0)

    def designed_network(self, net: BilayerNetwork, alpha: float = 1.0) -> BilayerNetwork:
        return net.with_layer_a(alpha * self.beta_a_star, self.delta_a_star)

    def certificate_residual(self, net: BilayerNetwork, eq: EquilibriumB) -> float:
        """Sup-norm of ``(J11 + (delta_bar + eps) I) u - lam u`` on layer-A nodes."""
        from .dynamics import assemble_jacobian

        designed = self.designed_network(net)
        j11 = assemble_jacobian(designed, eq).j11
        idx = net.a.nodes
        shift = self.delta_bar + (self.epsilon or 0.0)
        u = self.u_star[idx]
        r = j11[np.ix_(idx, idx)] @ u + shift * u - self.lambda_star * u
        return float(np.abs(r).max())

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "edges": [{"from": j, "to": i, "beta": b} for (j, i), b in zip(self.edges, self.beta_a_star.tolist())],
            "delta": [{"node": int(i), "value": float(self.delta_a_star[i])}
                      for i in np.flatnonzero(self.delta_a_star > 0).tolist()],
            "u": [{"node": int(i), "value": float(self.u_star[i])}
                  for i in np.flatnonzero(self.u_star > 0).tolist()],
        }
        for k in ("lambda_star", "total_cost", "achieved_eigenvalue", "epsilon", "delta_bar",
                  "budget", "tightness", "gp_status", "newton_steps", "kkt_residual"):
            d[k] = getattr(self, k)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, doc: dict, n: int) -> "AllocationResult":
        edges = [(int(e["from"]), int(e["to"])) for e in doc["edges"]]
        beta = np.array([float(e["beta"]) for e in doc["edges"]])
        delta = np.zeros(n)
        for item in doc["delta"]:
            delta[int(item["node"])] = float(item["value"])
        u = np.zeros(n)
        for item in doc.get("u", []):
            u[int(item["node"])] = float(item["value"])
        return cls(
            kind=doc["kind"], beta_a_star=beta, delta_a_star=delta,
            lambda_star=float(doc["lambda_star"]), u_star=u,
            total_cost=float(doc["total_cost"]), achieved_eigenvalue=float(doc["achieved_eigenvalue"]),
            epsilon=doc.get("epsilon"), delta_bar=float(doc["delta_bar"]), budget=doc.get("budget"),
            tightness=float(doc.get("tightness", float("nan"))), gp_status=doc.get("gp_status", gp.OPTIMAL),
            newton_steps=int(doc.get("newton_steps", 0)), kkt_residual=float(doc.get("kkt_residual", float("nan"))),
            edges=edges,
        )

    @classmethod
    def loads(cls, text: str | bytes, net: BilayerNetwork) -> "AllocationResult":
        res = cls.from_dict(json.loads(text), net.n)
        if res.edges != net.a.edge_list():
            raise ValueError("design edges do not match the network's layer A")
        return res


def _extract(net: BilayerNetwork, sol: gp.GPSolution, delta_bar: float):
    vals = sol.values
    beta = np.array([vals[beta_var(j, i)] for j, i in net.a.edge_list()])
    t = np.zeros(net.n)
    u = np.zeros(net.n)
    for i in net.a.nodes.tolist():
        t[i] = vals[t_var(i)]
        u[i] = vals[u_var(i)]
    u /= u.max()
    delta = np.where(net.a.mask, delta_bar - t, 0.0)
    return beta, t, delta, u, vals[LAM]


def interior_guess(net: BilayerNetwork, eq: EquilibriumB, costs: CostModel,
                   delta_bar: float, epsilon: float = 0.0) -> dict[str, float]:
    """A point strictly inside the eigen-row and ``t`` constraints (``u = 1``)."""
    lam = delta_bar - 0.25 * costs.min_cap()
    z = eq.z
    indeg = np.bincount(net.a.dst, minlength=net.n)
    x = {LAM: lam}
    for i in net.a.nodes.tolist():
        t = delta_bar - 0.5 * costs.delta_caps[i]
        x[t_var(i)] = t
        x[u_var(i)] = 1.0
        share = (lam - t - epsilon) / (2.0 * z[i] * indeg[i])
        for e in np.flatnonzero(net.a.dst == i).tolist():
            x[beta_var(int(net.a.src[e]), i)] = share
    return x


def _eigen_row_values(gprog: gp.GeometricProgram, sol: gp.GPSolution) -> np.ndarray:
    idx = [k for k, nm in enumerate(gprog.names) if nm.startswith("eig_")]
    return np.asarray(sol.constraint_values)[idx]


def solve_extinction(
    net: BilayerNetwork,
    costs: CostModel,
    epsilon: float | None = None,
    delta_bar: float | None = None,
    eq: EquilibriumB | None = None,
    options: gp.SolverOptions | None = None,
    verify: bool = True,
    tight_tol: float = TIGHT_TOL,
) -> AllocationResult:
    """Cheapest layer-A rates that make the A-free equilibrium exponentially stable."""
    epsilon, delta_bar = default_parameters(costs, epsilon, delta_bar)
    if eq is None:
        eq = compute_equilibrium_b(net)
    prog = build_extinction_program(net, eq, costs, epsilon, delta_bar)
    sol = gp.solve(prog, options, x0=interior_guess(net, eq, costs, delta_bar, epsilon))
    if sol.status != gp.OPTIMAL:
        raise AllocationError(
            f"extinction program returned status {sol.status!r} although it is always feasible "
            f"(phase-I value {sol.phase1_value:.3g}, {sol.newton_steps} Newton steps); "
            f"this indicates a numerical problem"
        )
    beta, t, delta, u, lam = _extract(net, sol, delta_bar)
    rows = _eigen_row_values(prog, sol)
    tightness = float(np.abs(rows - 1.0).max())
    designed = net.with_layer_a(beta, delta)
    cert = extinction_certificate(designed, eq)
    result = AllocationResult(
        kind="extinction", beta_a_star=beta, delta_a_star=delta, lambda_star=lam, u_star=u,
        total_cost=costs.total(net, beta, t), achieved_eigenvalue=cert.eigenvalue,
        epsilon=epsilon, delta_bar=delta_bar, tightness=tightness, gp_status=sol.status,
        newton_steps=sol.newton_steps, kkt_residual=sol.kkt_residual, edges=net.a.edge_list(),
    )
    log.info("extinction design: cost %.6g, lam_max(J11) %.6g, tightness %.2g",
             result.total_cost, cert.eigenvalue, tightness)
    if verify:
        if cert.eigenvalue > -epsilon + CERT_TOL:
            raise VerificationError(
                f"designed network has lam_max(J11) = {cert.eigenvalue:.6g} > -epsilon = {-epsilon:.6g}"
            )
        if tightness > tight_tol:
            raise VerificationError(f"eigen rows not tight at optimum (max |row - 1| = {tightness:.3g})")
    return result


def tighten_rows(net: BilayerNetwork, eq: EquilibriumB, beta: np.ndarray, t: np.ndarray,
                 u: np.ndarray, lam: float, epsilon: float = 0.0) -> np.ndarray:
    """Raise each node's incoming rates until its eigen row holds with equality."""
    z = eq.z
    beta = beta.copy()
    src, dst = net.a.src, net.a.dst
    for i in net.a.nodes.tolist():
        e = np.flatnonzero(dst == i)
        spread = float(np.sum(beta[e] * z[i] * u[src[e]]))
        room = (lam - t[i] - epsilon) * u[i]
        if spread > 0 and room > spread:
            beta[e] *= room / spread
    return beta


def solve_budget(
    net: BilayerNetwork,
    costs: CostModel,
    budget: float,
    delta_bar: float | None = None,
    eq: EquilibriumB | None = None,
    options: gp.SolverOptions | None = None,
) -> AllocationResult:
    """Layer-A rates minimising ``lam_max(J11)`` within ``budget``.

    Raises :class:`BudgetInfeasible` when the budget is below the smallest
    achievable cost.
    """
    _, delta_bar = default_parameters(costs, None, delta_bar)
    if eq is None:
        eq = compute_equilibrium_b(net)
    prog = build_budget_program(net, eq, costs, budget, delta_bar)
    sol = gp.solve(prog, options, x0=interior_guess(net, eq, costs, delta_bar))
    if sol.status == gp.INFEASIBLE:
        raise BudgetInfeasible(budget, sol.phase1_value)
    if sol.status != gp.OPTIMAL:
        raise AllocationError(f"budget program stopped with status {sol.status!r}")
    beta, t, _, u, lam = _extract(net, sol, delta_bar)
    beta = tighten_rows(net, eq, beta, t, u, lam)
    delta = np.where(net.a.mask, delta_bar - t, 0.0)
    designed = net.with_layer_a(beta, delta)
    cert = extinction_certificate(designed, eq)
    z = eq.z
    rows = []
    for i in net.a.nodes.tolist():
        e = np.flatnonzero(net.a.dst == i)
        rows.append((np.sum(beta[e] * z[i] * u[net.a.src[e]]) + t[i] * u[i]) / (lam * u[i]))
    total = costs.total(net, beta, t)
    result = AllocationResult(
        kind="budget", beta_a_star=beta, delta_a_star=delta, lambda_star=lam, u_star=u,
        total_cost=total, achieved_eigenvalue=cert.eigenvalue, epsilon=None,
        delta_bar=delta_bar, budget=budget, tightness=float(np.abs(np.array(rows) - 1).max()),
        gp_status=sol.status, newton_steps=sol.newton_steps, kkt_residual=sol.kkt_residual,
        edges=net.a.edge_list(),
    )
    log.info("budget design (C=%.6g): cost %.6g, lam_max(J11) %.6g", budget, total, cert.eigenvalue)
    return result


@dataclass
class SweepRow:
    alpha: float
    phi_a_min: float
    phi_a_mean: float
    phi_a_max: float
    phi_b_min: float
    phi_b_mean: float
    phi_b_max: float
    converged: bool
    t_final: float

    def as_dict(self) -> dict:
        return asdict(self)


def layer_stats(phi: np.ndarray, mask: np.ndarray) -> tuple[float, float, float]:
    v = phi[mask]
    return float(v.min()), float(v.mean()), float(v.max())


def steady_state_row(alpha: float, net: BilayerNetwork, init: MeanFieldState,
                     t_max: float, dt: float | None) -> SweepRow:
    ss = integrate_to_steady_state(net, init, dt=dt, t_max=t_max)
    a = layer_stats(ss.state.phi_a, net.a.mask)
    b = layer_stats(ss.state.phi_b, net.b.mask)
    return SweepRow(alpha, *a, *b, ss.converged, ss.t)


def sensitivity_sweep(
    result: AllocationResult,
    net: BilayerNetwork,
    alphas: Sequence[float],
    init: tuple[float, float] = (0.1, 0.1),
    t_max: float = 500.0,
    dt: float | None = None,
) -> list[SweepRow]:
    """Mean-field steady states with layer-A rates scaled to ``alpha * beta_star``."""
    rows = []
    for alpha in alphas:
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        designed = result.designed_network(net, alpha)
        start = MeanFieldState.uniform(designed, *init)
        row = steady_state_row(float(alpha), designed, start, t_max, dt)
        if not row.converged:
            log.warning("alpha=%g: no steady state by t=%g", alpha, row.t_final)
        rows.append(row)
    return rows
