"""Exact simulation of the two-epidemic Markov process and a brute-force oracle.

Each node is susceptible (S), infected by A or infected by B. A susceptible
node ``i`` catches A at rate ``Y^A_i = sum_j beta^A_ji [j in I_A]`` and B at
the analogous rate. Infected nodes heal back to S at ``delta_i``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from .graph import BilayerNetwork

log = logging.getLogger(__name__)

S, IA, IB = 0, 1, 2
LABELS = ("S", "I_A", "I_B")
MAX_EXACT_NODES = 6
UNIFORMIZATION_TOL = 1e-12
BAND_QUANTILES = (0.2, 0.8)


class AbsorbingState(RuntimeError):
    """No transition is possible (every node susceptible)."""


@dataclass
class ProcessState:
    labels: np.ndarray  # int8 per node, values S / IA / IB
    time: float = 0.0

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int8)

    def validate(self, net: BilayerNetwork) -> None:
        lab = self.labels
        if lab.shape != (net.n,):
            raise ValueError(f"state has {lab.shape[0]} labels, network has {net.n} nodes")
        if not np.isin(lab, (S, IA, IB)).all():
            raise ValueError("labels must be S, I_A or I_B")
        bad = np.flatnonzero((lab == IA) & ~net.a.mask)
        if bad.size:
            raise ValueError(f"node {bad[0]} is labelled I_A but is not in layer A")
        bad = np.flatnonzero((lab == IB) & ~net.b.mask)
        if bad.size:
            raise ValueError(f"node {bad[0]} is labelled I_B but is not in layer B")

    def copy(self) -> "ProcessState":
        return ProcessState(self.labels.copy(), self.time)


def transition_rates(net: BilayerNetwork, labels: np.ndarray) -> np.ndarray:
    """``(n, 3)`` array: rate of node ``i`` moving to S, I_A and I_B."""
    xa = (labels == IA).astype(float)
    xb = (labels == IB).astype(float)
    ya = net.a.in_pressure(xa)
    yb = net.b.in_pressure(xb)
    sus = labels == S
    r = np.zeros((net.n, 3))
    r[:, S] = np.where(labels == IA, net.delta_a, 0.0) + np.where(labels == IB, net.delta_b, 0.0)
    r[:, IA] = np.where(sus, ya, 0.0)
    r[:, IB] = np.where(sus, yb, 0.0)
    return r


def gillespie_step(net: BilayerNetwork, state: ProcessState,
                   rng: np.random.Generator) -> tuple[ProcessState, float]:
    """One exact event from scratch. Returns the new state and the waiting time."""
    r = transition_rates(net, state.labels).ravel()
    total = r.sum()
    if total <= 0:
        raise AbsorbingState("total event rate is zero")
    wait = rng.exponential(1.0 / total)
    k = int(np.searchsorted(np.cumsum(r), rng.random() * total, side="right"))
    k = min(k, r.size - 1)
    labels = state.labels.copy()
    labels[k // 3] = k % 3
    return ProcessState(labels, state.time + wait), wait


class Simulator:
    """Direct-method simulator with incrementally maintained infection pressures."""

    def __init__(self, net: BilayerNetwork):
        self.net = net
        n = net.n
        self.delta = np.stack([np.zeros(n), net.delta_a, net.delta_b], axis=1)
        self.out = []
        for layer in (net.a, net.b):
            m = sp.csr_matrix((layer.beta, (layer.src, layer.dst)), shape=(n, n))
            self.out.append([
                (m.indices[m.indptr[j]:m.indptr[j + 1]].copy(), m.data[m.indptr[j]:m.indptr[j + 1]].copy())
                for j in range(n)
            ])
        # touched[old][new][i]: nodes whose rate changes when node i goes old -> new
        self.touched = {}
        for old in (S, IA, IB):
            for new in (S, IA, IB):
                if old != new:
                    self.touched[old, new] = [
                        np.unique(np.concatenate([[i]] + [self.out[c - 1][i][0] for c in (old, new) if c != S]))
                        for i in range(n)
                    ]

    def reset(self, labels: np.ndarray) -> None:
        n = self.net.n
        self.labels = labels.astype(np.int8).copy()
        self.pressure = np.zeros((3, n))  # row 0 unused so rows line up with labels
        self.count = np.zeros((3, n), dtype=np.int64)
        for j in range(n):
            c = self.labels[j]
            if c != S:
                self._spread(j, c, +1)
        self.rate = np.zeros(n)
        self._refresh(np.arange(n))
        self.n_infected = np.array([np.sum(self.labels == IA), np.sum(self.labels == IB)])

    def _spread(self, j: int, c: int, sign: int) -> None:
        targets, betas = self.out[c - 1][j]
        cnt, p = self.count[c], self.pressure[c]
        cnt[targets] += sign
        p[targets] += sign * betas
        # exact zero once no infected in-neighbour is left, so no spurious infections
        p[targets[cnt[targets] == 0]] = 0.0

    def _refresh(self, nodes: np.ndarray) -> None:
        lab = self.labels[nodes]
        self.rate[nodes] = np.where(
            lab == S,
            self.pressure[IA, nodes] + self.pressure[IB, nodes],
            self.delta[nodes, lab],
        )

    def _set(self, i: int, new: int) -> None:
        old = int(self.labels[i])
        if old != S:
            self._spread(i, old, -1)
            self.n_infected[old - 1] -= 1
        self.labels[i] = new
        if new != S:
            self._spread(i, new, +1)
            self.n_infected[new - 1] += 1
        self._refresh(self.touched[old, new][i])

    def step(self, rng: np.random.Generator) -> float:
        """Apply one event and return its waiting time (``inf`` when absorbed)."""
        wait = self.step_preview(rng)
        if math.isfinite(wait):
            self.commit(rng)
        return wait

    def run(self, labels: np.ndarray, grid: np.ndarray, rng: np.random.Generator, record_nodes: bool = False):
        """Sample the piecewise-constant path at ``grid`` (sorted, starting at or after 0)."""
        self.reset(labels)
        g = len(grid)
        counts = np.zeros((g, 2))
        nodes = np.zeros((g, 2, self.net.n), dtype=np.int8) if record_nodes else None
        t = 0.0
        k = 0
        while k < g:
            wait = self.step_preview(rng)
            t_next = t + wait
            while k < g and grid[k] < t_next:
                counts[k] = self.n_infected
                if record_nodes:
                    nodes[k, 0] = self.labels == IA
                    nodes[k, 1] = self.labels == IB
                k += 1
            if k >= g:
                break
            self.commit(rng)
            t = t_next
        return counts, nodes

    # splitting step() lets run() record the state before applying the event
    def step_preview(self, rng: np.random.Generator) -> float:
        self._cum = np.cumsum(self.rate)
        total = self._cum[-1]
        if total <= 0:
            return math.inf
        return rng.exponential(1.0 / total)

    def commit(self, rng: np.random.Generator) -> None:
        cum = self._cum
        i = min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), len(cum) - 1)
        if self.labels[i] == S:
            pa, pb = self.pressure[IA, i], self.pressure[IB, i]
            self._set(i, IA if rng.random() * (pa + pb) < pa else IB)
        else:
            self._set(i, S)


# --- initial conditions -----------------------------------------------------------------


@dataclass
class InitialCondition:
    """Independent per-node infection: A with probability ``p_a``, B with ``p_b``.

    Probabilities are scalars or length-n arrays; they are zeroed outside
    the respective layer and must satisfy ``p_a + p_b <= 1``.
    """

    p_a: float | np.ndarray = 0.1
    p_b: float | np.ndarray = 0.1

    def probabilities(self, net: BilayerNetwork) -> tuple[np.ndarray, np.ndarray]:
        pa = np.broadcast_to(np.asarray(self.p_a, dtype=float), (net.n,)) * net.a.mask
        pb = np.broadcast_to(np.asarray(self.p_b, dtype=float), (net.n,)) * net.b.mask
        if (pa < 0).any() or (pb < 0).any() or (pa + pb > 1 + 1e-12).any():
            raise ValueError("initial probabilities must be nonnegative with p_a + p_b <= 1")
        return pa, pb

    def sample(self, net: BilayerNetwork, rng: np.random.Generator) -> np.ndarray:
        pa, pb = self.probabilities(net)
        u = rng.random(net.n)
        labels = np.full(net.n, S, dtype=np.int8)
        labels[u < pa] = IA
        labels[(u >= pa) & (u < pa + pb)] = IB
        return labels


# --- ensembles --------------------------------------------------------------------------


@dataclass
class EnsembleTrace:
    times: np.ndarray
    frac_a: np.ndarray  # (trials, grid) fraction of layer-A nodes in I_A
    frac_b: np.ndarray
    node_mean_a: np.ndarray  # (grid, n) empirical P(X^A_i = 1)
    node_mean_b: np.ndarray
    trials: int
    seed: int

    @property
    def frac_a_mean(self) -> np.ndarray:
        return self.frac_a.mean(axis=0)

    @property
    def frac_b_mean(self) -> np.ndarray:
        return self.frac_b.mean(axis=0)

    def band(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        """Pointwise 20th and 80th percentiles (the central 60% of paths)."""
        paths = self.frac_a if which == "a" else self.frac_b
        lo, hi = np.quantile(paths, BAND_QUANTILES, axis=0)
        return lo, hi

    def extinct_a_by(self, t: float) -> np.ndarray:
        """Per trial: no node in I_A at the first grid time >= ``t``."""
        k = int(np.searchsorted(self.times, t - 1e-12))
        if k >= len(self.times):
            raise ValueError(f"grid ends before t={t}")
        return self.frac_a[:, k] == 0

    def rows(self):
        lo_a, hi_a = self.band("a")
        lo_b, hi_b = self.band("b")
        ma, mb = self.frac_a_mean, self.frac_b_mean
        for k, t in enumerate(self.times):
            yield t, ma[k], lo_a[k], hi_a[k], mb[k], lo_b[k], hi_b[k]


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Counter-based stream for one trial; independent of execution order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(trial,))))


def _run_trials(args):
    net, init, grid, seed, trials, record = args
    sim = Simulator(net)
    counts = np.zeros((len(trials), len(grid), 2))
    node_sum = np.zeros((len(grid), 2, net.n))
    for r, k in enumerate(trials):
        rng = trial_rng(seed, k)
        labels = init.sample(net, rng) if isinstance(init, InitialCondition) else init
        c, nodes = sim.run(labels, grid, rng, record)
        counts[r] = c
        if record:
            node_sum += nodes
    return counts, node_sum


def simulate_ensemble(
    net: BilayerNetwork,
    initial: InitialCondition | np.ndarray,
    t_end: float,
    trials: int,
    grid_points: int = 101,
    seed: int = 0,
    times: np.ndarray | None = None,
    workers: int = 1,
    record_nodes: bool = True,
) -> EnsembleTrace:
    """Independent Gillespie trajectories sampled on a time grid.

    ``initial`` is either a random :class:`InitialCondition` (drawn per
    trial) or a fixed label vector. Results depend only on ``seed``, not on
    ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    grid = np.linspace(0.0, t_end, grid_points) if times is None else np.asarray(times, dtype=float)
    if grid.size == 0 or grid.min() < 0 or grid.max() > t_end or (np.diff(grid) < 0).any():
        raise ValueError("time grid must be sorted within [0, t_end]")
    if not isinstance(initial, InitialCondition):
        initial = np.asarray(initial, dtype=np.int8)
        ProcessState(initial).validate(net)
    chunks = np.array_split(np.arange(trials), max(1, min(workers * 4, trials)))
    jobs = [(net, initial, grid, seed, c.tolist(), record_nodes) for c in chunks if c.size]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trials, jobs))
    else:
        results = [_run_trials(j) for j in jobs]
    counts = np.concatenate([r[0] for r in results])
    node_sum = sum(r[1] for r in results)
    na, nb = max(len(net.a.nodes), 1), max(len(net.b.nodes), 1)
    return EnsembleTrace(
        times=grid,
        frac_a=counts[:, :, 0] / na,
        frac_b=counts[:, :, 1] / nb,
        node_mean_a=node_sum[:, 0] / trials,
        node_mean_b=node_sum[:, 1] / trials,
        trials=trials,
        seed=seed,
    )


# --- exact oracle -----------------------------------------------------------------------


def _digits(n: int) -> np.ndarray:
    """``(3**n, n)`` label table; node ``i`` is base-3 digit ``i``."""
    idx = np.arange(3 ** n)
    return np.stack([(idx // 3 ** i) % 3 for i in range(n)], axis=1).astype(np.int8)


def state_index(labels) -> int:
    return int(sum(int(c) * 3 ** i for i, c in enumerate(labels)))


def generator_matrix(net: BilayerNetwork) -> sp.csr_matrix:
    """Generator ``Q`` (rows sum to zero) of the full ``3**n`` chain."""
    n = net.n
    if n > MAX_EXACT_NODES:
        raise ValueError(f"exact chain limited to n <= {MAX_EXACT_NODES} nodes, got {n}")
    table = _digits(n)
    rows, cols, vals = [], [], []
    for s, labels in enumerate(table):
        r = transition_rates(net, labels)
        for i in range(n):
            for c in (S, IA, IB):
                if c != labels[i] and r[i, c] > 0:
                    rows.append(s)
                    cols.append(s + (c - int(labels[i])) * 3 ** i)
                    vals.append(r[i, c])
    N = 3 ** n
    q = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    return (q - sp.diags(np.asarray(q.sum(axis=1)).ravel())).tocsr()


def product_initial(net: BilayerNetwork, init: InitialCondition) -> np.ndarray:
    """Distribution over ``3**n`` states for independent per-node initial labels."""
    pa, pb = init.probabilities(net)
    table = _digits(net.n)
    probs = np.stack([1 - pa - pb, pa, pb], axis=1)
    return np.prod(probs[np.arange(net.n), table], axis=1)


def exact_ctmc_distribution(net: BilayerNetwork, initial: np.ndarray, t: float,
                            tol: float = UNIFORMIZATION_TOL) -> np.ndarray:
    """State distribution at time ``t`` by uniformization, truncation error below ``tol``."""
    q = generator_matrix(net)
    p0 = np.asarray(initial, dtype=float)
    if p0.shape != (q.shape[0],):
        raise ValueError("initial distribution has the wrong length")
    if t == 0:
        return p0.copy()
    rate = float(-q.diagonal().min())
    if rate <= 0:
        return p0.copy()
    P = (sp.identity(q.shape[0], format="csr") + q / rate).T.tocsr()
    mu = rate * t
    kmax = int(poisson.isf(tol, mu)) + 1
    weights = poisson.pmf(np.arange(kmax + 1), mu)
    v = p0.copy()
    out = weights[0] * v
    for k in range(1, kmax + 1):
        v = P @ v
        out += weights[k] * v
    return out


def marginals(dist: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``E[X^A_i]`` and ``E[X^B_i]`` from a distribution over ``3**n`` states."""
    table = _digits(n)
    return dist @ (table == IA), dist @ (table == IB)
