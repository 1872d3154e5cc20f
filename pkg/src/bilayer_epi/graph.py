"""Bilayer directed networks: construction, validation, generation, JSON I/O.

Nodes are dense integers ``0..n-1`` over the shared universe. Each layer
carries its own node subset, a directed edge list with per-edge spreading
rates and per-node healing rates. Edges are kept sorted by (target, source)
so that the in-neighbourhood of every node is a contiguous block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class NetworkError(ValueError):
    """Raised when a network violates one of its structural invariants."""


class GenerationError(RuntimeError):
    """Raised when random generation cannot meet its constraints."""


def strongly_connected_components(n: int, edges: Iterable[tuple[int, int]]) -> list[list[int]]:
    """Tarjan's algorithm, iterative, over nodes ``0..n-1``."""
    succ: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        succ[a].append(b)

    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0

    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, k = work[-1]
            if k < len(succ[v]):
                work[-1] = (v, k + 1)
                w = succ[v][k]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
    return comps


def is_strongly_connected(n: int, edges: Iterable[tuple[int, int]]) -> bool:
    """True iff the digraph on ``0..n-1`` has exactly one strongly connected component."""
    if n < 1:
        raise ValueError("graph must have at least one node")
    return len(strongly_connected_components(n, edges)) == 1


def _layer_is_strongly_connected(nodes: np.ndarray, src: np.ndarray, dst: np.ndarray) -> bool:
    local = {int(v): k for k, v in enumerate(nodes)}
    return is_strongly_connected(
        len(nodes), ((local[int(a)], local[int(b)]) for a, b in zip(src, dst))
    )


@dataclass(frozen=True, eq=False)
class Layer:
    """One spreading layer.

    ``src[e] -> dst[e]`` carries rate ``beta[e]``; ``delta`` has length ``n``
    and is zero for nodes outside ``nodes``.
    """

    n: int
    nodes: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    beta: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        nodes = np.unique(np.asarray(self.nodes, dtype=np.int64))
        src = np.asarray(self.src, dtype=np.int64)
        dst = np.asarray(self.dst, dtype=np.int64)
        beta = np.asarray(self.beta, dtype=np.float64)
        order = np.lexsort((src, dst))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "src", src[order])
        object.__setattr__(self, "dst", dst[order])
        object.__setattr__(self, "beta", beta[order])
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=np.float64))
        for arr in (self.nodes, self.src, self.dst, self.beta, self.delta):
            arr.setflags(write=False)

    @cached_property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[self.nodes] = True
        return m

    @property
    def num_edges(self) -> int:
        return len(self.src)

    @cached_property
    def matrix(self) -> sp.csc_matrix:
        """Spreading-rate matrix with ``M[j, i] = beta`` for edge j -> i."""
        return sp.csc_matrix((self.beta, (self.src, self.dst)), shape=(self.n, self.n))

    def in_pressure(self, phi: np.ndarray) -> np.ndarray:
        """``s_i = sum_{j in N_in(i)} beta_ji phi_j`` for every node."""
        return np.bincount(self.dst, weights=self.beta * phi[self.src], minlength=self.n)

    def edge_list(self) -> list[tuple[int, int]]:
        return list(zip(self.src.tolist(), self.dst.tolist()))

    def with_rates(self, beta: np.ndarray | None = None, delta: np.ndarray | None = None) -> "Layer":
        """Copy with replaced rates. ``beta`` must follow this layer's edge order."""
        return Layer(
            self.n,
            self.nodes,
            self.src,
            self.dst,
            self.beta if beta is None else beta,
            self.delta if delta is None else delta,
        )

    def validate(self, name: str) -> None:
        n = self.n
        if self.nodes.size == 0:
            raise NetworkError(f"{name}: layer has no nodes")
        if self.nodes.min() < 0 or self.nodes.max() >= n:
            raise NetworkError(f"{name}: node index out of range 0..{n - 1}")
        if self.delta.shape != (n,):
            raise NetworkError(f"{name}: delta must have length {n}")
        if not (len(self.src) == len(self.dst) == len(self.beta)):
            raise NetworkError(f"{name}: edge arrays have mismatched lengths")
        mask = self.mask
        for a, b, r in zip(self.src.tolist(), self.dst.tolist(), self.beta.tolist()):
            if not (0 <= a < n and 0 <= b < n) or not (mask[a] and mask[b]):
                raise NetworkError(f"{name}: edge ({a},{b}) leaves the layer's node set")
            if a == b:
                raise NetworkError(f"{name}: self-loop on node {a}")
            if not np.isfinite(r) or r < 0:
                raise NetworkError(f"{name}: edge ({a},{b}) has invalid rate {r!r}")
        if len(set(zip(self.src.tolist(), self.dst.tolist()))) != len(self.src):
            raise NetworkError(f"{name}: duplicate edge")
        for i in self.nodes.tolist():
            d = self.delta[i]
            if not np.isfinite(d) or d <= 0:
                raise NetworkError(f"{name}: node {i} has non-positive healing rate {d!r}")
        outside = self.delta[~mask]
        if np.any(outside != 0):
            i = int(np.flatnonzero(~mask)[np.flatnonzero(outside != 0)[0]])
            raise NetworkError(f"{name}: node {i} is not in the layer but has a healing rate")
        if not _layer_is_strongly_connected(self.nodes, self.src, self.dst):
            raise NetworkError(f"{name}: layer is not strongly connected")


@dataclass(frozen=True, eq=False)
class BilayerNetwork:
    """Two directed layers over a shared node universe. Immutable."""

    n: int
    a: Layer
    b: Layer

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n < 1:
            raise NetworkError("n must be positive")
        for name, layer in (("layer_a", self.a), ("layer_b", self.b)):
            if layer.n != self.n:
                raise NetworkError(f"{name}: built for {layer.n} nodes, network has {self.n}")
            layer.validate(name)
        covered = self.a.mask | self.b.mask
        if not covered.all():
            raise NetworkError(f"node {int(np.flatnonzero(~covered)[0])} belongs to neither layer")

    # convenient aliases
    @property
    def beta_a(self) -> sp.csc_matrix:
        return self.a.matrix

    @property
    def beta_b(self) -> sp.csc_matrix:
        return self.b.matrix

    @property
    def delta_a(self) -> np.ndarray:
        return self.a.delta

    @property
    def delta_b(self) -> np.ndarray:
        return self.b.delta

    def with_layer_a(self, beta: np.ndarray | None = None, delta: np.ndarray | None = None) -> "BilayerNetwork":
        return BilayerNetwork(self.n, self.a.with_rates(beta, delta), self.b)

    def max_rate(self) -> float:
        """Largest total event rate any single node can see."""
        out = 0.0
        for layer in (self.a, self.b):
            inflow = np.bincount(layer.dst, weights=layer.beta, minlength=self.n)
            out = max(out, float(np.max(inflow + layer.delta)))
        return out


# --- serialization -------------------------------------------------------------------


def _layer_to_doc(layer: Layer) -> dict:
    return {
        "nodes": layer.nodes.tolist(),
        "edges": [
            {"from": a, "to": b, "beta": r}
            for a, b, r in zip(layer.src.tolist(), layer.dst.tolist(), layer.beta.tolist())
        ],
        "delta": [{"node": i, "value": float(layer.delta[i])} for i in layer.nodes.tolist()],
    }


def _layer_from_doc(doc: dict, n: int, name: str) -> Layer:
    try:
        nodes = [int(v) for v in doc["nodes"]]
        edges = doc["edges"]
        src = [int(e["from"]) for e in edges]
        dst = [int(e["to"]) for e in edges]
        beta = [float(e["beta"]) for e in edges]
        delta = np.zeros(n)
        seen = set()
        for item in doc["delta"]:
            i = int(item["node"])
            if not 0 <= i < n:
                raise NetworkError(f"{name}: delta entry for unknown node {i}")
            if i in seen:
                raise NetworkError(f"{name}: duplicate delta entry for node {i}")
            seen.add(i)
            delta[i] = float(item["value"])
    except (KeyError, TypeError) as exc:
        raise NetworkError(f"{name}: malformed layer document ({exc!r})") from exc
    missing = sorted(set(nodes) - seen)
    if missing:
        raise NetworkError(f"{name}: node {missing[0]} has no healing rate")
    return Layer(n, np.array(nodes, dtype=np.int64), np.array(src, dtype=np.int64),
                 np.array(dst, dtype=np.int64), np.array(beta), delta)


def network_to_dict(net: BilayerNetwork) -> dict:
    return {"n": net.n, "layer_a": _layer_to_doc(net.a), "layer_b": _layer_to_doc(net.b)}


def network_from_dict(doc: dict) -> BilayerNetwork:
    try:
        n = int(doc["n"])
        la, lb = doc["layer_a"], doc["layer_b"]
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkError(f"malformed network document ({exc!r})") from exc
    return BilayerNetwork(n, _layer_from_doc(la, n, "layer_a"), _layer_from_doc(lb, n, "layer_b"))


def save_network(net: BilayerNetwork) -> bytes:
    """Canonical JSON encoding; floats are written with shortest round-trip repr."""
    return (json.dumps(network_to_dict(net), indent=1) + "\n").encode()


def load_network(data: bytes | str) -> BilayerNetwork:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"cannot parse network document: {exc}") from exc
    return network_from_dict(doc)


# --- random generation ---------------------------------------------------------------


def _random_strong_digraph(rng: np.random.Generator, nodes: np.ndarray, density: float,
                           retries: int, name: str) -> tuple[np.ndarray, np.ndarray]:
    m = len(nodes)
    if m == 1:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    for _ in range(retries):
        adj = rng.random((m, m)) < density
        np.fill_diagonal(adj, False)
        a, b = np.nonzero(adj)
        if is_strongly_connected(m, zip(a.tolist(), b.tolist())):
            return nodes[a], nodes[b]
    raise GenerationError(
        f"{name}: no strongly connected digraph on {m} nodes at density {density} "
        f"after {retries} attempts"
    )


def generate_random_bilayer(
    n: int,
    n_a: int,
    n_b: int,
    n_overlap: int,
    edge_density: float,
    beta_range: Sequence[float] = (0.1, 0.5),
    delta_range: Sequence[float] = (0.5, 1.0),
    seed: int = 0,
    retries: int = 100,
) -> BilayerNetwork:
    """Random bilayer network with strongly connected layers.

    The overlap set is drawn uniformly at random. Each ordered pair of
    distinct layer nodes becomes an edge independently with probability
    ``edge_density``; layers that are not strongly connected are rejected
    and redrawn, at most ``retries`` times.
    """
    if n < 1 or min(n_a, n_b) < 1 or n_overlap < 0:
        raise ValueError("node counts must be positive")
    if n_a + n_b - n_overlap != n or n_overlap > min(n_a, n_b):
        raise ValueError(f"inconsistent layer sizes: {n_a} + {n_b} - {n_overlap} != {n}")
    if not 0 < edge_density <= 1:
        raise ValueError("edge_density must lie in (0, 1]")
    for lo, hi in (beta_range, delta_range):
        if not 0 < lo <= hi:
            raise ValueError(f"rate range must satisfy 0 < lo <= hi, got {lo}:{hi}")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    nodes_a = np.sort(perm[:n_a])
    nodes_b = np.sort(perm[n_a - n_overlap:])

    layers = []
    for name, nodes in (("layer_a", nodes_a), ("layer_b", nodes_b)):
        src, dst = _random_strong_digraph(rng, nodes, edge_density, retries, name)
        beta = rng.uniform(beta_range[0], beta_range[1], size=len(src))
        delta = np.zeros(n)
        delta[nodes] = rng.uniform(delta_range[0], delta_range[1], size=len(nodes))
        layers.append(Layer(n, nodes, src, dst, beta, delta))
    return BilayerNetwork(n, layers[0], layers[1])


def single_layer_network(n: int, src, dst, beta, delta) -> BilayerNetwork:
    """Network whose two layers share the same topology and rates."""
    layer = Layer(n, np.arange(n), src, dst, beta, delta)
    return BilayerNetwork(n, layer, layer)


def bilayer_from_arrays(n: int, layer_a: tuple, layer_b: tuple,
                        nodes_a=None, nodes_b=None) -> BilayerNetwork:
    """Build from ``(src, dst, beta, delta)`` tuples; ``delta`` is length ``n``."""
    nodes_a = np.arange(n) if nodes_a is None else nodes_a
    nodes_b = np.arange(n) if nodes_b is None else nodes_b
    return BilayerNetwork(n, Layer(n, nodes_a, *layer_a), Layer(n, nodes_b, *layer_b))


@dataclass
class GraphSpec:
    """Parameters for :func:`generate_random_bilayer` (the ``gen-graph`` defaults)."""

    n: int = 100
    n_a: int = 80
    n_b: int = 80
    n_overlap: int = 60
    edge_density: float = 0.1
    beta_range: tuple[float, float] = (0.1, 0.5)
    delta_range: tuple[float, float] = (0.5, 1.0)
    seed: int = 0
    retries: int = field(default=100)

    def build(self) -> BilayerNetwork:
        return generate_random_bilayer(
            self.n, self.n_a, self.n_b, self.n_overlap, self.edge_density,
            self.beta_range, self.delta_range, self.seed, self.retries,
        )
