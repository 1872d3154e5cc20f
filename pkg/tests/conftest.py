import numpy as np
import pytest

from bilayer_epi.graph import Layer, BilayerNetwork, generate_random_bilayer

ACCEPTANCE_LINES: list[str] = []


def cycle_layer(n, beta, delta, nodes=None):
    nodes = np.arange(n) if nodes is None else np.asarray(nodes)
    k = len(nodes)
    src = np.concatenate([nodes, np.roll(nodes, -1)]) if k > 2 else np.array([nodes[0], nodes[1]])
    dst = np.concatenate([np.roll(nodes, -1), nodes]) if k > 2 else np.array([nodes[1], nodes[0]])
    d = np.zeros(n)
    d[nodes] = delta
    return Layer(n, nodes, src, dst, np.full(len(src), float(beta)), d)


def two_node(beta_a=0.3, delta_a=1.0, beta_b=2.0, delta_b=1.0):
    return BilayerNetwork(2, cycle_layer(2, beta_a, delta_a), cycle_layer(2, beta_b, delta_b))


@pytest.fixture
def small_net():
    return generate_random_bilayer(12, 9, 9, 6, 0.35, seed=7)


@pytest.fixture
def tiny_net():
    return two_node()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
