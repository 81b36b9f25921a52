import numpy as np
import pytest

from pinwalk.graph import BipartiteGraph
from pinwalk.synth import SynthConfig, generate

# fixed 5-pin / 3-board graph used by the distribution checks;
# pins 0..4, boards 5..7
FIVE_PIN_EDGES = [(0, 5), (1, 5), (2, 5), (2, 6), (3, 6), (4, 6), (0, 7), (3, 7)]


@pytest.fixture(scope="session")
def five_pin_graph() -> BipartiteGraph:
    return BipartiteGraph.from_edges(5, 3, FIVE_PIN_EDGES)


@pytest.fixture(scope="session")
def pair_graph() -> BipartiteGraph:
    # two pins sharing one board: the symmetric stationary case
    return BipartiteGraph.from_edges(2, 1, [(0, 2), (1, 2)])


@pytest.fixture(scope="session")
def small_synth():
    return generate(SynthConfig(
        communities=4, pins_per_community=100, boards_per_community=20,
        edges_per_board=20, cross_community_noise=0.05, seed=11))


@pytest.fixture(scope="session")
def attr_graph() -> BipartiteGraph:
    """One pin with 10 boards, 2 of them in attribute bucket 5."""
    edges = [(0, b) for b in range(1, 11)]
    attr = np.zeros(11, dtype=np.uint16)
    attr[3] = 5
    attr[7] = 5
    return BipartiteGraph.from_edges(1, 10, edges, attr)
