import math

import numpy as np
import pytest

from nodal_lab.discrete import build_generalized
from nodal_lab.graph import CombinatorialGraph

DIAMOND_EDGES = [(1, 2), (1, 4), (2, 3), (2, 4), (3, 4)]
LASSO_EDGES = [(1, 2), (1, 3), (2, 3), (3, 4)]
# triangle and square glued at vertex 1 (two independent cycles, no multi-edges)
EIGHT_EDGES = [(1, 2), (2, 3), (1, 3), (1, 4), (4, 5), (5, 6), (1, 6)]
# two triangles joined by a bridge: disjoint cycles, beta = 2
DUMBBELL_EDGES = [(1, 2), (2, 3), (1, 3), (3, 4), (4, 5), (5, 6), (4, 6)]
LASSO_LENGTHS = [1.0, math.sqrt(2), math.sqrt(3), math.sqrt(5) / 2]
DUMBBELL_LENGTHS = [1.0, math.sqrt(2), math.sqrt(3), math.sqrt(5) / 2, math.sqrt(7) / 2, math.sqrt(11) / 3, math.pi / 3]
EIGHT_LENGTHS = [1.0, math.sqrt(2), math.sqrt(3), math.sqrt(5), math.sqrt(7) / 2, math.sqrt(11) / 3, math.pi / 3]


def graph(n, edges):
    return CombinatorialGraph.from_edges(n, edges)


def path(n):
    return graph(n, [(i, i + 1) for i in range(1, n)])


def cycle(n):
    return graph(n, [(i, i + 1) for i in range(1, n)] + [(1, n)])


def star(leaves):
    return graph(leaves + 1, [(1, i) for i in range(2, leaves + 2)])


def cube():
    edges = []
    for v in range(8):
        for b in range(3):
            w = v ^ (1 << b)
            if v < w:
                edges.append((v + 1, w + 1))
    return graph(8, edges)


@pytest.fixture
def diamond_graph():
    return graph(4, DIAMOND_EDGES)


@pytest.fixture
def diamond_op(diamond_graph):
    return build_generalized(diamond_graph, [-1.0] * 5, [1.0, 2.0, 3.0, 4.0])


@pytest.fixture
def diamond_op_reversed(diamond_graph):
    return build_generalized(diamond_graph, [-1.0] * 5, [4.0, 3.0, 2.0, 1.0])


@pytest.fixture
def lasso_graph():
    return graph(4, LASSO_EDGES)


@pytest.fixture
def eight_graph():
    return graph(6, EIGHT_EDGES)


@pytest.fixture
def dumbbell_graph():
    return graph(6, DUMBBELL_EDGES)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
