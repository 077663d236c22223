"""Combinatorial graphs: validation, cycle bases, girth and subdivision.

Vertices are the integers ``1..n``. Edges are stored canonically as ``(u, v)``
with ``u < v`` in the order they were given. Directed bonds are indexed so that
bond ``i`` (``i < |E|``) runs ``u -> v`` along edge ``i`` and bond ``i + |E|`` is
its reversal.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class GraphValidationError(ValueError):
    """Raised when a graph violates one of the structural rules.

    ``rule`` is one of ``"vertex-range"``, ``"self-loop"``, ``"duplicate-edge"``
    or ``"disconnected"``; ``culprit`` names the offending vertex or edge.
    """

    def __init__(self, rule: str, culprit, message: str):
        super().__init__(message)
        self.rule = rule
        self.culprit = culprit


@dataclass(frozen=True)
class CombinatorialGraph:
    vertex_count: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "edges", tuple((min(u, v), max(u, v)) for u, v in self.edges)
        )

    @classmethod
    def from_edges(cls, vertex_count: int, edges) -> "CombinatorialGraph":
        """Build and validate a graph; raises :class:`GraphValidationError`."""
        g = cls(int(vertex_count), tuple((int(u), int(v)) for u, v in edges))
        validate(g)
        return g

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {e: i for i, e in enumerate(self.edges)}

    @cached_property
    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {v: [] for v in range(1, self.vertex_count + 1)}
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        for v in adj:
            adj[v].sort()
        return adj

    @cached_property
    def degrees(self) -> np.ndarray:
        d = np.zeros(self.vertex_count, dtype=int)
        for u, v in self.edges:
            d[u - 1] += 1
            d[v - 1] += 1
        return d

    @cached_property
    def directed_edges(self) -> tuple[tuple[int, int], ...]:
        fwd = list(self.edges)
        return tuple(fwd + [(v, u) for u, v in fwd])

    def reverse_bond(self, b: int) -> int:
        m = self.edge_count
        return b + m if b < m else b - m

    def find_edge(self, u: int, v: int) -> int:
        return self.edge_index[(min(u, v), max(u, v))]

    def to_json(self) -> dict:
        return {"vertices": self.vertex_count, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_json(cls, data: dict) -> "CombinatorialGraph":
        return cls.from_edges(data["vertices"], data["edges"])


def validate(graph: CombinatorialGraph) -> CombinatorialGraph:
    """Check vertex range, loops, duplicates and connectivity, in that order."""
    n = graph.vertex_count
    if n < 1:
        raise GraphValidationError("vertex-range", n, f"vertex count must be positive, got {n}")
    seen = set()
    for u, v in graph.edges:
        for w in (u, v):
            if not 1 <= w <= n:
                raise GraphValidationError("vertex-range", w, f"vertex {w} outside 1..{n}")
        if u == v:
            raise GraphValidationError("self-loop", (u, v), f"self-loop at vertex {u}")
        if (u, v) in seen:
            raise GraphValidationError("duplicate-edge", (u, v), f"duplicate edge {{{u},{v}}}")
        seen.add((u, v))
    order, _, _ = _bfs(graph, 1)
    if len(order) != n:
        missing = min(set(range(1, n + 1)) - set(order))
        raise GraphValidationError(
            "disconnected", missing, f"graph is disconnected: vertex {missing} unreachable from 1"
        )
    return graph


def betti_number(graph: CombinatorialGraph) -> int:
    return graph.edge_count - graph.vertex_count + 1


def _bfs(graph: CombinatorialGraph, root: int):
    parent = {root: None}
    dist = {root: 0}
    order = [root]
    queue = deque([root])
    while queue:
        x = queue.popleft()
        for y in graph.adjacency[x]:
            if y not in parent:
                parent[y] = x
                dist[y] = dist[x] + 1
                order.append(y)
                queue.append(y)
    return order, parent, dist


@dataclass(frozen=True)
class CycleBasis:
    """Fundamental cycles of the BFS tree rooted at vertex 1.

    ``cycles[i]`` starts with the chord ``(u, v)`` (``u < v``) and returns to
    ``u`` through the tree, so flux placed on the chord in the ``u -> v``
    direction is the flux through the cycle in its listed orientation.
    """

    spanning_tree_edges: frozenset[int]
    chord_edges: tuple[int, ...]
    cycles: tuple[tuple[int, ...], ...]
    edge_count: int = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.chord_edges)

    def incidence_gf2(self, graph: CombinatorialGraph) -> np.ndarray:
        """``beta x |E|`` 0/1 matrix of edges used by each basis cycle."""
        out = np.zeros((self.size, self.edge_count), dtype=np.uint8)
        for i, cyc in enumerate(self.cycles):
            out[i] = cycle_edge_vector(graph, cyc)
        return out


def cycle_basis(graph: CombinatorialGraph) -> CycleBasis:
    _, parent, dist = _bfs(graph, 1)
    tree = set()
    for v, p in parent.items():
        if p is not None:
            tree.add(graph.find_edge(v, p))
    chords = tuple(i for i in range(graph.edge_count) if i not in tree)
    cycles = []
    for i in chords:
        u, v = graph.edges[i]
        # tree path v -> lca -> u
        up_v, up_u = [v], [u]
        a, b = v, u
        while dist[a] > dist[b]:
            a = parent[a]
            up_v.append(a)
        while dist[b] > dist[a]:
            b = parent[b]
            up_u.append(b)
        while a != b:
            a, b = parent[a], parent[b]
            up_v.append(a)
            up_u.append(b)
        path = up_v + up_u[-2::-1]
        cycles.append((u,) + tuple(path[:-1]))
    return CycleBasis(frozenset(tree), chords, tuple(cycles), graph.edge_count)


def cycle_edge_vector(graph: CombinatorialGraph, cycle) -> np.ndarray:
    vec = np.zeros(graph.edge_count, dtype=np.uint8)
    k = len(cycle)
    for j in range(k):
        vec[graph.find_edge(cycle[j], cycle[(j + 1) % k])] ^= 1
    return vec


def gf2_rank(rows: np.ndarray) -> int:
    m = np.array(rows, dtype=np.uint8) % 2
    rank = 0
    for col in range(m.shape[1] if m.ndim == 2 else 0):
        pivot = next((r for r in range(rank, m.shape[0]) if m[r, col]), None)
        if pivot is None:
            continue
        m[[rank, pivot]] = m[[pivot, rank]]
        for r in range(m.shape[0]):
            if r != rank and m[r, col]:
                m[r] ^= m[rank]
        rank += 1
    return rank


def girth_oracle(graph: CombinatorialGraph) -> int | None:
    """Shortest cycle length by BFS from every vertex; ``None`` for trees."""
    best = None
    for root in range(1, graph.vertex_count + 1):
        _, parent, dist = _bfs(graph, root)
        for u, v in graph.edges:
            if parent.get(u) == v or parent.get(v) == u:
                continue
            length = dist[u] + dist[v] + 1
            if best is None or length < best:
                best = length
    return best


@dataclass(frozen=True)
class Subdivision:
    graph: CombinatorialGraph
    # new vertex -> (original edge index, position 1..count-1 counted from u)
    lineage: dict[int, tuple[int, int]]
    # new edge index -> (original edge index, piece 0..count-1 counted from u)
    edge_origin: tuple[tuple[int, int], ...]


def subdivide(graph: CombinatorialGraph, counts) -> Subdivision:
    counts = [int(c) for c in counts]
    if len(counts) != graph.edge_count:
        raise ValueError(f"expected {graph.edge_count} counts, got {len(counts)}")
    for i, c in enumerate(counts):
        if c < 1:
            raise ValueError(f"subdivision count for edge {i} must be >= 1, got {c}")
    next_vertex = graph.vertex_count + 1
    edges, origin, lineage = [], [], {}
    for i, ((u, v), c) in enumerate(zip(graph.edges, counts)):
        path = [u]
        for pos in range(1, c):
            lineage[next_vertex] = (i, pos)
            path.append(next_vertex)
            next_vertex += 1
        path.append(v)
        for piece in range(c):
            edges.append((path[piece], path[piece + 1]))
            origin.append((i, piece))
    new = CombinatorialGraph(next_vertex - 1, tuple(edges))
    return Subdivision(new, lineage, tuple(origin))
