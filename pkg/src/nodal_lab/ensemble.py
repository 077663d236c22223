"""Seeded random graphs and generalized Laplacians."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discrete import DiscreteOperator, build_generalized
from .graph import CombinatorialGraph

OFF_DIAGONAL_RANGE = (-2.0, -0.5)
DIAGONAL_RANGE = (0.0, 5.0)


def random_connected_graph(
    rng: np.random.Generator, n_vertices: int, beta: int
) -> CombinatorialGraph:
    """Random spanning tree on ``n_vertices`` plus ``beta`` extra edges."""
    max_beta = n_vertices * (n_vertices - 1) // 2 - n_vertices + 1
    if not 0 <= beta <= max_beta:
        raise ValueError(f"beta={beta} impossible on {n_vertices} vertices")
    perm = rng.permutation(n_vertices) + 1
    edges = set()
    for i in range(1, n_vertices):
        u, v = int(perm[i]), int(perm[rng.integers(i)])
        edges.add((min(u, v), max(u, v)))
    missing = [
        (u, v)
        for u in range(1, n_vertices + 1)
        for v in range(u + 1, n_vertices + 1)
        if (u, v) not in edges
    ]
    for idx in rng.choice(len(missing), size=beta, replace=False):
        edges.add(missing[idx])
    return CombinatorialGraph.from_edges(n_vertices, sorted(edges))


def random_generalized(rng: np.random.Generator, graph: CombinatorialGraph) -> DiscreteOperator:
    off = rng.uniform(*OFF_DIAGONAL_RANGE, size=graph.edge_count)
    diag = rng.uniform(*DIAGONAL_RANGE, size=graph.vertex_count)
    return build_generalized(graph, off, diag)


def random_operators(
    seed: int,
    count: int,
    max_vertices: int = 8,
    max_beta: int = 3,
    min_beta: int = 0,
    min_vertices: int = 2,
):
    """Yield ``count`` random generalized Laplacians on random connected graphs."""
    rng = np.random.default_rng(seed)
    produced = 0
    while produced < count:
        n = int(rng.integers(min_vertices, max_vertices + 1))
        cap = min(max_beta, n * (n - 1) // 2 - n + 1)
        if cap < min_beta:
            continue
        beta = int(rng.integers(min_beta, cap + 1))
        graph = random_connected_graph(rng, n, beta)
        yield random_generalized(rng, graph)
        produced += 1


@dataclass
class EnsembleSummary:
    """Aggregated checks over a seeded ensemble of generalized Laplacians."""

    seed: int
    operators: int = 0
    generic_indices: int = 0
    morse_failures: list = field(default_factory=list)
    max_hessian_gap: float = 0.0
    nonzero_gradients: int = 0
    trace_checked: int = 0
    trace_failures: list = field(default_factory=list)
    trees_checked: int = 0
    tree_failures: list = field(default_factory=list)
    cyclic_checked: int = 0
    cyclic_tree_counts: list = field(default_factory=list)
    forbidden_shapes: list = field(default_factory=list)
    bound_violations: list = field(default_factory=list)
    all_diamagnetic: list = field(default_factory=list)
    scatter: list = field(default_factory=list)  # (op, n, i, j, perturbative, fd)

    @property
    def passed(self) -> bool:
        return not (
            self.morse_failures or self.trace_failures or self.tree_failures
            or self.cyclic_tree_counts or self.forbidden_shapes or self.bound_violations
            or self.all_diamagnetic or self.nonzero_gradients
            or self.max_hessian_gap >= HESSIAN_AGREEMENT
        )

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "operators": self.operators,
            "generic_indices": self.generic_indices,
            "morse_failures": len(self.morse_failures),
            "max_hessian_gap": self.max_hessian_gap,
            "nonzero_gradients": self.nonzero_gradients,
            "trace_checked": self.trace_checked,
            "trace_failures": len(self.trace_failures),
            "trees_checked": self.trees_checked,
            "tree_failures": len(self.tree_failures),
            "cyclic_checked": self.cyclic_checked,
            "cyclic_tree_counts": len(self.cyclic_tree_counts),
            "forbidden_shapes": len(self.forbidden_shapes),
            "bound_violations": len(self.bound_violations),
            "all_diamagnetic": len(self.all_diamagnetic),
            "passed": self.passed,
        }


HESSIAN_AGREEMENT = 1e-5


def sweep(seed: int, count: int, max_vertices: int = 8, max_beta: int = 3, keep_scatter: bool = False) -> EnsembleSummary:
    """Surplus = Morse, Hessian cross-check, trace identities, tree and shape tests."""
    from .discrete import is_tree_nodal_count, nodal_report, spectrum
    from .magnetic import (
        GRADIENT_TOL,
        fd_hessians,
        forbidden_surplus_check,
        morse_index,
        perturbative_hessians,
        trace_identities,
    )

    out = EnsembleSummary(seed)
    for idx, op in enumerate(random_operators(seed, count, max_vertices, max_beta)):
        out.operators += 1
        spec = spectrum(op)
        report = nodal_report(op, spec)
        beta = op.beta
        hess = perturbative_hessians(op, spec)
        fd, grad = fd_hessians(op) if beta else (hess, np.zeros((op.size, 0)))
        n_vertices = op.size
        morses = []
        for n in spec.generic_set:
            e = report.entries[n]
            out.generic_indices += 1
            if not (n - 1 <= e.phi <= n - 1 + beta and n - beta <= e.nu <= n and e.phi <= e.nu - 1 + beta):
                out.bound_violations.append((idx, n))
            m = morse_index(hess[n - 1])
            morses.append(m)
            if m != e.sigma:
                out.morse_failures.append((idx, n, e.sigma, m))
            if beta:
                gap = float(np.max(np.abs(hess[n - 1] - fd[n - 1])))
                out.max_hessian_gap = max(out.max_hessian_gap, gap)
                if np.max(np.abs(grad[n - 1])) >= GRADIENT_TOL:
                    out.nonzero_gradients += 1
                if keep_scatter:
                    for i in range(beta):
                        for j in range(beta):
                            out.scatter.append((idx, n, i, j, hess[n - 1, i, j], fd[n - 1, i, j]))
        if beta and morses and len(morses) == n_vertices and max(morses) == 0:
            out.all_diamagnetic.append(idx)
        if not any(r == "degenerate" for r in spec.reasons):
            out.trace_checked += 1
            if not trace_identities(op, spec, hess).passed:
                out.trace_failures.append(idx)
        if spec.all_generic:
            verdict = is_tree_nodal_count(report)
            if beta == 0:
                out.trees_checked += 1
                if not verdict.is_tree_count:
                    out.tree_failures.append(idx)
            else:
                out.cyclic_checked += 1
                if verdict.is_tree_count:
                    out.cyclic_tree_counts.append(idx)
                if not forbidden_surplus_check(report, beta):
                    out.forbidden_shapes.append((idx, report.sigma()))
    return out


@dataclass
class GirthSummary:
    seed: int
    graphs: int = 0
    mismatches: list = field(default_factory=list)
    scalar_mismatches: list = field(default_factory=list)
    ambiguous: list = field(default_factory=list)
    rows: list = field(default_factory=list)  # (idx, |V|, beta, traces, scalar, oracle)

    @property
    def passed(self) -> bool:
        return not self.mismatches


def girth_sweep(seed: int, count: int, max_vertices: int = 8, max_beta: int = 3) -> GirthSummary:
    """Trace-based girth against the BFS oracle on graphs with cycles.

    Operators whose spectrum has a degenerate eigenvalue are redrawn, since the
    Hessians are only defined for simple eigenvalues.
    """
    from .discrete import spectrum
    from .graph import girth_oracle
    from .magnetic import girth_from_traces

    out = GirthSummary(seed)
    rng = np.random.default_rng(seed)
    while out.graphs < count:
        n = int(rng.integers(3, max_vertices + 1))
        cap = min(max_beta, n * (n - 1) // 2 - n + 1)
        beta = int(rng.integers(1, cap + 1))
        op = random_generalized(rng, random_connected_graph(rng, n, beta))
        spec = spectrum(op)
        if any(r == "degenerate" for r in spec.reasons):
            continue
        res = girth_from_traces(op, spec)
        oracle = girth_oracle(op.graph)
        idx = out.graphs
        out.graphs += 1
        out.rows.append((idx, n, beta, res.girth, res.scalar_girth, oracle))
        if res.girth != oracle:
            out.mismatches.append(idx)
        if res.scalar_girth != oracle:
            out.scalar_mismatches.append(idx)
        if res.ambiguous:
            out.ambiguous.append(idx)
    return out
