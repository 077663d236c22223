"""Discrete Schrodinger operators with magnetic fluxes and their nodal counts."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse.csgraph import connected_components

from .graph import CombinatorialGraph, CycleBasis, betti_number, cycle_basis

SIMPLICITY_TOL = 1e-8
VERTEX_ZERO_TOL = 1e-8
HERMITIAN_TOL = 1e-12
RESIDUAL_TOL = 1e-10


class NonGenericError(ValueError):
    """The requested quantity needs a generic eigenvalue (simple, nowhere zero)."""


@dataclass(frozen=True)
class DiscreteOperator:
    graph: CombinatorialGraph
    base_matrix: np.ndarray
    kind: str

    @cached_property
    def gauge(self) -> CycleBasis:
        return cycle_basis(self.graph)

    @property
    def beta(self) -> int:
        return betti_number(self.graph)

    @property
    def size(self) -> int:
        return self.graph.vertex_count

    def chord_entries(self) -> list[tuple[int, int, float]]:
        """``(row, col, L[row, col])`` (0-based, row < col) for each chord, in flux order."""
        out = []
        for i in self.gauge.chord_edges:
            u, v = self.graph.edges[i]
            out.append((u - 1, v - 1, float(self.base_matrix[u - 1, v - 1])))
        return out

    def to_json(self) -> dict:
        g = self.graph
        return {
            "graph": g.to_json(),
            "kind": self.kind,
            "diagonal": [float(x) for x in np.diag(self.base_matrix)],
            "edge_weights": [float(self.base_matrix[u - 1, v - 1]) for u, v in g.edges],
        }


def build_normalized(graph: CombinatorialGraph) -> DiscreteOperator:
    d = graph.degrees.astype(float)
    m = np.eye(graph.vertex_count)
    for u, v in graph.edges:
        w = -1.0 / np.sqrt(d[u - 1] * d[v - 1])
        m[u - 1, v - 1] = m[v - 1, u - 1] = w
    m.setflags(write=False)
    return DiscreteOperator(graph, m, "normalized")


def build_generalized(graph: CombinatorialGraph, off_diagonal, diagonal) -> DiscreteOperator:
    """Real symmetric operator with the given (strictly negative) edge weights.

    ``off_diagonal[i]`` is the entry on ``graph.edges[i]``; ``diagonal[v-1]`` the
    on-site potential of vertex ``v``.
    """
    off = np.asarray(off_diagonal, dtype=float)
    diag = np.asarray(diagonal, dtype=float)
    if off.shape != (graph.edge_count,):
        raise ValueError(f"need {graph.edge_count} edge weights, got {off.shape}")
    if diag.shape != (graph.vertex_count,):
        raise ValueError(f"need {graph.vertex_count} diagonal entries, got {diag.shape}")
    for i, w in enumerate(off):
        if not w < 0:
            raise ValueError(f"edge weight on {graph.edges[i]} must be negative, got {w}")
    m = np.diag(diag)
    for (u, v), w in zip(graph.edges, off):
        m[u - 1, v - 1] = m[v - 1, u - 1] = w
    m.setflags(write=False)
    return DiscreteOperator(graph, m, "generalized")


def apply_flux(op: DiscreteOperator, alpha) -> np.ndarray:
    """Hermitian matrix with flux ``alpha[i]`` carried entirely by chord ``i``."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    if alpha.shape != (op.beta,):
        raise ValueError(f"flux vector needs {op.beta} entries, got {alpha.shape[0]}")
    m = op.base_matrix.astype(complex)
    for a, (r, c, w) in zip(alpha, op.chord_entries()):
        m[r, c] = w * np.exp(1j * a)
        m[c, r] = w * np.exp(-1j * a)
    return m


def flux_derivatives(op: DiscreteOperator):
    """First and (diagonal) second flux derivatives of ``L(alpha)`` at zero.

    Returns two lists of ``|V| x |V|`` matrices; mixed second derivatives vanish
    because each flux lives on its own chord.
    """
    n = op.size
    first, second = [], []
    for r, c, w in op.chord_entries():
        d1 = np.zeros((n, n), dtype=complex)
        d1[r, c] = 1j * w
        d1[c, r] = -1j * w
        d2 = np.zeros((n, n))
        d2[r, c] = d2[c, r] = -w
        first.append(d1)
        second.append(d2)
    return first, second


@dataclass(frozen=True)
class DiscreteSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    generic_flags: tuple[bool, ...]
    # per index: None, "degenerate" or "vertex-zero"
    reasons: tuple[str | None, ...]

    @property
    def generic_set(self) -> list[int]:
        """1-based indices of generic eigenvalues."""
        return [n + 1 for n, g in enumerate(self.generic_flags) if g]

    @property
    def all_generic(self) -> bool:
        return all(self.generic_flags)

    def skipped(self) -> list[tuple[int, str]]:
        return [(n + 1, r) for n, r in enumerate(self.reasons) if r is not None]


def _eigh_checked(matrix: np.ndarray):
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_TOL:
        raise ValueError("matrix is not Hermitian")
    try:
        return np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError(f"eigensolver failed to converge: {exc}") from exc


def eigenvalues(matrix: np.ndarray) -> np.ndarray:
    return _eigh_checked(matrix)[0]


def eigensystem(
    matrix: np.ndarray,
    simplicity_tol: float = SIMPLICITY_TOL,
    vertex_zero_tol: float = VERTEX_ZERO_TOL,
) -> DiscreteSpectrum:
    """Ascending eigenpairs with genericity flags.

    Eigenvalue ``n`` is generic when both neighbouring gaps exceed
    ``simplicity_tol * (max - min)`` and every entry of its eigenvector is at
    least ``vertex_zero_tol`` times its largest entry. Each eigenvector is
    phased so that its first entry of maximal modulus is real positive.
    """
    w, v = _eigh_checked(matrix)
    m = np.asarray(matrix)
    scale = max(np.linalg.norm(m, 2), 1.0)
    resid = np.linalg.norm(m @ v - v * w, axis=0)
    if np.any(resid > RESIDUAL_TOL * scale):
        raise RuntimeError(f"eigenpair residual {resid.max():.3e} above tolerance")

    mags = np.abs(v)
    lead = np.argmax(mags >= mags.max(axis=0) * (1 - 1e-12), axis=0)
    phase = v[lead, np.arange(v.shape[1])]
    v = v * (np.abs(phase) / phase)
    if np.isrealobj(matrix) or np.max(np.abs(v.imag), initial=0.0) < 1e-14:
        v = v.real.copy()

    spread = w[-1] - w[0] if len(w) > 1 else 0.0
    gap_tol = simplicity_tol * spread
    flags, reasons = [], []
    for n in range(len(w)):
        simple = all(
            abs(w[n] - w[j]) > gap_tol for j in (n - 1, n + 1) if 0 <= j < len(w)
        )
        nonzero = mags[:, n].min() > vertex_zero_tol * mags[:, n].max()
        flags.append(bool(simple and nonzero))
        reasons.append(None if simple and nonzero else ("degenerate" if not simple else "vertex-zero"))
    w.setflags(write=False)
    v.setflags(write=False)
    return DiscreteSpectrum(w, v, tuple(flags), tuple(reasons))


def spectrum(
    op: DiscreteOperator,
    alpha=None,
    simplicity_tol: float = SIMPLICITY_TOL,
    vertex_zero_tol: float = VERTEX_ZERO_TOL,
) -> DiscreteSpectrum:
    m = op.base_matrix if alpha is None or op.beta == 0 else apply_flux(op, alpha)
    return eigensystem(m, simplicity_tol, vertex_zero_tol)


@dataclass(frozen=True)
class NodalEntry:
    n: int
    eigenvalue: float
    sign_change_edges: tuple[int, ...]
    phi: int
    nu: int
    sigma: int


@dataclass(frozen=True)
class NodalReport:
    beta: int
    eigenvalues: np.ndarray
    entries: dict[int, NodalEntry]

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    def phi(self) -> list[int | None]:
        return [self.entries[n].phi if n in self.entries else None for n in range(1, self.size + 1)]

    def nu(self) -> list[int | None]:
        return [self.entries[n].nu if n in self.entries else None for n in range(1, self.size + 1)]

    def sigma(self) -> list[int | None]:
        return [self.entries[n].sigma if n in self.entries else None for n in range(1, self.size + 1)]

    def rows(self):
        """``(n, lambda, generic, phi, nu, sigma)`` rows; blanks where non-generic."""
        for n in range(1, self.size + 1):
            e = self.entries.get(n)
            lam = float(self.eigenvalues[n - 1])
            if e is None:
                yield (n, lam, False, None, None, None)
            else:
                yield (n, lam, True, e.phi, e.nu, e.sigma)


def nodal_domains(graph: CombinatorialGraph, removed_edges) -> int:
    removed = set(removed_edges)
    kept = [e for i, e in enumerate(graph.edges) if i not in removed]
    n = graph.vertex_count
    adj = np.zeros((n, n), dtype=np.int8)
    for u, v in kept:
        adj[u - 1, v - 1] = adj[v - 1, u - 1] = 1
    count, _ = connected_components(adj, directed=False)
    return int(count)


def nodal_report(op: DiscreteOperator, spec: DiscreteSpectrum | None = None) -> NodalReport:
    """Sign-change edges, nodal domains and surplus of each generic eigenvector."""
    spec = spec if spec is not None else spectrum(op)
    g = op.graph
    entries = {}
    for n in spec.generic_set:
        f = spec.eigenvectors[:, n - 1]
        if np.iscomplexobj(f):
            raise ValueError("nodal counts need real eigenvectors (zero flux)")
        changes = tuple(i for i, (u, v) in enumerate(g.edges) if f[u - 1] * f[v - 1] < 0)
        phi = len(changes)
        entries[n] = NodalEntry(
            n, float(spec.eigenvalues[n - 1]), changes, phi, nodal_domains(g, changes), phi - (n - 1)
        )
    return NodalReport(op.beta, spec.eigenvalues, entries)


@dataclass(frozen=True)
class TreeVerdict:
    is_tree_count: bool
    witness: int | None


def is_tree_nodal_count(report: NodalReport) -> TreeVerdict:
    """Whether ``phi_n = n - 1`` for every ``n``; the first violating index otherwise.

    Only meaningful when every eigenvalue is generic, so anything less raises
    :class:`NonGenericError`.
    """
    missing = [n for n in range(1, report.size + 1) if n not in report.entries]
    if missing:
        raise NonGenericError(f"eigenvalues {missing} are not generic; tree test undefined")
    for n in range(1, report.size + 1):
        if report.entries[n].phi != n - 1:
            return TreeVerdict(False, n)
    return TreeVerdict(True, None)
