"""From metric graphs to combinatorial ones and back.

On a unit equilateral Neumann graph, ``k`` with ``cos k = 1 - mu`` (``mu`` a
normalized-Laplacian eigenvalue) is a metric eigenvalue, and the remaining
roots sit in ``{pi n}``. Along the arccos branches, nodal surpluses and flux
Morse indices carry over from ``mu`` (even branches) or flip to ``beta - .``
(odd branches). A metric graph with rationally related lengths is reduced to
this setting by subdividing its edges into ``j_e`` unit pieces.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .discrete import build_normalized, nodal_report, spectrum
from .graph import CombinatorialGraph, betti_number, subdivide
from .magnetic import morse_index, perturbative_hessians
from .metric import (
    MetricGraph,
    eigenfunction,
    equilateral,
    k_hessian_fd,
    k_spectrum,
    metric_nodal_report,
)
from .torus import F_on_torus, LengthDecomposition

BRANCH_MATCH_TOL = 1e-8
LIFT_TOL = 1e-6
EDGE_EIGENVALUE_TOL = 1e-9
DIRECTIONAL_TOL = 1e-9
P_MAX = 3


def transition_matrix(graph: CombinatorialGraph) -> np.ndarray:
    """Random-walk matrix ``P[u, v] = 1/d_u`` on edges; rows sum to one."""
    n = graph.vertex_count
    deg = graph.degrees.astype(float)
    p = np.zeros((n, n))
    for u, v in graph.edges:
        p[u - 1, v - 1] = 1.0 / deg[u - 1]
        p[v - 1, u - 1] = 1.0 / deg[v - 1]
    return p


def normalized_similarity(graph: CombinatorialGraph, power: float) -> np.ndarray:
    """``I - D^power L_norm D^-power``.

    ``power = -1/2`` reproduces the row-stochastic ``P``; ``power = +1/2``
    gives its transpose (the column-stochastic walk).
    """
    lap = build_normalized(graph).base_matrix
    d = graph.degrees.astype(float) ** power
    return np.eye(graph.vertex_count) - (d[:, None] * lap) / d[None, :]


def transition_lift(graph: CombinatorialGraph, f) -> np.ndarray:
    """Eigenvector of ``P`` carried by a normalized-Laplacian eigenvector ``f``."""
    return graph.degrees.astype(float) ** -0.5 * np.asarray(f)


def _check_mu(mu: float):
    if not 0.0 <= mu <= 2.0:
        raise ValueError(f"mu={mu} lies outside [0, 2]")
    if mu in (0.0, 2.0):
        raise ValueError("the arccos branches are undefined at mu in {0, 2}")


def branch_value(mu: float, p: int) -> float:
    """``b_p(1 - mu)``: the ``k`` in ``(p pi, (p+1) pi)`` with ``cos k = 1 - mu``."""
    _check_mu(mu)
    base = math.acos(1.0 - mu)
    return p * math.pi + base if p % 2 == 0 else (p + 1) * math.pi - base


def arccos_branches(mu: float, p_max: int = P_MAX) -> np.ndarray:
    """``k``-values ``b_p(1 - mu)`` for ``p = 0..p_max``; eigenvalues are their squares."""
    return np.array([branch_value(mu, p) for p in range(p_max + 1)])


def branch_eigenvalues(mu: float, p_max: int = P_MAX) -> np.ndarray:
    return arccos_branches(mu, p_max) ** 2


@dataclass(frozen=True)
class Discretizations:
    vectors: tuple[tuple[int, ...], ...]
    bound: int
    hint: str | None = None


def _integer_image(decomp: LengthDecomposition, x) -> tuple[int, ...] | None:
    out = []
    for row in decomp.coefficients:
        val = sum((c * xi for c, xi in zip(row, x)), Fraction(0))
        if val.denominator != 1 or val <= 0:
            return None
        out.append(int(val))
    return tuple(out)


def _pivot_rows(decomp: LengthDecomposition) -> list[int]:
    """Rows of ``r`` that are unit vectors, one per generator, if present."""
    pivots = []
    for i in range(decomp.size):
        unit = tuple(Fraction(int(a == i)) for a in range(decomp.size))
        rows = [e for e, row in enumerate(decomp.coefficients) if row == unit]
        pivots.append(rows[0] if rows else None)
    return pivots


def enumerate_discretizations(decomp: LengthDecomposition, bound: int) -> Discretizations:
    """All ``j`` in ``Image(L)`` with positive integer entries at most ``bound``.

    When every generator is itself an edge length (as produced by
    :func:`decompose_lengths`), ``x`` equals ``j`` on those edges and the
    search runs over integer ``x``. Otherwise ``x`` ranges over the lattice
    scaled by the common denominator of ``r``.
    """
    if bound < 1:
        raise ValueError("bound must be positive")
    pivots = _pivot_rows(decomp)
    if all(p is not None for p in pivots):
        grid = [Fraction(v) for v in range(1, bound + 1)]
        axes = [grid] * decomp.size
    else:
        den = math.lcm(*(c.denominator for row in decomp.coefficients for c in row))
        axes = [[Fraction(v, den) for v in range(-bound * den, bound * den + 1)]] * decomp.size
    found = set()
    for x in itertools.product(*axes):
        j = _integer_image(decomp, x)
        if j is not None and max(j) <= bound:
            found.add(j)
    vectors = tuple(sorted(found))
    hint = None
    if not vectors:
        den = math.lcm(*(c.denominator for row in decomp.coefficients for c in row))
        # x = den * (1, ..., 1) is integral; positivity may still need more
        scale = max(
            sum(c * den for c in row) for row in decomp.coefficients
        )
        hint = f"no admissible vector up to {bound}; try a bound of at least {max(int(scale), bound + 1)}"
    return Discretizations(vectors, bound, hint)


def in_image(decomp: LengthDecomposition, j) -> bool:
    """Exact test for ``j = L(x)`` with rational ``x``."""
    import sympy

    r = sympy.Matrix([[sympy.Rational(c.numerator, c.denominator) for c in row] for row in decomp.coefficients])
    aug = r.row_join(sympy.Matrix([int(v) for v in j]))
    return r.rank() == aug.rank()


@dataclass(frozen=True)
class DiscretizedVersion:
    source: MetricGraph
    j: tuple[int, ...]
    graph: CombinatorialGraph
    lineage: dict
    equilateral: MetricGraph


def discretize(mg: MetricGraph, decomp: LengthDecomposition, j) -> DiscretizedVersion:
    j = tuple(int(v) for v in j)
    if len(j) != mg.graph.edge_count or min(j) < 1:
        raise ValueError("j needs one positive integer per edge")
    if not in_image(decomp, j):
        raise ValueError(f"{j} is not in the image of the length map")
    sub = subdivide(mg.graph, j)
    assert betti_number(sub.graph) == betti_number(mg.graph)
    return DiscretizedVersion(mg, j, sub.graph, sub.lineage, equilateral(sub.graph))


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def lift_error(vertex_values, candidate) -> float:
    """Max difference after scaling both vectors to unit norm, up to overall sign."""
    a, b = _unit(vertex_values), _unit(candidate)
    return float(min(np.max(np.abs(a - b)), np.max(np.abs(a + b))))


@dataclass
class MuCheck:
    n: int
    mu: float
    branches: list[float]
    branch_errors: list[float]
    lift_errors_stated: list[float]  # against D^{1/2} f
    lift_errors_corrected: list[float]  # against D^{-1/2} f

    @property
    def branches_ok(self) -> bool:
        return all(e <= BRANCH_MATCH_TOL for e in self.branch_errors)

    @property
    def stated_lift_ok(self) -> bool:
        return all(e <= LIFT_TOL for e in self.lift_errors_stated)

    @property
    def corrected_lift_ok(self) -> bool:
        return all(e <= LIFT_TOL for e in self.lift_errors_corrected)


@dataclass
class EquilateralReport:
    checks: list[MuCheck]
    skipped: list[tuple[int, float, str]]
    stray_roots: list[float]  # roots neither on a branch nor in {pi n}
    k_max: float
    outcome: str = field(default="")

    @property
    def branches_ok(self) -> bool:
        return all(c.branches_ok for c in self.checks)

    @property
    def dirichlet_ok(self) -> bool:
        return not self.stray_roots

    @property
    def stated_lift_ok(self) -> bool:
        return all(c.stated_lift_ok for c in self.checks)

    @property
    def corrected_lift_ok(self) -> bool:
        return all(c.corrected_lift_ok for c in self.checks)


def verify_equilateral_connection(graph: CombinatorialGraph, p_max: int = P_MAX) -> EquilateralReport:
    """Compare the unit equilateral metric spectrum with the normalized Laplacian.

    Branch matching and the vertex lift are checked for generic ``mu`` only;
    the completeness check (every root is a branch value or a multiple of
    ``pi``) uses the branch values of every ``mu`` outside ``{0, 2}``.
    """
    mg = equilateral(graph)
    spec = spectrum(build_normalized(graph))
    k_max = (p_max + 1) * math.pi
    roots = k_spectrum(mg, k_max + 0.1).roots
    roots = roots[(roots > 0) & (roots <= k_max + EDGE_EIGENVALUE_TOL)]
    deg = graph.degrees.astype(float)

    interior = [
        (n, float(mu)) for n, mu in enumerate(spec.eigenvalues, start=1)
        if EDGE_EIGENVALUE_TOL < mu < 2 - EDGE_EIGENVALUE_TOL
    ]
    checks, skipped = [], []
    for n, mu in interior:
        if not spec.generic_flags[n - 1]:
            skipped.append((n, mu, spec.reasons[n - 1]))
            continue
        f = spec.eigenvectors[:, n - 1]
        ks = arccos_branches(mu, p_max)
        errors, stated, corrected = [], [], []
        for k in ks:
            errors.append(float(np.min(np.abs(roots - k))) if roots.size else math.inf)
            pair = eigenfunction(mg, float(k))
            stated.append(lift_error(pair.vertex_values, deg**0.5 * f))
            corrected.append(lift_error(pair.vertex_values, deg**-0.5 * f))
        checks.append(MuCheck(n, mu, [float(k) for k in ks], errors, stated, corrected))

    allowed = [branch_value(mu, p) for _, mu in interior for p in range(p_max + 1)]
    allowed = np.array(allowed) if allowed else np.zeros(0)
    stray = []
    for k in roots:
        on_branch = allowed.size and np.min(np.abs(allowed - k)) <= BRANCH_MATCH_TOL
        on_pi = abs(k / math.pi - round(k / math.pi)) * math.pi <= BRANCH_MATCH_TOL
        if not (on_branch or on_pi):
            stray.append(float(k))
    report = EquilateralReport(checks, skipped, stray, k_max)
    report.outcome = "vacuous" if not checks else "checked"
    return report


@dataclass
class BranchTransfer:
    p: int
    k: float
    n_metric: int
    sigma_metric: int | None
    expected_sigma: int
    morse: int | None
    expected_morse: int
    derivative_sign: int

    @property
    def passed(self) -> bool:
        # the Morse index is optional (None when not computed)
        return (
            self.sigma_metric == self.expected_sigma
            and self.morse in (None, self.expected_morse)
            and self.derivative_sign == (-1) ** self.p
        )

    def to_json(self) -> dict:
        return {
            "p": self.p, "k": self.k, "n": self.n_metric, "sigma_metric": self.sigma_metric,
            "morse": self.morse, "pass": self.passed,
        }


@dataclass
class TransferCheck:
    n: int
    mu: float
    sigma_discrete: int
    morse_discrete: int
    branches: list[BranchTransfer]

    @property
    def passed(self) -> bool:
        return self.sigma_discrete == self.morse_discrete and all(b.passed for b in self.branches)


@dataclass
class TransferReport:
    beta: int
    outcome: str  # "checked" or "vacuous"
    checks: list[TransferCheck]
    skipped: list[tuple[int, float, str]]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _branch_derivative_sign(mu: float, p: int, h: float = 1e-6) -> int:
    lam = lambda m: branch_value(m, p) ** 2
    return int(np.sign(lam(mu + h) - lam(mu - h)))


def verify_surplus_transfer(graph: CombinatorialGraph, p_max: int = P_MAX, with_morse: bool = True) -> TransferReport:
    """Surplus and Morse index along the arccos branches of each generic ``mu``.

    ``graph`` is the discretized version itself; its unit equilateral metric
    graph is the one examined.
    """
    beta = betti_number(graph)
    op = build_normalized(graph)
    spec = spectrum(op)
    candidates = [
        (n, float(mu)) for n, mu in enumerate(spec.eigenvalues, start=1)
        if EDGE_EIGENVALUE_TOL < mu < 2 - EDGE_EIGENVALUE_TOL
    ]
    skipped = [(n, mu, spec.reasons[n - 1]) for n, mu in candidates if not spec.generic_flags[n - 1]]
    generic = [(n, mu) for n, mu in candidates if spec.generic_flags[n - 1]]
    if beta == 0 or not generic:
        return TransferReport(beta, "vacuous", [], skipped)

    discrete = nodal_report(op, spec)
    hess = perturbative_hessians(op, spec)
    mg = equilateral(graph)
    k_max = (p_max + 1) * math.pi
    metric = metric_nodal_report(mg, k_spectrum(mg, k_max + 0.1))

    checks = []
    for n, mu in generic:
        sigma = discrete.entries[n].sigma
        morse_mu = morse_index(hess[n - 1])
        rows = []
        for p in range(p_max + 1):
            k = branch_value(mu, p)
            level = min(metric.levels, key=lambda lv: abs(lv.k - k))
            if abs(level.k - k) > BRANCH_MATCH_TOL:
                raise RuntimeError(f"branch value k={k} is not a metric root")
            entry = metric.entries.get(level.n)
            morse = None
            if with_morse and entry is not None:
                morse = k_hessian_fd(mg, level.k).morse_index
            even = p % 2 == 0
            rows.append(
                BranchTransfer(
                    p, level.k, level.n,
                    entry.sigma if entry is not None else None,
                    sigma if even else beta - sigma,
                    morse,
                    morse_mu if even else beta - morse_mu,
                    _branch_derivative_sign(mu, p),
                )
            )
        checks.append(TransferCheck(n, mu, sigma, morse_mu, rows))
    return TransferReport(beta, "checked", checks, skipped)


@dataclass(frozen=True)
class DirectionalRow:
    k: float
    derivatives: tuple[float, ...]

    @property
    def constant_sign(self) -> bool:
        d = np.asarray(self.derivatives)
        scale = max(1.0, float(np.max(np.abs(d))))
        return bool(np.all(np.abs(d) > DIRECTIONAL_TOL * scale) and abs(np.sign(d).sum()) == len(d))


@dataclass(frozen=True)
class DirectionalReport:
    rows: tuple[DirectionalRow, ...]

    @property
    def falsifications(self) -> list[float]:
        return [r.k for r in self.rows if not r.constant_sign]

    @property
    def passed(self) -> bool:
        return not self.falsifications


T_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def directional_derivative_sign_check(mg: MetricGraph, decomp: LengthDecomposition, j, roots, h: float = 1e-6) -> DirectionalReport:
    """Sign of ``(t j + (1 - t) xi) . grad F`` at each root point ``k xi``.

    ``j`` is given per edge; its torus coordinates are the exact rational
    preimage under the length map.
    """
    import sympy

    r = sympy.Matrix([[sympy.Rational(c.numerator, c.denominator) for c in row] for row in decomp.coefficients])
    sol, params = r.gauss_jordan_solve(sympy.Matrix([int(v) for v in j]))
    if params.shape[0]:
        raise ValueError("length map must be injective")
    x_j = np.array([float(v) for v in sol], dtype=float)
    xi = decomp.generators
    rows = []
    for k in roots:
        x = k * xi
        ds = []
        for t in T_GRID:
            v = t * x_j + (1 - t) * xi
            ds.append((F_on_torus(mg, decomp, x + h * v) - F_on_torus(mg, decomp, x - h * v)) / (2 * h))
        rows.append(DirectionalRow(float(k), tuple(ds)))
    return DirectionalReport(tuple(rows))
