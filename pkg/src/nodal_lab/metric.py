"""Neumann metric graphs through the bond-scattering secular function.

Bond ``b = (u, v)`` carries amplitude ``a_b`` leaving ``u``; on the edge, with
``x`` measured from ``u``::

    f(x) = a_b exp(i k x) + a_rev(b) exp(i k (l - x))

The amplitudes arriving at the far ends, ``c = exp(i Theta) a`` with
``Theta = A(alpha) + k E``, satisfy ``c = exp(i Theta) S c``, so eigenvalues are
the zeros of ``det(I - exp(i Theta) S)``. Multiplying by
``exp(-i tr Theta / 2) det(S)^(-1/2)`` makes the determinant real.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import bisect, brentq
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .graph import CombinatorialGraph, betti_number, cycle_basis
from .magnetic import MagneticHessian, FD_STEP, GRADIENT_TOL

CONDITIONS = ("neumann", "dirichlet")
METRIC_VERTEX_ZERO_TOL = 1e-6
IMAG_TOL = 1e-9
ROOT_XTOL = 1e-12
NULL_TOL = 1e-8
MULTIPLICITY_TOL = 1e-7
CONTINUITY_TOL = 1e-8
COUNT_TOL = 1e-6
MERGE_WIDTH = 1e-10
SUBDIVISIONS = 8
MAX_DEPTH = 40
SCAN_OFFSET = (3 - math.sqrt(5)) / 2  # keeps grid points off rational k


class RootTrackingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MetricGraph:
    graph: CombinatorialGraph
    lengths: np.ndarray
    conditions: tuple[str, ...] = ()

    def __post_init__(self):
        lengths = np.asarray(self.lengths, dtype=float)
        if lengths.shape != (self.graph.edge_count,):
            raise ValueError(f"need {self.graph.edge_count} lengths, got {lengths.shape}")
        if not np.all(np.isfinite(lengths)) or np.any(lengths <= 0):
            raise ValueError("edge lengths must be positive and finite")
        lengths.setflags(write=False)
        object.__setattr__(self, "lengths", lengths)
        conds = tuple(self.conditions) or ("neumann",) * self.graph.vertex_count
        if len(conds) != self.graph.vertex_count:
            raise ValueError(f"need {self.graph.vertex_count} vertex conditions, got {len(conds)}")
        for c in conds:
            if c not in CONDITIONS:
                raise ValueError(f"unsupported vertex condition {c!r}")
        object.__setattr__(self, "conditions", conds)

    @property
    def beta(self) -> int:
        return betti_number(self.graph)

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())

    @property
    def is_neumann(self) -> bool:
        return all(c == "neumann" for c in self.conditions)

    @cached_property
    def system(self) -> "SecularSystem":
        return SecularSystem.for_graph(self.graph, self.conditions)

    def with_lengths(self, lengths) -> "MetricGraph":
        return MetricGraph(self.graph, lengths, self.conditions)

    def to_json(self) -> dict:
        out = self.graph.to_json()
        out["lengths"] = [float(x) for x in self.lengths]
        if not self.is_neumann:
            out["conditions"] = list(self.conditions)
        return out


def equilateral(graph: CombinatorialGraph, length: float = 1.0) -> MetricGraph:
    return MetricGraph(graph, np.full(graph.edge_count, float(length)))


@dataclass(frozen=True)
class SecularSystem:
    """Scattering data of a graph; lengths and fluxes are supplied per call."""

    graph: CombinatorialGraph
    scattering: np.ndarray
    # +1 on the forward bond of chord i, -1 on its reversal (shape beta x 2|E|)
    flux_pattern: np.ndarray
    det_phase: complex
    conditions: tuple[str, ...] = field(default=())

    @classmethod
    def for_graph(cls, graph: CombinatorialGraph, conditions=None) -> "SecularSystem":
        conditions = tuple(conditions) if conditions else ("neumann",) * graph.vertex_count
        bonds = graph.directed_edges
        nb = len(bonds)
        s = np.zeros((nb, nb))
        deg = graph.degrees
        for b, (_, v) in enumerate(bonds):
            rev = graph.reverse_bond(b)
            for b2, (u2, _) in enumerate(bonds):
                if u2 != v:
                    continue
                if conditions[v - 1] == "neumann":
                    s[b2, b] = 2.0 / deg[v - 1] - (1.0 if b2 == rev else 0.0)
                else:
                    s[b2, b] = -1.0 if b2 == rev else 0.0
        s.setflags(write=False)
        m = graph.edge_count
        basis = cycle_basis(graph)
        pattern = np.zeros((basis.size, nb))
        for i, e in enumerate(basis.chord_edges):
            pattern[i, e] = 1.0
            pattern[i, e + m] = -1.0
        pattern.setflags(write=False)
        det_s = round(float(np.linalg.det(s)))
        # det(S)^(-1/2) on the principal branch
        phase = 1.0 + 0j if det_s == 1 else -1j
        return cls(graph, s, pattern, phase, conditions)

    @property
    def beta(self) -> int:
        return self.flux_pattern.shape[0]

    @property
    def det_sign(self) -> int:
        """``det S``, which is +1 or -1 for the real orthogonal Neumann scattering."""
        return 1 if self.det_phase == 1 else -1

    def bond_lengths(self, lengths) -> np.ndarray:
        lengths = np.asarray(lengths, dtype=float)
        return np.concatenate([lengths, lengths])

    def _phases(self, k, lengths, alpha):
        k = np.asarray(k, dtype=float)
        theta = np.multiply.outer(k, self.bond_lengths(lengths))
        if alpha is not None and self.beta:
            theta = theta + np.atleast_1d(np.asarray(alpha, dtype=float)) @ self.flux_pattern
        return theta

    def matrix(self, k: float, lengths, alpha=None) -> np.ndarray:
        """``I - exp(i Theta) S`` at a single ``k``."""
        theta = self._phases(k, lengths, alpha)
        return np.eye(len(theta)) - np.exp(1j * theta)[:, None] * self.scattering

    def complex_value(self, k, lengths, alpha=None) -> np.ndarray:
        theta = self._phases(k, lengths, alpha)
        nb = theta.shape[-1]
        mats = np.eye(nb) - np.exp(1j * theta)[..., :, None] * self.scattering
        det = np.linalg.det(mats)
        return det * np.exp(-0.5j * theta.sum(axis=-1)) * self.det_phase

    def value(self, k, lengths, alpha=None, check: bool = True):
        """Real secular function; vectorized over ``k``."""
        z = self.complex_value(k, lengths, alpha)
        if check:
            scale = np.maximum(np.abs(z), 1.0)
            worst = np.max(np.abs(z.imag) / scale, initial=0.0)
            if worst > IMAG_TOL:
                raise RuntimeError(f"secular function not real: relative imaginary part {worst:.2e}")
        return z.real

    def singular_values(self, k: float, lengths, alpha=None) -> np.ndarray:
        return np.linalg.svd(self.matrix(k, lengths, alpha), compute_uv=False)[::-1]

    def eigenphase_values(self, k: float, lengths, alpha=None) -> np.ndarray:
        """Eigenvalues of the unitary ``exp(i Theta) S``."""
        theta = self._phases(k, lengths, alpha)
        return np.linalg.eigvals(np.exp(1j * theta)[:, None] * self.scattering)


def secular_value(mg: MetricGraph, k, alpha=None):
    return mg.system.value(k, mg.lengths, alpha)


@dataclass(frozen=True)
class KSpectrum:
    """Roots in ``(0, k_max]`` (plus ``k = 0`` for Neumann graphs at zero flux)."""

    roots: np.ndarray
    multiplicities: np.ndarray
    k_max: float
    includes_zero: bool

    @property
    def simple(self) -> np.ndarray:
        return self.multiplicities == 1

    def levels(self):
        """``(n, k, multiplicity)`` with ``n`` the first index the root occupies."""
        n = 1
        for k, m in zip(self.roots, self.multiplicities):
            yield n, float(k), int(m)
            n += int(m)

    def counted(self) -> np.ndarray:
        """Roots repeated by multiplicity, i.e. ``k_1 <= k_2 <= ...``."""
        return np.repeat(self.roots, self.multiplicities)


def _nearest_phase(system: SecularSystem, lengths, alpha, k: float) -> float:
    """Signed eigenphase of ``exp(i Theta) S`` closest to zero.

    Eigenphases increase strictly with ``k``, so this changes sign at every
    root, including roots of even multiplicity where the determinant does not.
    """
    phases = np.angle(system.eigenphase_values(k, lengths, alpha))
    return float(phases[np.argmin(np.abs(phases))])


def _bracket_root(f, a: float, b: float) -> float:
    """Brent's method, falling back to bisection where ``f`` is too flat."""
    if a == b:
        return a
    try:
        return brentq(f, a, b, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps)
    except RuntimeError:
        return bisect(f, a, b, xtol=ROOT_XTOL, maxiter=500)


def _phase_sums(system: SecularSystem, ks, lengths, alpha) -> np.ndarray:
    """Sum of the eigenphases of ``exp(i Theta) S``, each taken in ``[0, 2 pi)``."""
    theta = system._phases(np.asarray(ks, dtype=float), lengths, alpha)
    out = np.empty(len(theta))
    for i in range(0, len(theta), 2048):
        u = np.exp(1j * theta[i : i + 2048])[..., :, None] * system.scattering
        phases = np.mod(np.angle(np.linalg.eigvals(u)), 2 * np.pi)
        out[i : i + 2048] = phases.sum(axis=-1)
    return out


def _cell_counts(system: SecularSystem, ks, lengths, alpha) -> np.ndarray:
    """Number of roots, with multiplicity, in each ``(ks[j], ks[j+1]]``.

    Every eigenphase increases with ``k`` and their unwrapped sum grows like
    ``k`` times the total bond length, so the wrapped sums count the crossings
    of zero exactly.
    """
    total = float(system.bond_lengths(lengths).sum())
    sums = _phase_sums(system, ks, lengths, alpha)
    raw = (total * np.diff(ks) - np.diff(sums)) / (2 * np.pi)
    counts = np.rint(raw)
    worst = float(np.max(np.abs(raw - counts), initial=0.0))
    if worst > COUNT_TOL:
        raise RootTrackingError(f"eigenphase count off an integer by {worst:.2e}")
    return counts.astype(int)


def _roots_in_cell(system, lengths, alpha, a: float, b: float, count: int, depth: int = 0):
    """The ``count`` roots in ``(a, b]`` as ``(k, multiplicity)`` pairs."""
    f = lambda x: float(system.value(x, lengths, alpha, check=False))
    if count == 1:
        fa, fb = f(a), f(b)
        if fa * fb <= 0:
            return [(_bracket_root(f, a, b), 1)]
    if b - a < MERGE_WIDTH or depth > MAX_DEPTH:
        # a multiple root (or a pair closer than we resolve): polish on the phase
        g = lambda x: _nearest_phase(system, lengths, alpha, x)
        ga, gb = g(a), g(b)
        k = brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps) if ga < 0 < gb else 0.5 * (a + b)
        return [(k, count)]
    ks = np.linspace(a, b, SUBDIVISIONS + 1)
    counts = _cell_counts(system, ks, lengths, alpha)
    if counts.sum() != count:
        raise RootTrackingError(f"inconsistent root count in [{a:.12f}, {b:.12f}]")
    out = []
    for x, y, c in zip(ks, ks[1:], counts):
        if c:
            out.extend(_roots_in_cell(system, lengths, alpha, x, y, int(c), depth + 1))
    return out


def find_roots(system: SecularSystem, lengths, alpha, k_lo: float, k_hi: float, step: float):
    """Roots of the secular function in ``(k_lo, k_hi]`` as ``(k, multiplicity)`` pairs.

    A grid of spacing ``step`` is split into cells whose root counts come from
    the eigenphases of the unitary ``exp(i Theta) S``. Single roots are located
    by bracketing; cells holding several are subdivided until they separate or
    shrink below ``MERGE_WIDTH``, where they are reported as one multiple root.
    """
    count = max(2, int(math.ceil((k_hi - k_lo) / step)) + 1)
    ks = np.linspace(k_lo, k_hi, count)
    counts = _cell_counts(system, ks, lengths, alpha)
    out = []
    for j in np.nonzero(counts)[0]:
        out.extend(_roots_in_cell(system, lengths, alpha, ks[j], ks[j + 1], int(counts[j])))
    out.sort()
    merged = []
    for k, m in out:
        if merged and abs(k - merged[-1][0]) < MERGE_WIDTH:
            merged[-1] = (merged[-1][0], merged[-1][1] + m)
        else:
            merged.append((k, m))
    return merged


def scan_step(mg: MetricGraph) -> float:
    return math.pi / (20 * mg.total_length)


def k_spectrum(mg: MetricGraph, k_max: float, alpha=None, check_weyl: bool = True) -> KSpectrum:
    if k_max <= 0:
        raise ValueError("k_max must be positive")
    step = scan_step(mg)
    zero_flux = alpha is None or not np.any(np.asarray(alpha))
    includes_zero = mg.is_neumann and zero_flux
    lo = step * SCAN_OFFSET if includes_zero else 1e-9
    roots = find_roots(mg.system, mg.lengths, alpha, lo, k_max, step)
    roots = [(k, m) for k, m in roots if 0 < k <= k_max]
    if includes_zero:
        roots = [(0.0, 1)] + roots
    ks = np.array([k for k, _ in roots])
    ms = np.array([m for _, m in roots], dtype=int)
    if check_weyl:
        counted = int(ms.sum())
        weyl = k_max * mg.total_length / math.pi
        slack = mg.graph.vertex_count + mg.beta + 2
        if abs(counted - weyl) > slack:
            raise RuntimeError(f"found {counted} eigenvalues below k={k_max}, Weyl estimate {weyl:.1f}")
    return KSpectrum(ks, ms, float(k_max), includes_zero)


@dataclass(frozen=True)
class MetricEigenpair:
    k: float
    amplitudes: np.ndarray
    vertex_values: np.ndarray
    # f on edge e is cos_coef[e] cos(k x) + sin_coef[e] sin(k x), x from the lower vertex
    cos_coef: np.ndarray
    sin_coef: np.ndarray
    simple: bool
    generic_flag: bool
    reason: str | None

    def edge_values(self, e: int, x) -> np.ndarray:
        return self.cos_coef[e] * np.cos(self.k * x) + self.sin_coef[e] * np.sin(self.k * x)


def eigenfunction(
    mg: MetricGraph, k: float, vertex_zero_tol: float = METRIC_VERTEX_ZERO_TOL, alpha=None
) -> MetricEigenpair:
    """Real eigenfunction at a simple root, scaled so the largest vertex value is +1."""
    system = mg.system
    mat = system.matrix(k, mg.lengths, alpha)
    _, sv, vh = np.linalg.svd(mat)
    sv = sv[::-1]
    if sv[0] > NULL_TOL * max(1.0, sv[-1]):
        raise ValueError(f"k={k} is not a root (smallest singular value {sv[0]:.2e})")
    if sv.size > 1 and sv[1] < MULTIPLICITY_TOL:
        raise ValueError(f"k={k} is not a simple root")
    c = vh[-1].conj()
    a = system.scattering @ c
    m = mg.graph.edge_count
    l = mg.lengths
    back = a[m:] * np.exp(1j * k * l)
    p = a[:m] + back
    q = 1j * (a[:m] - back)
    far = p * np.cos(k * l) + q * np.sin(k * l)

    ends = [[] for _ in range(mg.graph.vertex_count)]
    for e, (u, v) in enumerate(mg.graph.edges):
        ends[u - 1].append(p[e])
        ends[v - 1].append(far[e])
    values = np.array([np.mean(x) for x in ends])
    ref = values[np.argmax(np.abs(values))]
    coefs = np.concatenate([p, q])
    big = coefs[np.argmax(np.abs(coefs))]
    if abs(ref) <= vertex_zero_tol * abs(big):
        # vanishes on every vertex: fix the phase on the largest edge coefficient
        ref = big
    rot = 1.0 / ref
    p, q, values, far = p * rot, q * rot, values * rot, far * rot
    imag = max(np.abs(p.imag).max(), np.abs(q.imag).max())
    if imag > 1e-6 * max(np.abs(p).max(), np.abs(q).max()) and alpha is None:
        raise RuntimeError(f"eigenfunction not real after phase fix ({imag:.2e})")
    spread = max(
        np.max(np.abs(np.array(x) * rot - val)) if x else 0.0 for x, val in zip(ends, values)
    )
    if spread > CONTINUITY_TOL * max(1.0, np.abs(p).max(), np.abs(q).max()):
        raise RuntimeError(f"vertex continuity violated by {spread:.2e}")
    values = values.real
    mags = np.abs(values)
    amp = float(np.max(np.hypot(p.real, q.real)))
    nonzero = mags.min() > vertex_zero_tol * max(mags.max(), amp)
    neumann = mg.is_neumann
    generic = bool(neumann and nonzero)
    reason = None if generic else ("vertex-zero" if neumann else "dirichlet")
    return MetricEigenpair(
        float(k), c, values, p.real.copy(), q.real.copy(), True, generic, reason
    )


def count_edge_zeros(k: float, length: float, cos_coef: float, sin_coef: float, tol: float = 1e-12) -> int:
    """Interior zeros of ``cos_coef cos(kx) + sin_coef sin(kx)`` on ``(0, length)``."""
    amp = math.hypot(cos_coef, sin_coef)
    if amp < tol:
        raise ValueError("eigenfunction vanishes identically on the edge")
    theta = math.atan2(sin_coef, cos_coef) % (2 * math.pi)
    # zeros at x = (theta + pi/2 + m pi) / k
    m_lo = math.floor(-(theta + math.pi / 2) / math.pi) + 1
    m_hi = math.ceil((k * length - theta - math.pi / 2) / math.pi) - 1
    return max(0, m_hi - m_lo + 1)


def metric_nodal_domains(mg: MetricGraph, zeros_per_edge) -> int:
    nv = mg.graph.vertex_count
    rows, cols = [], []
    node = nv
    for (u, v), z in zip(mg.graph.edges, zeros_per_edge):
        first = node
        last = node + z
        node += z + 1
        rows += [u - 1, v - 1]
        cols += [first, last]
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(node, node))
    count, _ = connected_components(adj, directed=False)
    return int(count)


@dataclass(frozen=True)
class MetricNodalEntry:
    n: int
    k: float
    phi: int
    nu: int
    sigma: int


@dataclass(frozen=True)
class MetricLevel:
    n: int
    k: float
    multiplicity: int
    generic: bool
    reason: str | None
    eigenpair: MetricEigenpair | None


@dataclass(frozen=True)
class MetricNodalReport:
    beta: int
    levels: tuple[MetricLevel, ...]
    entries: dict[int, MetricNodalEntry]

    def generic_entries(self, positive_only: bool = False) -> list[MetricNodalEntry]:
        out = [self.entries[n] for n in sorted(self.entries)]
        return [e for e in out if e.k > 0] if positive_only else out

    def domain_relation_onset(self) -> int:
        """Largest generic ``n`` violating ``phi = nu - 1 + beta`` (0 if none)."""
        bad = [e.n for e in self.entries.values() if e.phi != e.nu - 1 + self.beta]
        return max(bad, default=0)

    def skipped(self) -> list[tuple[int, str]]:
        return [(lv.n, lv.reason) for lv in self.levels if not lv.generic]


def metric_levels(mg: MetricGraph, spec: KSpectrum) -> list[MetricLevel]:
    levels = []
    for n, k, mult in spec.levels():
        if k == 0.0:
            ones = np.ones(mg.graph.vertex_count)
            pair = MetricEigenpair(
                0.0, np.zeros(2 * mg.graph.edge_count), ones,
                np.ones(mg.graph.edge_count), np.zeros(mg.graph.edge_count), True, True, None,
            )
            levels.append(MetricLevel(n, 0.0, 1, True, None, pair))
        elif mult > 1:
            levels.append(MetricLevel(n, k, mult, False, "degenerate", None))
        else:
            pair = eigenfunction(mg, k)
            levels.append(MetricLevel(n, k, 1, pair.generic_flag, pair.reason, pair))
    return levels


def metric_nodal_report(mg: MetricGraph, spec: KSpectrum | list[MetricLevel]) -> MetricNodalReport:
    levels = metric_levels(mg, spec) if isinstance(spec, KSpectrum) else list(spec)
    entries = {}
    for lv in levels:
        if not lv.generic:
            continue
        pair = lv.eigenpair
        if lv.k == 0.0:
            zeros = [0] * mg.graph.edge_count
        else:
            zeros = [
                count_edge_zeros(lv.k, l, a, b)
                for l, a, b in zip(mg.lengths, pair.cos_coef, pair.sin_coef)
            ]
        phi = int(sum(zeros))
        entries[lv.n] = MetricNodalEntry(lv.n, lv.k, phi, metric_nodal_domains(mg, zeros), phi - (lv.n - 1))
    return MetricNodalReport(mg.beta, tuple(levels), entries)


def track_root(system: SecularSystem, lengths, k0: float, alpha, delta: float) -> float:
    """The root near ``k0`` at flux ``alpha``, bracketed within ``k0 +- delta``."""
    f = lambda x: float(system.value(x, lengths, alpha, check=False))
    fa, fb = f(k0 - delta), f(k0 + delta)
    if fa * fb >= 0:
        raise RootTrackingError(f"lost the root near k={k0} at flux {alpha}")
    return brentq(f, k0 - delta, k0 + delta, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def k_hessian_fd(mg: MetricGraph, k: float, h: float = FD_STEP, gap: float | None = None, n: int = 0) -> MagneticHessian:
    """Finite-difference flux Hessian of a simple root ``k`` at zero flux.

    ``gap`` is the distance to the nearest other root; it bounds the tracking
    bracket so a neighbouring root cannot be picked up.
    """
    beta = mg.beta
    if beta == 0:
        return MagneticHessian.from_matrix(n, np.zeros((0, 0)))
    if k <= 0:
        raise ValueError("flux Hessian needs a positive root")
    system, lengths = mg.system, mg.lengths
    if gap is None:
        local = find_roots(system, lengths, None, max(k - 0.5, 1e-9), k + 0.5, scan_step(mg))
        others = [abs(r - k) for r, _ in local if abs(r - k) > 1e-9]
        gap = min(others, default=0.5)
    delta = min(gap / 3, 1e-2)
    k0 = track_root(system, lengths, k, None, delta)

    def stencil(step):
        def root(alpha):
            return track_root(system, lengths, k0, alpha, delta)

        hess = np.zeros((beta, beta))
        grad = np.zeros(beta)
        for i in range(beta):
            e = np.zeros(beta)
            e[i] = step
            kp, km = root(e), root(-e)
            hess[i, i] = (kp - 2 * k0 + km) / step**2
            grad[i] = (kp - km) / (2 * step)
        for i in range(beta):
            for j in range(i + 1, beta):
                vals = {}
                for si in (1, -1):
                    for sj in (1, -1):
                        a = np.zeros(beta)
                        a[i], a[j] = si * step, sj * step
                        vals[si, sj] = root(a)
                hess[i, j] = hess[j, i] = (
                    vals[1, 1] - vals[1, -1] - vals[-1, 1] + vals[-1, -1]
                ) / (4 * step**2)
        return hess, grad

    coarse, g1 = stencil(h)
    fine, g2 = stencil(h / 2)
    grad = (4 * g2 - g1) / 3
    if np.max(np.abs(grad)) > GRADIENT_TOL:
        raise RuntimeError(f"flux gradient {np.max(np.abs(grad)):.2e} does not vanish at k={k}")
    return MagneticHessian.from_matrix(n, (4 * fine - coarse) / 3)
