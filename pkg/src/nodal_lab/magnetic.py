"""Flux Hessians of eigenvalues at zero flux and what they reveal.

The Morse index of ``lambda_n(alpha)`` at ``alpha = 0`` equals the nodal surplus
of a generic eigenvector. Summed over the spectrum, the Hessians cancel (the
trace of ``L^k`` is flux independent below the girth), which forbids some
surplus sequences and locates the shortest cycle.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .discrete import (
    DiscreteOperator,
    DiscreteSpectrum,
    NodalReport,
    apply_flux,
    eigenvalues,
    flux_derivatives,
    nodal_report,
    spectrum,
)

FD_STEP = 1e-3
SYMMETRY_TOL = 1e-8
GRADIENT_TOL = 1e-6
DET_TOL = 1e-8
TRACE_TOL = 1e-6
GIRTH_THRESHOLD = 1e-4


class DegenerateEigenvalueError(ValueError):
    pass


@dataclass(frozen=True)
class MagneticHessian:
    eigen_index: int
    matrix: np.ndarray
    morse_index: int
    degenerate_flag: bool

    @classmethod
    def from_matrix(cls, n: int, matrix: np.ndarray) -> "MagneticHessian":
        matrix = np.asarray(matrix, dtype=float)
        if matrix.size == 0:
            return cls(n, matrix.reshape(0, 0), 0, False)
        sym = 0.5 * (matrix + matrix.T)
        evals = np.linalg.eigvalsh(sym)
        return cls(n, matrix, int(np.sum(evals < 0)), bool(abs(np.linalg.det(sym)) <= DET_TOL))

    @property
    def is_symmetric(self) -> bool:
        if self.matrix.size == 0:
            return True
        return bool(np.max(np.abs(self.matrix - self.matrix.T)) <= SYMMETRY_TOL)


def morse_index(matrix: np.ndarray) -> int:
    if np.size(matrix) == 0:
        return 0
    return int(np.sum(np.linalg.eigvalsh(0.5 * (matrix + matrix.T)) < 0))


def _require_simple(spec: DiscreteSpectrum, n: int):
    if spec.reasons[n - 1] == "degenerate":
        raise DegenerateEigenvalueError(f"eigenvalue {n} is not simple")


def perturbative_hessians(op: DiscreteOperator, spec: DiscreteSpectrum | None = None) -> np.ndarray:
    """Second-order perturbation Hessians for every index, shape ``(|V|, beta, beta)``.

    Entries for degenerate indices are meaningless; callers check simplicity.
    """
    spec = spec if spec is not None else spectrum(op)
    beta = op.beta
    lam = np.asarray(spec.eigenvalues)
    vec = np.asarray(spec.eigenvectors)
    nv = len(lam)
    out = np.zeros((nv, beta, beta))
    if beta == 0:
        return out
    first, second = flux_derivatives(op)
    proj = np.array([vec.conj().T @ d1 @ vec for d1 in first])  # (beta, m, m)
    diff = lam[:, None] - lam[None, :]
    np.fill_diagonal(diff, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / diff
    for n in range(nv):
        a = proj[:, n, :]  # <f_n, dL_i f_m>
        b = proj[:, :, n]  # <f_m, dL_j f_n>
        with np.errstate(invalid="ignore"):
            h = 2.0 * np.real((a * inv[n][None, :]) @ b.T)
        for i, d2 in enumerate(second):
            h[i, i] += np.real(vec[:, n].conj() @ d2 @ vec[:, n])
        out[n] = h
    return out


def hessian_perturbative(op: DiscreteOperator, spec: DiscreteSpectrum, n: int) -> MagneticHessian:
    _require_simple(spec, n)
    return MagneticHessian.from_matrix(n, perturbative_hessians(op, spec)[n - 1])


def _stencil_values(op: DiscreteOperator, h: float) -> tuple[np.ndarray, np.ndarray]:
    beta = op.beta
    base = eigenvalues(op.base_matrix)

    def lam(alpha):
        return eigenvalues(apply_flux(op, alpha))

    second = np.zeros((len(base), beta, beta))
    grad = np.zeros((len(base), beta))
    for i in range(beta):
        e = np.zeros(beta)
        e[i] = h
        plus, minus = lam(e), lam(-e)
        second[:, i, i] = (plus - 2 * base + minus) / h**2
        grad[:, i] = (plus - minus) / (2 * h)
    for i, j in combinations(range(beta), 2):
        pts = {}
        for si in (1, -1):
            for sj in (1, -1):
                a = np.zeros(beta)
                a[i], a[j] = si * h, sj * h
                pts[si, sj] = lam(a)
        mixed = (pts[1, 1] - pts[1, -1] - pts[-1, 1] + pts[-1, -1]) / (4 * h**2)
        second[:, i, j] = second[:, j, i] = mixed
    return second, grad


def fd_hessians(op: DiscreteOperator, h: float = FD_STEP) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference Hessians and gradients of all eigenvalues.

    One Richardson level (``h`` and ``h/2``). Eigenvalues are tracked by sorted
    order, which is only safe away from near-crossings.
    """
    coarse, grad = _stencil_values(op, h)
    fine, grad_fine = _stencil_values(op, h / 2)
    return (4 * fine - coarse) / 3, (4 * grad_fine - grad) / 3


def hessian_fd(op: DiscreteOperator, n: int, h: float = FD_STEP) -> MagneticHessian:
    lam = eigenvalues(op.base_matrix)
    gaps = np.abs(np.delete(lam, n - 1) - lam[n - 1])
    if gaps.size and gaps.min() < 10 * h**2:
        raise DegenerateEigenvalueError(
            f"gap {gaps.min():.2e} at eigenvalue {n} too small for step {h}"
        )
    hess, _ = fd_hessians(op, h)
    return MagneticHessian.from_matrix(n, hess[n - 1])


@dataclass(frozen=True)
class MorseRow:
    n: int
    eigenvalue: float
    sigma: int
    morse: int
    passed: bool


@dataclass(frozen=True)
class SurplusMorseTable:
    rows: tuple[MorseRow, ...]
    skipped: tuple[tuple[int, str], ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def verify_surplus_equals_morse(
    op: DiscreteOperator,
    spec: DiscreteSpectrum | None = None,
    hessians: np.ndarray | None = None,
) -> SurplusMorseTable:
    spec = spec if spec is not None else spectrum(op)
    report = nodal_report(op, spec)
    hess = hessians if hessians is not None else perturbative_hessians(op, spec)
    rows = []
    for n in spec.generic_set:
        sigma = report.entries[n].sigma
        m = morse_index(hess[n - 1])
        rows.append(MorseRow(n, float(spec.eigenvalues[n - 1]), sigma, m, sigma == m))
    return SurplusMorseTable(tuple(rows), tuple(spec.skipped()))


@dataclass(frozen=True)
class TraceIdentities:
    sum_hessians: np.ndarray
    weighted_sum: np.ndarray
    scale: float
    weighted_scale: float
    passed: bool


def _require_all_simple(spec: DiscreteSpectrum):
    bad = [n for n, r in spec.skipped() if r == "degenerate"]
    if bad:
        raise DegenerateEigenvalueError(f"eigenvalues {bad} are not simple")


def trace_identities(
    op: DiscreteOperator,
    spec: DiscreteSpectrum | None = None,
    hessians: np.ndarray | None = None,
    tol: float = TRACE_TOL,
) -> TraceIdentities:
    """Check that the Hessians, and the eigenvalue-weighted Hessians, sum to zero."""
    spec = spec if spec is not None else spectrum(op)
    _require_all_simple(spec)
    hess = hessians if hessians is not None else perturbative_hessians(op, spec)
    lam = np.asarray(spec.eigenvalues)
    if op.beta == 0:
        z = np.zeros((0, 0))
        return TraceIdentities(z, z, 0.0, 0.0, True)
    total = hess.sum(axis=0)
    weighted = np.tensordot(lam, hess, axes=1)
    norms = np.abs(hess).max(axis=(1, 2))
    scale = float(norms.sum())
    wscale = float((np.abs(lam) * norms).sum())
    ok = np.abs(total).max() <= tol * scale and np.abs(weighted).max() <= tol * wscale
    return TraceIdentities(total, weighted, scale, wscale, bool(ok))


def forbidden_surplus_check(sigma, beta: int) -> bool:
    """False when the surplus sequence is a block of zeros followed by a block of betas.

    ``sigma`` may be a :class:`NodalReport` (all eigenvalues generic) or a plain
    sequence. For ``beta == 0`` the all-zero sequence is the tree count and is
    allowed; for ``beta > 0`` the all-zero case is forbidden as well.
    """
    if isinstance(sigma, NodalReport):
        seq = sigma.sigma()
        if any(s is None for s in seq):
            raise ValueError("surplus shape check needs every eigenvalue generic")
    else:
        seq = list(sigma)
    if beta == 0:
        return True
    if any(s not in (0, beta) for s in seq):
        return True
    return any(a > b for a, b in zip(seq, seq[1:]))


@dataclass(frozen=True)
class GirthResult:
    girth: int | None
    scalar_girth: int | None
    # k -> (max-norm of sum lambda^(k-1) H, threshold, scalar trace sum)
    values: dict[int, tuple[float, float, float]]
    ambiguous: tuple[int, ...]


def girth_from_traces(
    op: DiscreteOperator,
    spec: DiscreteSpectrum | None = None,
    hessians: np.ndarray | None = None,
    threshold: float = GIRTH_THRESHOLD,
    k_max: int | None = None,
) -> GirthResult:
    """Smallest ``k >= 2`` with ``sum_n lambda_n^(k-1) H_n`` above threshold.

    The threshold is relative: ``threshold * sum_n |lambda_n|^(k-1) max|H_n|``.
    Values within a decade of the threshold are listed in ``ambiguous``.
    """
    if op.beta == 0:
        raise ValueError("girth from traces needs a graph with cycles")
    spec = spec if spec is not None else spectrum(op)
    _require_all_simple(spec)
    hess = hessians if hessians is not None else perturbative_hessians(op, spec)
    lam = np.asarray(spec.eigenvalues)
    norms = np.abs(hess).max(axis=(1, 2))
    traces = np.trace(hess, axis1=1, axis2=2)
    k_max = k_max if k_max is not None else op.size
    values, ambiguous = {}, []
    girth = scalar = None
    for k in range(2, k_max + 1):
        w = lam ** (k - 1)
        mat = np.abs(np.tensordot(w, hess, axes=1)).max()
        limit = threshold * float(np.sum(np.abs(w) * norms))
        tr = float(np.dot(w, traces))
        values[k] = (float(mat), limit, tr)
        if limit / 10 < mat < limit * 10:
            ambiguous.append(k)
        if girth is None and mat > limit:
            girth = k
        if scalar is None and abs(tr) > limit:
            scalar = k
        if girth is not None and scalar is not None:
            break
    return GirthResult(girth, scalar, values, tuple(ambiguous))
