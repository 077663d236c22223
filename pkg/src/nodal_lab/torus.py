"""Secular function on the length torus.

Edge lengths are written as ``l = r xi`` with ``xi`` rationally independent
generators and ``r`` a rational matrix. With ``L(x) = r x`` the function
``F(x; alpha) = Ftilde(1; L(x); alpha)`` lives on a torus whose periods come
from the denominators of ``r``, and ``Ftilde(k; l; alpha) = F(k xi; alpha)``.
The eigenvalues are the times at which the line ``k xi`` crosses ``F = 0``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce

import numpy as np
import sympy

from .magnetic import FD_STEP, morse_index
from .metric import (
    MetricGraph,
    RootTrackingError,
    eigenfunction,
    find_roots,
    k_spectrum,
    metric_nodal_report,
    scan_step,
)

CONSISTENCY_TOL = 1e-10
REVISIT_RADIUS = 1e-2
DERIVATIVE_TOL = 1e-10


class InconsistentDecompositionError(ValueError):
    pass


def _fraction(value) -> Fraction:
    if isinstance(value, (list, tuple)):
        num, den = value
        return Fraction(int(num), int(den))
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"rational entries must be exact, got float {value!r}")
        return Fraction(int(value))
    return Fraction(value)


@dataclass(frozen=True)
class LengthDecomposition:
    generators: np.ndarray
    # |E| x |I| exact rationals
    coefficients: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self):
        xi = np.asarray(self.generators, dtype=float)
        xi.setflags(write=False)
        object.__setattr__(self, "generators", xi)
        rows = tuple(tuple(_fraction(c) for c in row) for row in self.coefficients)
        if any(len(row) != len(xi) for row in rows):
            raise ValueError("every coefficient row needs one entry per generator")
        if sympy.Matrix(rows).rank() != len(xi):
            raise ValueError("coefficient matrix must have full column rank")
        object.__setattr__(self, "coefficients", rows)

    @property
    def size(self) -> int:
        return len(self.generators)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[float(c) for c in row] for row in self.coefficients]).reshape(
            len(self.coefficients), self.size
        )

    def lengths(self, x=None) -> np.ndarray:
        """``L(x)``; the actual edge lengths when ``x`` is omitted."""
        x = self.generators if x is None else np.asarray(x, dtype=float)
        return self.matrix @ x

    @property
    def periods(self) -> np.ndarray:
        """Smallest ``T_i`` with ``r_ei T_i`` in ``2 pi Z`` for every edge."""
        out = []
        for i in range(self.size):
            col = [row[i] for row in self.coefficients if row[i] != 0]
            den = reduce(math.lcm, (c.denominator for c in col), 1)
            num = reduce(math.gcd, (abs(c.numerator) for c in col), 0)
            out.append(2 * math.pi * den / num)
        return np.array(out)

    def wrap(self, x) -> np.ndarray:
        return np.mod(np.asarray(x, dtype=float), self.periods)

    def distance(self, x, y) -> float:
        """Max-norm distance on the torus."""
        t = self.periods
        d = np.mod(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), t)
        return float(np.max(np.minimum(d, t - d)))

    def to_json(self) -> dict:
        return {
            "generators": [float(x) for x in self.generators],
            "coefficients": [[[c.numerator, c.denominator] for c in row] for row in self.coefficients],
        }

    @classmethod
    def from_json(cls, data: dict) -> "LengthDecomposition":
        xi = list(data["generators"])
        rows = data["coefficients"]
        if len(xi) == 1 and rows and not isinstance(rows[0][0], (list, tuple)):
            rows = [[row] for row in rows]  # single generator: one [num, den] per edge
        return cls(np.array(xi, dtype=float), tuple(tuple(_fraction(c) for c in row) for row in rows))


def decompose_lengths(lengths, relations=()) -> LengthDecomposition:
    """Generators and rational coefficients from declared relations.

    Each relation is a tuple ``c`` of rationals with ``sum_e c_e l_e = 0``; the
    lengths are otherwise assumed independent over the rationals. The
    generators are the lengths of pivot edges of the reduced relation null
    space, so ``|I| = |E| - rank(relations)``.
    """
    lengths = np.asarray(lengths, dtype=float)
    m = len(lengths)
    rel = [tuple(_fraction(c) for c in row) for row in relations]
    for row in rel:
        if len(row) != m:
            raise ValueError(f"relation {row} needs {m} entries")
    if rel:
        basis = sympy.Matrix([[sympy.Rational(c.numerator, c.denominator) for c in row] for row in rel]).nullspace()
    else:
        basis = [sympy.eye(m)[:, i] for i in range(m)]
    if not basis:
        raise InconsistentDecompositionError("relations force every length to vanish")
    # columns of r in reduced form: identity on the pivot edges
    r_t, pivots = sympy.Matrix.hstack(*basis).T.rref()
    r = r_t.T
    coeffs = tuple(
        tuple(Fraction(int(r[e, i].p), int(r[e, i].q)) for i in range(r.shape[1])) for e in range(m)
    )
    decomp = LengthDecomposition(lengths[list(pivots)], coeffs)
    err = np.max(np.abs(decomp.lengths() - lengths))
    if err > CONSISTENCY_TOL * max(1.0, np.max(np.abs(lengths))):
        raise InconsistentDecompositionError(
            f"declared relations disagree with the lengths by {err:.2e}"
        )
    if np.any(decomp.generators <= 0):
        raise InconsistentDecompositionError("generators must be positive")
    return decomp


def F_on_torus(mg: MetricGraph, decomp: LengthDecomposition, x, alpha=None) -> float:
    """``Ftilde(1; L(x); alpha)``; any real ``x`` is accepted."""
    return float(mg.system.value(1.0, decomp.lengths(x), alpha))


def _flux_hessian_of_F(mg, decomp, x, h=FD_STEP) -> np.ndarray:
    beta = mg.beta

    def f(alpha):
        return F_on_torus(mg, decomp, x, alpha)

    def stencil(step):
        f0 = f(np.zeros(beta))
        out = np.zeros((beta, beta))
        for i in range(beta):
            e = np.zeros(beta)
            e[i] = step
            out[i, i] = (f(e) - 2 * f0 + f(-e)) / step**2
            for j in range(i + 1, beta):
                vals = {}
                for si in (1, -1):
                    for sj in (1, -1):
                        a = np.zeros(beta)
                        a[i], a[j] = si * step, sj * step
                        vals[si, sj] = f(a)
                out[i, j] = out[j, i] = (
                    vals[1, 1] - vals[1, -1] - vals[-1, 1] + vals[-1, -1]
                ) / (4 * step**2)
        return out

    return (4 * stencil(h / 2) - stencil(h)) / 3


def flow_derivative(mg, decomp, x, h: float = 1e-5) -> float:
    """``xi . grad F`` at ``x`` (equal to ``dFtilde/dk`` on the flow line)."""
    xi = decomp.generators
    g = lambda t: F_on_torus(mg, decomp, np.asarray(x) + t * xi)
    d1 = (g(h) - g(-h)) / (2 * h)
    d2 = (g(h / 2) - g(-h / 2)) / h
    return (4 * d2 - d1) / 3


@dataclass(frozen=True)
class TorusHessian:
    k: float
    hessian_F: np.ndarray
    flow_derivative: float
    matrix: np.ndarray
    morse_index: int


def torus_hessian_at(mg, decomp, x, k: float = float("nan")) -> TorusHessian:
    """``-H_F / (xi . grad F)`` at the torus point ``x`` and zero flux."""
    if mg.beta == 0:
        z = np.zeros((0, 0))
        return TorusHessian(k, z, float("nan"), z, 0)
    hf = _flux_hessian_of_F(mg, decomp, x)
    d = flow_derivative(mg, decomp, x)
    scale = max(1.0, np.max(np.abs(hf)))
    if abs(d) < DERIVATIVE_TOL * scale:
        raise ValueError(f"flow derivative {d:.2e} vanishes; root is not simple")
    mat = -hf / d
    return TorusHessian(k, hf, d, mat, morse_index(mat))


def torus_hessian(mg: MetricGraph, decomp: LengthDecomposition, k: float) -> TorusHessian:
    """Flux Hessian of the root ``k`` from derivatives of ``F`` at ``k xi``."""
    return torus_hessian_at(mg, decomp, k * decomp.generators, k)


@dataclass(frozen=True)
class SymmetryPair:
    k: float
    ratio_plus: np.ndarray  # H_F / (xi . grad F) at  k xi
    ratio_minus: np.ndarray  # H_F / (xi . grad F) at -k xi
    morse_plus: int
    morse_minus: int
    beta: int

    @property
    def antisymmetric_error(self) -> float:
        if self.ratio_plus.size == 0:
            return 0.0
        return float(np.max(np.abs(self.ratio_plus + self.ratio_minus)))

    @property
    def morse_sum_ok(self) -> bool:
        return self.morse_plus + self.morse_minus == self.beta


def symmetry_pair(mg, decomp, k: float) -> SymmetryPair:
    """Compare the Hessian formula at ``k xi`` with the mirrored point ``-k xi``."""
    x = k * decomp.generators
    plus = torus_hessian_at(mg, decomp, x, k)
    minus = torus_hessian_at(mg, decomp, -x, -k)
    return SymmetryPair(
        k, -plus.matrix, -minus.matrix, plus.morse_index, minus.morse_index, mg.beta
    )


def symmetry_residuals(mg, decomp, count: int, seed: int = 0, x_scale: float = 10.0):
    """Mirror-symmetry residuals of ``F`` at ``count`` random points.

    Rows are ``(|F(x; a) - F(-x; -a)|, |F(x; a) - det(S) F(-x; -a)|, scale)``.
    Since ``S`` is real, ``F(-x; -a)`` is the conjugate of the unrotated
    determinant, so the two sides differ by exactly ``det S`` in general.
    """
    rng = np.random.default_rng(seed)
    sign = mg.system.det_sign
    out = []
    for _ in range(count):
        x = rng.uniform(-x_scale, x_scale, decomp.size)
        a = rng.uniform(-math.pi, math.pi, mg.beta)
        z1 = mg.system.complex_value(1.0, decomp.lengths(x), a)
        z2 = mg.system.complex_value(1.0, decomp.lengths(-x), -a)
        scale = max(1.0, abs(z1), abs(z2))
        out.append((abs(z1.real - z2.real), abs(z1.real - sign * z2.real), scale))
    return out


@dataclass(frozen=True)
class Revisit:
    k: float
    distance: float
    simple: bool
    generic: bool
    morse: int | None


def _root_near(mg, t: float, width: float):
    lo = max(t - width, 1e-6)
    roots = find_roots(mg.system, mg.lengths, None, lo, t + width, scan_step(mg))
    if not roots:
        return None
    return min(roots, key=lambda r: abs(r[0] - t))


def revisits(
    mg: MetricGraph,
    decomp: LengthDecomposition,
    k0: float,
    count: int = 10,
    delta: float = REVISIT_RADIUS,
    mirror: bool = False,
    max_steps: int = 200_000,
) -> list[Revisit]:
    """Later roots whose torus point returns within ``delta`` of ``k0 xi``.

    With ``mirror`` the target is ``-k0 xi`` instead. Candidates are times at
    which the first generator coordinate hits the target exactly; the nearest
    root to each candidate is then located on the line.
    """
    xi = decomp.generators
    periods = decomp.periods
    x0 = k0 * xi
    target = -x0 if mirror else x0
    step_t = periods[0] / xi[0]
    # first time the flow's first coordinate equals the target's, past k0
    t = (target[0] / xi[0]) % step_t
    while t <= k0 + 1e-9:
        t += step_t
    out = []
    steps = 0
    while len(out) < count and steps < max_steps:
        steps += 1
        if decomp.distance(t * xi, target) < delta / 2:
            root = _root_near(mg, t, 2 * delta / float(np.min(xi)))
            if root is not None:
                k, mult = root
                dist = decomp.distance(k * xi, target)
                if dist < delta:
                    out.append(_classify(mg, decomp, k, mult, dist))
        t += step_t
    if len(out) < count:
        raise RootTrackingError(f"only {len(out)} returns within {delta} found")
    return out


def _classify(mg, decomp, k, mult, dist) -> Revisit:
    if mult != 1:
        return Revisit(k, dist, False, False, None)
    pair = eigenfunction(mg, k)
    morse = torus_hessian(mg, decomp, k).morse_index if pair.generic_flag else None
    return Revisit(k, dist, True, pair.generic_flag, morse)


@dataclass(frozen=True)
class RevisitCheck:
    """Returns of the flow near a reference root and near its mirror point."""

    k0: float
    morse0: int
    beta: int
    same: tuple[Revisit, ...]
    mirrored: tuple[Revisit, ...]

    @property
    def passed(self) -> bool:
        same = all(r.simple and r.generic and r.morse == self.morse0 for r in self.same)
        mirror = all(
            r.simple and r.generic and r.morse == self.beta - self.morse0 for r in self.mirrored
        )
        return same and mirror


def revisit_check(mg, decomp, k0: float, count: int = 10, mirror_count: int = 3, delta: float = REVISIT_RADIUS):
    """Morse index constancy near ``k0 xi`` and complementarity near ``-k0 xi``."""
    pair = eigenfunction(mg, k0)
    if not pair.generic_flag:
        raise ValueError(f"reference root k={k0} is not generic")
    morse0 = torus_hessian(mg, decomp, k0).morse_index
    same = revisits(mg, decomp, k0, count, delta)
    mirrored = revisits(mg, decomp, k0, mirror_count, delta, mirror=True) if mirror_count else []
    return RevisitCheck(k0, morse0, mg.beta, tuple(same), tuple(mirrored))


@dataclass(frozen=True)
class SurplusStatistics:
    beta: int
    counts: dict[int, int]
    total: int
    k_max: float

    @property
    def frequencies(self) -> dict[int, float]:
        return {s: c / self.total for s, c in self.counts.items()}

    @property
    def passed(self) -> bool:
        seen = set(self.counts)
        return bool(seen) and all(self.beta - s in seen for s in seen)

    def rows(self):
        for s in range(self.beta + 1):
            c = self.counts.get(s, 0)
            yield s, c, c / self.total if self.total else 0.0


def surplus_statistics(mg: MetricGraph, n: int, k_max: float | None = None) -> SurplusStatistics:
    """Histogram of surpluses over the first ``n`` generic positive eigenvalues.

    The constant mode at ``k = 0`` is left out. If the ceiling yields too few
    generic eigenvalues it is doubled once before giving up.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    k_max = k_max or math.pi * (2 * n + 10) / mg.total_length
    for attempt in range(2):
        report = metric_nodal_report(mg, k_spectrum(mg, k_max))
        entries = report.generic_entries(positive_only=True)
        if len(entries) >= n:
            counts = Counter(e.sigma for e in entries[:n])
            return SurplusStatistics(mg.beta, dict(sorted(counts.items())), n, k_max)
        if attempt == 0:
            k_max *= 2
    raise RuntimeError(f"only {len(entries)} generic eigenvalues below k={k_max}")
