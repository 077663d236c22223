import math
from fractions import Fraction

import numpy as np
import pytest

from nodal_lab.metric import MetricGraph, k_hessian_fd, k_spectrum, metric_nodal_report, secular_value
from nodal_lab.torus import (
    F_on_torus,
    InconsistentDecompositionError,
    LengthDecomposition,
    decompose_lengths,
    revisit_check,
    surplus_statistics,
    symmetry_pair,
    symmetry_residuals,
    torus_hessian,
)

from conftest import DUMBBELL_LENGTHS, EIGHT_LENGTHS, LASSO_LENGTHS, graph, path

SQ2 = math.sqrt(2)
LASSO2_LENGTHS = [1.0, SQ2, 2.0, SQ2 / 2]
LASSO2_RELATIONS = [[2, 0, -1, 0], [0, 1, 0, -2]]


@pytest.fixture
def lasso(lasso_graph):
    mg = MetricGraph(lasso_graph, LASSO_LENGTHS)
    return mg, decompose_lengths(mg.lengths)


@pytest.fixture
def lasso2(lasso_graph):
    mg = MetricGraph(lasso_graph, LASSO2_LENGTHS)
    return mg, decompose_lengths(mg.lengths, LASSO2_RELATIONS)


def test_independent_lengths():
    d = decompose_lengths([SQ2, math.sqrt(3)])
    assert d.size == 2
    np.testing.assert_allclose(d.generators, [SQ2, math.sqrt(3)])


def test_rational_lengths_collapse_to_one_generator():
    d = decompose_lengths([1, 2, 3], [[2, -1, 0], [3, 0, -1]])
    assert d.size == 1
    assert d.coefficients == ((Fraction(1),), (Fraction(2),), (Fraction(3),))
    np.testing.assert_allclose(d.periods, [2 * math.pi])


def test_one_relation():
    d = decompose_lengths([SQ2, 2 * SQ2, math.sqrt(3)], [[2, -1, 0]])
    assert d.size == 2
    np.testing.assert_array_equal(d.matrix, [[1, 0], [2, 0], [0, 1]])
    np.testing.assert_allclose(d.lengths(), [SQ2, 2 * SQ2, math.sqrt(3)], rtol=1e-12)


def test_decomposition_errors():
    with pytest.raises(InconsistentDecompositionError):
        decompose_lengths([1.0, 2.5], [[2, -1]])
    with pytest.raises(ValueError):
        LengthDecomposition([1.0, 2.0], [[1, 2], [2, 4]])
    with pytest.raises(ValueError):
        decompose_lengths([1.0, 2.0], [[1, 2, 3]])


def test_length_map_is_linear(lasso2):
    _, d = lasso2
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(2, d.size))
    np.testing.assert_allclose(d.lengths(2 * x - 3 * y), 2 * d.lengths(x) - 3 * d.lengths(y), atol=1e-12)


def test_json_round_trip(lasso2):
    _, d = lasso2
    back = LengthDecomposition.from_json(d.to_json())
    assert back.coefficients == d.coefficients
    np.testing.assert_array_equal(back.generators, d.generators)


def test_F_on_flow_line_equals_secular_function(lasso2):
    mg, d = lasso2
    rng = np.random.default_rng(1)
    for k in rng.uniform(0, 50, 100):
        assert F_on_torus(mg, d, k * d.generators) == pytest.approx(float(secular_value(mg, k)), abs=1e-10)


def test_periodicity(lasso2):
    mg, d = lasso2
    rng = np.random.default_rng(2)
    for _ in range(50):
        x = rng.uniform(-5, 5, d.size)
        a = rng.uniform(-math.pi, math.pi, 1)
        base = F_on_torus(mg, d, x, a)
        for i, t in enumerate(d.periods):
            shifted = x.copy()
            shifted[i] += t
            assert F_on_torus(mg, d, shifted, a) == pytest.approx(base, abs=1e-10)


def test_mirror_symmetry_odd_beta(lasso):
    mg, d = lasso
    assert mg.system.det_sign == 1
    res = symmetry_residuals(mg, d, 1000, seed=3)
    assert max(r / s for r, _, s in res) < 1e-10


def test_mirror_symmetry_carries_det_S(dumbbell_graph, eight_graph):
    # with beta even det S = -1 and the mirrored value flips sign
    for g, lengths in ((dumbbell_graph, DUMBBELL_LENGTHS), (eight_graph, EIGHT_LENGTHS)):
        mg = MetricGraph(g, lengths)
        assert mg.system.det_sign == -1
        res = symmetry_residuals(mg, decompose_lengths(mg.lengths), 200, seed=4)
        assert max(r / s for _, r, s in res) < 1e-10
        assert max(r / s for r, _, s in res) > 1e-3


def test_det_S_parity():
    from nodal_lab.ensemble import random_connected_graph

    rng = np.random.default_rng(8)
    for _ in range(40):
        n = int(rng.integers(3, 8))
        b = int(rng.integers(0, min(3, n * (n - 1) // 2 - n + 1) + 1))
        g = random_connected_graph(rng, n, b)
        assert MetricGraph(g, np.ones(g.edge_count)).system.det_sign == (-1) ** (b + 1)


def test_torus_hessian_matches_root_tracking(lasso2):
    mg, d = lasso2
    spec = k_spectrum(mg, 30.0)
    report = metric_nodal_report(mg, spec)
    entries = report.generic_entries(positive_only=True)[:20]
    assert len(entries) == 20
    for e in entries:
        th = torus_hessian(mg, d, e.k)
        fd = k_hessian_fd(mg, e.k)
        assert np.abs(th.matrix - fd.matrix).max() < 1e-4
        assert th.morse_index == e.sigma


def test_torus_hessian_on_tree():
    mg = MetricGraph(path(3), [1.0, SQ2])
    k = k_spectrum(mg, 5.0).roots[1]
    assert torus_hessian(mg, decompose_lengths(mg.lengths), k).matrix.shape == (0, 0)


def test_mirror_point_complements_morse(lasso2):
    mg, d = lasso2
    report = metric_nodal_report(mg, k_spectrum(mg, 20.0))
    for e in report.generic_entries(positive_only=True)[:10]:
        pair = symmetry_pair(mg, d, e.k)
        assert pair.antisymmetric_error < 1e-6 * max(1.0, np.abs(pair.ratio_plus).max())
        assert pair.morse_sum_ok


def test_revisits_keep_the_morse_index(lasso2):
    mg, d = lasso2
    report = metric_nodal_report(mg, k_spectrum(mg, 10.0))
    k0 = report.generic_entries(positive_only=True)[0].k
    check = revisit_check(mg, d, k0, count=10, mirror_count=3)
    assert len(check.same) == 10 and len(check.mirrored) == 3
    assert check.passed
    assert all(r.distance < 1e-2 for r in check.same + check.mirrored)


def test_surplus_statistics(lasso_graph, dumbbell_graph, eight_graph):
    tree = MetricGraph(graph(5, [(1, 2), (2, 3), (2, 4), (4, 5)]), [1.0, SQ2, math.sqrt(3), math.sqrt(5)])
    stats = surplus_statistics(tree, 100)
    assert stats.counts == {0: 100} and stats.passed
    lasso = surplus_statistics(MetricGraph(lasso_graph, LASSO_LENGTHS), 200)
    assert set(lasso.counts) == {0, 1} and lasso.passed
    dumbbell = surplus_statistics(MetricGraph(dumbbell_graph, DUMBBELL_LENGTHS), 200)
    assert set(dumbbell.counts) == {0, 1, 2} and dumbbell.passed
    assert sum(c for _, c, _ in dumbbell.rows()) == 200
    # on a figure-eight the modes alive at the shared vertex all have surplus 1 = 2 - 1
    eight = surplus_statistics(MetricGraph(eight_graph, EIGHT_LENGTHS), 200)
    assert eight.counts == {1: 200} and eight.passed


def test_statistics_never_exceed_bounds(dumbbell_graph):
    mg = MetricGraph(dumbbell_graph, DUMBBELL_LENGTHS)
    report = metric_nodal_report(mg, k_spectrum(mg, 80.0))
    for e in report.generic_entries():
        assert 0 <= e.sigma <= 2 and e.n - 2 <= e.nu <= e.n
