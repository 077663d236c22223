import math

import numpy as np
import pytest

from nodal_lab.discrete import build_normalized, spectrum
from nodal_lab.discretizer import (
    arccos_branches,
    branch_value,
    directional_derivative_sign_check,
    discretize,
    enumerate_discretizations,
    in_image,
    lift_error,
    normalized_similarity,
    transition_lift,
    transition_matrix,
    verify_equilateral_connection,
    verify_surplus_transfer,
)
from nodal_lab.ensemble import random_connected_graph
from nodal_lab.graph import betti_number, subdivide
from nodal_lab.metric import MetricGraph, equilateral, k_spectrum, metric_nodal_report
from nodal_lab.torus import decompose_lengths

from conftest import LASSO_LENGTHS, cube, cycle, path, star

SQ2, SQ3 = math.sqrt(2), math.sqrt(3)


def _random_graphs(count, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(2, 9))
        yield random_connected_graph(rng, n, int(rng.integers(0, min(3, n * (n - 1) // 2 - n + 1) + 1)))


def test_transition_examples():
    np.testing.assert_array_equal(transition_matrix(path(2)), [[0, 1], [1, 0]])
    p = transition_matrix(cycle(3))
    np.testing.assert_array_equal(p, 0.5 * (np.ones((3, 3)) - np.eye(3)))
    for g in _random_graphs(20):
        np.testing.assert_allclose(transition_matrix(g).sum(axis=1), 1.0, atol=1e-15)


def test_transition_similarity_conventions():
    # P = I - D^{-1/2} L D^{1/2}; the other ordering gives the transpose
    for g in _random_graphs(30, seed=1):
        p = transition_matrix(g)
        np.testing.assert_allclose(normalized_similarity(g, -0.5), p, atol=1e-12)
        np.testing.assert_allclose(normalized_similarity(g, 0.5), p.T, atol=1e-12)


def test_stated_similarity_is_not_row_stochastic(lasso_graph):
    q = normalized_similarity(lasso_graph, 0.5)
    assert np.abs(q.sum(axis=1) - 1).max() > 0.1


def test_eigenpair_correspondence():
    for g in _random_graphs(30, seed=2):
        spec = spectrum(build_normalized(g))
        p = transition_matrix(g)
        for mu, f in zip(spec.eigenvalues, spec.eigenvectors.T):
            v = transition_lift(g, f)
            np.testing.assert_allclose(p @ v, (1 - mu) * v, atol=1e-10)


def test_arccos_examples():
    np.testing.assert_allclose(arccos_branches(1.0), [0.5, 1.5, 2.5, 3.5] * np.array(math.pi), atol=1e-15)
    np.testing.assert_allclose(
        arccos_branches(1.5), np.array([2, 4, 8, 10]) * math.pi / 3, atol=1e-14
    )
    for mu in (0.1, 0.9, 1.7):
        ks = arccos_branches(mu, 6)
        assert np.all(np.diff(ks) > 0)
        for p, k in enumerate(ks):
            assert p * math.pi < k < (p + 1) * math.pi
            assert math.cos(k) == pytest.approx(1 - mu, abs=1e-14)
    for bad in (0.0, 2.0, -0.1, 2.5):
        with pytest.raises(ValueError):
            branch_value(bad, 0)


def test_enumeration_examples():
    d = decompose_lengths([SQ2, SQ3])
    found = enumerate_discretizations(d, 3)
    assert len(found.vectors) == 9 and found.hint is None
    d = decompose_lengths([1, 2], [[2, -1]])
    assert enumerate_discretizations(d, 6).vectors == ((1, 2), (2, 4), (3, 6))
    d = decompose_lengths([SQ2, 2 * SQ2, SQ3], [[2, -1, 0]])
    vecs = enumerate_discretizations(d, 4).vectors
    assert set(vecs) == {(m, 2 * m, p) for m in (1, 2) for p in range(1, 5)}


def test_enumeration_hint():
    d = decompose_lengths([1, 5], [[5, -1]])
    found = enumerate_discretizations(d, 3)
    assert found.vectors == () and "bound" in found.hint
    assert enumerate_discretizations(d, 5).vectors == ((1, 5),)


def test_image_membership():
    d = decompose_lengths([SQ2, 2 * SQ2, SQ3], [[2, -1, 0]])
    assert in_image(d, (3, 6, 1))
    assert not in_image(d, (3, 5, 1))


def test_discretize_preserves_betti(lasso_graph):
    mg = MetricGraph(lasso_graph, [1.0, SQ2, 2.0, SQ2 / 2])
    d = decompose_lengths(mg.lengths, [[2, 0, -1, 0], [0, 1, 0, -2]])
    for j in enumerate_discretizations(d, 6).vectors:
        version = discretize(mg, d, j)
        assert betti_number(version.graph) == 1
        assert version.graph == subdivide(lasso_graph, j).graph
        assert version.graph.vertex_count == 4 + sum(v - 1 for v in j)
    with pytest.raises(ValueError):
        discretize(mg, d, (1, 1, 1, 1))


def test_equilateral_branches_are_roots(lasso_graph, dumbbell_graph, eight_graph):
    for g in (lasso_graph, dumbbell_graph, eight_graph):
        report = verify_equilateral_connection(g)
        assert report.outcome == "checked"
        assert report.branches_ok and report.dirichlet_ok
        # vertex values follow D^{-1/2} f (the eigenvector of P), not D^{1/2} f
        assert report.corrected_lift_ok
        assert not report.stated_lift_ok


def test_equilateral_vacuous_cases():
    for g in (star(3), cycle(4), cube()):
        report = verify_equilateral_connection(g)
        assert report.outcome == "vacuous"
        assert report.dirichlet_ok
    assert verify_equilateral_connection(cube(), p_max=1).skipped


def test_equilateral_root_count_complete(lasso_graph):
    mg = equilateral(lasso_graph)
    k_max = 4 * math.pi - 0.05
    spec = k_spectrum(mg, k_max)
    mus = spectrum(build_normalized(lasso_graph)).eigenvalues
    branch = [k for mu in mus if 1e-9 < mu < 2 - 1e-9 for k in arccos_branches(mu, 3) if k <= k_max]
    dirichlet = [(root, m) for root, m in zip(spec.roots, spec.multiplicities) if root > 0 and abs(root / math.pi - round(root / math.pi)) < 1e-8]
    assert int(spec.multiplicities[1:].sum()) == len(branch) + sum(m for _, m in dirichlet)


def test_lift_error_ignores_sign():
    assert lift_error([1.0, -1.0], [-2.0, 2.0]) == pytest.approx(0.0)
    assert lift_error([1.0, 0.0], [0.0, 1.0]) > 0.5


def test_surplus_transfer(lasso_graph, dumbbell_graph):
    for g in (lasso_graph, dumbbell_graph):
        report = verify_surplus_transfer(g)
        assert report.outcome == "checked" and report.passed
        for check in report.checks:
            assert [b.p for b in check.branches] == [0, 1, 2, 3]
            for b in check.branches:
                assert b.morse == b.expected_morse
                assert b.derivative_sign == (-1) ** b.p


def test_surplus_transfer_vacuous():
    assert verify_surplus_transfer(path(4)).outcome == "vacuous"
    assert verify_surplus_transfer(cycle(4)).outcome == "vacuous"


def test_directional_derivatives(lasso_graph):
    mg = MetricGraph(lasso_graph, [1.0, SQ2, 2.0, SQ2 / 2])
    d = decompose_lengths(mg.lengths, [[2, 0, -1, 0], [0, 1, 0, -2]])
    report = metric_nodal_report(mg, k_spectrum(mg, 30.0))
    roots = [lv.k for lv in report.levels if lv.k > 0 and lv.multiplicity == 1][:20]
    j = enumerate_discretizations(d, 4).vectors[0]
    assert directional_derivative_sign_check(mg, d, j, roots).passed


def test_directional_derivatives_random_decomposition(eight_graph):
    rng = np.random.default_rng(6)
    a, b = rng.uniform(0.5, 1.5, 2)
    coeffs = [[1, 0], [0, 1], [1, 1], [2, 0], [0, 2], [1, 2], [3, 1]]
    lengths = [ca * a + cb * b for ca, cb in coeffs]
    mg = MetricGraph(eight_graph, lengths)
    d = decompose_lengths(lengths, [[1, 1, -1, 0, 0, 0, 0], [2, 0, 0, -1, 0, 0, 0], [0, 2, 0, 0, -1, 0, 0], [1, 2, 0, 0, 0, -1, 0], [3, 1, 0, 0, 0, 0, -1]])
    assert d.size == 2
    spec = k_spectrum(mg, 40.0)
    roots = [k for k, m in zip(spec.roots, spec.multiplicities) if k > 0 and m == 1][:50]
    assert len(roots) == 50
    j = enumerate_discretizations(d, 12).vectors[0]
    assert directional_derivative_sign_check(mg, d, j, roots).passed


def test_directional_parallel_case(lasso_graph):
    mg = equilateral(lasso_graph)
    d = decompose_lengths(mg.lengths, [[1, -1, 0, 0], [1, 0, -1, 0], [1, 0, 0, -1]])
    spec = k_spectrum(mg, 10.0)
    roots = [k for k, m in zip(spec.roots, spec.multiplicities) if k > 0 and m == 1]
    assert directional_derivative_sign_check(mg, d, (2, 2, 2, 2), roots).passed
