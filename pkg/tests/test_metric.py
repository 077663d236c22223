import math

import numpy as np
import pytest
from scipy.optimize import brentq

from nodal_lab.ensemble import random_connected_graph
from nodal_lab.graph import subdivide
from nodal_lab.metric import (
    MetricGraph,
    SecularSystem,
    count_edge_zeros,
    eigenfunction,
    equilateral,
    k_hessian_fd,
    k_spectrum,
    metric_nodal_report,
    secular_value,
)

from conftest import LASSO_LENGTHS, graph, path, star


@pytest.fixture
def interval():
    return MetricGraph(path(2), [math.pi])


@pytest.fixture
def lasso(lasso_graph):
    return MetricGraph(lasso_graph, LASSO_LENGTHS)


def _random_tree(seed, n=6):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(rng, n, 0)
    return MetricGraph(g, rng.uniform(0.5, 2.0, g.edge_count))


def test_metric_graph_validation(lasso_graph):
    with pytest.raises(ValueError):
        MetricGraph(lasso_graph, [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        MetricGraph(lasso_graph, [1.0, 0.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        MetricGraph(lasso_graph, [1.0] * 4, ("neumann", "robin", "neumann", "neumann"))


def test_scattering_matrix_is_real_unitary(lasso, eight_graph):
    for g in (lasso.graph, eight_graph, star(4)):
        s = SecularSystem.for_graph(g).scattering
        assert np.isrealobj(s)
        np.testing.assert_allclose(s @ s.T, np.eye(len(s)), atol=1e-12)


def test_secular_function_is_real(lasso):
    ks = np.linspace(0.1, 20, 500)
    z = lasso.system.complex_value(ks, lasso.lengths, None)
    assert np.max(np.abs(z.imag)) < 1e-9 * max(1, np.abs(z).max())
    z = lasso.system.complex_value(ks, lasso.lengths, [0.7])
    assert np.max(np.abs(z.imag)) < 1e-9 * max(1, np.abs(z).max())


def test_interval_roots(interval):
    spec = k_spectrum(interval, 30.5)
    assert spec.includes_zero
    np.testing.assert_allclose(spec.roots, np.arange(31), atol=1e-9)
    assert np.all(spec.multiplicities == 1)


def test_interval_eigenfunction(interval):
    pair = eigenfunction(interval, 2.0)
    x = np.linspace(0, math.pi, 101)
    f = pair.edge_values(0, x)
    np.testing.assert_allclose(np.abs(f), np.abs(np.cos(2 * x)), atol=1e-9)
    np.testing.assert_allclose(pair.vertex_values, [1.0, 1.0], atol=1e-9)


def test_distinct_star_against_scalar_equation():
    # Neumann star: sum_e tan(k l_e) = 0, i.e. sum_e sin(k l_e) prod_{e' != e} cos(k l_e') = 0
    lengths = np.array([1.0, math.sqrt(2), math.sqrt(3) / 2])
    mg = MetricGraph(star(3), lengths)

    def scalar(k):
        kl = np.multiply.outer(k, lengths)
        s, c = np.sin(kl), np.cos(kl)
        return sum(s[..., e] * np.prod(np.delete(c, e, axis=-1), axis=-1) for e in range(3))

    ks = np.linspace(1e-6, 25, 200001)
    vals = scalar(ks)
    idx = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    oracle = np.array([brentq(scalar, ks[i], ks[i + 1], xtol=1e-14) for i in idx])
    spec = k_spectrum(mg, 25.0)
    np.testing.assert_allclose(spec.roots[1:], oracle, atol=1e-9)


def test_equilateral_star_multiplicities():
    spec = k_spectrum(equilateral(star(3)), 3.5 * math.pi)
    np.testing.assert_allclose(spec.roots, np.arange(7) * math.pi / 2, atol=1e-9)
    assert list(spec.multiplicities) == [1, 2, 1, 2, 1, 2, 1]


def test_equilateral_cycle_double_roots():
    spec = k_spectrum(equilateral(graph(4, [(1, 2), (2, 3), (3, 4), (1, 4)])), 2 * math.pi + 0.1)
    np.testing.assert_allclose(spec.roots, np.arange(5) * math.pi / 2, atol=1e-9)
    assert list(spec.multiplicities) == [1, 2, 2, 2, 2]


def test_symmetric_star_mode():
    mg = equilateral(star(3))
    pair = eigenfunction(mg, math.pi)
    leaves = pair.vertex_values[1:]
    np.testing.assert_allclose(leaves, leaves[0], atol=1e-9)


def test_count_edge_zeros_examples():
    assert count_edge_zeros(2.0, math.pi, 1.0, 0.0) == 2
    assert count_edge_zeros(1.0, math.pi / 3, 1.0, 0.0) == 0
    with pytest.raises(ValueError):
        count_edge_zeros(1.0, 1.0, 0.0, 0.0)


def test_count_edge_zeros_against_dense_sampling(lasso):
    spec = k_spectrum(lasso, 30.0)
    report = metric_nodal_report(lasso, spec)
    checked = 0
    for level in report.levels:
        if not level.generic or level.k == 0:
            continue
        pair = level.eigenpair
        for e, l in enumerate(lasso.lengths):
            x = np.linspace(0, l, 10_000)[1:-1]
            f = pair.edge_values(e, x)
            sampled = int(np.sum(np.sign(f[:-1]) != np.sign(f[1:])))
            assert sampled == count_edge_zeros(level.k, l, pair.cos_coef[e], pair.sin_coef[e])
        checked += 1
    assert checked > 10


def test_eigenfunction_satisfies_the_system(lasso):
    spec = k_spectrum(lasso, 15.0)
    for n, k, m in spec.levels():
        if k == 0 or m > 1:
            continue
        pair = eigenfunction(lasso, k)
        resid = np.linalg.norm(lasso.system.matrix(k, lasso.lengths) @ pair.amplitudes)
        assert resid <= 1e-8 * np.linalg.norm(pair.amplitudes)


def test_subdivision_invariance(lasso):
    sub = subdivide(lasso.graph, [1, 2, 1, 3])
    cuts = {1: [0.3, 0.7], 3: [0.2, 0.5, 0.3]}
    lengths = [lasso.lengths[e] * (cuts[e][piece] if e in cuts else 1.0) for e, piece in sub.edge_origin]
    refined = MetricGraph(sub.graph, lengths)
    a = k_spectrum(lasso, 20.0)
    b = k_spectrum(refined, 20.0)
    np.testing.assert_array_equal(a.multiplicities, b.multiplicities)
    np.testing.assert_allclose(a.roots, b.roots, atol=1e-9)


def test_derivative_nonzero_at_simple_roots(lasso):
    spec = k_spectrum(lasso, 40.0)
    h = 1e-6
    for k, m in zip(spec.roots[1:], spec.multiplicities[1:]):
        assert m == 1
        slope = (secular_value(lasso, k + h) - secular_value(lasso, k - h)) / (2 * h)
        assert abs(slope) > 1e-6


def test_sign_definite_between_roots(lasso):
    spec = k_spectrum(lasso, 20.0)
    for a, b in zip(spec.roots[:-1], spec.roots[1:]):
        ks = np.linspace(a, b, 52)[1:-1]
        vals = secular_value(lasso, ks)
        assert np.all(vals > 0) or np.all(vals < 0)


def test_neumann_ground_state(lasso):
    report = metric_nodal_report(lasso, k_spectrum(lasso, 5.0))
    first = report.levels[0]
    assert first.k == 0 and first.multiplicity == 1
    np.testing.assert_allclose(first.eigenpair.vertex_values, 1.0)
    assert report.entries[1].phi == 0 and report.entries[1].nu == 1


def test_dirichlet_spectrum():
    mg = MetricGraph(path(2), [1.0], ("dirichlet", "dirichlet"))
    spec = k_spectrum(mg, 10.0)
    assert not spec.includes_zero
    np.testing.assert_allclose(spec.roots, math.pi * np.arange(1, 4), atol=1e-9)
    assert all(lv.reason == "dirichlet" for lv in metric_nodal_report(mg, spec).levels)


@pytest.mark.parametrize("seed", [0, 1])
def test_tree_counts(seed):
    mg = _random_tree(seed)
    spec = k_spectrum(mg, 40.0)
    report = metric_nodal_report(mg, spec)
    entries = report.generic_entries()
    assert len(entries) > 20
    for e in entries:
        assert e.phi == e.n - 1 and e.nu == e.n


def test_lasso_surplus_and_morse(lasso):
    report = metric_nodal_report(lasso, k_spectrum(lasso, 25.0))
    entries = report.generic_entries(positive_only=True)
    sigmas = {e.sigma for e in entries}
    assert sigmas == {0, 1}
    for e in entries[:12]:
        assert k_hessian_fd(lasso, e.k).morse_index == e.sigma
    for e in entries:
        assert e.n - 1 <= e.phi <= e.n and e.n - 1 <= e.nu <= e.n
        assert e.phi <= e.nu


def test_tree_hessian_empty():
    mg = _random_tree(3)
    assert k_hessian_fd(mg, k_spectrum(mg, 5.0).roots[1]).matrix.shape == (0, 0)
