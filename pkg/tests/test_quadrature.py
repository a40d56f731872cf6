import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import legendre

from kinmoment.quadrature import (build_quadrature, composite_rule, gauss_lobatto_nodes, gauss_lobatto_rule,
                                  nodal_quadrature, npoints_for_order)
from kinmoment.basis import legendre_values, uniform_partition


def lobatto_oracle(npoints):
    """Nodes from numpy's Legendre roots of P'_N, weights from the moment conditions."""
    N = npoints - 1
    dP = legendre.legder([0] * N + [1])
    x = np.concatenate([[-1.0], np.sort(legendre.legroots(dP).real), [1.0]])
    V = legendre.legvander(x, N).T
    rhs = np.zeros(npoints)
    rhs[0] = 2.0
    return x, np.linalg.solve(V, rhs)


def test_two_points():
    x, w = gauss_lobatto_nodes(2)
    np.testing.assert_allclose(x, [-1, 1])
    np.testing.assert_allclose(w, [1, 1], rtol=1e-15)


def test_three_points():
    x, w = gauss_lobatto_nodes(3)
    np.testing.assert_allclose(x, [-1, 0, 1], atol=1e-15)
    np.testing.assert_allclose(w, [1 / 3, 4 / 3, 1 / 3], rtol=1e-14)


def test_five_points_sixth_power():
    x, w = gauss_lobatto_nodes(5)
    assert abs(np.sum(w * x ** 6) - 2 / 7) <= 1e-12


@pytest.mark.parametrize("npoints", [4, 6, 9, 12, 20, 31])
def test_matches_independent_oracle(npoints):
    x, w = gauss_lobatto_nodes(npoints)
    xo, wo = lobatto_oracle(npoints)
    np.testing.assert_allclose(x, xo, atol=1e-13)
    np.testing.assert_allclose(w, wo, rtol=1e-9, atol=1e-12)


@given(st.integers(2, 40))
def test_exactness_degree(npoints):
    x, w = gauss_lobatto_nodes(npoints)
    deg = 2 * npoints - 3
    for k in (0, deg - 1, deg):
        exact = (1 - (-1) ** (k + 1)) / (k + 1)
        assert abs(np.sum(w * x ** k) - exact) <= 1e-12
    assert np.all(w > 0)
    assert np.all(np.diff(x) > 0)


def test_order_to_points():
    assert npoints_for_order(15) == 9
    assert npoints_for_order(1) == 2
    assert npoints_for_order(3) == 3
    assert len(gauss_lobatto_rule(15)[0]) == 9
    with pytest.raises(ValueError):
        npoints_for_order(0)
    with pytest.raises(ValueError):
        gauss_lobatto_nodes(1)


def test_hat_constant():
    q = build_quadrature("hat", 3, uniform_partition(2))
    assert abs(q.integrate(np.ones(len(q))) - 2) <= 1e-13


def test_full_legendre_orthogonality():
    N = 10
    q = build_quadrature("full", N + 1)
    P = legendre_values(q.points, N)
    G = (P * q.weights[:, None]).T @ P
    np.testing.assert_allclose(G, np.diag(2 / (2 * np.arange(N + 1) + 1)), atol=1e-12)
    assert abs(G[3, 3] - 2 / 7) <= 1e-12


def test_partial_half_range():
    q = build_quadrature("partial", 8, uniform_partition(4))
    assert abs(q.integrate(np.maximum(q.points, 0)) - 0.5) <= 1e-13


def test_nodal_weights():
    np.testing.assert_allclose(nodal_quadrature("hat", uniform_partition(2)).weights, [0.5, 1, 0.5])
    np.testing.assert_allclose(nodal_quadrature("hat", uniform_partition(4)).weights, [0.25, 0.5, 0.5, 0.5, 0.25])
    with pytest.raises(ValueError):
        nodal_quadrature("partial", uniform_partition(2))


@given(st.integers(1, 100))
def test_nodal_constant_exact(k):
    q = nodal_quadrature("hat", uniform_partition(k))
    assert q.nodal
    assert abs(q.weights.sum() - 2) <= 1e-13


def test_composite_pins_edges():
    edges = uniform_partition(7)
    q = composite_rule(edges, 15)
    pts = q.points.reshape(q.n_intervals, q.points_per_interval)
    assert np.array_equal(pts[:, 0], edges[:-1])
    assert np.array_equal(pts[:, -1], edges[1:])
