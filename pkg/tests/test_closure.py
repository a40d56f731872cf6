import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kinmoment.basis import density, full_moments, hat_functions, isotropic_moment, parse_basis, unit_multiplier
from kinmoment.closure import (ClosureOverflow, ansatz, cell_entropy, dual_gradient, dual_objective, flux_jacobian,
                               full_flux, half_flux, hessian, mass_matrix, moments_of)
from kinmoment.quadrature import composite_rule
from kinmoment.basis import legendre_values

E = np.e


def fd_jacobian(f, alpha, h=1e-5):
    cols = []
    for j in range(len(alpha)):
        d = np.zeros_like(alpha)
        d[j] = h
        cols.append((f(alpha + d) - f(alpha - d)) / (2 * h))
    return np.stack(cols, axis=-1)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_ansatz():
    b = full_moments(1)
    assert ansatz(b, [0, 0], 0.3) == 1
    assert ansatz(b, [0, 1], 0.5) == pytest.approx(np.exp(0.5), rel=1e-15)
    hb = hat_functions(5)
    assert ansatz(hb, 0.7 * unit_multiplier(hb), -0.33) == pytest.approx(np.exp(0.7), rel=1e-14)


def test_moments_scaling_examples(basis):
    iso = isotropic_moment(basis)
    np.testing.assert_allclose(moments_of(basis, np.zeros(basis.n)), iso, atol=1e-13)
    np.testing.assert_allclose(moments_of(basis, 1.3 * unit_multiplier(basis)), np.exp(1.3) * iso, atol=1e-12)


def test_moments_refined_quadrature_oracle(rng):
    b = full_moments(3)
    alpha = rng.uniform(-1, 1, 4)
    q = composite_rule(np.linspace(-1, 1, 21), 2 * 3 + 40)
    P = legendre_values(q.points, 3)
    ref = (P * (q.weights * np.exp(P @ alpha))[:, None]).sum(axis=0)
    np.testing.assert_allclose(moments_of(b, alpha), ref, rtol=1e-10)


@given(st.lists(st.floats(-1, 1), min_size=10, max_size=10), st.floats(-3, 3),
       st.sampled_from(["m9", "hfm10", "pmm10"]))
def test_diffeomorphism_scaling(alpha, c, name):
    b = parse_basis(name)
    alpha = np.array(alpha)[: b.n] if b.n <= 10 else np.resize(alpha, b.n)
    ref = np.exp(c) * moments_of(b, alpha)
    # components near zero (odd Legendre moments) are compared on the vector scale
    np.testing.assert_allclose(moments_of(b, alpha + c * unit_multiplier(b)), ref,
                               rtol=1e-12, atol=1e-13 * np.linalg.norm(ref))


def test_hessian_examples():
    np.testing.assert_allclose(hessian(full_moments(2), np.zeros(3)).to_dense(), np.diag([2, 2 / 3, 2 / 5]),
                               atol=1e-13)
    hb = hat_functions(9)
    H = hessian(hb, np.zeros(9)).to_dense()
    assert np.all(np.triu(H, 2) == 0)
    np.testing.assert_allclose(H.sum(axis=1), isotropic_moment(hb), atol=1e-13)


def test_hessian_is_jacobian(basis, rng):
    for _ in range(5):
        alpha = rng.uniform(-1, 1, basis.n)
        H = hessian(basis, alpha).to_dense()
        assert rel(H, fd_jacobian(lambda a: moments_of(basis, a), alpha)) <= 1e-5
        np.testing.assert_allclose(H, H.T, atol=1e-14)


def test_hessian_batched_matches_single(basis, rng):
    A = rng.uniform(-1, 1, (4, basis.n))
    Hb = hessian(basis, A).to_dense()
    for i in range(4):
        np.testing.assert_allclose(Hb[i], hessian(basis, A[i]).to_dense(), rtol=1e-13, atol=1e-14)


def test_masslumped_hessian_diagonal(rng):
    b = hat_functions(11, masslumping=True)
    alpha = rng.uniform(-1, 1, 11)
    H = hessian(b, alpha).to_dense()
    np.testing.assert_array_equal(H, np.diag(b.quadrature.weights * np.exp(alpha)))


def test_gradient_examples():
    b = full_moments(2)
    np.testing.assert_allclose(dual_gradient(b, np.zeros(3), [1, 0, 0]), [1, 0, 0], atol=1e-13)
    for bb in (b, hat_functions(5), parse_basis("pmm6")):
        np.testing.assert_allclose(dual_gradient(bb, np.zeros(bb.n), isotropic_moment(bb)), 0, atol=1e-13)


def test_gradient_fd(basis, rng):
    u = moments_of(basis, rng.uniform(-1, 1, basis.n))
    alpha = rng.uniform(-1, 1, basis.n)
    fd = fd_jacobian(lambda a: np.atleast_1d(dual_objective(basis, a, u)), alpha)[0]
    assert rel(dual_gradient(basis, alpha, u), fd) <= 1e-6


def test_objective_examples(basis, rng):
    assert dual_objective(basis, np.zeros(basis.n), rng.normal(size=basis.n)) == pytest.approx(2, rel=1e-13)
    c = 0.7
    a = c * unit_multiplier(basis)
    u = np.exp(c) * isotropic_moment(basis)
    assert dual_objective(basis, a, u) == pytest.approx(2 * np.exp(c) - 2 * c * np.exp(c), rel=1e-12)


def test_objective_convex(basis, rng):
    u = moments_of(basis, rng.uniform(-1, 1, basis.n))
    for _ in range(50):
        a1, a2 = rng.uniform(-2, 2, (2, basis.n))
        mid = dual_objective(basis, 0.5 * (a1 + a2), u)
        assert mid <= 0.5 * (dual_objective(basis, a1, u) + dual_objective(basis, a2, u)) + 1e-12


def test_flux_jacobian():
    np.testing.assert_allclose(flux_jacobian(full_moments(1), np.zeros(2)), [[0, 2 / 3], [2 / 3, 0]], atol=1e-14)


def test_flux_jacobian_symmetric_and_fd(basis, rng):
    alpha = rng.uniform(-1, 1, basis.n)
    J = flux_jacobian(basis, alpha)
    assert np.linalg.norm(J - J.T) <= 1e-13
    assert rel(J, fd_jacobian(lambda a: full_flux(basis, a), alpha)) <= 1e-5


def test_half_flux(basis, rng):
    b0 = full_moments(4)
    assert half_flux(b0, np.zeros(5), "plus")[0] == pytest.approx(0.5, rel=1e-14)
    alpha = rng.uniform(-1, 1, basis.n)
    np.testing.assert_allclose(half_flux(basis, alpha, "plus") + half_flux(basis, alpha, "minus"),
                               full_flux(basis, alpha), atol=1e-12)
    c = 0.4
    np.testing.assert_allclose(half_flux(basis, alpha + c * unit_multiplier(basis), "plus"),
                               np.exp(c) * half_flux(basis, alpha, "plus"), rtol=1e-12)
    assert np.all(half_flux(basis, alpha, "plus") @ unit_multiplier(basis) > 0)
    with pytest.raises(ValueError):
        half_flux(basis, alpha, "up")


def test_mass_matrix(basis):
    np.testing.assert_allclose(mass_matrix(basis).to_dense(), hessian(basis, np.zeros(basis.n)).to_dense())


def test_cell_entropy(basis):
    one = unit_multiplier(basis)
    assert cell_entropy(basis, np.zeros(basis.n)) == pytest.approx(-2, rel=1e-13)
    assert abs(cell_entropy(basis, one)) <= 1e-13
    assert cell_entropy(basis, 2 * one) == pytest.approx(2 * E ** 2, rel=1e-13)


def test_density_of_moments(basis, rng):
    alpha = rng.uniform(-1, 1, basis.n)
    u = moments_of(basis, alpha)
    assert density(basis, u) == pytest.approx(moments_of(basis, alpha) @ unit_multiplier(basis), rel=1e-12)


def test_overflow_guard(basis):
    with pytest.raises(ClosureOverflow):
        moments_of(basis, 800 * unit_multiplier(basis))
    with pytest.raises(ClosureOverflow):
        moments_of(basis, np.full(basis.n, np.nan))
