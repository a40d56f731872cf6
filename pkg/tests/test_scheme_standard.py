import dataclasses

import numpy as np
import pytest

from kinmoment.acceptance import rk4_source_oracle
from kinmoment.basis import density, hat_functions, isotropic_moment, isotropic_multipliers, parse_basis, unit_multiplier
from kinmoment.closure import exponent, guarded_exp, half_flux, moments_of
from kinmoment.discretization import Discretization
from kinmoment.optimizer import OptimizerConfig
from kinmoment.problems import PSI_VAC, plane_source, source_beam
from kinmoment.scheme_standard import StandardScheme, kinetic_flux_pair, run_standard, source_step_analytic


def const(v):
    return lambda x: np.full(np.shape(x), float(v))


def uniform_problem(sigma_s=0.0, sigma_a=0.0, Q=0.0):
    return dataclasses.replace(plane_source(), initial="vacuum", sigma_s=const(sigma_s), sigma_a=const(sigma_a),
                               source=const(Q))


def vacuum_alpha(basis, n_x):
    return np.tile(isotropic_multipliers(basis, 2 * PSI_VAC), (n_x, 1))


def test_flux_pair_isotropic(basis):
    a = 0.3 * unit_multiplier(basis)
    f = kinetic_flux_pair(basis, a, a)
    assert abs(f @ unit_multiplier(basis)) <= 1e-14
    if basis.kind == "full":
        assert abs(f[0]) <= 1e-14


def test_flux_pair_outflow(basis):
    a = 0.3 * unit_multiplier(basis)
    vac = -60.0 * unit_multiplier(basis)
    np.testing.assert_allclose(kinetic_flux_pair(basis, a, vac), half_flux(basis, a, "plus"), rtol=1e-20, atol=1e-25)


def test_uniform_vacuum_rhs_zero(basis):
    d = Discretization(basis, plane_source(), 20)
    L = d.flux_divergence_alpha(vacuum_alpha(basis, 20))
    np.testing.assert_allclose(L, 0, atol=1e-20)


def test_pulse_bookkeeping(basis, rng):
    d = Discretization(basis, plane_source(), 20)
    A = vacuum_alpha(basis, 20)
    A[7] = rng.uniform(-1, 1, basis.n)
    L = d.flux_divergence_alpha(A)
    out = half_flux(basis, A[7], "plus") - half_flux(basis, A[7], "minus")
    inflow = half_flux(basis, A[6], "plus") - half_flux(basis, A[8], "minus")
    np.testing.assert_allclose(L[7], -(out - inflow) / d.dx, rtol=1e-12, atol=1e-15)


def test_telescoping(basis, rng):
    d = Discretization(basis, source_beam(), 30)
    A = rng.uniform(-1, 1, (30, basis.n))
    e = guarded_exp(exponent(basis, A))
    L = d.flux_divergence(e)
    g_left = d.ghost_left + half_flux(basis, A[0], "minus")
    g_right = half_flux(basis, A[-1], "plus") + d.ghost_right
    np.testing.assert_allclose(L.sum(axis=0) * d.dx, g_left - g_right, rtol=1e-10, atol=1e-12)


def test_source_step_identity(basis, rng):
    u = moments_of(basis, rng.uniform(-1, 1, basis.n))
    np.testing.assert_array_equal(source_step_analytic(basis, u, 0.0, 0.0, 0.0, 0.7), u)


def test_source_step_isotropic(basis):
    u0 = 0.3 * isotropic_moment(basis)
    t, Q = 0.6, 1.7
    np.testing.assert_allclose(source_step_analytic(basis, u0, 1.0, 0.0, Q, t), u0 + t * Q * isotropic_moment(basis),
                               rtol=1e-13, atol=1e-15)


def test_source_step_vs_rk4(basis, rng):
    for _ in range(10):
        u0 = moments_of(basis, rng.uniform(-1, 1, basis.n))
        args = (rng.uniform(0, 5), rng.choice([0.0, rng.uniform(0, 5)]), rng.uniform(0, 1), rng.uniform(0, 1))
        ref = rk4_source_oracle(basis, u0, *args)
        got = source_step_analytic(basis, u0, *args)
        assert np.linalg.norm(got - ref) <= 1e-8 * np.linalg.norm(ref)


def test_source_step_batched(basis, rng):
    U = moments_of(basis, rng.uniform(-1, 1, (5, basis.n)))
    ss, sa, q = rng.uniform(0, 3, (3, 5))
    out = source_step_analytic(basis, U, ss, sa, q, 0.2)
    for i in range(5):
        np.testing.assert_allclose(out[i], source_step_analytic(basis, U[i], ss[i], sa[i], q[i], 0.2), rtol=1e-15)


def test_heun_zero_rhs(basis):
    d = Discretization(basis, uniform_problem(), 10)
    U = d.project_initial()
    np.testing.assert_allclose(StandardScheme(d).heun_step(U, d.cfl_dt()), U, rtol=1e-13, atol=1e-18)


def test_heun_second_order(monkeypatch):
    d = Discretization(parse_basis("hfm4"), uniform_problem(), 4)
    s = StandardScheme(d)
    lam = -1.3
    monkeypatch.setattr(s, "hyperbolic_rhs", lambda U: (lam * U, U))
    errs = []
    hs = [0.1, 0.05, 0.025, 0.0125]
    for h in hs:
        U = np.ones((4, 4))
        for _ in range(int(round(1 / h))):
            U = s.heun_step(U, h)
        errs.append(abs(U[0, 0] - np.exp(lam)))
    assert 1.9 <= np.polyfit(np.log(hs), np.log(errs), 1)[0] <= 2.1


def test_strang_without_sources_is_heun(basis):
    d = Discretization(basis, dataclasses.replace(plane_source(), sigma_s=const(0.0)), 20)
    U = d.project_initial()
    s = StandardScheme(d, use_cache=False)
    dt = d.cfl_dt()
    np.testing.assert_array_equal(s.strang_step(U, dt), s.heun_step(U, dt))


def test_strang_without_flux_is_source(basis):
    d = Discretization(basis, uniform_problem(1.0, 0.5, 0.3), 12)
    U = d.project_initial()
    s = StandardScheme(d)
    dt = 0.05
    full = s.strang_step(U, dt)
    np.testing.assert_allclose(full[2:-2], s.source_step(U, dt)[2:-2], rtol=1e-13)


def test_mass_balance(basis):
    d = Discretization(basis, plane_source(), 40)
    s = StandardScheme(d)
    U = d.project_initial()
    a1 = unit_multiplier(basis)
    dt = d.cfl_dt()
    for _ in range(3):
        stage = []
        orig = s.hyperbolic_rhs

        def rec(V):
            L, V = orig(V)
            stage.append(L.sum(axis=0) @ a1 * d.dx)
            return L, V
        s.hyperbolic_rhs = rec
        Un = s.strang_step(U, dt)
        s.hyperbolic_rhs = orig
        dm = (density(basis, Un).sum() - density(basis, U).sum()) * d.dx
        assert abs(dm - 0.5 * dt * (stage[0] + stage[1])) <= 1e-10
        U = Un


def test_run_trace_and_positivity():
    basis = hat_functions(10)
    d = Discretization(basis, plane_source(0.3), 60)
    s = StandardScheme(d)
    rec = s.run(0.3, d.cfl_dt())
    dts = np.array(rec.dt)
    assert np.all(dts[:-1] == d.cfl_dt()) and dts[-1] <= d.cfl_dt()
    assert abs(dts.sum() - 0.3) <= 1e-12
    assert rec.t[-1] == 0.3
    assert s.min_component > 0
    assert rec.stats["regularized_cells"] == 0


def test_threads_and_cache_do_not_change_results():
    basis = parse_basis("m6")
    d = Discretization(basis, plane_source(0.1), 40)
    ref = StandardScheme(d, use_cache=False).run(0.1, d.cfl_dt()).u
    again = StandardScheme(d, use_cache=False).run(0.1, d.cfl_dt()).u
    threaded = StandardScheme(d, use_cache=False, threads=3).run(0.1, d.cfl_dt()).u
    np.testing.assert_array_equal(ref, again)
    np.testing.assert_array_equal(ref, threaded)
    cached = StandardScheme(d).run(0.1, d.cfl_dt()).u
    np.testing.assert_allclose(cached, ref, rtol=1e-8, atol=1e-12)


def test_run_standard_wrapper():
    rec = run_standard(parse_basis("pmm4"), plane_source(0.05), 20, 0.01, config=OptimizerConfig())
    assert rec.n_steps == 5 and rec.u.shape == (20, 4)
    with pytest.raises(ValueError):
        StandardScheme(Discretization(parse_basis("pmm4"), plane_source(), 20)).run(0.1, 0.0)
