import logging

import numpy as np
import pytest

from kinmoment.basis import hat_functions, isotropic_multipliers, parse_basis, unit_multiplier
from kinmoment.closure import hessian, moments_of
from kinmoment.discretization import Discretization
from kinmoment.problems import PSI_VAC, plane_source, source_beam
from kinmoment.scheme_transformed import (BS_A, BS_B, BS_BHAT, StepController, StepFailure, TimeStepUnderflow,
                                          TransformedConfig, TransformedScheme, entropy_defect, hf_clip, mixed_error,
                                          total_entropy)


def smooth_state(basis, n_x, rng):
    x = np.linspace(0, 1, n_x)[:, None]
    return np.log(1e-3) * unit_multiplier(basis) + 0.5 * np.sin(2 * np.pi * x + rng.uniform(0, 6, basis.n))


def test_equilibrium_update_zero(basis):
    d = Discretization(basis, plane_source(), 20)
    A = np.tile(isotropic_multipliers(basis, 2 * PSI_VAC), (20, 1))
    up = TransformedScheme(d).alpha_update(A)
    np.testing.assert_allclose(up, 0, atol=1e-12)
    new, emb, _, _, _ = TransformedScheme(d).bogacki_shampine_step(A, 0.01)
    np.testing.assert_allclose(new, A, atol=1e-12)
    assert mixed_error(new, emb, 1e-3, 1e-3) <= 1e-8


def test_shared_rhs_consistency(basis, rng):
    d = Discretization(basis, source_beam(), 24)
    A = smooth_state(basis, 24, rng)
    up, bracket = TransformedScheme(d).rhs_parts(A)
    u = moments_of(basis, A)
    rhs = d.source_rhs(u) + d.flux_divergence_alpha(A)
    np.testing.assert_allclose(hessian(basis, A).matvec(up), rhs, rtol=1e-10, atol=1e-10 * np.abs(rhs).max())
    np.testing.assert_array_equal(bracket, rhs)


def test_hessian_reg_continuity(basis, rng):
    d = Discretization(basis, source_beam(), 16)
    A = smooth_state(basis, 16, rng)
    u0 = TransformedScheme(d).alpha_update(A)
    u1 = TransformedScheme(d, TransformedConfig(hessian_reg=1e-300)).alpha_update(A)
    np.testing.assert_allclose(u1, u0, rtol=1e-12, atol=1e-12)


def test_mixed_error_formula():
    assert mixed_error(np.array([1.0]), np.array([1.1]), 0.1, 0.1) == pytest.approx(0.1 / (0.1 + 0.11), rel=1e-14)
    # negative multipliers: the denominator is floored at tau_abs
    assert mixed_error(np.array([-50.0]), np.array([-50.1]), 0.1, 0.1) == pytest.approx(0.1 / 0.1, rel=1e-12)


def test_controller():
    c = StepController()
    assert c.propose(1.0, 1.0) == pytest.approx(0.8)
    assert c.propose(1.0, 0.512) == pytest.approx(1.0, rel=1e-14)
    assert c.propose(1.0, 1e-12) == 5.0
    assert c.propose(1.0, 0.0) == 5.0
    assert c.propose(1.0, 1e6) == 0.2


def _bs_scalar(lam, h, steps):
    y = 1.0
    ye = 1.0
    c = (0.0, 0.5, 0.75)
    for _ in range(steps):
        k = []
        for i in range(3):
            k.append(lam * (y + h * sum(a * kk for a, kk in zip(BS_A[i], k))))
        y_new = y + h * sum(b * kk for b, kk in zip(BS_B, k))
        k.append(lam * y_new)
        ye = y + h * sum(b * kk for b, kk in zip(BS_BHAT, k))
        y = y_new
    return y, ye


def test_tableau_orders():
    lam = -1.0
    hs = np.array([0.1, 0.05, 0.025, 0.0125])
    err3 = [abs(_bs_scalar(lam, h, int(round(1 / h)))[0] - np.exp(lam)) for h in hs]
    assert 2.8 <= np.polyfit(np.log(hs), np.log(err3), 1)[0] <= 3.2
    # local error of the embedded solution is one order lower
    loc = [abs(_bs_scalar(lam, h, 1)[1] - np.exp(lam * h)) for h in hs]
    assert 2.8 <= np.polyfit(np.log(hs), np.log(loc), 1)[0] <= 3.2
    assert sum(BS_B) == pytest.approx(1) and sum(BS_BHAT) == pytest.approx(1)


def test_total_entropy_examples(basis):
    n_x = 7
    one = unit_multiplier(basis)
    assert total_entropy(basis, np.zeros((n_x, basis.n))) == pytest.approx(-2 * n_x, rel=1e-13)
    assert abs(total_entropy(basis, np.tile(one, (n_x, 1)))) <= 1e-12
    assert total_entropy(basis, 2 * one[None]) == pytest.approx(2 * np.e ** 2, rel=1e-13)


def test_hf_clip():
    a = np.array([[-2000.0, -5.0, 3.0]])
    np.testing.assert_array_equal(hf_clip(a, -1000.0), [[-1000.0, -5.0, 3.0]])
    b = np.array([[-999.0, 0.0]])
    np.testing.assert_array_equal(hf_clip(b, -1000.0), b)
    with pytest.raises(ValueError):
        TransformedScheme(Discretization(parse_basis("m4"), plane_source(), 10), TransformedConfig(hf_clip=True))


def test_clip_only_changes_tiny_densities():
    basis = hat_functions(9)
    a = np.array([-2000.0, -1000.0, -1000.0, 0.2, 0.1, 0.0, -0.3, 0.5, 1.0])
    np.testing.assert_array_equal(moments_of(basis, hf_clip(a, -1000.0)), moments_of(basis, a))


def test_relaxation_function(rng):
    basis = hat_functions(6)
    d = Discretization(basis, plane_source(), 20)
    s = TransformedScheme(d, TransformedConfig(relaxed=True))
    A = smooth_state(basis, 20, rng)
    H0 = total_entropy(basis, A)
    dt = 1e-3
    new, _, _, direction, rate = s.bogacki_shampine_step(A, dt)
    gamma = s.relaxation_gamma(A, dt, direction, rate, H0)
    assert 0.5 < gamma < 1.5
    residual = total_entropy(basis, A + gamma * dt * direction) - H0 - gamma * dt * rate
    assert abs(residual) <= 1e-11


def test_relaxation_zero_rhs(caplog):
    basis = hat_functions(5)
    d = Discretization(basis, plane_source(), 10)
    s = TransformedScheme(d, TransformedConfig(relaxed=True))
    A = np.tile(isotropic_multipliers(basis, 2 * PSI_VAC), (10, 1))
    with caplog.at_level(logging.WARNING):
        gamma = s.relaxation_gamma(A, 0.01, np.zeros_like(A), 0.0)
    assert gamma == 1.0


def test_adaptive_trace():
    basis = hat_functions(11)
    d = Discretization(basis, plane_source(0.05), 240)
    rec = TransformedScheme(d, TransformedConfig(tau_step=1e-3)).run(0.05)
    dt = np.array(rec.dt)
    assert dt[0] == 1e-15
    assert np.all(dt[1:-1] / dt[:-2] <= 5 * (1 + 1e-12))
    assert abs(dt.sum() - 0.05) <= 1e-12
    assert rec.t[-1] == 0.05
    assert np.all(np.array(rec.err) <= 1)


def test_late_dt_exceeds_cfl():
    d = Discretization(parse_basis("m10"), plane_source(), 240)
    rec = TransformedScheme(d, TransformedConfig(tau_step=1e-3)).run(d.problem.tf)
    t, dt = np.array(rec.t), np.array(rec.dt)
    late = dt[(t > 0.8)][:-1]
    assert np.median(late) > d.cfl_dt()


def test_relaxed_run_entropy():
    basis = hat_functions(10)
    d = Discretization(basis, plane_source(0.1), 80)
    s = TransformedScheme(d, TransformedConfig(tau_step=1e-3, relaxed=True))
    rec = s.run(0.1)
    g = np.array(rec.gamma)
    assert np.all((g > 0.5) & (g < 1.5))
    H = np.concatenate([[total_entropy(basis, s.initial_alpha())], rec.entropy])
    assert np.max(np.diff(H)) <= 1e-9
    assert entropy_defect(rec) <= 1e-9


def test_fixed_dt_failure_propagates():
    d = Discretization(hat_functions(10), source_beam(0.2), 60)
    with pytest.raises(StepFailure) as exc:
        TransformedScheme(d, TransformedConfig(fixed_dt=d.cfl_dt())).run(0.2)
    assert exc.value.cell is not None


def test_underflow_abort():
    d = Discretization(hat_functions(10), source_beam(0.2), 60)
    cfg = TransformedConfig(tau_step=1e-3, dt_initial=1e-3, dt_abort=1e-4)
    with pytest.raises(TimeStepUnderflow, match="cell"):
        TransformedScheme(d, cfg).run(0.2)


def test_fsal_matches_fresh_evaluation(rng):
    basis = parse_basis("pmm6")
    d = Discretization(basis, source_beam(), 12)
    s = TransformedScheme(d)
    A = smooth_state(basis, 12, rng)
    new, _, k4, _, _ = s.bogacki_shampine_step(A, 1e-3)
    fresh = s.rhs_parts(new)
    np.testing.assert_array_equal(k4[0], fresh[0])
    np.testing.assert_array_equal(s.bogacki_shampine_step(new, 1e-3, k4)[0], s.bogacki_shampine_step(new, 1e-3)[0])


def test_config_validation():
    with pytest.raises(ValueError):
        TransformedConfig(tau_step=0)
    with pytest.raises(ValueError):
        TransformedConfig(hessian_reg=-1)
    with pytest.raises(ValueError):
        TransformedConfig(fixed_dt=0.0)


def test_relaxation_two_crossings(caplog):
    # this run has a step where r changes sign twice inside [0.5, 1.5]
    d = Discretization(hat_functions(6), plane_source(0.1), 40)
    with caplog.at_level(logging.WARNING):
        rec = TransformedScheme(d, TransformedConfig(relaxed=True)).run(0.1)
    assert not caplog.records
    assert entropy_defect(rec) <= 1e-12


def test_hessian_regularization_small_error_fewer_steps():
    d = Discretization(parse_basis("m10"), source_beam(), 60)
    recs = [TransformedScheme(d, TransformedConfig(tau_step=1e-4, hessian_reg=eps)).run(0.2) for eps in (0, 1e-7, 1e-6)]
    errs = [np.abs(r.u - recs[0].u).sum() * d.dx for r in recs[1:]]
    assert errs[0] <= 1e-2
    assert errs[0] < errs[1]
    assert recs[1].n_steps < recs[0].n_steps


@pytest.mark.long
def test_hessian_regularization_error_source_beam_m10():
    d = Discretization(parse_basis("m10"), source_beam(), 300)
    u = [TransformedScheme(d, TransformedConfig(tau_step=1e-5, hessian_reg=eps)).run(1.0).u for eps in (0.0, 1e-7)]
    assert np.abs(u[0] - u[1]).sum() * d.dx <= 1e-2
