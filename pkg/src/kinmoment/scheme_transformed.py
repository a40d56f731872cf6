"""Finite volume scheme evolving the multipliers directly.

The semidiscrete moment system du_i/dt = R_i(u) is rewritten for the
multipliers, H(alpha_i) dalpha_i/dt = R_i(u(alpha)), and integrated with the
Bogacki-Shampine 3(2) pair and an adaptive step size. No dual problems have
to be solved after the initial projection.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .basis import MomentBasis
from .closure import ClosureOverflow, exponent, guarded_exp, integrate, integrate_scalar, mass_matrix, second_moment
from .discretization import Discretization, RunRecord
from .linalg import SpdSolveError
from .optimizer import OptimizerConfig, solve_batch

log = logging.getLogger(__name__)

# Bogacki-Shampine 3(2)
BS_A = ((), (0.5,), (0.0, 0.75), (2 / 9, 1 / 3, 4 / 9))
BS_B = (2 / 9, 1 / 3, 4 / 9, 0.0)
BS_BHAT = (7 / 24, 1 / 4, 1 / 3, 1 / 8)


class StepFailure(RuntimeError):
    """A stage could not be evaluated (singular Hessian, overflow, NaN)."""

    def __init__(self, message, cell=None):
        super().__init__(message if cell is None else f"{message} (cell {cell})")
        self.cell = cell


class TimeStepUnderflow(RuntimeError):
    pass


@dataclass
class TransformedConfig:
    tau_step: float = 1e-3
    hessian_reg: float = 0.0
    hf_clip: bool = False
    hf_clip_dt_min: float = 0.01
    hf_clip_alpha_min: float = -1000.0
    relaxed: bool = False
    bisection_tol: float = 1e-12
    relax_bracket: tuple = (0.5, 1.5)
    dt_initial: float = 1e-15
    dt_abort: float = 1e-18
    fixed_dt: float | None = None

    def __post_init__(self):
        if not self.tau_step > 0:
            raise ValueError("tau_step must be positive")
        if self.hessian_reg < 0:
            raise ValueError("hessian_reg must be >= 0")
        if self.fixed_dt is not None and not self.fixed_dt > 0:
            raise ValueError("fixed_dt must be positive")


@dataclass
class StepController:
    """Standard controller for an embedded pair with lower order q."""

    safety: float = 0.8
    clamp: tuple = (0.2, 5.0)
    q: int = 2

    def propose(self, dt: float, err: float) -> float:
        if err == 0:
            factor = self.clamp[1]
        else:
            factor = min(max(self.safety * err ** (-1.0 / (self.q + 1)), self.clamp[0]), self.clamp[1])
        return dt * factor


def mixed_error(alpha, alpha_emb, tau_abs, tau_rel) -> float:
    """max |a - a~| / (tau_abs + max(a, a~) tau_rel), denominator floored at tau_abs."""
    denom = tau_abs + np.maximum(alpha, alpha_emb) * tau_rel
    denom = np.maximum(denom, tau_abs)
    return float(np.max(np.abs(alpha - alpha_emb) / denom))


def hf_clip(alpha, alpha_min: float = -1000.0) -> np.ndarray:
    return np.maximum(alpha, alpha_min)


def total_entropy(basis: MomentBasis, alpha) -> float:
    """Sum of the cell entropies <exp(p)(p - 1)>, p = alpha_i . b."""
    p = exponent(basis, alpha)
    return float(np.sum(integrate_scalar(basis, guarded_exp(p) * (p - 1.0))))


class TransformedScheme:
    """Adaptive Runge-Kutta integration of the multiplier form."""

    def __init__(self, disc: Discretization, config: TransformedConfig | None = None,
                 optimizer: OptimizerConfig | None = None):
        self.disc = disc
        self.basis = disc.basis
        self.config = config or TransformedConfig()
        self.optimizer = optimizer or OptimizerConfig()
        if self.config.hf_clip and self.basis.kind != "hat":
            raise ValueError("hat function clipping needs a hat function basis")
        self.mass = mass_matrix(self.basis) if self.config.hessian_reg > 0 else None
        self.controller = StepController()
        self.rhs_evaluations = 0

    # -- right-hand side ------------------------------------------------------

    def rhs_parts(self, alpha):
        """Return (alpha_up, bracket) where bracket = R(u(alpha)) and H alpha_up = bracket."""
        self.rhs_evaluations += 1
        p = exponent(self.basis, alpha)
        try:
            e = guarded_exp(p)
        except ClosureOverflow as exc:
            pmax = np.nan_to_num(p.reshape(len(alpha), -1), nan=np.inf).max(axis=1)
            raise StepFailure(str(exc), int(np.argmax(pmax))) from exc
        u = integrate(self.basis, e)
        bracket = self.disc.source_rhs(u) + self.disc.flux_divergence(e)
        H = second_moment(self.basis, e)
        if self.mass is not None:
            H = H.plus(self.mass, self.config.hessian_reg)
        try:
            up = H.solve(bracket)
        except SpdSolveError as exc:
            cell = int(np.flatnonzero(exc.failed)[0]) if exc.failed is not None and np.any(exc.failed) else None
            raise StepFailure(f"Hessian solve failed: {exc.reason}", cell) from exc
        bad = ~np.all(np.isfinite(up), axis=1)
        if np.any(bad):
            raise StepFailure("non-finite update", int(np.flatnonzero(bad)[0]))
        return up, bracket

    def alpha_update(self, alpha) -> np.ndarray:
        return self.rhs_parts(alpha)[0]

    # -- one step ---------------------------------------------------------------

    def bogacki_shampine_step(self, alpha, dt, k1=None):
        """One step of the 3(2) pair.

        Returns (alpha_new, alpha_embedded, k4, direction, entropy_rate) where
        ``direction`` is sum_v b_v k_v and ``entropy_rate`` accumulates
        sum_v b_v beta^v . bracket(beta^v) over the stages.
        """
        if k1 is None:
            k1, r1 = self.rhs_parts(alpha)
        else:
            k1, r1 = k1
        rate = BS_B[0] * np.sum(alpha * r1)
        beta2 = alpha + dt * 0.5 * k1
        k2, r2 = self.rhs_parts(beta2)
        rate += BS_B[1] * np.sum(beta2 * r2)
        beta3 = alpha + dt * 0.75 * k2
        k3, r3 = self.rhs_parts(beta3)
        rate += BS_B[2] * np.sum(beta3 * r3)
        direction = BS_B[0] * k1 + BS_B[1] * k2 + BS_B[2] * k3
        alpha_new = alpha + dt * direction
        k4, r4 = self.rhs_parts(alpha_new)
        alpha_emb = alpha + dt * (BS_BHAT[0] * k1 + BS_BHAT[1] * k2 + BS_BHAT[2] * k3 + BS_BHAT[3] * k4)
        if not (np.all(np.isfinite(alpha_new)) and np.all(np.isfinite(alpha_emb))):
            raise StepFailure("non-finite stage")
        return alpha_new, alpha_emb, (k4, r4), direction, float(rate)

    def relaxation_gamma(self, alpha, dt, direction, rate, H_old=None) -> float:
        """Root of r(gamma) = H(alpha + gamma dt d) - H(alpha) - gamma dt rate near 1."""
        H0 = total_entropy(self.basis, alpha) if H_old is None else H_old

        def r(g):
            try:
                return total_entropy(self.basis, alpha + g * dt * direction) - H0 - g * dt * rate
            except ClosureOverflow:
                return np.inf

        lo, hi = self.config.relax_bracket
        r1 = r(1.0)
        if r1 == 0:
            return 1.0
        # bisect each half of the bracket that changes sign; r may cross twice
        ends = {lo: r(lo), hi: r(hi)}
        roots = []
        for a, b in ((lo, 1.0), (1.0, hi)):
            ra, rb = ends.get(a, r1), ends.get(b, r1)
            if np.isfinite(ra) and np.isfinite(rb) and np.sign(ra) != np.sign(rb):
                roots.append(self._bisect(r, a, b, ra))
        if roots:
            return min(roots, key=lambda g: abs(g - 1.0))
        # r at rounding level of H (tiny first steps) is noise, not a missing root
        noise = 64 * np.finfo(float).eps * max(1.0, abs(H0))
        level = logging.DEBUG if max(abs(v) for v in (ends[lo], r1, ends[hi])) <= noise else logging.WARNING
        log.log(level, "no sign change of the relaxation function on [%g, %g]; using gamma = 1", lo, hi)
        return 1.0

    def _bisect(self, r, lo, hi, rlo):
        if rlo == 0:
            return lo
        while hi - lo > self.config.bisection_tol:
            mid = 0.5 * (lo + hi)
            rm = r(mid)
            if rm == 0:
                return mid
            if np.sign(rm) == np.sign(rlo):
                lo, rlo = mid, rm
            else:
                hi = mid
        return 0.5 * (lo + hi)

    # -- time loop ----------------------------------------------------------------

    def initial_alpha(self, U0=None):
        U0 = self.disc.project_initial() if U0 is None else np.asarray(U0, dtype=float)
        alpha, _, _ = solve_batch(self.basis, U0, self.optimizer)
        return alpha

    def run(self, tf: float, alpha0=None, t0: float = 0.0) -> RunRecord:
        """Integrate to ``tf``: adaptive unless ``config.fixed_dt`` is set."""
        cfg = self.config
        alpha = self.initial_alpha() if alpha0 is None else np.array(alpha0, dtype=float)
        rec = RunRecord("transformed", {}, self.disc.x, None, None)
        t = t0
        dt = cfg.fixed_dt if cfg.fixed_dt is not None else cfg.dt_initial
        tau = cfg.tau_step
        k1 = None
        last_failure = None
        H_old = total_entropy(self.basis, alpha)
        start = time.perf_counter()
        while t < tf:
            tic = time.perf_counter()
            if cfg.hf_clip and dt < cfg.hf_clip_dt_min:
                clipped = hf_clip(alpha, cfg.hf_clip_alpha_min)
                if not np.array_equal(clipped, alpha):
                    alpha, k1 = clipped, None
                    H_old = total_entropy(self.basis, alpha)
            retries = 0
            err = np.inf
            while True:
                h = dt
                last = t + h >= tf or tf - (t + h) <= 1e-12 * h
                if last:
                    h = tf - t
                if h < cfg.dt_abort:
                    where = "" if last_failure is None else f"; last failure: {last_failure}"
                    raise TimeStepUnderflow(f"time step {h:.3g} below {cfg.dt_abort:g} at t = {t:.17g}{where}")
                try:
                    new, emb, k4, direction, rate = self.bogacki_shampine_step(alpha, h, k1)
                except StepFailure as exc:
                    if cfg.fixed_dt is not None:
                        raise
                    log.debug("step failure at t=%g, dt=%g: %s", t, h, exc)
                    last_failure = str(exc)
                    dt = 0.5 * h
                    retries += 1
                    continue
                if cfg.fixed_dt is not None:
                    err = 0.0
                    break
                err = mixed_error(new, emb, tau, tau)
                if not np.isfinite(err):
                    dt = 0.5 * h
                    retries += 1
                    continue
                dt_next = self.controller.propose(h, err)
                if err > 1:
                    dt = dt_next
                    retries += 1
                    continue
                if not last:
                    dt = dt_next
                break
            gamma = 1.0
            if cfg.relaxed:
                gamma = self.relaxation_gamma(alpha, h, direction, rate, H_old)
                if gamma != 1.0:
                    new = alpha + gamma * h * direction
            H_est = H_old + gamma * h * rate
            alpha = new
            k1 = None if gamma != 1.0 else k4
            H_new = total_entropy(self.basis, alpha)
            t = tf if last else t + h
            rec.t.append(t)
            rec.dt.append(h)
            rec.wall.append(time.perf_counter() - tic)
            rec.err.append(err)
            rec.retries.append(retries)
            rec.entropy.append(H_new)
            rec.entropy_est.append(H_est)
            rec.gamma.append(gamma)
            H_old = H_new
        rec.wall_total = time.perf_counter() - start
        rec.alpha = alpha
        rec.u = integrate(self.basis, guarded_exp(exponent(self.basis, alpha)))
        rec.stats = {"rhs_evaluations": self.rhs_evaluations, "retries": int(sum(rec.retries))}
        return rec


def run_transformed(basis: MomentBasis, problem, n_x: int, config: TransformedConfig | None = None,
                    tf: float | None = None, optimizer: OptimizerConfig | None = None) -> RunRecord:
    disc = Discretization(basis, problem, n_x)
    return TransformedScheme(disc, config, optimizer).run(problem.tf if tf is None else tf)


def entropy_defect(rec: RunRecord) -> float:
    """sum_k |H(alpha^{k+1}) - H_est(alpha^k)| dt_k."""
    H = np.asarray(rec.entropy)
    Hest = np.asarray(rec.entropy_est)
    return float(np.sum(np.abs(H - Hest) * np.asarray(rec.dt)))
