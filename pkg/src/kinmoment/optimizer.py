"""Dual Newton solver for the Maxwell-Boltzmann minimum entropy problem.

Given moments u, find multipliers alpha with <b exp(alpha . b)> = u by
minimizing p(alpha) = <exp(alpha . b)> - u . alpha. The solver works on
batches of cells at once: every array has a leading cell axis and cells
drop out of the iteration as they converge or fail.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .basis import (
    MomentBasis,
    density,
    is_realizable,
    iso_projection,
    isotropic_moment,
    isotropic_multipliers,
    unit_multiplier,
)
from .closure import exponent, guarded_exp, integrate, integrate_scalar, point_weights, second_moment

log = logging.getLogger(__name__)

DEFAULT_REG_SEQUENCE = (1e-8, 1e-6, 1e-4, 1e-3, 0.01, 0.05, 0.1, 0.5, 1.0)


@dataclass
class OptimizerConfig:
    tau: float = 1e-9
    eps_gamma: float = 0.1
    xi: float = 1e-3
    max_iterations: int = 200
    reg_sequence: tuple = DEFAULT_REG_SEQUENCE
    rho_vac: float = 1e-6
    cache_capacity: int = 64
    precondition: bool = True
    min_step: float = 2.0**-30

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0 < self.eps_gamma < 1:
            raise ValueError("eps_gamma must lie in (0, 1)")
        if not 0 < self.xi < 1:
            raise ValueError("xi must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        self.reg_sequence = tuple(float(r) for r in self.reg_sequence)
        if not self.reg_sequence or self.reg_sequence[-1] != 1.0:
            raise ValueError("reg_sequence must end with 1")


@dataclass
class SolveReport:
    alpha: np.ndarray
    iterations: int
    regularization_r_used: float = 0.0
    cache_hit: str = "miss"


class NeedsRegularization(RuntimeError):
    """The Newton iteration did not converge for the given moments."""


# -- Newton core ---------------------------------------------------------------

def _tau_bar(basis, tau, rho, norm_uh):
    if basis.kind == "full":
        return tau / ((1.0 + norm_uh) * rho + tau)
    sq = np.sqrt(basis.n)
    return tau / ((1.0 + sq * norm_uh) * rho + sq * tau)


def _objective(basis, beta, uh):
    with np.errstate(over="ignore", invalid="ignore"):
        e = guarded_exp(exponent(basis, beta), check=False)
        return integrate_scalar(basis, e) - np.sum(uh * beta, axis=-1)


def _directions_dense_pre(basis, e, q, T):
    # Hessian assembled in the transformed basis b~ = T b, then T <- L^-1 T
    Vt = np.matmul(basis.values, np.swapaxes(T, -1, -2))  # (A, P, n)
    ew = e * point_weights(basis)
    Ht = np.matmul(np.swapaxes(Vt, -1, -2) * ew[:, None, :], Vt)
    L, ok, _ = linalg._cholesky_dense(Ht)
    Tn = linalg._lower_solve_matrix(L, T)
    qt = np.einsum("aij,aj->ai", Tn, q)
    d = -np.einsum("aji,aj->ai", Tn, qt)
    return d, ok, Tn


def _directions_blocks_pre(basis, e, q, T):
    loc = basis.local  # (K, m, 2)
    loct = np.einsum("kmt,akst->akms", loc, T)
    ew = e * point_weights(basis)
    Ht = np.einsum("akm,akms,akmt->akst", ew, loct, loct)
    l00, l10, l11, ok, _ = linalg._cholesky_blocks(Ht)
    # L^-1 T for each 2x2 block
    T0 = T[..., 0, :] / l00[..., None]
    T1 = (T[..., 1, :] - l10[..., None] * T0) / l11[..., None]
    Tn = np.stack([T0, T1], axis=-2)
    qb = q.reshape(q.shape[0], -1, 2)
    qt = np.einsum("akst,akt->aks", Tn, qb)
    d = -np.einsum("akts,akt->aks", Tn, qt).reshape(q.shape)
    return d, ok, Tn


def _directions_plain(basis, e, q):
    H = second_moment(basis, e)
    if H.storage == "tridiagonal":
        dd, l, ok, _ = linalg._ldl_tridiagonal(*H.data)
        return -linalg._ldl_solve(dd, l, q), ok
    if H.storage == "diagonal":
        diag = H.data[0]
        ok = np.all(diag > linalg.PIVOT_MIN, axis=-1)
        return -q / np.where(diag > linalg.PIVOT_MIN, diag, 1.0), ok
    if H.storage == "blocks":
        l00, l10, l11, ok, _ = linalg._cholesky_blocks(H.data[0])
        return -linalg._blocks_solve(l00, l10, l11, q), ok
    L, ok, _ = linalg._cholesky_dense(H.data[0])
    return -linalg._upper_solve_t(L, linalg._lower_solve(L, q)), ok


def newton_batch(basis: MomentBasis, U, config: OptimizerConfig, guess=None, trace=None):
    """Run the dual Newton iteration on every row of ``U``.

    Parameters
    ----------
    U : ndarray, shape (B, n)
        Moment vectors with positive density.
    guess : ndarray, shape (B, n), optional
        Initial multipliers for ``U`` (not rescaled). Defaults to the
        isotropic multipliers.
    trace : list, optional
        If given, receives (row indices, rescaled objective, its rounding
        scale) per iteration.

    Returns
    -------
    alpha : ndarray, shape (B, n)
        Multipliers (NaN where the iteration failed).
    iterations : ndarray of int
    ok : ndarray of bool
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    B, n = U.shape
    a1 = unit_multiplier(basis)
    rho = density(basis, U)
    if np.any(~(rho > 0)):
        raise ValueError("moments must have positive density; apply the vacuum floor first")
    Uh = U / rho[:, None]
    norm_uh = np.linalg.norm(Uh, axis=1)
    tau_bar = _tau_bar(basis, config.tau, rho, norm_uh)
    if guess is None:
        beta = np.tile(np.log(0.5) * a1, (B, 1))
    else:
        beta = np.array(guess, dtype=float).reshape(B, n) - np.log(rho)[:, None] * a1
        bad = ~np.all(np.isfinite(beta), axis=1)
        beta[bad] = np.log(0.5) * a1

    pre = config.precondition and basis.kind in ("full", "partial")
    if pre and basis.kind == "full":
        T = np.tile(np.eye(n), (B, 1, 1))
    elif pre:
        T = np.tile(np.eye(2), (B, n // 2, 1, 1))
    else:
        T = None

    alpha = np.full((B, n), np.nan)
    iters = np.zeros(B, dtype=int)
    ok_out = np.zeros(B, dtype=bool)
    act = np.arange(B)
    eps = config.eps_gamma

    for it in range(config.max_iterations + 1):
        if act.size == 0:
            break
        b, uh = beta[act], Uh[act]
        with np.errstate(over="ignore", invalid="ignore"):
            e = guarded_exp(exponent(basis, b), check=False)
            m = integrate(basis, e)
            q = m - uh
            mass = integrate_scalar(basis, e)
            obj = mass - np.sum(uh * b, axis=1)
            # rounding level of the objective (a difference of O(1) terms)
            obj_scale = mass + np.sum(np.abs(uh * b), axis=1)
            if pre and basis.kind == "full":
                d, ok, Tn = _directions_dense_pre(basis, e, q, T[act])
            elif pre:
                d, ok, Tn = _directions_blocks_pre(basis, e, q, T[act])
            else:
                d, ok = _directions_plain(basis, e, q)
        finite = ok & np.all(np.isfinite(d), axis=1) & np.isfinite(obj)
        if trace is not None:
            trace.append((act.copy(), obj.copy(), obj_scale.copy()))

        # stopping criteria on the current iterate
        rho_b = density(basis, m)
        with np.errstate(divide="ignore", invalid="ignore"):
            shift = np.log(rho[act] / rho_b)
            crit1 = np.linalg.norm(q, axis=1) < tau_bar[act]
            if basis.kind == "full":
                crit2 = 1.0 - eps < np.exp(-(np.sum(np.abs(d), axis=1) + np.abs(np.log(rho_b))))
            else:
                u_t = m * (rho[act] / rho_b)[:, None]
                crit2 = np.asarray(is_realizable(basis, U[act] - (1.0 - eps) * u_t))
        done = crit1 & crit2 & np.isfinite(shift) & np.all(np.isfinite(m), axis=1)
        if basis.kind == "full":
            done &= finite
        if np.any(done):
            idx = act[done]
            alpha[idx] = b[done] + shift[done][:, None] * a1
            iters[idx] = it
            ok_out[idx] = True
        keep = ~done & finite
        if it == config.max_iterations or not np.any(keep):
            iters[act[~done]] = it
            break

        # backtracking line search on the cells still iterating
        act_k = act[keep]
        bk, dk, uhk = b[keep], d[keep], uh[keep]
        objk = obj[keep]
        scalek = obj_scale[keep]
        slope = np.sum(q[keep] * dk, axis=1)
        qnorm = np.linalg.norm(q[keep], axis=1)
        zeta = np.ones(len(act_k))
        accepted = np.zeros(len(act_k), dtype=bool)
        pending = np.arange(len(act_k))
        while pending.size:
            trial = bk[pending] + zeta[pending, None] * dk[pending]
            obj_t = _objective(basis, trial, uhk[pending])
            acc = obj_t < objk[pending] + config.xi * zeta[pending] * slope[pending]
            # near the optimum the decrease drops below the rounding level of
            # the objective; accept a full step that still reduces the gradient
            flat = (~acc) & (zeta[pending] == 1.0) & np.isfinite(obj_t) & (
                np.abs(obj_t - objk[pending]) <= 64 * np.finfo(float).eps * scalek[pending]
            )
            if np.any(flat):
                fi = pending[flat]
                with np.errstate(over="ignore", invalid="ignore"):
                    et = guarded_exp(exponent(basis, trial[flat]), check=False)
                    qt = np.linalg.norm(integrate(basis, et) - uhk[fi], axis=1)
                acc[flat] = qt < qnorm[fi]
            accepted[pending[acc]] = True
            pending = pending[~acc]
            zeta[pending] *= 0.5
            pending = pending[zeta[pending] >= config.min_step]
        beta[act_k[accepted]] = bk[accepted] + zeta[accepted, None] * dk[accepted]
        if T is not None:
            T[act_k] = Tn[keep]
        iters[act_k] = it + 1
        act = act_k[accepted]

    return alpha, iters, ok_out


# -- public single-vector API --------------------------------------------------

def solve_dual(basis: MomentBasis, u, config: OptimizerConfig | None = None, guess=None) -> SolveReport:
    """Solve the dual problem for one moment vector.

    Raises :class:`NeedsRegularization` if the iteration fails.
    """
    config = config or OptimizerConfig()
    g = None if guess is None else np.asarray(guess, dtype=float)[None]
    alpha, iters, ok = newton_batch(basis, np.asarray(u, dtype=float)[None], config, g)
    if not ok[0]:
        raise NeedsRegularization(f"Newton iteration failed after {iters[0]} iterations")
    return SolveReport(alpha[0], int(iters[0]))


def regularized_moments(basis: MomentBasis, u, r: float) -> np.ndarray:
    """(1 - r) u + r G u."""
    u = np.asarray(u, dtype=float)
    return (1.0 - r) * u + r * iso_projection(basis, u)


def solve_batch(basis: MomentBasis, U, config: OptimizerConfig, guess=None):
    """Newton solve with the isotropic regularization fallback for every row.

    Returns
    -------
    alpha : ndarray, shape (B, n)
    iterations : ndarray of int
        Newton iterations summed over all attempts.
    r_used : ndarray
        Regularization parameter that finally succeeded (0 if none).
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    alpha, iters, ok = newton_batch(basis, U, config, guess)
    r_used = np.zeros(len(U))
    for r in config.reg_sequence:
        fail = np.flatnonzero(~ok)
        if fail.size == 0:
            break
        if r == 1.0:
            alpha[fail] = isotropic_multipliers(basis, density(basis, U[fail]))
            ok[fail] = True
            r_used[fail] = 1.0
            break
        Ur = regularized_moments(basis, U[fail], r)
        g = None if guess is None else np.asarray(guess)[fail]
        a_r, it_r, ok_r = newton_batch(basis, Ur, config, g)
        iters[fail] += it_r
        good = fail[ok_r]
        alpha[good] = a_r[ok_r]
        ok[good] = True
        r_used[good] = r
    if np.any(r_used > 0):
        log.debug("regularized %d of %d cells", np.count_nonzero(r_used), len(U))
    return alpha, iters, r_used


def solve_with_regularization(basis: MomentBasis, u, config: OptimizerConfig | None = None, guess=None) -> SolveReport:
    config = config or OptimizerConfig()
    g = None if guess is None else np.asarray(guess, dtype=float)[None]
    alpha, iters, r_used = solve_batch(basis, np.asarray(u, dtype=float)[None], config, g)
    return SolveReport(alpha[0], int(iters[0]), float(r_used[0]))


def apply_vacuum_floor(basis: MomentBasis, u, rho_vac: float) -> np.ndarray:
    """Replace moments with density below ``rho_vac`` by the isotropic moment of density rho_vac."""
    u = np.array(u, dtype=float, copy=True)
    low = density(basis, u) < rho_vac
    if np.any(low):
        u[low] = isotropic_moment(basis) * (0.5 * rho_vac)
    return u


# -- caching -------------------------------------------------------------------

@dataclass
class RecentCache:
    """Bounded FIFO of recently solved (u, alpha) pairs."""

    n: int
    capacity: int = 64
    u: np.ndarray = field(init=False, repr=False)
    alpha: np.ndarray = field(init=False, repr=False)
    size: int = field(default=0, init=False)
    head: int = field(default=0, init=False)

    def __post_init__(self):
        self.u = np.empty((self.capacity, self.n))
        self.alpha = np.empty((self.capacity, self.n))

    def push(self, U, A):
        for u, a in zip(np.atleast_2d(U)[-self.capacity:], np.atleast_2d(A)[-self.capacity:]):
            self.u[self.head] = u
            self.alpha[self.head] = a
            self.head = (self.head + 1) % self.capacity
            self.size = min(self.size + 1, self.capacity)

    def entries(self):
        return self.u[: self.size], self.alpha[: self.size]


def cache_lookup(cell_entry, recent: RecentCache | None, u):
    """Look up a guess for moment vector ``u``.

    Parameters
    ----------
    cell_entry : tuple (u_prev, alpha_prev) or None
        The pair stored for this cell at the previous solve.
    recent : RecentCache or None
        Worker-local recent solutions.

    Returns
    -------
    (alpha or None, kind) where kind is ``exact`` (alpha may be used without
    solving), ``nearest`` (alpha is a starting guess) or ``miss``.
    """
    u = np.asarray(u, dtype=float)
    if cell_entry is not None and np.array_equal(cell_entry[0], u):
        return np.array(cell_entry[1]), "exact"
    if recent is not None and recent.size:
        Ur, Ar = recent.entries()
        dist = np.abs(Ur - u).sum(axis=1)
        j = int(np.argmin(dist))
        return np.array(Ar[j]), "exact" if dist[j] == 0 else "nearest"
    return None, "miss"


class MultiplierCache:
    """Per-cell store plus per-worker recent caches for a whole grid.

    Cells are assigned to ``n_workers`` contiguous blocks; each block owns
    one :class:`RecentCache`. The assignment is fixed, so results do not
    depend on how many threads execute the blocks.
    """

    def __init__(self, n_cells: int, n: int, capacity: int = 64, cells_per_worker: int = 64):
        self.cell_u = np.full((n_cells, n), np.nan)
        self.cell_alpha = np.full((n_cells, n), np.nan)
        self.bounds = list(range(0, n_cells, cells_per_worker)) + [n_cells]
        self.recent = [RecentCache(n, capacity) for _ in self.bounds[:-1]]

    def lookup(self, U):
        """Batched lookup; returns (alpha, exact_mask, guess) for all cells."""
        B, n = U.shape
        exact = np.all(self.cell_u == U, axis=1)
        alpha = np.where(exact[:, None], self.cell_alpha, np.nan)
        guess = np.full((B, n), np.nan)
        for w, rc in enumerate(self.recent):
            lo, hi = self.bounds[w], self.bounds[w + 1]
            todo = np.flatnonzero(~exact[lo:hi]) + lo
            if todo.size == 0 or rc.size == 0:
                continue
            Ur, Ar = rc.entries()
            cand_u = np.concatenate([np.broadcast_to(Ur, (todo.size,) + Ur.shape), self.cell_u[todo][:, None]], axis=1)
            cand_a = np.concatenate([np.broadcast_to(Ar, (todo.size,) + Ar.shape), self.cell_alpha[todo][:, None]], axis=1)
            dist = np.abs(cand_u - U[todo][:, None]).sum(axis=2)
            dist = np.where(np.isnan(dist), np.inf, dist)
            j = np.argmin(dist, axis=1)
            best = cand_a[np.arange(todo.size), j]
            hit0 = dist[np.arange(todo.size), j] == 0
            alpha[todo[hit0]] = best[hit0]
            exact[todo[hit0]] = True
            guess[todo[~hit0]] = best[~hit0]
        # cold workers fall back to the cell's own previous solution
        cold = ~exact & np.isnan(guess[:, 0]) & ~np.isnan(self.cell_alpha[:, 0])
        guess[cold] = self.cell_alpha[cold]
        return alpha, exact, guess

    def store(self, U, A, solved_mask):
        self.cell_u[:] = U
        self.cell_alpha[:] = A
        for w, rc in enumerate(self.recent):
            lo, hi = self.bounds[w], self.bounds[w + 1]
            sel = np.flatnonzero(solved_mask[lo:hi]) + lo
            if sel.size:
                rc.push(U[sel], A[sel])


@dataclass
class SolveStats:
    newton_iterations: int = 0
    solves: int = 0
    exact_hits: int = 0
    regularized: int = 0
    max_r: float = 0.0

    def add(self, other: "SolveStats"):
        self.newton_iterations += other.newton_iterations
        self.solves += other.solves
        self.exact_hits += other.exact_hits
        self.regularized += other.regularized
        self.max_r = max(self.max_r, other.max_r)


def solve_cells(basis: MomentBasis, U, config: OptimizerConfig, cache: MultiplierCache | None = None):
    """Multipliers for every row of ``U`` using caching and deduplication.

    ``U`` must already be floored. Returns (alpha, SolveStats).
    """
    U = np.asarray(U, dtype=float)
    B, n = U.shape
    stats = SolveStats()
    if cache is not None:
        alpha, exact, guess = cache.lookup(U)
    else:
        alpha = np.full((B, n), np.nan)
        exact = np.zeros(B, dtype=bool)
        guess = np.full((B, n), np.nan)
    todo = np.flatnonzero(~exact)
    stats.exact_hits = B - todo.size
    if todo.size:
        uniq, first, inverse = np.unique(U[todo], axis=0, return_index=True, return_inverse=True)
        g = guess[todo][first]
        has_guess = ~np.isnan(g[:, 0])
        if not np.all(has_guess):
            iso = isotropic_multipliers(basis, density(basis, uniq[~has_guess]))
            g[~has_guess] = iso
        a, it, r = solve_batch(basis, uniq, config, g)
        alpha[todo] = a[inverse.ravel()]
        stats.newton_iterations = int(it.sum())
        stats.solves = len(uniq)
        stats.regularized = int(np.count_nonzero(r))
        stats.max_r = float(r.max()) if r.size else 0.0
    if cache is not None:
        cache.store(U, alpha, ~exact)
    return alpha, stats
