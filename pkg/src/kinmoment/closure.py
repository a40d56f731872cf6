"""Maxwell-Boltzmann entropy closure.

Maps between multipliers alpha and moments u = <b exp(alpha . b)>. Every
function broadcasts over leading axes of ``alpha`` (one row per grid cell).

Integrands live in a "point layout" that depends on the basis sparsity:
(..., P) for full moments, (..., K, m) for hat functions and partial moments
on a composite rule, and (..., n) for the nodal hat function rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .basis import MomentBasis, evaluate

EXP_LIMIT = 700.0


class ClosureOverflow(ArithmeticError):
    """exp(alpha . b) would overflow (or the exponent is not finite)."""


def _layout_shape(basis: MomentBasis):
    q = basis.quadrature
    if basis.kind == "full" or q.nodal:
        return (len(q.points),)
    return (q.n_intervals, q.points_per_interval)


def point_weights(basis: MomentBasis) -> np.ndarray:
    return basis.quadrature.weights.reshape(_layout_shape(basis))


def point_mu(basis: MomentBasis) -> np.ndarray:
    return basis.quadrature.points.reshape(_layout_shape(basis))


def exponent(basis: MomentBasis, alpha) -> np.ndarray:
    """alpha . b at every quadrature point, in point layout."""
    alpha = np.asarray(alpha, dtype=float)
    if basis.kind == "full":
        # one product per row keeps results independent of the batch size
        return (alpha[..., None, :] @ basis.values.T)[..., 0, :]
    if basis.quadrature.nodal:
        return alpha.copy()
    a = alpha[..., basis.local_index]
    loc = basis.local
    return a[..., None, 0] * loc[..., 0] + a[..., None, 1] * loc[..., 1]


def guarded_exp(p, check: bool = True) -> np.ndarray:
    if check:
        pmax = np.max(p) if np.size(p) else 0.0
        if not pmax <= EXP_LIMIT:
            raise ClosureOverflow(f"exponent {pmax:.6g} exceeds {EXP_LIMIT}")
    with np.errstate(over="ignore", invalid="ignore"):
        return np.exp(p)


def integrate(basis: MomentBasis, f) -> np.ndarray:
    """<b f> for an integrand ``f`` given in point layout; returns (..., n)."""
    w = point_weights(basis)
    fw = f * w
    if basis.kind == "full":
        return (fw[..., None, :] @ basis.values)[..., 0, :]
    if basis.quadrature.nodal:
        return fw
    loc = basis.local
    g0 = np.sum(fw * loc[..., 0], axis=-1)
    g1 = np.sum(fw * loc[..., 1], axis=-1)
    if basis.kind == "partial":
        return np.stack([g0, g1], axis=-1).reshape(g0.shape[:-1] + (basis.n,))
    K = g0.shape[-1]
    u = np.zeros(g0.shape[:-1] + (basis.n,))
    u[..., :K] += g0
    u[..., 1:] += g1
    return u


def integrate_scalar(basis: MomentBasis, f) -> np.ndarray:
    """<f> for an integrand in point layout."""
    fw = f * point_weights(basis)
    return fw.reshape(fw.shape[: fw.ndim - len(_layout_shape(basis))] + (-1,)).sum(axis=-1)


@dataclass
class Hessian:
    """Symmetric matrix in one of the storage formats used by the bases.

    ``storage`` is one of ``dense`` (data: (..., n, n)), ``tridiagonal``
    (data: diagonal (..., n) and off-diagonal (..., n-1)), ``diagonal``
    (data: (..., n)) or ``blocks`` (data: (..., K, 2, 2)).
    """

    storage: str
    data: tuple

    @property
    def n(self):
        if self.storage == "blocks":
            return 2 * self.data[0].shape[-3]
        return self.data[0].shape[-1]

    def to_dense(self) -> np.ndarray:
        if self.storage == "dense":
            return self.data[0].copy()
        if self.storage == "diagonal":
            d = self.data[0]
            return d[..., :, None] * np.eye(d.shape[-1])
        if self.storage == "tridiagonal":
            d, e = self.data
            n = d.shape[-1]
            H = np.zeros(d.shape + (n,))
            i = np.arange(n)
            H[..., i, i] = d
            H[..., i[:-1], i[1:]] = e
            H[..., i[1:], i[:-1]] = e
            return H
        blk = self.data[0]
        K = blk.shape[-3]
        H = np.zeros(blk.shape[:-3] + (2 * K, 2 * K))
        for s in range(2):
            for t in range(2):
                H[..., 2 * np.arange(K) + s, 2 * np.arange(K) + t] = blk[..., s, t]
        return H

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.storage == "dense":
            return np.einsum("...ij,...j->...i", self.data[0], x)
        if self.storage == "diagonal":
            return self.data[0] * x
        if self.storage == "tridiagonal":
            d, e = self.data
            y = d * x
            y[..., :-1] += e * x[..., 1:]
            y[..., 1:] += e * x[..., :-1]
            return y
        blk = self.data[0]
        xb = x.reshape(x.shape[:-1] + (-1, 2))
        return np.einsum("...kst,...kt->...ks", blk, xb).reshape(x.shape)

    def plus(self, other: "Hessian", scale: float = 1.0) -> "Hessian":
        """self + scale * other (same storage; ``other`` may be unbatched)."""
        if other.storage != self.storage:
            raise ValueError("storage formats differ")
        return Hessian(self.storage, tuple(a + scale * b for a, b in zip(self.data, other.data)))

    def solve(self, rhs) -> np.ndarray:
        """Solve H x = rhs; raises :class:`linalg.SpdSolveError`."""
        if self.storage == "dense":
            return linalg.cholesky_solve_dense(self.data[0], rhs)
        if self.storage == "tridiagonal":
            return linalg.cholesky_solve_tridiagonal(self.data[0], self.data[1], rhs)
        if self.storage == "diagonal":
            return linalg.solve_diagonal(self.data[0], rhs)
        return linalg.cholesky_solve_blocks(self.data[0], rhs)


def second_moment(basis: MomentBasis, f) -> Hessian:
    """<b b^T f> for an integrand in point layout, in the basis storage format."""
    fw = f * point_weights(basis)
    if basis.kind == "full":
        V = basis.values
        return Hessian("dense", (np.matmul(V.T * fw[..., None, :], V),))
    if basis.quadrature.nodal:
        return Hessian("diagonal", (fw,))
    loc = basis.local
    b00 = np.sum(fw * (loc[..., 0] * loc[..., 0]), axis=-1)
    b01 = np.sum(fw * (loc[..., 0] * loc[..., 1]), axis=-1)
    b11 = np.sum(fw * (loc[..., 1] * loc[..., 1]), axis=-1)
    if basis.kind == "partial":
        blk = np.stack([np.stack([b00, b01], -1), np.stack([b01, b11], -1)], -2)
        return Hessian("blocks", (blk,))
    K = b00.shape[-1]
    d = np.zeros(b00.shape[:-1] + (basis.n,))
    d[..., :K] += b00
    d[..., 1:] += b11
    return Hessian("tridiagonal", (d, b01))


def ansatz(basis: MomentBasis, alpha, mu) -> np.ndarray:
    """exp(alpha . b(mu))."""
    p = np.asarray(alpha, dtype=float) @ evaluate(basis, mu)
    return guarded_exp(p)


def moments_of(basis: MomentBasis, alpha, check: bool = True) -> np.ndarray:
    return integrate(basis, guarded_exp(exponent(basis, alpha), check))


def hessian(basis: MomentBasis, alpha, check: bool = True) -> Hessian:
    return second_moment(basis, guarded_exp(exponent(basis, alpha), check))


def dual_gradient(basis: MomentBasis, alpha, u) -> np.ndarray:
    return moments_of(basis, alpha) - np.asarray(u, dtype=float)


def dual_objective(basis: MomentBasis, alpha, u) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    e = guarded_exp(exponent(basis, alpha))
    return integrate_scalar(basis, e) - np.sum(np.asarray(u, dtype=float) * alpha, axis=-1)


def flux_jacobian(basis: MomentBasis, alpha) -> np.ndarray:
    """<mu b b^T exp(alpha . b)> as a dense matrix."""
    e = guarded_exp(exponent(basis, alpha))
    return second_moment(basis, point_mu(basis) * e).to_dense()


def full_flux(basis: MomentBasis, alpha) -> np.ndarray:
    e = guarded_exp(exponent(basis, alpha))
    return integrate(basis, point_mu(basis) * e)


def half_weight(basis: MomentBasis, side: str) -> np.ndarray:
    mu = point_mu(basis)
    if side == "plus":
        return np.maximum(mu, 0.0)
    if side == "minus":
        return np.minimum(mu, 0.0)
    raise ValueError("side must be 'plus' or 'minus'")


def half_flux(basis: MomentBasis, alpha, side: str) -> np.ndarray:
    """<(mu)^+- b exp(alpha . b)> with (mu)^- = min(mu, 0)."""
    e = guarded_exp(exponent(basis, alpha))
    return integrate(basis, half_weight(basis, side) * e)


def mass_matrix(basis: MomentBasis) -> Hessian:
    return second_moment(basis, np.ones(_layout_shape(basis)))


def cell_entropy(basis: MomentBasis, alpha) -> np.ndarray:
    """<exp(p)(p - 1)> with p = alpha . b."""
    p = exponent(basis, alpha)
    return integrate_scalar(basis, guarded_exp(p) * (p - 1.0))
