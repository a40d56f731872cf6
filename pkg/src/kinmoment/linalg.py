"""Batched Cholesky solvers for symmetric positive definite systems.

All routines accept stacks of systems (leading batch axes). The underscore
variants return a per-system ``ok`` mask instead of raising, which is what
the Newton solver uses to route individual cells into regularization.
"""
from __future__ import annotations

import numpy as np

PIVOT_MIN = 1e-300


class SpdSolveError(np.linalg.LinAlgError):
    """Raised when a matrix is not numerically positive definite.

    Attributes
    ----------
    reason : str
        ``"not_positive_definite"`` or ``"numerically_singular"``.
    failed : ndarray of bool or None
        Batch mask of the systems that failed.
    """

    def __init__(self, reason, failed=None):
        super().__init__(reason)
        self.reason = reason
        self.failed = failed


def _check_pivots(piv, ok):
    bad = ~(piv > PIVOT_MIN)  # also catches NaN
    ok &= ~bad
    return np.where(bad, 1.0, piv)


def _raise_if_failed(ok, pivots_seen):
    if not np.all(ok):
        singular = np.any(np.isfinite(pivots_seen) & (np.abs(pivots_seen) <= PIVOT_MIN))
        raise SpdSolveError("numerically_singular" if singular else "not_positive_definite", ~ok)


def _cholesky_dense(H):
    H = np.asarray(H, dtype=float)
    n = H.shape[-1]
    L = np.zeros_like(H)
    ok = np.ones(H.shape[:-2], dtype=bool)
    minpiv = np.full(H.shape[:-2], np.inf)
    for j in range(n):
        Lj = L[..., j, :j]
        d = H[..., j, j] - np.einsum("...k,...k->...", Lj, Lj)
        minpiv = np.minimum(minpiv, np.abs(d))
        d = _check_pivots(d, ok)
        ljj = np.sqrt(d)
        L[..., j, j] = ljj
        if j + 1 < n:
            col = H[..., j + 1:, j] - np.einsum("...ik,...k->...i", L[..., j + 1:, :j], Lj)
            L[..., j + 1:, j] = col / ljj[..., None]
    return L, ok, minpiv


def _lower_solve(L, b):
    n = L.shape[-1]
    y = np.empty_like(b)
    for i in range(n):
        y[..., i] = (b[..., i] - np.einsum("...k,...k->...", L[..., i, :i], y[..., :i])) / L[..., i, i]
    return y


def _upper_solve_t(L, y):
    # solves L^T x = y
    n = L.shape[-1]
    x = np.empty_like(y)
    for i in range(n - 1, -1, -1):
        x[..., i] = (y[..., i] - np.einsum("...k,...k->...", L[..., i + 1:, i], x[..., i + 1:])) / L[..., i, i]
    return x


def cholesky_factor_dense(H) -> np.ndarray:
    """Lower triangular L with H = L L^T; raises SpdSolveError on failure."""
    L, ok, minpiv = _cholesky_dense(H)
    _raise_if_failed(ok, minpiv)
    return L


def cholesky_solve_dense(H, rhs) -> np.ndarray:
    """Solve H x = rhs for dense SPD H of shape (..., n, n)."""
    L = cholesky_factor_dense(H)
    return _upper_solve_t(L, _lower_solve(L, np.asarray(rhs, dtype=float)))


def _ldl_tridiagonal(diag, off):
    diag = np.asarray(diag, dtype=float)
    off = np.asarray(off, dtype=float)
    n = diag.shape[-1]
    d = np.empty_like(diag)
    l = np.empty_like(off)
    ok = np.ones(diag.shape[:-1], dtype=bool)
    minpiv = np.full(diag.shape[:-1], np.inf)
    piv = diag[..., 0]
    for i in range(n):
        minpiv = np.minimum(minpiv, np.abs(piv))
        piv = _check_pivots(piv, ok)
        d[..., i] = piv
        if i + 1 < n:
            l[..., i] = off[..., i] / piv
            piv = diag[..., i + 1] - l[..., i] * off[..., i]
    return d, l, ok, minpiv


def _ldl_solve(d, l, rhs):
    n = d.shape[-1]
    y = np.array(rhs, dtype=float, copy=True)
    for i in range(1, n):
        y[..., i] -= l[..., i - 1] * y[..., i - 1]
    y /= d
    for i in range(n - 2, -1, -1):
        y[..., i] -= l[..., i] * y[..., i + 1]
    return y


def cholesky_solve_tridiagonal(diag, off, rhs) -> np.ndarray:
    """Solve a symmetric tridiagonal SPD system by LDL^T in O(n).

    Parameters
    ----------
    diag : array_like, shape (..., n)
        Main diagonal.
    off : array_like, shape (..., n-1)
        Sub/super diagonal.
    rhs : array_like, shape (..., n)
    """
    d, l, ok, minpiv = _ldl_tridiagonal(diag, off)
    _raise_if_failed(ok, minpiv)
    return _ldl_solve(d, l, rhs)


def _cholesky_blocks(blocks):
    blocks = np.asarray(blocks, dtype=float)
    a, b, c = blocks[..., 0, 0], blocks[..., 1, 0], blocks[..., 1, 1]
    ok = np.ones(blocks.shape[:-3], dtype=bool)
    blk_ok = np.ones(a.shape, dtype=bool)
    minpiv = np.abs(a)
    a = _check_pivots(a, blk_ok)
    l00 = np.sqrt(a)
    l10 = b / l00
    d = c - l10 * l10
    minpiv = np.minimum(minpiv, np.abs(d))
    d = _check_pivots(d, blk_ok)
    l11 = np.sqrt(d)
    ok &= np.all(blk_ok, axis=-1)
    return l00, l10, l11, ok, np.min(minpiv, axis=-1)


def _blocks_solve(l00, l10, l11, rhs):
    r = np.asarray(rhs, dtype=float).reshape(l00.shape + (2,))
    y0 = r[..., 0] / l00
    y1 = (r[..., 1] - l10 * y0) / l11
    x1 = y1 / l11
    x0 = (y0 - l10 * x1) / l00
    return np.stack([x0, x1], axis=-1).reshape(l00.shape[:-1] + (-1,))


def cholesky_solve_blocks(blocks, rhs) -> np.ndarray:
    """Solve a block-diagonal SPD system with 2x2 blocks.

    ``blocks`` has shape (..., K, 2, 2); ``rhs`` has shape (..., 2K) and is
    ordered block by block.
    """
    l00, l10, l11, ok, minpiv = _cholesky_blocks(blocks)
    _raise_if_failed(ok, minpiv)
    return _blocks_solve(l00, l10, l11, rhs)


def solve_diagonal(diag, rhs) -> np.ndarray:
    diag = np.asarray(diag, dtype=float)
    ok = np.all(diag > PIVOT_MIN, axis=-1)
    _raise_if_failed(ok, np.min(np.abs(diag), axis=-1))
    return np.asarray(rhs, dtype=float) / diag


def _lower_solve_matrix(L, T):
    # solves L X = T column by column
    X = _lower_solve(L[..., None, :, :], np.swapaxes(T, -1, -2))
    return np.swapaxes(X, -1, -2)
