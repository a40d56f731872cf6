"""Gauss-Lobatto composite quadratures on the angular interval [-1, 1]."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def npoints_for_order(order: int) -> int:
    """Number of Gauss-Lobatto points needed to integrate degree ``order`` exactly."""
    if order < 1:
        raise ValueError("order must be >= 1")
    return int(math.ceil((order + 3) / 2))


def _legendre_table(x, N):
    P = np.empty((len(x), N + 1))
    P[:, 0] = 1.0
    P[:, 1] = x
    for k in range(2, N + 1):
        P[:, k] = ((2 * k - 1) * x * P[:, k - 1] - (k - 1) * P[:, k - 2]) / k
    return P


def gauss_lobatto_nodes(npoints: int, tol: float = 1e-14, maxiter: int = 100):
    """Gauss-Lobatto points and weights on [-1, 1].

    Newton iteration on (1 - x^2) P'_N(x) = 0 started from the
    Chebyshev-Gauss-Lobatto points, N = npoints - 1.

    Parameters
    ----------
    npoints : int
        Number of nodes, at least 2. The rule is exact up to degree
        ``2 * npoints - 3``.

    Returns
    -------
    points : ndarray
        Nodes in ascending order, including both endpoints.
    weights : ndarray
        Positive weights summing to 2.
    """
    if npoints < 2:
        raise ValueError("Gauss-Lobatto rules need at least 2 points")
    N = npoints - 1
    x = -np.cos(np.pi * np.arange(npoints) / N)
    for _ in range(maxiter):
        P = _legendre_table(x, N)
        xold = x
        x = xold - (x * P[:, N] - P[:, N - 1]) / (npoints * P[:, N])
        if np.max(np.abs(x - xold)) < tol:
            break
    x[0], x[-1] = -1.0, 1.0
    P = _legendre_table(x, N)
    w = 2.0 / (N * npoints * P[:, N] ** 2)
    return x, w


def gauss_lobatto_rule(order: int):
    """Gauss-Lobatto rule exact for polynomials of degree <= ``order``."""
    return gauss_lobatto_nodes(npoints_for_order(order))


@dataclass(eq=False)
class Quadrature:
    """Composite angular quadrature.

    Points are grouped by partition interval: ``points.reshape(K, m)`` gives
    the ``m`` points of each of the ``K`` intervals. Interface nodes shared by
    two intervals appear once in each (not merged), except for nodal rules
    where ``nodal`` is set and every point is a partition node.
    """

    points: np.ndarray
    weights: np.ndarray
    interval_map: np.ndarray
    n_intervals: int
    points_per_interval: int
    nodal: bool = False

    def __len__(self):
        return len(self.points)

    def integrate(self, values):
        """Weighted sum over the last axis of ``values``."""
        return np.asarray(values) @ self.weights


def composite_rule(edges, order: int) -> Quadrature:
    """Gauss-Lobatto rule of the given order mapped onto each interval."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_lobatto_rule(order)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    pts = a + half * (x + 1.0)
    # pin interval ends to the partition nodes so the Lagrange and support
    # properties hold bit-exactly at the duplicated interface points
    pts[:, 0] = edges[:-1]
    pts[:, -1] = edges[1:]
    wts = half * w
    K, m = pts.shape
    return Quadrature(
        points=pts.ravel(),
        weights=wts.ravel(),
        interval_map=np.repeat(np.arange(K), m),
        n_intervals=K,
        points_per_interval=m,
    )


def build_quadrature(kind: str, n: int, partition=None) -> Quadrature:
    """Default quadrature for a basis of the given kind.

    Full moments of order N use two rules of order 2N + 40 on [-1, 0] and
    [0, 1]; hat functions and partial moments use order 15 per interval.
    """
    if kind == "full":
        return composite_rule([-1.0, 0.0, 1.0], 2 * (n - 1) + 40)
    if partition is None:
        raise ValueError(f"{kind} basis needs a partition")
    return composite_rule(partition, 15)


def nodal_quadrature(kind: str, partition) -> Quadrature:
    """Trapezoid rule on the partition nodes (masslumping for hat functions)."""
    if kind != "hat":
        raise ValueError("nodal quadrature is only supported for hat function bases")
    nodes = np.asarray(partition, dtype=float)
    h = np.diff(nodes)
    w = np.zeros_like(nodes)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return Quadrature(
        points=nodes.copy(),
        weights=w,
        interval_map=np.minimum(np.arange(len(nodes)), len(h) - 1),
        n_intervals=len(h),
        points_per_interval=1,
        nodal=True,
    )
