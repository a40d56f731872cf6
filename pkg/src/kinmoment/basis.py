"""Angular moment bases in slab geometry.

Three families are supported:

* ``full``: Legendre polynomials P_0..P_N (unnormalized, P_l(1) = 1)
* ``hat``: piecewise linear Lagrange functions on a uniform partition
* ``partial``: piecewise (1, mu) on each interval of a uniform partition
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .quadrature import Quadrature, build_quadrature, nodal_quadrature

KINDS = ("full", "hat", "partial")


def legendre_values(mu, order: int) -> np.ndarray:
    """P_0..P_order at ``mu`` by the three-term recurrence; shape (..., order+1)."""
    mu = np.asarray(mu, dtype=float)
    out = np.empty(mu.shape + (order + 1,))
    out[..., 0] = 1.0
    if order >= 1:
        out[..., 1] = mu
    for l in range(2, order + 1):
        out[..., l] = ((2 * l - 1) * mu * out[..., l - 1] - (l - 1) * out[..., l - 2]) / l
    return out


def uniform_partition(k: int) -> np.ndarray:
    # (2i - k)/k keeps mu = 0 exact for even k
    return (2.0 * np.arange(k + 1) - k) / k


@dataclass(eq=False)
class MomentBasis:
    """A moment basis with its attached angular quadrature.

    Use :func:`full_moments`, :func:`hat_functions`, :func:`partial_moments`
    or :func:`parse_basis` rather than constructing this directly.

    Besides the public fields, the basis caches the basis values at the
    quadrature points in a layout suited to its sparsity:

    * ``full``: dense matrix ``values`` of shape (P, n)
    * ``hat`` / ``partial``: ``local`` of shape (K, m, 2) holding the two
      basis functions supported on each interval, with global indices
      ``local_index`` of shape (K, 2)
    * nodal ``hat``: the values are the identity; nothing is stored
    """

    kind: str
    n: int
    partition: np.ndarray | None
    quadrature: Quadrature
    values: np.ndarray | None = field(default=None, repr=False)
    local: np.ndarray | None = field(default=None, repr=False)
    local_index: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")
        q = self.quadrature
        if self.kind == "full":
            self.values = legendre_values(q.points, self.n - 1)
        elif not q.nodal:
            K, m = q.n_intervals, q.points_per_interval
            mu = q.points.reshape(K, m)
            lo, hi = self.partition[:-1, None], self.partition[1:, None]
            loc = np.empty((K, m, 2))
            if self.kind == "hat":
                h = hi - lo
                loc[..., 0] = (hi - mu) / h
                loc[..., 1] = (mu - lo) / h
                idx = np.stack([np.arange(K), np.arange(1, K + 1)], axis=1)
            else:
                loc[..., 0] = 1.0
                loc[..., 1] = mu
                idx = np.stack([2 * np.arange(K), 2 * np.arange(K) + 1], axis=1)
            self.local = loc
            self.local_index = idx

    @property
    def storage(self) -> str:
        """Hessian storage format implied by the basis and its quadrature."""
        if self.kind == "full":
            return "dense"
        if self.kind == "partial":
            return "blocks"
        return "diagonal" if self.quadrature.nodal else "tridiagonal"

    @property
    def name(self) -> str:
        prefix = {"full": "m", "hat": "hfm", "partial": "pmm"}[self.kind]
        size = self.n - 1 if self.kind == "full" else self.n
        return f"{prefix}{size}"

    def point_values(self) -> np.ndarray:
        """Dense (P, n) matrix of basis values at the quadrature points."""
        q = self.quadrature
        if self.kind == "full":
            return self.values
        if q.nodal:
            return np.eye(self.n)
        K, m = q.n_intervals, q.points_per_interval
        B = np.zeros((K, m, self.n))
        for s in range(2):
            B[np.arange(K), :, self.local_index[:, s]] = self.local[..., s]
        return B.reshape(K * m, self.n)


def full_moments(order: int) -> MomentBasis:
    if order < 0:
        raise ValueError("order must be >= 0")
    n = order + 1
    return MomentBasis("full", n, None, build_quadrature("full", n))


def hat_functions(n: int, masslumping: bool = False) -> MomentBasis:
    if n < 2:
        raise ValueError("hat function basis needs at least 2 functions")
    part = uniform_partition(n - 1)
    quad = nodal_quadrature("hat", part) if masslumping else build_quadrature("hat", n, part)
    return MomentBasis("hat", n, part, quad)


def partial_moments(n: int) -> MomentBasis:
    if n < 2 or n % 2:
        raise ValueError("partial moment basis needs an even number of moments")
    part = uniform_partition(n // 2)
    return MomentBasis("partial", n, part, build_quadrature("partial", n, part))


def parse_basis(spec: str, masslumping: bool = False) -> MomentBasis:
    """Build a basis from a string like ``m10``, ``hfm20`` or ``pmm10``."""
    match = re.fullmatch(r"(m|hfm|pmm)(\d+)", spec.strip().lower())
    if not match:
        raise ValueError(f"cannot parse basis {spec!r}; expected m<N>, hfm<n> or pmm<n>")
    prefix, size = match.group(1), int(match.group(2))
    if masslumping and prefix != "hfm":
        raise ValueError("masslumping is only available for hat function bases")
    if prefix == "m":
        return full_moments(size)
    if prefix == "hfm":
        return hat_functions(size, masslumping)
    return partial_moments(size)


def evaluate(basis: MomentBasis, mu: float) -> np.ndarray:
    """Basis vector b(mu)."""
    mu = float(mu)
    if not -1.0 <= mu <= 1.0:
        raise ValueError(f"mu={mu} outside [-1, 1]")
    if basis.kind == "full":
        return legendre_values(mu, basis.n - 1)
    part = basis.partition
    K = len(part) - 1
    j = min(int(np.searchsorted(part, mu, side="right")) - 1, K - 1)
    lo, hi = part[j], part[j + 1]
    b = np.zeros(basis.n)
    if basis.kind == "hat":
        b[j] = (hi - mu) / (hi - lo)
        b[j + 1] = (mu - lo) / (hi - lo)
    else:
        b[2 * j] = 1.0
        b[2 * j + 1] = mu
    return b


def unit_multiplier(basis: MomentBasis) -> np.ndarray:
    """The multiplier vector with alpha . b(mu) = 1 for all mu."""
    a = np.zeros(basis.n)
    if basis.kind == "full":
        a[0] = 1.0
    elif basis.kind == "hat":
        a[:] = 1.0
    else:
        a[0::2] = 1.0
    return a


def isotropic_moment(basis: MomentBasis) -> np.ndarray:
    """Exact integral of each basis function over [-1, 1]."""
    if basis.kind == "full":
        u = np.zeros(basis.n)
        u[0] = 2.0
        return u
    part = basis.partition
    h = np.diff(part)
    if basis.kind == "hat":
        u = np.zeros(basis.n)
        u[:-1] += 0.5 * h
        u[1:] += 0.5 * h
        return u
    u = np.empty(basis.n)
    u[0::2] = h
    u[1::2] = 0.5 * (part[1:] ** 2 - part[:-1] ** 2)
    return u


def density(basis: MomentBasis, u) -> np.ndarray:
    """Local particle density rho = alpha^1 . u (batched over leading axes)."""
    u = np.asarray(u, dtype=float)
    if basis.kind == "full":
        return u[..., 0].copy()
    if basis.kind == "hat":
        return u.sum(axis=-1)
    return u[..., 0::2].sum(axis=-1)


def iso_projection(basis: MomentBasis, u) -> np.ndarray:
    """G u: the isotropic moment with the same density as ``u``."""
    rho = density(basis, u)
    return np.multiply.outer(rho * 0.5, isotropic_moment(basis))


def is_realizable(basis: MomentBasis, u):
    """Realizability test.

    Returns a bool (or bool array for batched input) for hat functions and
    partial moments. For full moments the test is not implemented and
    ``None`` is returned.
    """
    u = np.asarray(u, dtype=float)
    if basis.kind == "full":
        return None
    if basis.kind == "hat":
        return np.all(u > 0, axis=-1)
    u0, u1 = u[..., 0::2], u[..., 1::2]
    lo, hi = basis.partition[:-1], basis.partition[1:]
    return np.all((u0 > 0) & (lo * u0 < u1) & (u1 < hi * u0), axis=-1)


def isotropic_multipliers(basis: MomentBasis, rho) -> np.ndarray:
    """Multipliers of the isotropic density with particle density ``rho``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("density must be positive")
    return np.multiply.outer(np.log(rho / 2.0), unit_multiplier(basis))
