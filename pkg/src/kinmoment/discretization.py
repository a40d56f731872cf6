"""First-order finite volume discretization shared by both schemes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import MomentBasis, density, isotropic_moment
from .closure import exponent, guarded_exp, half_weight, integrate, integrate_scalar, point_mu
from .problems import ProblemSpec


@dataclass(eq=False)
class Discretization:
    """Uniform grid, cell coefficients and boundary data for one run.

    Coefficients are sampled at cell centers. ``ghost_left`` and
    ``ghost_right`` are the half-range fluxes <mu^+ psi_b b> and
    <mu^- psi_b b> of the boundary densities, evaluated once.
    """

    basis: MomentBasis
    problem: ProblemSpec
    n_x: int
    dx: float = field(init=False)
    x: np.ndarray = field(init=False, repr=False)
    sigma_s: np.ndarray = field(init=False, repr=False)
    sigma_a: np.ndarray = field(init=False, repr=False)
    source: np.ndarray = field(init=False, repr=False)
    ghost_left: np.ndarray = field(init=False, repr=False)
    ghost_right: np.ndarray = field(init=False, repr=False)
    iso: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_x < 1:
            raise ValueError("n_x must be positive")
        xl, xr = self.problem.domain
        self.dx = (xr - xl) / self.n_x
        self.x = xl + (np.arange(self.n_x) + 0.5) * self.dx
        self.sigma_s = np.asarray(self.problem.sigma_s(self.x), dtype=float)
        self.sigma_a = np.asarray(self.problem.sigma_a(self.x), dtype=float)
        self.source = np.asarray(self.problem.source(self.x), dtype=float)
        self.iso = isotropic_moment(self.basis)
        mu = point_mu(self.basis)
        psi_l = np.asarray(self.problem.boundary_left(mu), dtype=float)
        if self.problem.boundary_left_normalized:
            psi_l = psi_l / integrate_scalar(self.basis, psi_l)
        psi_r = np.asarray(self.problem.boundary_right(mu), dtype=float)
        self.ghost_left = integrate(self.basis, half_weight(self.basis, "plus") * psi_l)
        self.ghost_right = integrate(self.basis, half_weight(self.basis, "minus") * psi_r)
        self._wplus = half_weight(self.basis, "plus")
        self._wminus = half_weight(self.basis, "minus")

    def cfl_dt(self, eps_gamma: float = 0.1) -> float:
        return cfl_dt(self.dx, eps_gamma)

    def flux_divergence(self, e) -> np.ndarray:
        """L_i = -(g_{i+1/2} - g_{i-1/2}) / dx from the ansatz values ``e``."""
        Fp = integrate(self.basis, self._wplus * e)
        Fm = integrate(self.basis, self._wminus * e)
        g = np.empty((self.n_x + 1, self.basis.n))
        g[0] = self.ghost_left + Fm[0]
        g[1:-1] = Fp[:-1] + Fm[1:]
        g[-1] = Fp[-1] + self.ghost_right
        return -(g[1:] - g[:-1]) / self.dx

    def flux_divergence_alpha(self, alpha) -> np.ndarray:
        return self.flux_divergence(guarded_exp(exponent(self.basis, alpha)))

    def source_rhs(self, U) -> np.ndarray:
        """s(u) = sigma_s (G u - u) - sigma_a u + <b> Q, per cell."""
        rho = density(self.basis, U)
        Gu = np.multiply.outer(0.5 * rho, self.iso)
        ss, sa = self.sigma_s[:, None], self.sigma_a[:, None]
        return ss * (Gu - U) - sa * U + np.multiply.outer(self.source, self.iso)

    def project_initial(self) -> np.ndarray:
        return project_initial(self.basis, self.problem, self.n_x)


def cfl_dt(dx: float, eps_gamma: float = 0.1) -> float:
    """Largest realizability-preserving step (1 - eps_gamma) dx in 1D."""
    return (1.0 - eps_gamma) * dx


def quadrature_isotropic_moment(basis: MomentBasis) -> np.ndarray:
    return integrate(basis, np.ones(point_mu(basis).shape))


def project_initial(basis: MomentBasis, problem: ProblemSpec, n_x: int) -> np.ndarray:
    """Cell averages of the initial moments, shape (n_x, n).

    The plane-source Dirac mass is split evenly between the two cells
    adjacent to x = 0.
    """
    xl, xr = problem.domain
    dx = (xr - xl) / n_x
    psi = np.full(n_x, problem.psi_vac)
    if problem.initial == "vacuum_plus_dirac":
        if n_x % 2:
            raise ValueError("plane-source needs an even number of cells")
        mid = n_x // 2
        psi[mid - 1: mid + 1] = problem.psi_vac + 1.0 / (2.0 * dx)
    elif problem.initial != "vacuum":
        raise ValueError(f"unknown initial condition {problem.initial!r}")
    return np.multiply.outer(psi, quadrature_isotropic_moment(basis))


@dataclass
class RunRecord:
    """Everything a run produces."""

    scheme: str
    config: dict
    x: np.ndarray
    u: np.ndarray
    alpha: np.ndarray | None
    t: list = field(default_factory=list)
    dt: list = field(default_factory=list)
    wall: list = field(default_factory=list)
    err: list = field(default_factory=list)
    retries: list = field(default_factory=list)
    entropy: list = field(default_factory=list)
    entropy_est: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    wall_total: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def n_steps(self):
        return len(self.dt)
