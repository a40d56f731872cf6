"""Entropy-based moment closures for slab-geometry kinetic transport.

Two finite volume schemes are provided: a Strang-split scheme in moment
variables that solves a dual optimization problem per cell and stage, and
an adaptive Runge-Kutta scheme that evolves the Lagrange multipliers.
"""
from .basis import MomentBasis, full_moments, hat_functions, parse_basis, partial_moments
from .closure import moments_of
from .discretization import Discretization, RunRecord
from .harness import RunConfig, compare, run
from .optimizer import OptimizerConfig, solve_dual
from .problems import get_problem, plane_source, source_beam
from .scheme_standard import StandardScheme
from .scheme_transformed import TransformedConfig, TransformedScheme

__all__ = [
    "MomentBasis", "full_moments", "hat_functions", "partial_moments", "parse_basis", "moments_of",
    "Discretization", "RunRecord", "RunConfig", "run", "compare", "OptimizerConfig", "solve_dual",
    "get_problem", "plane_source", "source_beam", "StandardScheme", "TransformedConfig", "TransformedScheme",
]
