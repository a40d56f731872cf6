"""Benchmark problems in slab geometry."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

PSI_VAC = 5e-7


def _vacuum(mu):
    return np.full(np.shape(mu), PSI_VAC)


def _beam(mu):
    return np.exp(-1e5 * (np.asarray(mu, dtype=float) - 1.0) ** 2)


@dataclass(frozen=True)
class ProblemSpec:
    """Declarative description of a benchmark.

    Coefficient functions take arrays of positions. Boundary densities take
    arrays of angles; ``boundary_normalized`` marks densities that are to be
    divided by their integral under the run's own angular quadrature.
    """

    name: str
    domain: tuple
    tf: float
    sigma_s: Callable
    sigma_a: Callable
    source: Callable
    initial: str
    boundary_left: Callable
    boundary_right: Callable
    boundary_left_normalized: bool = False
    psi_vac: float = PSI_VAC

    @property
    def length(self):
        return self.domain[1] - self.domain[0]


def plane_source(tf: float = 1.0) -> ProblemSpec:
    return ProblemSpec(
        name="planesource",
        domain=(-1.2, 1.2),
        tf=tf,
        sigma_s=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        sigma_a=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        source=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        initial="vacuum_plus_dirac",
        boundary_left=_vacuum,
        boundary_right=_vacuum,
    )


def _sb_sigma_s(x):
    x = np.asarray(x, dtype=float)
    return np.where(x <= 1.0, 0.0, np.where(x <= 2.0, 2.0, 10.0))


def _sb_sigma_a(x):
    x = np.asarray(x, dtype=float)
    return np.where(x <= 2.0, 1.0, 0.0)


def _sb_source(x):
    x = np.asarray(x, dtype=float)
    return np.where((x >= 1.0) & (x <= 1.5), 0.5, 0.0)


def source_beam(tf: float = 2.5) -> ProblemSpec:
    return ProblemSpec(
        name="sourcebeam",
        domain=(0.0, 3.0),
        tf=tf,
        sigma_s=_sb_sigma_s,
        sigma_a=_sb_sigma_a,
        source=_sb_source,
        initial="vacuum",
        boundary_left=_beam,
        boundary_right=_vacuum,
        boundary_left_normalized=True,
    )


PROBLEMS = {"planesource": plane_source, "sourcebeam": source_beam}


def get_problem(name: str, tf: float | None = None) -> ProblemSpec:
    try:
        factory = PROBLEMS[name.lower().replace("-", "").replace("_", "")]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory() if tf is None else factory(tf)
