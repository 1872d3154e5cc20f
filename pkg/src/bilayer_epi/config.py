"""Tolerance profiles shared by the CLI and the experiment scripts."""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import dynamics
from .gp import SolverOptions


@dataclass(frozen=True)
class Tolerances:
    gap_tol: float = 1e-8
    equilibrium_tol: float = dynamics.EQUILIBRIUM_TOL
    power_tol: float = dynamics.POWER_TOL
    converged_deriv: float = dynamics.CONVERGED_DERIV
    max_newton: int = 500

    def solver_options(self) -> SolverOptions:
        return SolverOptions(gap_tol=self.gap_tol, max_newton=self.max_newton)


PROFILES = {
    "default": Tolerances(),
    "strict": Tolerances(gap_tol=1e-10, equilibrium_tol=1e-14, power_tol=1e-13,
                         converged_deriv=1e-12, max_newton=1000),
}


def profile(name: str, **overrides) -> Tolerances:
    try:
        tol = PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown tolerance profile {name!r}; choose from {sorted(PROFILES)}") from None
    return replace(tol, **overrides)
