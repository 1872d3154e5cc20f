"""Geometric programming: modelling, log-space transform and a barrier solver."""

from .expr import (
    GeometricProgram,
    GPError,
    Monomial,
    Posynomial,
    Variable,
    as_posynomial,
    dump_program,
    evaluate,
    parse_program,
    posynomial_transform,
)
from .solver import (
    INFEASIBLE,
    ITERATION_LIMIT,
    OPTIMAL,
    GPSolution,
    NumericalFailure,
    SolverOptions,
    check_solution,
    solve,
)
from .transform import ConvexProgram, StackedLSE, log_transform

__all__ = [
    "GeometricProgram", "GPError", "Monomial", "Posynomial", "Variable", "as_posynomial",
    "dump_program", "evaluate", "parse_program", "posynomial_transform",
    "INFEASIBLE", "ITERATION_LIMIT", "OPTIMAL", "GPSolution", "NumericalFailure",
    "SolverOptions", "check_solution", "solve", "ConvexProgram", "StackedLSE", "log_transform",
]
