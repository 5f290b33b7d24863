"""Geometric-programming layer: modeling types, builders and a solver."""

from .builders import (
    build_noma_gp,
    build_oma_fullload_gp,
    build_oma_gp,
    extract_allocation,
    truncation_bound,
)
from .posynomial import GpProblem, Monomial, Posynomial, dump_problem, load_problem, var
from .solver import GpSolution, solve_gp

__all__ = [
    "GpProblem",
    "GpSolution",
    "Monomial",
    "Posynomial",
    "build_noma_gp",
    "build_oma_fullload_gp",
    "build_oma_gp",
    "dump_problem",
    "extract_allocation",
    "load_problem",
    "solve_gp",
    "truncation_bound",
    "var",
]
