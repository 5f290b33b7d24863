"""Uniform entry points for the NOMA allocators."""

from __future__ import annotations

from typing import Callable, Union

from .gp import build_noma_gp, extract_allocation, solve_gp
from .gp.solver import OPTIMAL
from .model import DomainError
from .progressive import FillParams, progressive_fill
from .scenario import Allocation, Grouping, ScenarioConfig


class SolverError(RuntimeError):
    """A numerical solve ended without an optimal point."""

    def __init__(self, message: str, status: str):
        super().__init__(message)
        self.status = status


def solve_noma_gp(scenario: ScenarioConfig, grouping: Grouping, series_order: int | None = None,
                  tol: float = 1e-8, max_iter: int = 200) -> Allocation:
    problem = build_noma_gp(scenario, grouping, series_order=series_order)
    sol = solve_gp(problem, tol=tol, max_iter=max_iter)
    if sol.status != OPTIMAL:
        raise SolverError(f"NOMA program ended with status {sol.status}", sol.status)
    return extract_allocation(sol, scenario, grouping)


Allocator = Union[str, Callable[[ScenarioConfig, Grouping], Allocation]]


def make_allocator(method: Allocator, fill: FillParams | None = None,
                   series_order: int | None = None, tol: float = 1e-8,
                   paper_literal: bool = False) -> Callable[[ScenarioConfig, Grouping], Allocation]:
    """Resolve ``"gp"``/``"progressive"`` (or pass through a callable)."""
    if callable(method):
        return method
    if method == "gp":
        return lambda sc, gr: solve_noma_gp(sc, gr, series_order=series_order, tol=tol)
    if method == "progressive":
        params = fill or FillParams()
        return lambda sc, gr: progressive_fill(sc, gr, params, paper_literal=paper_literal,
                                               record_trace=False)[0]
    raise DomainError(f"unknown NOMA allocator {method!r}")
