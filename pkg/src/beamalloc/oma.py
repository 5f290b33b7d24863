"""OMA allocation: alternating power/bit and regularizer optimization, baselines."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .allocators import SolverError
from .gp import build_oma_fullload_gp, build_oma_gp, extract_allocation, solve_gp
from .gp.builders import oma_group_sinrs
from .gp.solver import OPTIMAL
from .model import DomainError, beta_of
from .rzf import LOG_PHI_RANGE, oma_sinr, worst_user_per_group
from .scenario import Allocation, Grouping, OmaConfig, quantile_grouping

MAX_OUTER = 20
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class OmaStep(NamedTuple):
    iteration: int
    phi: float
    gamma_th: float
    g_min: int


def oma_grouping(scenario: OmaConfig, n_groups: int) -> Grouping:
    """Equal-count groups of users sorted by ascending ``c_sq``."""
    return quantile_grouping(scenario.c_sq, n_groups)


def _solve_fixed_phi(scenario, grouping, phi, tol) -> Allocation:
    sol = solve_gp(build_oma_gp(scenario, grouping, phi), tol=tol)
    if sol.status != OPTIMAL:
        raise SolverError(f"OMA program at phi={phi:.4g} ended with status {sol.status}",
                          sol.status)
    return extract_allocation(sol, scenario, grouping)


def _min_group_sinr(scenario, worst_c2, alloc, phi) -> float:
    g = oma_sinr(alloc.zeta, alloc.b_bar, worst_c2, scenario.k_bar, phi, scenario.sigma_tilde)
    return float(np.min(g))


def best_phi(scenario: OmaConfig, grouping: Grouping, allocation: Allocation,
             n_scan: int = 41, xtol: float = 1e-6) -> float:
    """Regularizer maximizing the worst group's SINR at fixed powers and bits.

    A log-spaced scan over ``LOG_PHI_RANGE`` brackets the maximum, then
    golden-section search refines it in ``log phi``.
    """
    worst = worst_user_per_group(scenario.c_sq, grouping)
    c2 = np.array([scenario.c_sq[n] for n in worst])

    def f(u):
        return _min_group_sinr(scenario, c2, allocation, math.exp(u))

    lo, hi = LOG_PHI_RANGE
    grid = np.linspace(lo, hi, n_scan)
    vals = [f(u) for u in grid]
    j = int(np.argmax(vals))
    a, b = grid[max(j - 1, 0)], grid[min(j + 1, n_scan - 1)]
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > xtol:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
    u = x1 if f1 >= f2 else x2
    # the bracket search must never lose to the best scan point
    return math.exp(u if max(f1, f2) >= vals[j] else grid[j])


def literal_phi(scenario: OmaConfig, grouping: Grouping, allocation: Allocation, g_min: int) -> float:
    """Closed-form update ``(c2/sigma_tilde + beta)/(1 - beta)`` of the worst group."""
    n = worst_user_per_group(scenario.c_sq, grouping)[g_min]
    beta = float(beta_of(allocation.b_bar[g_min]))
    if scenario.sigma_tilde == 0:
        raise DomainError("the closed-form phi update needs nonzero noise")
    return (scenario.c_sq[n] / scenario.sigma_tilde + beta) / (1.0 - beta)


def alternate_solve(scenario: OmaConfig, grouping: Grouping, eps_gamma: float = 1e-4,
                    paper_literal: bool = False, tol: float = 1e-8,
                    max_iter: int = MAX_OUTER) -> tuple[Allocation, list[OmaStep]]:
    """Alternate between the fixed-``phi`` program and a ``phi`` update.

    Starts from ``phi = K sigma_tilde``, the perfect-CDI choice. The default
    update maximizes the worst group's SINR over ``phi`` numerically, so the
    min-SINR trace cannot decrease; ``paper_literal=True`` uses the
    closed-form update instead. Stops when ``|d gamma_th| <= eps_gamma`` or
    after ``max_iter`` rounds, and returns the best allocation seen.

    Returns
    -------
    allocation : Allocation
        ``diagnostics["converged"]`` flags whether the tolerance was met.
    trace : list of OmaStep
    """
    if not eps_gamma > 0:
        raise DomainError("eps_gamma must be positive")
    phi = scenario.k_bar * scenario.sigma_tilde
    if not phi > 0:
        raise DomainError("phi must start positive; noise-free OMA is not supported")
    trace: list[OmaStep] = []
    best = None
    gamma_old = None
    converged = False
    for it in range(1, max_iter + 1):
        alloc = _solve_fixed_phi(scenario, grouping, phi, tol)
        sinrs = oma_group_sinrs(scenario, grouping, alloc)
        g_min = int(np.argmin(sinrs))
        gamma = float(sinrs[g_min])
        trace.append(OmaStep(it, phi, gamma, g_min))
        if best is None or gamma > best.gamma_th:
            best = alloc
        if gamma_old is not None and abs(gamma - gamma_old) <= eps_gamma:
            converged = True
            break
        gamma_old = gamma
        if paper_literal:
            phi = literal_phi(scenario, grouping, alloc, g_min)
        else:
            phi = best_phi(scenario, grouping, alloc)
    best.method = "alternating-literal" if paper_literal else "alternating"
    best.iterations = len(trace)
    best.gamma_th = float(np.min(oma_group_sinrs(scenario, grouping, best)))
    best.diagnostics["converged"] = converged
    best.diagnostics["paper_literal"] = paper_literal
    return best, trace


def uniform_oma(scenario: OmaConfig, grouping: Grouping) -> Allocation:
    """Equal powers and bits with the perfect-CDI regularizer ``K sigma_tilde``."""
    grouping.check(scenario)
    k_bar = scenario.k_bar
    alloc = Allocation(np.ones(grouping.n_groups), np.full(grouping.n_groups,
                                                            scenario.b_hat_tot / k_bar),
                       phi=k_bar * scenario.sigma_tilde, method="uniform")
    alloc.gamma_th = float(np.min(oma_group_sinrs(scenario, grouping, alloc)))
    return alloc


def solve_oma_fullload(scenario: OmaConfig, grouping: Grouping, tol: float = 1e-8) -> Allocation:
    """Joint optimum over powers, bits and ``phi`` when ``K = N_t``."""
    sol = solve_gp(build_oma_fullload_gp(scenario, grouping), tol=tol)
    if sol.status != OPTIMAL:
        raise SolverError(f"full-load OMA program ended with status {sol.status}", sol.status)
    return extract_allocation(sol, scenario, grouping)
