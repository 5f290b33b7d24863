"""Geometric programs for max-min SINR power and CDI-bit allocation.

Every SINR constraint ``gamma >= gamma_th`` is rearranged into a posynomial
``<= 1`` after dividing by the SINR numerator. The factor ``1/(1 - beta)``
that appears in all of them is emitted either exactly, as a ``(1 - beta)``
term factor, or as the truncated geometric series ``1 + beta + ... +
beta**n`` together with a hard cap ``beta <= beta_max``.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from ..model import DomainError, LN2, min_sinr
from ..rzf import a_circ, fullload_m, fullload_phi, m_circ, oma_sinr, worst_user_per_group
from ..scenario import Allocation, Grouping, OmaConfig, ScenarioConfig
from .posynomial import GpProblem, Monomial, Posynomial, var
from .solver import OPTIMAL, GpSolution

DEFAULT_BETA_MAX = 0.95
TRUNCATION_TOL = 1e-10


def truncation_bound(series_order: int, beta_max: float) -> float:
    """Worst-case relative error of ``sum_{i<=n} beta**i`` against ``1/(1-beta)``.

    The neglected tail is ``beta**(n+1)/(1-beta)``; at ``beta_max`` this is
    also a bound relative to the full series (which is at least 1).
    """
    if series_order < 1 or not 0 < beta_max < 1:
        raise DomainError("need series_order >= 1 and 0 < beta_max < 1")
    return beta_max ** (series_order + 1) / (1.0 - beta_max)


def _check_series(series_order, beta_max, truncation_tol):
    if series_order is None:
        return 0.0
    bound = truncation_bound(series_order, beta_max)
    if truncation_tol is not None and bound > truncation_tol:
        raise DomainError(
            f"series of order {series_order} with beta <= {beta_max} may err by "
            f"{bound:.3g} relative (> {truncation_tol:g})")
    if bound > TRUNCATION_TOL:
        warnings.warn(f"truncated series may err by up to {bound:.3g} relative at beta_max",
                      stacklevel=3)
    return bound


class _Series:
    """Factory for ``1/(1-b)`` and ``b/(1-b)`` in exact or truncated form."""

    def __init__(self, order: int | None):
        self.order = order

    def inv(self, b: str) -> Posynomial:
        if self.order is None:
            return Posynomial([Monomial(1.0, {}, {b: 1.0})])
        return Posynomial([Monomial(1.0)] + [Monomial(1.0, {b: i}) for i in range(1, self.order + 1)])

    def tail(self, b: str) -> Posynomial:
        if self.order is None:
            return Posynomial([Monomial(1.0, {b: 1.0}, {b: 1.0})])
        return Posynomial(Monomial(1.0, {b: i}) for i in range(1, self.order + 1))


def _scaled(*parts):
    """Sum of ``coef * posy`` skipping zero coefficients."""
    terms = []
    for coef, p in parts:
        if coef > 0:
            terms.extend((p * coef).terms)
    return Posynomial(terms)


def _beta_bounds(series_order, beta_max):
    return (0.0, beta_max if series_order is not None else 1.0)


def _budget_constraints(m_bar_g, k_bar, b_hat, zn, bn):
    power = Posynomial(Monomial(float(m) / k_bar, {z: 1.0}) for m, z in zip(m_bar_g, zn))
    bits = Monomial(2.0 ** (-b_hat), {b: -float(m) for m, b in zip(m_bar_g, bn)})
    return [("power", power), ("bits", Posynomial([bits]))]


def _uniform_start(m_bar_g, k_bar, b_hat, series_order, beta_max):
    tot = float(np.sum(m_bar_g))
    zeta = 0.9 * k_bar / tot
    b_bar = 0.9 * b_hat / tot
    beta = 2.0 ** (-b_bar)
    if series_order is not None:
        beta = min(beta, 0.99 * beta_max)
    return zeta, beta


def _scale_objective_var(cons, start, name):
    """Set ``start[name]`` so every constraint is at most 1/2 there."""
    start[name] = 1.0
    worst = max(p.evaluate(start) for _, p in cons)
    start[name] = 2.0 * worst


# ---------------------------------------------------------------------------
# NOMA
# ---------------------------------------------------------------------------


def build_noma_gp(scenario: ScenarioConfig, grouping: Grouping, series_order: int | None = None,
                  beta_max: float = DEFAULT_BETA_MAX, truncation_tol: float | None = None) -> GpProblem:
    """Max-min SINR program over group powers, group CDI bits and pair splits.

    Variables are ``zeta[g]``, ``beta[g]`` (= 2**-B_g), ``a[k]`` (= c_k**(2 alpha_k))
    and ``Z``; the objective ``Z`` relates to the common SINR level by
    ``gamma_th = (1 - M)/(Z K)``. One SINR constraint covers all singletons
    (they share one group), and each pair contributes a strong-user and a
    weak-user constraint. Pairs with ``c_sq = 1`` have no split to optimize
    and keep ``a = 1``.

    Parameters
    ----------
    series_order : int or None
        ``None`` keeps ``1/(1-beta)`` exact; an integer truncates its series.
    beta_max : float
        Cap on ``beta`` used with a truncated series.
    truncation_tol : float, optional
        Reject truncation settings whose worst-case error exceeds this.
    """
    grouping.check(scenario)
    trunc = _check_series(series_order, beta_max, truncation_tol)
    dims = scenario.dims
    k_bar, m_bar = dims.k_bar, dims.m_bar
    if not m_bar < 1:
        raise DomainError("the NOMA program needs M/N_t < 1")
    for k, p in enumerate(scenario.pairs):
        if not p.rho_sq > 0:
            raise DomainError(f"pair {k} has rho_sq = 0; its weak user cannot be served")
    st = scenario.sigma_tilde
    G = grouping.n_groups
    m_bar_g = grouping.m_bar(scenario.n_tx)
    ser = _Series(series_order)
    zn = [f"zeta[{g}]" for g in range(G)]
    bn = [f"beta[{g}]" for g in range(G)]
    Z = var("Z")

    bounds: dict[str, tuple[float, float]] = {}
    for z in zn:
        bounds[z] = (0.0, math.inf)
    for b in bn:
        bounds[b] = _beta_bounds(series_order, beta_max)

    cons: list[tuple[str, Posynomial]] = []
    g_of = grouping.assignment
    m1 = scenario.n_singletons
    if m1:
        g = g_of[0]
        # (beta + st) / (zeta Z (1 - beta))
        body = _scaled((st, ser.inv(bn[g])), (1.0, ser.tail(bn[g])))
        cons.append(("singleton", body * Monomial(1.0, {zn[g]: -1.0, "Z": -1.0})))

    a_names = {}
    fixed = []
    for k, pair in enumerate(scenario.pairs):
        g = g_of[m1 + k]
        c2, r2 = pair.c_sq, pair.rho_sq
        if c2 < 1.0:
            a_names[k] = f"a[{k}]"
            bounds[a_names[k]] = (0.0, 1.0)
            one_plus_a = Posynomial([Monomial(1.0), var(a_names[k])])
            one_plus_ainv = Posynomial([Monomial(1.0), Monomial(1.0, {a_names[k]: -1.0})])
            a_mono = var(a_names[k])
        else:
            fixed.append(k)
            one_plus_a = Posynomial([Monomial(2.0)])
            one_plus_ainv = one_plus_a
            a_mono = Monomial(1.0)
        inv_zZ = Monomial(1.0, {zn[g]: -1.0, "Z": -1.0})
        # strong: (1 + 1/a)(beta + st) / (zeta Z (1 - beta))
        body = _scaled((st, ser.inv(bn[g])), (1.0, ser.tail(bn[g])))
        cons.append((f"strong[{k}]", one_plus_ainv * body * inv_zZ))
        # weak: (1-M) c2 a / (K rho2 Z) + (1+a) Y / (zeta Z (1-beta) rho2)
        lead = Monomial((1.0 - m_bar) * c2 / (k_bar * r2), {"Z": -1.0}) * a_mono
        y_body = _scaled(((c2 * (1.0 - r2) + st) / r2, ser.inv(bn[g])), (c2, ser.tail(bn[g])))
        cons.append((f"weak[{k}]", lead + one_plus_a * y_body * inv_zZ))
    bounds["Z"] = (0.0, math.inf)
    cons += _budget_constraints(m_bar_g, k_bar, scenario.b_hat_tot, zn, bn)

    zeta0, beta0 = _uniform_start(m_bar_g, k_bar, scenario.b_hat_tot, series_order, beta_max)
    start = {z: zeta0 for z in zn} | {b: beta0 for b in bn}
    for k, name in a_names.items():
        start[name] = scenario.pairs[k].c_sq
    _scale_objective_var(cons, start, "Z")

    meta = {
        "kind": "noma",
        "series_order": series_order,
        "beta_max": beta_max if series_order is not None else 1.0,
        "truncation_bound": trunc,
        "pair_vars": a_names,
        "fixed_split_pairs": fixed,
        # constraint count with one SINR constraint per user plus budgets and Z
        "reference_constraint_count": 2 * dims.n_users + 3,
        "reference_variable_count": 2 * G + dims.n_pairs + 1,
    }
    return GpProblem(Posynomial([Z]), cons, bounds, start, meta)


def _require_optimal(solution: GpSolution):
    if solution.status != OPTIMAL:
        raise DomainError(f"cannot extract an allocation from a {solution.status} solution")


def _betas_to_bits(values, G):
    return np.array([-math.log(values[f"beta[{g}]"]) / LN2 for g in range(G)])


def extract_allocation(solution: GpSolution, scenario, grouping: Grouping) -> Allocation:
    """Map a solved program back to per-group ``zeta``, ``B``, and pair/OMA extras."""
    _require_optimal(solution)
    meta = solution.diagnostics.get("meta", {})
    kind = meta.get("kind")
    v = solution.values
    G = grouping.n_groups
    zeta = np.array([v[f"zeta[{g}]"] for g in range(G)])
    b_bar = _betas_to_bits(v, G)
    diag = {"solver": {k: solution.diagnostics.get(k) for k in
                       ("method", "stages", "max_violation", "stationarity", "duality_gap")},
            "kkt_residual": solution.kkt_residual,
            "truncation_bound": meta.get("truncation_bound", 0.0)}
    if meta.get("series_order") is not None:
        # a-posteriori tail at the solution
        n = meta["series_order"]
        bmax = max(v[f"beta[{g}]"] for g in range(G))
        diag["truncation_error"] = bmax ** (n + 1) / (1.0 - bmax)
    if kind == "noma":
        dims = scenario.dims
        alpha = np.zeros(len(scenario.pairs))
        for k, name in meta["pair_vars"].items():
            alpha[int(k)] = math.log(v[name]) / math.log(scenario.pairs[int(k)].c_sq)
        gamma = (1.0 - dims.m_bar) / (v["Z"] * dims.k_bar)
        diag["reference_constraint_count"] = meta["reference_constraint_count"]
        alloc = Allocation(zeta, b_bar, alpha=alpha, gamma_th=gamma, method="gp",
                           iterations=solution.iterations, diagnostics=diag)
        diag["model_min_sinr"] = min_sinr(scenario, grouping, alloc)[0]
        return alloc
    if kind == "oma":
        m = meta["m_circ"]
        gamma = m * m / v["Y"]
        return Allocation(zeta, b_bar, phi=meta["phi"], gamma_th=gamma, method="gp",
                          iterations=solution.iterations, diagnostics=diag)
    if kind == "oma_fullload":
        d = v["d"]
        diag["d"] = d
        diag["m_circ"] = fullload_m(d)
        diag["coefficient_ratio_vs_literal"] = meta["coefficient_ratio_vs_literal"]
        return Allocation(zeta, b_bar, phi=fullload_phi(d), gamma_th=1.0 / v["S"],
                          method="fullload", iterations=solution.iterations, diagnostics=diag)
    raise DomainError(f"unknown problem kind {kind!r}")


# ---------------------------------------------------------------------------
# OMA
# ---------------------------------------------------------------------------


def _oma_common(scenario: OmaConfig, grouping: Grouping, series_order, beta_max):
    grouping.check(scenario)
    worst = worst_user_per_group(scenario.c_sq, grouping)
    G = grouping.n_groups
    m_bar_g = grouping.m_bar(scenario.n_tx)
    zn = [f"zeta[{g}]" for g in range(G)]
    bn = [f"beta[{g}]" for g in range(G)]
    bounds = {z: (0.0, math.inf) for z in zn}
    for b in bn:
        bounds[b] = _beta_bounds(series_order, beta_max)
    return worst, G, m_bar_g, zn, bn, bounds


def build_oma_gp(scenario: OmaConfig, grouping: Grouping, phi: float,
                 series_order: int | None = None, beta_max: float = DEFAULT_BETA_MAX,
                 truncation_tol: float | None = None) -> GpProblem:
    """Max-min SINR program for regularized zeroforcing at a fixed ``phi``.

    Variables ``zeta[g]``, ``beta[g]`` and ``Y`` with ``gamma_th = m°**2 / Y``.
    Each group is represented by its member with the smallest ``c_sq``.
    """
    if not phi > 0:
        raise DomainError("phi must be positive")
    trunc = _check_series(series_order, beta_max, truncation_tol)
    worst, G, m_bar_g, zn, bn, bounds = _oma_common(scenario, grouping, series_order, beta_max)
    k_bar = scenario.k_bar
    st = scenario.sigma_tilde
    m = float(m_circ(k_bar, phi))
    a = float(a_circ(k_bar, phi, m))
    ser = _Series(series_order)
    cons = []
    for g in range(G):
        c2 = scenario.c_sq[worst[g]]
        body = _scaled((1.0 + (1.0 + m) ** 2 * st / c2, ser.inv(bn[g])),
                       (m * (m + 2.0), ser.tail(bn[g])))
        cons.append((f"group[{g}]", body * Monomial(1.0 / a, {zn[g]: -1.0, "Y": -1.0})))
    bounds["Y"] = (0.0, math.inf)
    cons += _budget_constraints(m_bar_g, k_bar, scenario.b_hat_tot, zn, bn)
    zeta0, beta0 = _uniform_start(m_bar_g, k_bar, scenario.b_hat_tot, series_order, beta_max)
    start = {z: zeta0 for z in zn} | {b: beta0 for b in bn}
    _scale_objective_var(cons, start, "Y")
    meta = {"kind": "oma", "phi": float(phi), "m_circ": m, "a_circ": a, "worst_users": worst,
            "series_order": series_order, "truncation_bound": trunc}
    return GpProblem(Posynomial([var("Y")]), cons, bounds, start, meta)


def build_oma_fullload_gp(scenario: OmaConfig, grouping: Grouping,
                          series_order: int | None = None, beta_max: float = DEFAULT_BETA_MAX,
                          truncation_tol: float | None = None) -> GpProblem:
    """Joint program over powers, bits and the regularizer at full load (K = N_t).

    With ``d = 2 m° + 1 = sqrt(1 + 4/phi)`` group ``g`` requires
    ``(1/d + w beta/(1-beta) + w (sigma_tilde/c2)/(1-beta)) / (zeta S) <= 1``
    where ``w = (d+1)**2/(4d)``; the common SINR level is ``1/S``.
    """
    if scenario.n_users != scenario.n_tx:
        raise DomainError("the full-load program needs K = N_t")
    trunc = _check_series(series_order, beta_max, truncation_tol)
    worst, G, m_bar_g, zn, bn, bounds = _oma_common(scenario, grouping, series_order, beta_max)
    st = scenario.sigma_tilde
    ser = _Series(series_order)
    w = Posynomial([Monomial(0.25, {"d": 1.0}), Monomial(0.5), Monomial(0.25, {"d": -1.0})])
    cons = []
    for g in range(G):
        c2 = scenario.c_sq[worst[g]]
        stc = st / c2
        body = Posynomial([Monomial(1.0, {"d": -1.0})]) + w * _scaled((1.0, ser.tail(bn[g])),
                                                                      (stc, ser.inv(bn[g])))
        cons.append((f"group[{g}]", body * Monomial(1.0, {zn[g]: -1.0, "S": -1.0})))
    bounds["d"] = (1.0, math.inf)
    bounds["S"] = (0.0, math.inf)
    cons += _budget_constraints(m_bar_g, 1.0, scenario.b_hat_tot, zn, bn)
    zeta0, beta0 = _uniform_start(m_bar_g, 1.0, scenario.b_hat_tot, series_order, beta_max)
    start = {z: zeta0 for z in zn} | {b: beta0 for b in bn} | {"d": 2.0}
    _scale_objective_var(cons, start, "S")
    meta = {"kind": "oma_fullload", "worst_users": worst, "series_order": series_order,
            "truncation_bound": trunc,
            # literal coefficient (d+1)^2/d over the model-derived (d+1)^2/(4d)
            "coefficient_ratio_vs_literal": 4.0}
    return GpProblem(Posynomial([var("S")]), cons, bounds, start, meta)


def oma_group_sinrs(scenario: OmaConfig, grouping: Grouping, allocation: Allocation,
                    paper_literal: bool = False) -> np.ndarray:
    """Per-group SINR of each group's worst user under an OMA allocation."""
    worst = worst_user_per_group(scenario.c_sq, grouping)
    c2 = np.array([scenario.c_sq[n] for n in worst])
    return np.asarray(oma_sinr(allocation.zeta, allocation.b_bar, c2, scenario.k_bar,
                               allocation.phi, scenario.sigma_tilde, paper_literal), dtype=float)
