import math
import warnings

import numpy as np
import pytest

from beamalloc.gp import (GpProblem, Monomial, Posynomial, build_noma_gp, build_oma_fullload_gp,
                          build_oma_gp, dump_problem, extract_allocation, load_problem, solve_gp,
                          truncation_bound, var)
from beamalloc.gp.posynomial import one_minus_inv
from beamalloc.gp.solver import OPTIMAL, GpSolution
from beamalloc.model import DomainError, PairProfile, min_sinr
from beamalloc.rzf import fullload_m, fullload_phi, m_circ, a_circ, oma_sinr
from beamalloc.scenario import (Grouping, OmaConfig, ScenarioConfig, grouping_from_pair_labels,
                                single_pair_group)
from beamalloc.gp.builders import oma_group_sinrs

from conftest import mixed_scenario


# --- modeling types ---------------------------------------------------------


def test_monomial_algebra():
    m = Monomial(2.0, {"x": 1.0, "y": -2.0})
    n = Monomial(3.0, {"x": -1.0})
    p = m * n
    assert p.coefficient == 6.0 and p.exponents == {"y": -2.0}
    assert (m ** 2).evaluate({"x": 2.0, "y": 1.0}) == pytest.approx(16.0)
    assert (m / n).evaluate({"x": 2.0, "y": 1.0}) == pytest.approx(2 * 2 / (3 / 2))
    s = m + n
    assert isinstance(s, Posynomial) and len(s) == 2
    assert s.evaluate({"x": 2.0, "y": 1.0}) == pytest.approx(4.0 + 1.5)


def test_monomial_rejects_nonpositive_coefficient():
    with pytest.raises(ValueError):
        Monomial(0.0, {"x": 1.0})
    with pytest.raises(ValueError):
        Monomial(-1.0)


def test_one_minus_factor_evaluates_exactly():
    t = Monomial(1.0, {"b": 1.0}) * one_minus_inv("b")
    assert t.evaluate({"b": 0.25}) == pytest.approx(0.25 / 0.75)


def test_problem_requires_bounds_and_unit_cap():
    with pytest.raises(ValueError):
        GpProblem(Posynomial([var("x")]), [("c", Posynomial([var("y")]))], {"x": (0, 1)})
    with pytest.raises(ValueError):
        GpProblem(Posynomial([var("x")]), [("c", Posynomial([one_minus_inv("x")]))],
                  {"x": (0, 2)})


def test_dump_load_round_trip():
    sc = mixed_scenario(0, 8, 1.0)
    prob = build_noma_gp(sc, single_pair_group(sc))
    text = dump_problem(prob)
    back = load_problem(text)
    assert back.variables == prob.variables
    assert back.n_constraints == prob.n_constraints
    x = {v: 0.3 for v in prob.variables}
    x["Z"] = 5.0
    for (l1, p1), (l2, p2) in zip(prob.constraints, back.constraints):
        assert l1 == l2
        assert p2.evaluate(x) == pytest.approx(p1.evaluate(x), rel=1e-12)


# --- solver -----------------------------------------------------------------


def test_trivial_unit_lower_bound():
    prob = GpProblem(Posynomial([var("x")]), [("lb", Posynomial([Monomial(1.0, {"x": -1.0})]))],
                     {"x": (0.0, math.inf)})
    sol = solve_gp(prob)
    assert sol.status == OPTIMAL
    assert sol.values["x"] == pytest.approx(1.0, rel=1e-6)


def test_push_to_bound():
    c = 0.37
    prob = GpProblem(Posynomial([var("Z")]),
                     [("snr", Posynomial([Monomial(c, {"zeta": -1.0, "Z": -1.0})])),
                      ("cap", Posynomial([var("zeta")]))],
                     {"Z": (0.0, math.inf), "zeta": (0.0, math.inf)})
    sol = solve_gp(prob)
    assert sol.ok
    assert sol.values["zeta"] == pytest.approx(1.0, rel=1e-6)
    assert sol.values["Z"] == pytest.approx(c, rel=1e-6)
    assert sol.kkt_residual <= 1e-6


def test_infeasible_problem_reported():
    prob = GpProblem(Posynomial([var("x")]),
                     [("a", Posynomial([Monomial(2.0, {"x": 1.0})])),
                      ("b", Posynomial([Monomial(2.0, {"x": -1.0})]))],
                     {"x": (0.0, math.inf)})
    sol = solve_gp(prob)
    assert sol.status != OPTIMAL


def test_bisection_matches_barrier():
    sc = mixed_scenario(3, 8, 2.0)
    prob = build_noma_gp(sc, single_pair_group(sc))
    a = solve_gp(prob, method="barrier")
    b = solve_gp(prob, method="bisection")
    assert a.ok and b.ok
    assert b.objective_value == pytest.approx(a.objective_value, rel=1e-5)


def test_solver_is_deterministic():
    sc = mixed_scenario(2, 20, 1.0)
    prob = build_noma_gp(sc, single_pair_group(sc))
    a, b = solve_gp(prob), solve_gp(prob)
    assert a.values == b.values and a.objective_value == b.objective_value


# --- NOMA builder -----------------------------------------------------------


def test_singleton_only_problem_size():
    sc = ScenarioConfig(16, 4, (), 1.0, 0.01)
    prob = build_noma_gp(sc, Grouping((0,) * 4, 1))
    assert sorted(prob.variables) == ["Z", "beta[0]", "zeta[0]"]
    assert prob.n_constraints == 3


def test_singleton_only_closed_form():
    # one group: everything goes to it
    sc = ScenarioConfig(16, 4, (), 1.0, 0.01)
    g = Grouping((0,) * 4, 1)
    alloc = extract_allocation(solve_gp(build_noma_gp(sc, g)), sc, g)
    m = 4 / 16
    assert alloc.zeta[0] == pytest.approx(sc.dims.k_bar / m, rel=1e-6)
    assert alloc.b_bar[0] == pytest.approx(1.0 / m, rel=1e-6)


def test_problem_size_counts():
    sc = mixed_scenario(1, 20, 1.0)
    labels = [k % 3 for k in range(len(sc.pairs))]
    g = grouping_from_pair_labels(sc, labels)
    prob = build_noma_gp(sc, g)
    G, P = g.n_groups, len(sc.pairs)
    assert len(prob.variables) == 2 * G + P + 1
    assert prob.meta["reference_constraint_count"] == 2 * sc.dims.n_users + 3
    # identical singletons share one row; each pair has a strong and a weak row
    assert prob.n_constraints == 1 + 2 * P + 2


def test_constraints_hold_strictly_at_start():
    sc = mixed_scenario(4, 20, 2.0)
    prob = build_noma_gp(sc, single_pair_group(sc))
    assert prob.max_violation(prob.start) < 0


def test_rho_zero_pair_rejected():
    sc = ScenarioConfig(16, 1, (PairProfile(0.3, 0.0),), 1.0, 0.01)
    with pytest.raises(DomainError):
        build_noma_gp(sc, single_pair_group(sc))


def test_builder_model_consistency_and_budgets():
    for seed, M, B in [(0, 8, 0.5), (1, 20, 4.0), (2, 8, 2.0)]:
        sc = mixed_scenario(seed, M, B)
        g = single_pair_group(sc)
        alloc = extract_allocation(solve_gp(build_noma_gp(sc, g)), sc, g)
        m_g = g.m_bar(sc.n_tx)
        assert alloc.power_usage(m_g) == pytest.approx(sc.dims.k_bar, rel=1e-6)
        assert alloc.bit_usage(m_g) == pytest.approx(B, rel=1e-6)
        assert min_sinr(sc, g, alloc)[0] >= alloc.gamma_th * (1 - 1e-6)


def test_extract_maps_beta_and_decay():
    sc = ScenarioConfig(16, 0, (PairProfile(0.25, 0.9),), 1.0, 0.01)
    g = single_pair_group(sc)
    prob = build_noma_gp(sc, g)
    name = prob.meta["pair_vars"][0]
    sol = GpSolution({"zeta[0]": 1.0, "beta[0]": 0.5, name: 0.25, "Z": 1.0}, 1.0, 0.0, 1,
                     OPTIMAL, {"meta": prob.meta})
    alloc = extract_allocation(sol, sc, g)
    assert alloc.b_bar[0] == pytest.approx(1.0)
    assert alloc.alpha[0] == pytest.approx(1.0)


def test_truncation_bound_and_series_mode():
    assert truncation_bound(40, 0.95) == pytest.approx(0.95 ** 41 / 0.05)
    assert truncation_bound(40, 0.95) > 1.0  # nowhere near 1e-10
    sc = mixed_scenario(0, 8, 1.0)
    g = single_pair_group(sc)
    with pytest.warns(UserWarning):
        build_noma_gp(sc, g, series_order=40)
    with pytest.raises(DomainError):
        build_noma_gp(sc, g, series_order=40, truncation_tol=1e-10)
    exact = extract_allocation(solve_gp(build_noma_gp(sc, g)), sc, g)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        approx = extract_allocation(solve_gp(build_noma_gp(sc, g, series_order=200)), sc, g)
    assert approx.diagnostics["truncation_error"] < 1e-3
    assert approx.gamma_th == pytest.approx(exact.gamma_th, rel=1e-3)


# --- OMA builders -----------------------------------------------------------


def _oma_toy():
    return OmaConfig(16, (0.4,) * 8, 1.0, 0.01)


def test_oma_single_group_size_and_gamma():
    sc = _oma_toy()
    g = Grouping((0,) * 8, 1)
    phi = 0.3
    prob = build_oma_gp(sc, g, phi)
    assert len(prob.variables) == 3 and prob.n_constraints == 3
    sol = solve_gp(prob)
    alloc = extract_allocation(sol, sc, g)
    m = float(m_circ(sc.k_bar, phi))
    assert alloc.gamma_th == pytest.approx(m * m / sol.values["Y"])
    assert float(oma_group_sinrs(sc, g, alloc)[0]) == pytest.approx(alloc.gamma_th, rel=1e-6)


def test_oma_single_group_matches_grid():
    # one group: the budgets bind, so the optimum is the full budget
    sc = _oma_toy()
    g = Grouping((0,) * 8, 1)
    phi = 0.3
    alloc = extract_allocation(solve_gp(build_oma_gp(sc, g, phi)), sc, g)
    zs = np.linspace(0.01, 1.0, 400)
    bs = np.linspace(0.01, sc.b_hat_tot / sc.k_bar, 400)
    grid = oma_sinr(zs[:, None], bs[None, :], 0.4, sc.k_bar, phi, sc.sigma_tilde)
    assert alloc.gamma_th == pytest.approx(grid.max(), rel=1e-3)


def test_fullload_identities_and_dominance():
    assert fullload_phi(2.0) == pytest.approx(4 / 3)
    m = fullload_m(2.0)
    assert m == 0.5
    assert float(a_circ(1.0, 4 / 3, m)) == pytest.approx(8.0)
    rng = np.random.default_rng(0)
    sc = OmaConfig(16, tuple(rng.uniform(0.2, 1.0, 16)), 1.0, 0.01)
    g = Grouping(tuple(np.repeat(np.arange(4), 4)), 4)
    full = extract_allocation(solve_gp(build_oma_fullload_gp(sc, g)), sc, g)
    assert full.diagnostics["coefficient_ratio_vs_literal"] == 4.0
    # SINR model at the joint optimum reproduces 1/S
    assert float(oma_group_sinrs(sc, g, full).min()) == pytest.approx(full.gamma_th, rel=1e-6)
    for phi in (0.05, 0.3, 1.0, 3.0):
        fixed = extract_allocation(solve_gp(build_oma_gp(sc, g, phi)), sc, g)
        assert full.gamma_th >= fixed.gamma_th * (1 - 1e-7)


def test_fullload_requires_full_load():
    sc = _oma_toy()
    with pytest.raises(DomainError):
        build_oma_fullload_gp(sc, Grouping((0,) * 8, 1))
