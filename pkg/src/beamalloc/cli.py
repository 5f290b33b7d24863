"""Command-line driver: allocate, validate, sweep and compare scenario files.

Exit codes: 0 success, 2 invalid scenario or arguments, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .allocators import SolverError, make_allocator
from .config import (ConfigError, ScenarioFile, fill_params, fixed_noma_grouping,
                     fixed_oma_grouping, given_allocation, load_scenario_file, noma_scenario,
                     oma_scenario)
from .grouping import group_pairs
from .model import DomainError, PairProfile, optimal_decay, sinr_singleton, sinr_strong, sinr_weak, to_db
from .oma import alternate_solve, oma_grouping, solve_oma_fullload
from .progressive import progressive_fill
from .rzf import oma_sinr
from .scenario import Allocation, Grouping, OmaConfig, ScenarioConfig, grouping_from_pair_labels
from .sim import run_oma_trials, run_trials

log = logging.getLogger("beamalloc")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

ROW_COLUMNS = ["scenario", "method", "b_hat_tot", "n_groups", "gamma_th", "gamma_th_db", "zeta",
               "b_bar", "alpha", "phi", "wall_ms", "iterations", "b1_over_b2", "zeta1_over_zeta2",
               "sweep_variable", "sweep_value"]
VALIDATE_COLUMNS = ["scenario", "n_tx", "user_class", "n_users", "empirical_mean", "stderr",
                    "asymptotic_mean", "rel_gap", "n_trials", "n_failed"]
COMPARE_COLUMNS = ["scenario", "b_hat_tot", "noma_method", "noma_gamma_th", "noma_gamma_th_db",
                   "oma_gamma_th", "oma_gamma_th_db", "delta_db"]


def worker_count() -> int:
    """Worker cap from ``BEAMALLOC_THREADS`` (defaults to the CPU count)."""
    raw = os.environ.get("BEAMALLOC_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"BEAMALLOC_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("BEAMALLOC_THREADS must be at least 1")
    return n


def _join(values) -> str:
    return "" if values is None else ";".join(repr(float(v)) for v in values)


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------


def solve_noma(cfg: ScenarioFile, scenario: ScenarioConfig, method: str,
               paper_literal: bool = False, n_groups: int | None = None):
    """Allocate a NOMA scenario; returns ``(grouping, allocation, trace_rows)``."""
    fill = fill_params(cfg)
    solver = cfg.solver
    alloc_fn = make_allocator(method, fill, solver.series_order, solver.tol, paper_literal)
    G = n_groups if n_groups is not None else cfg.grouping.G
    if cfg.grouping.mode == "kmeans" or n_groups is not None:
        res = group_pairs(scenario, int(G), cfg.grouping.eps_gamma, allocator=alloc_fn)
        res.allocation.diagnostics["grouping_converged"] = res.converged
        res.allocation.diagnostics["grouping_iterations"] = res.iterations
        rows = [s._asdict() for s in res.trace]
        res.allocation.gamma_th = res.gamma_th
        return res.grouping, res.allocation, rows
    grouping = fixed_noma_grouping(cfg, scenario)
    if method == "progressive":
        alloc, trace = progressive_fill(scenario, grouping, fill, paper_literal=paper_literal)
        return grouping, alloc, [t._asdict() for t in trace]
    return grouping, alloc_fn(scenario, grouping), []


def _oma_grouping(cfg: ScenarioFile, scenario: OmaConfig, n_groups: int | None = None) -> Grouping:
    g = fixed_oma_grouping(cfg, scenario) if n_groups is None else None
    return g if g is not None else oma_grouping(scenario, int(n_groups or cfg.grouping.G or 1))


def solve_oma(cfg: ScenarioFile, scenario: OmaConfig, paper_literal: bool = False,
              n_groups: int | None = None):
    grouping = _oma_grouping(cfg, scenario, n_groups)
    alloc, trace = alternate_solve(scenario, grouping, paper_literal=paper_literal,
                                   tol=cfg.solver.tol)
    return grouping, alloc, [s._asdict() for s in trace]


def report_row(name, alloc: Allocation, grouping: Grouping, b_hat_tot, wall_ms,
               singletons: bool = False, sweep=("", "")) -> dict:
    ratios = ("", "")
    if singletons and grouping.n_groups == 2:
        ratios = (alloc.b_bar[0] / alloc.b_bar[1], alloc.zeta[0] / alloc.zeta[1])
    return {"scenario": name, "method": alloc.method, "b_hat_tot": b_hat_tot,
            "n_groups": grouping.n_groups, "gamma_th": alloc.gamma_th,
            "gamma_th_db": float(to_db(alloc.gamma_th)) if alloc.gamma_th > 0 else float("-inf"),
            "zeta": _join(alloc.zeta), "b_bar": _join(alloc.b_bar), "alpha": _join(alloc.alpha),
            "phi": "" if alloc.phi is None else alloc.phi, "wall_ms": wall_ms,
            "iterations": alloc.iterations, "b1_over_b2": ratios[0],
            "zeta1_over_zeta2": ratios[1], "sweep_variable": sweep[0], "sweep_value": sweep[1]}


def _result(name, alloc, grouping, b_hat, wall_ms, singletons, sweep=("", "")) -> dict:
    return {"row": report_row(name, alloc, grouping, b_hat, wall_ms, singletons, sweep),
            "allocation": alloc.to_dict(), "grouping": list(grouping.assignment)}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_allocate(cfg: ScenarioFile, method: str, paper_literal: bool):
    t0 = time.perf_counter()
    if cfg.is_noma:
        sc = noma_scenario(cfg)
        grouping, alloc, trace = solve_noma(cfg, sc, method, paper_literal)
        wall = 1e3 * (time.perf_counter() - t0)
        results = [_result(cfg.name, alloc, grouping, sc.b_hat_tot, wall, sc.n_singletons > 0)]
    else:
        if method == "progressive":
            raise ConfigError("progressive filling applies to NOMA scenarios only")
        sc = oma_scenario(cfg)
        grouping, alloc, trace = solve_oma(cfg, sc, paper_literal)
        wall = 1e3 * (time.perf_counter() - t0)
        results = [_result(cfg.name, alloc, grouping, sc.b_hat_tot, wall, False)]
        if sc.n_users == sc.n_tx:
            t1 = time.perf_counter()
            full = solve_oma_fullload(sc, grouping, tol=cfg.solver.tol)
            results.append(_result(cfg.name, full, grouping, sc.b_hat_tot,
                                   1e3 * (time.perf_counter() - t1), False))
    return {"results": results}, [r["row"] for r in results], ROW_COLUMNS, trace


def _scaled_noma(sc: ScenarioConfig, grouping: Grouping, n_tx: int):
    # keep every load ratio: replicate singletons and pairs by n_tx / n_tx0
    num = n_tx * sc.n_singletons
    nump = n_tx * len(sc.pairs)
    if num % sc.n_tx or nump % sc.n_tx:
        raise ConfigError(f"n_tx = {n_tx} does not scale the beam counts to integers")
    m1, n_p = num // sc.n_tx, nump // sc.n_tx
    # pairs keep their order and group labels: each repeated in place, or thinned
    n0 = len(sc.pairs)
    if n0 and n_p >= n0 and n_p % n0 == 0:
        idx = [k for k in range(n0) for _ in range(n_p // n0)]
    elif n0 and n_p < n0 and n0 % n_p == 0:
        idx = list(range(0, n0, n0 // n_p))
    elif n0:
        raise ConfigError(f"n_tx = {n_tx} does not replicate the {n0} pairs evenly")
    else:
        idx = []
    pairs = tuple(sc.pairs[k] for k in idx)
    labels = [grouping.assignment[sc.n_singletons + k] - (1 if sc.n_singletons else 0) for k in idx]
    big = sc.replace(n_tx=n_tx, n_singletons=m1, pairs=pairs)
    return big, grouping_from_pair_labels(big, labels), idx


def _noma_asymptotic(sc: ScenarioConfig, grouping: Grouping, alloc: Allocation) -> dict:
    d, st = sc.dims, sc.sigma_tilde
    g = np.asarray(grouping.assignment)
    out = {}
    if sc.n_singletons:
        out["singleton"] = np.atleast_1d(sinr_singleton(alloc.zeta[g[:sc.n_singletons]],
                                                        alloc.b_bar[g[:sc.n_singletons]], d, st))
    if sc.pairs:
        gp_ = g[sc.n_singletons:]
        prof = PairProfile(np.array([p.c_sq for p in sc.pairs]), np.array([p.rho_sq for p in sc.pairs]))
        z, b = alloc.zeta[gp_], alloc.b_bar[gp_]
        out["strong"] = np.atleast_1d(sinr_strong(z, b, prof, alloc.alpha, d, st))
        out["weak"] = np.atleast_1d(sinr_weak(z, b, prof, alloc.alpha, d, st))
    return out


def cmd_validate(cfg: ScenarioFile, method: str, paper_literal: bool):
    if cfg.sim is None:
        raise ConfigError("validate needs a sim section")
    sim = cfg.sim
    workers = worker_count()
    rows = []
    if cfg.is_noma:
        sc0 = noma_scenario(cfg)
        alloc = given_allocation(cfg, len(sc0.pairs))
        if alloc is None:
            grouping0, alloc, _ = solve_noma(cfg, sc0, method, paper_literal)
        else:
            grouping0 = fixed_noma_grouping(cfg, sc0)
        if sc0.pairs and alloc.alpha is None:
            g = np.asarray(grouping0.assignment[sc0.n_singletons:])
            prof = PairProfile(np.array([p.c_sq for p in sc0.pairs]),
                               np.array([p.rho_sq for p in sc0.pairs]))
            alloc.alpha = np.atleast_1d(optimal_decay(alloc.zeta[g], alloc.b_bar[g], prof,
                                                      sc0.dims, sc0.sigma_tilde).alpha)
        for n_tx in sim.n_tx_values or [sc0.n_tx]:
            sc, grouping, idx = _scaled_noma(sc0, grouping0, n_tx)
            alpha = None if alloc.alpha is None else np.asarray(alloc.alpha)[idx]
            a = Allocation(alloc.zeta, alloc.b_bar, alpha=alpha, method=alloc.method)
            summ = run_trials(sc, grouping, a, sim.n_trials, sim.seed, sim.quantizer_mode, workers)
            theory = _noma_asymptotic(sc, grouping, a)
            for cls, th in theory.items():
                rows.append(_validate_row(cfg.name, n_tx, cls, summ, th))
    else:
        sc0 = oma_scenario(cfg)
        alloc = given_allocation(cfg, 0)
        grouping = _oma_grouping(cfg, sc0)
        if alloc is None:
            grouping, alloc, _ = solve_oma(cfg, sc0, paper_literal)
        if alloc.phi is None:
            alloc.phi = sc0.k_bar * sc0.sigma_tilde
        for n_tx in sim.n_tx_values or [sc0.n_tx]:
            if n_tx % sc0.n_tx:
                raise ConfigError(f"n_tx = {n_tx} must be a multiple of {sc0.n_tx} for OMA scaling")
            f = n_tx // sc0.n_tx
            sc = sc0.replace(n_tx=n_tx, c_sq=tuple(c for c in sc0.c_sq for _ in range(f)))
            gr = Grouping(tuple(g for g in grouping.assignment for _ in range(f)), grouping.n_groups)
            summ = run_oma_trials(sc, gr, alloc, sim.n_trials, sim.seed, sim.quantizer_mode, workers)
            g = np.asarray(gr.assignment)
            th = np.atleast_1d(oma_sinr(alloc.zeta[g], alloc.b_bar[g], np.asarray(sc.c_sq), sc.k_bar,
                                        alloc.phi, sc.sigma_tilde, paper_literal))
            rows.append(_validate_row(cfg.name, n_tx, "user", summ, th))
    return {"rows": rows}, rows, VALIDATE_COLUMNS, []


def _validate_row(name, n_tx, cls, summ, theory) -> dict:
    emp = float(summ.class_mean[cls])
    se = summ.stderr_sinr[cls]
    n = len(summ.mean_sinr[cls])
    th = float(np.mean(theory))
    return {"scenario": name, "n_tx": n_tx, "user_class": cls, "n_users": n,
            "empirical_mean": emp, "stderr": float(np.sqrt(np.sum(se ** 2)) / n),
            "asymptotic_mean": th, "rel_gap": emp / th - 1.0, "n_trials": summ.n_trials,
            "n_failed": summ.n_failed}


def _sweep_point(args):
    cfg, method, paper_literal, variable, value = args
    t0 = time.perf_counter()
    n_groups = None
    if cfg.is_noma:
        sc = noma_scenario(cfg)
        if variable == "b_hat_tot":
            sc = sc.replace(b_hat_tot=float(value))
        elif variable == "G":
            n_groups = int(value)
        else:
            m1 = int(value)
            n_pairs = sc.n_beams - m1
            if not 0 <= m1 < sc.n_beams or not sc.pairs:
                raise ConfigError(f"n_singletons = {m1} leaves no pair beams")
            sc = sc.replace(n_singletons=m1,
                            pairs=tuple(sc.pairs[k % len(sc.pairs)] for k in range(n_pairs)))
            cfg = cfg.model_copy(update={"grouping": cfg.grouping.model_copy(update={"labels": None})})
        grouping, alloc, _ = solve_noma(cfg, sc, method, paper_literal, n_groups)
        single = sc.n_singletons > 0
    else:
        if variable == "n_singletons" or method == "progressive":
            raise ConfigError(f"sweep over {variable} with {method} needs a NOMA scenario")
        sc = oma_scenario(cfg)
        if variable == "b_hat_tot":
            sc = sc.replace(b_hat_tot=float(value))
        else:
            n_groups = int(value)
        grouping, alloc, _ = solve_oma(cfg, sc, paper_literal, n_groups)
        single = False
    wall = 1e3 * (time.perf_counter() - t0)
    return _result(cfg.name, alloc, grouping, sc.b_hat_tot, wall, single, (variable, value))


def _pool_map(fn, jobs):
    n = min(worker_count(), len(jobs))
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as ex:
            return list(ex.map(fn, jobs))  # ordered by grid index
    return [fn(j) for j in jobs]


def cmd_sweep(cfg: ScenarioFile, method: str, paper_literal: bool):
    if cfg.sweep is None:
        raise ConfigError("sweep needs a sweep section")
    sw = cfg.sweep
    jobs = [(cfg, method, paper_literal, sw.variable, v) for v in sw.values]
    results = _pool_map(_sweep_point, jobs)
    return {"results": results}, [r["row"] for r in results], ROW_COLUMNS, []


def _compare_point(args):
    cfg, oma_cfg, method, paper_literal, b_hat = args
    sc = noma_scenario(cfg, b_hat_tot=b_hat)
    _, noma_alloc, _ = solve_noma(cfg, sc, method, paper_literal)
    osc = oma_scenario(oma_cfg, b_hat_tot=b_hat)
    n_groups = None
    if fixed_oma_grouping(oma_cfg, osc) is None and oma_cfg.grouping.G is None:
        n_groups = noma_alloc.zeta.size
    _, oma_alloc, _ = solve_oma(oma_cfg, osc, paper_literal, n_groups)
    gn, go = noma_alloc.gamma_th, oma_alloc.gamma_th
    return {"scenario": cfg.name, "b_hat_tot": b_hat, "noma_method": noma_alloc.method,
            "noma_gamma_th": gn, "noma_gamma_th_db": float(to_db(gn)), "oma_gamma_th": go,
            "oma_gamma_th_db": float(to_db(go)), "delta_db": float(to_db(gn) - to_db(go))}


def cmd_compare(cfg: ScenarioFile, method: str, paper_literal: bool,
                oma_cfg: ScenarioFile | None = None):
    if not cfg.is_noma:
        raise ConfigError("compare needs a NOMA scenario as --scenario")
    if oma_cfg is None:
        data = cfg.model_dump()
        data.update(pairs=[], oma_users=[{"c_sq": c} for c in oma_scenario(cfg).c_sq])
        data["dims"].update(n_beams=None, n_singleton_beams=0)
        data["grouping"].update(mode="quantile", labels=None)
        oma_cfg = ScenarioFile.model_validate(data)
    elif (oma_cfg.dims.n_tx != cfg.dims.n_tx or oma_cfg.sigma_tilde != cfg.sigma_tilde
          or oma_cfg.budgets.b_hat_tot != cfg.budgets.b_hat_tot):
        raise ConfigError("NOMA and OMA scenarios must share n_tx, noise and b_hat_tot")
    budgets = [cfg.budgets.b_hat_tot]
    if cfg.sweep is not None and cfg.sweep.variable == "b_hat_tot":
        budgets = [float(v) for v in cfg.sweep.values]
    rows = _pool_map(_compare_point, [(cfg, oma_cfg, method, paper_literal, b) for b in budgets])
    return {"rows": rows}, rows, COMPARE_COLUMNS, []


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def write_csv(path: Path, rows, columns):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for k, v in r.items()})


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


def write_outputs(out: Path, command: str, args, report: dict, rows, columns, trace):
    out.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, "scenario_path": str(args.scenario), "method": args.method,
           "paper_literal": args.paper_literal, **report}
    (out / "report.json").write_text(json.dumps(_jsonable(doc), indent=2) + "\n", encoding="utf-8")
    write_csv(out / "rows.csv", rows, columns)
    if trace:
        write_csv(out / "trace.csv", trace, list(trace[0].keys()))


COMMANDS = {"allocate": cmd_allocate, "validate": cmd_validate, "sweep": cmd_sweep,
            "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="beamalloc",
                                description="Max-min SINR power and CDI-bit allocation for NOMA/OMA downlinks.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--scenario", required=True, type=Path, help="YAML or JSON scenario file")
    p.add_argument("--method", choices=["gp", "progressive"], default=None,
                   help="NOMA allocator (default: solver.method in the file)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--paper-literal", action="store_true",
                   help="use the literal variants of the ambiguous formulas (see README)")
    p.add_argument("--oma-scenario", type=Path, default=None,
                   help="compare only: OMA scenario (default: the NOMA users served unpaired)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_scenario_file(args.scenario)
        args.method = args.method or cfg.solver.method
        kw = {}
        if args.command == "compare" and args.oma_scenario is not None:
            kw["oma_cfg"] = load_scenario_file(args.oma_scenario)
        report, rows, columns, trace = COMMANDS[args.command](cfg, args.method,
                                                             args.paper_literal, **kw)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for d in exc.details:
            print(f"  {d}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_outputs(args.out, args.command, args, report, rows, columns, trace)
    for r in rows:
        log.info("%s", r)
    print(f"{args.command}: {len(rows)} row(s) written to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
