"""Log-domain interior-point solver for geometric programs.

With ``y = log x`` every posynomial constraint becomes a convex log-sum-exp
inequality ``f_i(y) <= 0``. We minimize the log objective with a standard
barrier method: damped Newton on ``t f_0(y) - sum log(-f_i(y))`` with
backtracking, increasing ``t`` by ``mu`` per stage. A phase-I program finds a
strictly feasible start when the supplied one is not. A second, slower path
bisects on the (monomial) objective using phase-I feasibility tests; the two
cross-check each other on small problems.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .posynomial import GpProblem, Monomial, Posynomial

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"
_EPS = float(np.finfo(float).eps)


@dataclass
class GpSolution:
    values: dict[str, float]
    objective_value: float
    kkt_residual: float
    iterations: int
    status: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class _Compiled:
    """Dense term matrices for the objective (block 0) and the constraints."""

    def __init__(self, objective: Posynomial, constraints: list[Posynomial], names: list[str],
                 bounds: dict[str, tuple[float, float]]):
        self.names = names
        col = {v: j for j, v in enumerate(names)}
        blocks = [objective] + list(constraints)
        n_terms = sum(len(p) for p in blocks)
        n = len(names)
        self.A = np.zeros((n_terms, n))
        self.E = np.zeros((n_terms, n))
        self.b = np.empty(n_terms)
        self.block = np.empty(n_terms, dtype=int)
        starts = []
        r = 0
        for i, p in enumerate(blocks):
            starts.append(r)
            for t in p.terms:
                self.b[r] = math.log(t.coefficient)
                for v, e in t.exponents.items():
                    self.A[r, col[v]] = e
                for v, e in t.one_minus.items():
                    self.E[r, col[v]] = e
                self.block[r] = i
                r += 1
        self.starts = np.asarray(starts)
        self.n_blocks = len(blocks)
        self.has_om = bool(np.any(self.E))
        self.om_cols = np.flatnonzero(self.E.any(axis=0))
        lo = np.array([bounds[v][0] for v in names], dtype=float)
        hi = np.array([bounds[v][1] for v in names], dtype=float)
        with np.errstate(divide="ignore"):
            self.log_lo = np.log(lo)
            self.log_hi = np.log(hi)
        self.lo_idx = np.flatnonzero(np.isfinite(self.log_lo))
        self.hi_idx = np.flatnonzero(np.isfinite(self.log_hi))
        self.n_ineq = self.n_blocks - 1 + len(self.lo_idx) + len(self.hi_idx)

    # -- evaluation ---------------------------------------------------------

    def in_domain(self, y) -> bool:
        if np.any(y[self.lo_idx] <= self.log_lo[self.lo_idx]):
            return False
        if np.any(y[self.hi_idx] >= self.log_hi[self.hi_idx]):
            return False
        return not (self.has_om and np.any(y[self.om_cols] >= 0.0))

    def _om(self, y):
        g = np.zeros_like(y)
        if self.has_om:
            yo = y[self.om_cols]
            g[self.om_cols] = -np.log(-np.expm1(yo))
        return g

    def values(self, y):
        """Block log-sum-exp values and per-term softmax weights."""
        u = self.A @ y + self.b
        if self.has_om:
            u = u + self.E @ self._om(y)
        umax = np.maximum.reduceat(u, self.starts)
        ex = np.exp(u - umax[self.block])
        s = np.add.reduceat(ex, self.starts)
        f = umax + np.log(s)
        return f, ex / s[self.block]

    def derivatives(self, y, f, p, s_w, r_w):
        """Gradient and Hessian of ``sum_i phi_i(f_i)`` with chain weights.

        ``s_w[i]`` multiplies block i's Hessian, ``r_w[i]`` its gradient outer
        product; block gradients are also returned.
        """
        J = self.A
        gd = None
        if self.has_om:
            ey = np.exp(y[self.om_cols])
            gp1 = np.zeros_like(y)
            gp2 = np.zeros_like(y)
            gp1[self.om_cols] = ey / (1.0 - ey)
            gp2[self.om_cols] = ey / (1.0 - ey) ** 2
            J = self.A + self.E * gp1
            gd = gp2
        PJ = p[:, None] * J
        G = np.add.reduceat(PJ, self.starts, axis=0)  # block gradients
        tw = s_w[self.block] * p
        H = J.T @ (tw[:, None] * J) + G.T @ (r_w[:, None] * G)
        if gd is not None:
            H[np.diag_indices_from(H)] += (tw @ self.E) * gd
        return G, H


def _bound_terms(c: _Compiled, y):
    grad = np.zeros_like(y)
    hdiag = np.zeros_like(y)
    val = 0.0
    if len(c.hi_idx):
        d = c.log_hi[c.hi_idx] - y[c.hi_idx]
        val -= np.log(d).sum()
        grad[c.hi_idx] += 1.0 / d
        hdiag[c.hi_idx] += 1.0 / d**2
    if len(c.lo_idx):
        d = y[c.lo_idx] - c.log_lo[c.lo_idx]
        val -= np.log(d).sum()
        grad[c.lo_idx] -= 1.0 / d
        hdiag[c.lo_idx] += 1.0 / d**2
    return val, grad, hdiag


def _barrier_value(c: _Compiled, y, t):
    if not c.in_domain(y):
        return math.inf
    f, _ = c.values(y)
    if np.any(f[1:] >= 0.0):
        return math.inf
    bv, _, _ = _bound_terms(c, y)
    return t * f[0] - np.log(-f[1:]).sum() + bv


def _newton_solve(H, g):
    try:
        with warnings.catch_warnings():
            # late barrier stages are ill-conditioned by design
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            return -scipy.linalg.solve(H, g, assume_a="pos", check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        return -np.linalg.lstsq(H, g, rcond=None)[0]


def _barrier(c: _Compiled, y, tol, max_iter, stop=None, t0=1.0, mu=10.0):
    """Barrier method from a strictly feasible ``y``.

    Returns ``(y, status, newton_steps, t, stages)``. ``stop(y, f)`` may end
    the run early (used by phase I).
    """
    t = t0
    steps = 0
    stages = 0
    m = max(c.n_ineq, 1)
    while True:
        stages += 1
        converged = False
        for _ in range(max_iter):
            f, p = c.values(y)
            if stop is not None and stop(y, f):
                return y, OPTIMAL, steps, t, stages
            w = 1.0 / (-f[1:])
            s_w = np.concatenate(([t], w))
            r_w = np.concatenate(([-t], w * w - w))
            G, H = c.derivatives(y, f, p, s_w, r_w)
            bv, bg, bh = _bound_terms(c, y)
            grad = t * G[0] + w @ G[1:] + bg
            H[np.diag_indices_from(H)] += bh
            dy = _newton_solve(H, grad)
            dec = -float(grad @ dy)
            if not math.isfinite(dec):
                return y, MAX_ITER, steps, t, stages
            phi0 = t * f[0] - np.log(-f[1:]).sum() + bv
            # decreases below the rounding level of phi0 cannot be resolved
            dec_tol = max(1e-10, 64.0 * _EPS * max(1.0, abs(phi0)))
            if dec / 2.0 <= dec_tol:
                converged = True
                break
            # backtracking with domain checks
            step = 1.0
            while step > 1e-14:
                yn = y + step * dy
                phin = _barrier_value(c, yn, t)
                if phin <= phi0 - 0.01 * step * dec:
                    break
                step *= 0.5
            else:
                converged = dec / 2.0 <= 1e3 * dec_tol
                break
            y = yn
            steps += 1
        if not converged:
            return y, MAX_ITER, steps, t, stages
        if m / t < tol:
            return y, OPTIMAL, steps, t, stages
        t *= mu


def _start_point(problem: GpProblem, names):
    y = np.empty(len(names))
    for j, v in enumerate(names):
        lo, hi = problem.bounds[v]
        if problem.start is not None and v in problem.start:
            y[j] = math.log(problem.start[v])
        elif lo > 0 and math.isfinite(hi):
            y[j] = 0.5 * (math.log(lo) + math.log(hi))
        elif math.isfinite(hi):
            y[j] = math.log(hi) - 1.0
        elif lo > 0:
            y[j] = math.log(lo) + 1.0
        else:
            y[j] = 0.0
    return y


def _phase1(problem: GpProblem, names, y0, tol, max_iter):
    """Minimize ``S`` s.t. ``posy_i(x) <= S``; returns (y, S*, steps, feasible)."""
    sname = "__phase1_s"
    while sname in problem.bounds:
        sname += "_"
    s_mono = Monomial(1.0, {sname: -1.0})
    cons = [p * s_mono for _, p in problem.constraints]
    bounds = dict(problem.bounds)
    bounds[sname] = (1e-300, math.inf)
    c = _Compiled(Posynomial([Monomial(1.0, {sname: 1.0})]), cons, names + [sname], bounds)
    cur = _Compiled(Posynomial([Monomial(1.0)]), [p for _, p in problem.constraints], names,
                    problem.bounds)
    f0, _ = cur.values(y0)
    s0 = float(np.max(f0[1:])) + 1.0
    y = np.concatenate((y0, [s0]))

    def stop(yy, f):
        # every original constraint holds with a margin of 1e-3 in log units
        return yy[-1] < -1e-3

    y, status, steps, _, _ = _barrier(c, y, tol, max_iter, stop=stop)
    fo, _ = cur.values(y[:-1])
    worst = float(np.max(fo[1:])) if cur.n_blocks > 1 else -math.inf
    return y[:-1], worst, steps, worst < 0.0


def _kkt(c: _Compiled, y, t):
    """KKT residual estimate at ``y``: (stationarity, complementarity gap, duals).

    The barrier multipliers ``1/(t (-f_i))`` are too noisy near active
    constraints, where ``f_i`` is tiny and carries rounding error, so the
    certificate uses the nonnegative least-squares multipliers instead:
    stationarity is ``|grad f_0 + sum lambda_i grad f_i|`` relative to the
    size of its terms, and complementarity is ``max(m/t, sum lambda_i |f_i|)``.
    """
    f, p = c.values(y)
    ones = np.ones(c.n_blocks)
    G, _ = c.derivatives(y, f, p, ones, np.zeros_like(ones))
    rows = [G[1:]]
    fvals = [f[1:]]
    n = len(y)
    if len(c.hi_idx):
        rows.append(np.eye(n)[c.hi_idx])
        fvals.append(y[c.hi_idx] - c.log_hi[c.hi_idx])
    if len(c.lo_idx):
        rows.append(-np.eye(n)[c.lo_idx])
        fvals.append(c.log_lo[c.lo_idx] - y[c.lo_idx])
    A = np.vstack(rows)
    fv = np.concatenate(fvals)
    # penalize weight on slack constraints so the multipliers stay complementary
    M = np.vstack((A.T, np.diag(np.abs(fv))))
    rhs = np.concatenate((-G[0], np.zeros(len(fv))))
    lam, _ = scipy.optimize.nnls(M, rhs)
    resid = G[0] + lam @ A
    scale = np.abs(G[0]) + lam @ np.abs(A)
    stat = float(np.max(np.abs(resid) / np.maximum(scale, 1.0)))
    compl = max(float(c.n_ineq / t), float(lam @ np.abs(fv)))
    return stat, compl, lam[: c.n_blocks - 1]


def _solution(problem, c, y, status, steps, t, extra):
    names = c.names
    x = {v: float(math.exp(y[j])) for j, v in enumerate(names)}
    stat, gap, lam = _kkt(c, y, t)
    viol = problem.max_violation(x) if problem.constraints else -math.inf
    kkt = max(stat, gap)
    diag = {
        "stationarity": stat,
        "duality_gap": gap,
        "max_violation": viol,
        "duals": {lbl: float(l) for (lbl, _), l in zip(problem.constraints, lam)},
        "n_variables": len(names),
        "n_constraints": problem.n_constraints,
    }
    diag.update(extra)
    return GpSolution(x, problem.objective.evaluate(x), kkt, steps, status, diag)


def solve_gp(problem: GpProblem, tol: float = 1e-8, max_iter: int = 200,
             method: str = "auto") -> GpSolution:
    """Solve a geometric program.

    Parameters
    ----------
    problem : GpProblem
    tol : float
        Target for the KKT residual (max of dual gap ``m/t`` and scaled
        stationarity), in log-objective units.
    max_iter : int
        Newton steps allowed per barrier stage.
    method : {"auto", "barrier", "bisection"}
        ``auto`` runs the barrier method and falls back to bisection when
        Newton stalls.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if method not in ("auto", "barrier", "bisection"):
        raise ValueError(f"unknown method {method!r}")
    names = problem.variables
    c = _Compiled(problem.objective, [p for _, p in problem.constraints], names, problem.bounds)
    y = _start_point(problem, names)
    if not c.in_domain(y):
        raise ValueError("start point violates the variable bounds")
    total = 0
    f, _ = c.values(y)
    if c.n_blocks > 1 and np.any(f[1:] >= 0.0):
        y, worst, steps, feasible = _phase1(problem, names, y, tol, max_iter)
        total += steps
        if not feasible:
            x = {v: float(math.exp(y[j])) for j, v in enumerate(names)}
            return GpSolution(x, math.nan, math.inf, total, INFEASIBLE,
                              {"phase1_log_violation": worst,
                               "violated": [lbl for lbl, v in problem.constraint_values(x).items()
                                            if v >= 1.0]})
    if method == "bisection":
        sol = _bisection(problem, c, names, y, tol, max_iter, total)
        sol.diagnostics["meta"] = problem.meta
        return sol
    y, status, steps, t, stages = _barrier(c, y, tol, max_iter)
    total += steps
    sol = _solution(problem, c, y, status, total, t, {"method": "barrier", "stages": stages})
    if status == OPTIMAL and sol.kkt_residual > tol:
        sol.status = MAX_ITER
    if sol.status != OPTIMAL and method == "auto":
        fb = _bisection(problem, c, names, y, tol, max_iter, total)
        fb.diagnostics["fallback_from"] = sol.status
        sol = fb
    sol.diagnostics["meta"] = problem.meta
    return sol


def _bisection(problem, c, names, y_feas, tol, max_iter, steps0):
    """Bisection on ``log objective`` with phase-I feasibility checks."""
    obj = problem.objective
    if len(obj) != 1:
        raise ValueError("bisection path needs a monomial objective")
    mono = obj.terms[0]
    steps = steps0
    x = {v: float(math.exp(y_feas[j])) for j, v in enumerate(names)}
    hi = math.log(obj.evaluate(x))
    best_y = y_feas

    def feasible(level):
        nonlocal steps
        cap = mono * math.exp(-level)
        sub = GpProblem(Posynomial([Monomial(1.0)]), list(problem.constraints) + [("objective", cap)],
                        problem.bounds)
        y1, worst, s, ok = _phase1(sub, names, best_y, tol, max_iter)
        steps += s
        return ok, y1

    width = 1.0
    lo = hi - width
    while True:
        ok, y1 = feasible(lo)
        if not ok:
            break
        hi, best_y = lo, y1
        width *= 2.0
        lo = hi - width
        if width > 1e3:
            raise ValueError("objective appears unbounded below")
    it = 0
    while hi - lo > tol and it < 200:
        mid = 0.5 * (lo + hi)
        ok, y1 = feasible(mid)
        if ok:
            hi, best_y = mid, y1
        else:
            lo = mid
        it += 1
    sol = _solution(problem, c, best_y, OPTIMAL, steps, 1.0, {"method": "bisection",
                                                               "bisection_steps": it})
    # the barrier-derived KKT estimate is meaningless here; report the bracket
    sol.kkt_residual = hi - lo
    sol.diagnostics["stationarity"] = math.nan
    sol.diagnostics["duals"] = {}
    if sol.kkt_residual > tol:
        sol.status = MAX_ITER
    return sol
