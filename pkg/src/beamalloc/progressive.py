"""Progressive filling: chunk-wise power and CDI-bit grants to the worst group."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import DomainError, PairProfile, optimal_decay
from .scenario import Allocation, Grouping, ScenarioConfig


@dataclass(frozen=True)
class FillParams:
    """Chunk counts and bit-chunk decay.

    With ``uniform_bits=True`` the remaining bits are handed out in equal
    chunks instead of a geometric sequence (``delta`` is then unused).
    """

    n_zeta0: int = 500
    n_b0: int = 50
    delta: float = 0.6
    uniform_bits: bool = False

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise DomainError("delta must lie in (0, 1)")
        if self.n_zeta0 < 1 or self.n_b0 < 1:
            raise DomainError("chunk counts must be positive")

    def check(self, n_groups: int):
        if self.n_zeta0 <= n_groups or self.n_b0 <= n_groups:
            raise DomainError(f"n_zeta0 and n_b0 must exceed the group count {n_groups}")


class TraceRow(NamedTuple):
    iteration: int
    group: int
    resource: str  # "power" | "bits"
    min_sinr: float


def bit_chunk(i: int, params: FillParams, b_hat_tot: float, n_groups: int) -> float:
    """Size of the ``i``-th normalized-bit chunk (1-based).

    ``B (1 - G/N_B) (1 - delta) delta**(i-1) / (1 - delta**(N_B - G))``; the
    chunks over ``i = 1 .. N_B - G`` sum to ``B (1 - G/N_B)``.
    """
    n = params.n_b0 - n_groups
    if not 1 <= i <= n:
        raise DomainError(f"chunk index {i} outside 1..{n}")
    share = b_hat_tot * (1.0 - n_groups / params.n_b0)
    if params.uniform_bits:
        return share / n
    d = params.delta
    return share * (1.0 - d) * d ** (i - 1) / (-math.expm1(n * math.log(d)))


class _GroupEval:
    """Minimum entity SINR of each group as a function of its (zeta, B)."""

    def __init__(self, scenario: ScenarioConfig, grouping: Grouping):
        dims = scenario.dims
        self.q_scale = (1.0 - dims.m_bar) / dims.k_bar
        self.st = scenario.sigma_tilde
        m1 = scenario.n_singletons
        G = grouping.n_groups
        self.has_singles = [False] * G
        self.pairs = [[] for _ in range(G)]
        for i, g in enumerate(grouping.assignment):
            if i < m1:
                self.has_singles[g] = True
            else:
                p = scenario.pairs[i - m1]
                if not p.rho_sq > 0:
                    raise DomainError(f"pair {i - m1} has rho_sq = 0; its weak user cannot be served")
                # y0 = c2 (1 - rho2) + st, the beta-free part of the weak-user Y
                self.pairs[g].append((p.c_sq, p.rho_sq, p.c_sq * (1.0 - p.rho_sq) + self.st))

    def __call__(self, g: int, zeta: float, b_bar: float) -> float:
        # inlined pair_gamma_fast: this is the hot loop of the filler
        beta = 2.0 ** (-b_bar)
        q = zeta * self.q_scale * (1.0 - beta)
        st = self.st
        bs = beta + st
        best = q / bs if self.has_singles[g] else math.inf
        sqrt = math.sqrt
        for c2, r2, y0 in self.pairs[g]:
            y = y0 + c2 * r2 * beta
            r2bs = r2 * bs
            if c2 >= 1.0:
                v = min(0.5 * q / bs, q * r2 / (2.0 * y + q * c2))
            elif 2.0 * r2bs >= 2.0 * y + q * c2:
                v = 0.5 * q / bs
            else:
                A = y + c2 * q
                B = y - r2bs
                disc = sqrt(B * B + 4.0 * A * r2bs)
                a = 2.0 * r2bs / (B + disc) if B >= 0 else (disc - B) / (2.0 * A)
                if a > 1.0:
                    a = 1.0
                v = q * a / ((1.0 + a) * bs)
            if v < best:
                best = v
        return best


def _argmin(values) -> int:
    # first index of the minimum: ties go to the lowest group
    best, idx = values[0], 0
    for j in range(1, len(values)):
        if values[j] < best:
            best, idx = values[j], j
    return idx


def progressive_fill(scenario: ScenarioConfig, grouping: Grouping,
                     params: FillParams = FillParams(), paper_literal: bool = False,
                     record_trace: bool = True):
    """Alternate power and bit grants to the group holding the worst entity.

    Every group starts with ``K/N_zeta`` power and ``B/N_B`` normalized bits in
    total. Each loop gives one power chunk ``K/(N_zeta M_g)`` per beam to the
    worst group, re-evaluates, then one bit chunk to the (new) worst group.
    Pair SINRs are always taken at their optimal power split.

    Bit chunks are spread over the group's beams (``B_g += dB_i / M_g``) so
    that the bit budget is used exactly, as the power grants are;
    ``paper_literal=True`` adds ``dB_i`` to ``B_g`` unscaled instead.

    Returns
    -------
    allocation : Allocation
        With per-pair optimal ``alpha`` and ``gamma_th`` the final min SINR.
    trace : list of TraceRow
        One row per grant, with the min SINR after it.
    """
    grouping.check(scenario)
    G = grouping.n_groups
    params.check(G)
    dims = scenario.dims
    k_bar = dims.k_bar
    b_hat = scenario.b_hat_tot
    m_bar_g = [float(m) for m in grouping.m_bar(scenario.n_tx)]
    ev = _GroupEval(scenario, grouping)

    zeta = [k_bar / (params.n_zeta0 * m) for m in m_bar_g]
    b_bar = [b_hat / (params.n_b0 * m) for m in m_bar_g]
    gam = [ev(g, zeta[g], b_bar[g]) for g in range(G)]
    n_z = params.n_zeta0 - G
    n_b = params.n_b0 - G
    chunks = [bit_chunk(i, params, b_hat, G) for i in range(1, n_b + 1)]
    trace: list[TraceRow] = []

    g_star = _argmin(gam)
    i = 0
    while n_z > 0 or n_b > 0:
        i += 1
        if n_z > 0:
            g = g_star
            zeta[g] += k_bar / (params.n_zeta0 * m_bar_g[g])
            n_z -= 1
            gam[g] = ev(g, zeta[g], b_bar[g])
            g_plus = _argmin(gam)
            if record_trace:
                trace.append(TraceRow(i, g, "power", gam[g_plus]))
        else:
            g_plus = g_star
        if n_b > 0:
            g = g_plus
            db = chunks[i - 1]
            b_bar[g] += db if paper_literal else db / m_bar_g[g]
            n_b -= 1
            gam[g] = ev(g, zeta[g], b_bar[g])
            g_star = _argmin(gam)
            if record_trace:
                trace.append(TraceRow(i, g, "bits", gam[g_star]))
        else:
            g_star = g_plus

    zeta_a = np.array(zeta)
    b_a = np.array(b_bar)
    alpha = None
    if scenario.pairs:
        g_of = np.asarray(grouping.assignment[scenario.n_singletons:], dtype=int)
        prof = PairProfile(np.array([p.c_sq for p in scenario.pairs]),
                           np.array([p.rho_sq for p in scenario.pairs]))
        alpha = np.asarray(optimal_decay(zeta_a[g_of], b_a[g_of], prof, dims,
                                         scenario.sigma_tilde).alpha, dtype=float).reshape(-1)
    alloc = Allocation(zeta_a, b_a, alpha=alpha, gamma_th=min(gam), method="progressive",
                       iterations=i,
                       diagnostics={"sinr_evaluations": G + (params.n_zeta0 - G) + (params.n_b0 - G),
                                    "paper_literal": paper_literal})
    return alloc, trace
