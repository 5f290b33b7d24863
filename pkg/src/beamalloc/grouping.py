"""Grouping of user pairs by SINR: 1-D k-means seeding and worst-pair demotion."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .allocators import Allocator, make_allocator
from .model import DomainError, PairProfile, entity_sinrs, optimal_decay
from .progressive import FillParams
from .scenario import Allocation, Grouping, ScenarioConfig, grouping_from_pair_labels


class KMeansResult(NamedTuple):
    labels: np.ndarray
    means: np.ndarray
    degenerate: bool  # fewer distinct values than requested clusters


def kmeans_1d(values, k: int, max_iter: int = 300) -> KMeansResult:
    """Lloyd iterations on scalars with deterministic quantile seeding.

    The initial centers are the order statistics at ranks ``(j + 1/2) n / k``.
    Clusters are relabelled ``0..k'-1`` by ascending mean; empty clusters are
    dropped, so ``k'`` may be smaller than ``k``. Ties between equidistant
    centers go to the lower one.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DomainError("kmeans_1d needs a nonempty 1-D array")
    if k < 1:
        raise DomainError("k must be at least 1")
    distinct = np.unique(x)
    degenerate = len(distinct) < k
    k_eff = min(k, len(distinct))
    srt = np.sort(x)
    n = len(x)
    # seed on distinct values when duplicates would collapse the quantiles
    pool = distinct if degenerate else srt
    ranks = ((np.arange(k_eff) + 0.5) * len(pool) / k_eff).astype(int)
    centers = np.unique(pool[np.minimum(ranks, len(pool) - 1)])
    labels = np.full(n, -1)
    for _ in range(max_iter):
        new = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
        used = np.unique(labels)
        centers = np.array([x[labels == j].mean() for j in used])
        labels = np.searchsorted(used, labels)
    order = np.argsort(centers, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return KMeansResult(rank[labels], centers[order], degenerate)


class GroupingStep(NamedTuple):
    iteration: int
    moved_pair: int  # -1 when nothing moved
    from_group: int
    to_group: int
    gamma_th: float


@dataclass
class GroupingResult:
    grouping: Grouping
    allocation: Allocation
    gamma_th: float
    iterations: int
    converged: bool
    trace: list[GroupingStep] = field(default_factory=list)
    last_grouping: Grouping | None = None
    last_gamma_th: float = float("nan")
    kmeans_degenerate: bool = False


def _initial_pair_sinrs(scenario: ScenarioConfig) -> np.ndarray:
    # uniform per-beam split of both budgets
    dims = scenario.dims
    zeta = dims.k_bar / dims.m_bar
    b_bar = scenario.b_hat_tot / dims.m_bar
    prof = PairProfile(np.array([p.c_sq for p in scenario.pairs]),
                       np.array([p.rho_sq for p in scenario.pairs]))
    return np.atleast_1d(optimal_decay(zeta, b_bar, prof, dims, scenario.sigma_tilde).gamma)


def group_pairs(scenario: ScenarioConfig, n_groups: int, eps_gamma: float = 1e-4,
                allocator: Allocator = "progressive", fill: FillParams | None = None,
                max_iter: int = 50, tie_rtol: float = 1e-7) -> GroupingResult:
    """Cluster pairs into resource groups and refine by demoting the worst pair.

    Pairs are clustered by their SINR under a uniform allocation into
    ``n_groups - 1`` groups (all singletons keep one group of their own),
    labelled by ascending mean SINR. Each round allocates, then moves the
    worst pair one group down, unless it already sits in the lowest pair
    group, until the min-SINR gain is at most ``eps_gamma`` (absolute). The
    best grouping seen is returned; ``last_*`` record where the loop stopped.

    Pairs within ``tie_rtol`` of the minimum count as attaining it, because
    optimal allocations equalize many entities up to solver precision.
    """
    if not scenario.pairs:
        raise DomainError("scenario has no pairs to group")
    if not eps_gamma > 0:
        raise DomainError("eps_gamma must be positive")
    n_pair_groups = n_groups - 1 if scenario.n_singletons else n_groups
    if n_pair_groups < 1:
        raise DomainError("need at least one pair group")
    alloc_fn = make_allocator(allocator, fill)
    km = kmeans_1d(_initial_pair_sinrs(scenario), n_pair_groups)
    labels = [int(v) for v in km.labels]

    best = None
    trace: list[GroupingStep] = []
    gamma_old = 0.0
    converged = False
    it = 0
    grouping = grouping_from_pair_labels(scenario, labels)
    gamma = float("nan")
    while it < max_iter:
        it += 1
        grouping = grouping_from_pair_labels(scenario, labels)
        alloc = alloc_fn(scenario, grouping)
        singles, pairs = entity_sinrs(scenario, grouping, alloc)
        gamma = float(min(singles.min(initial=np.inf), pairs.min()))
        if best is None or gamma > best[2]:
            best = (grouping, alloc, gamma)
        # worst pairs that can still move down a group
        lowest = min(labels)
        cand = [k for k in range(len(pairs))
                if pairs[k] <= gamma * (1.0 + tie_rtol) and labels[k] > lowest]
        moved = -1
        if cand:
            moved = min(cand, key=lambda k: (pairs[k], k))
            src = labels[moved]
            labels[moved] = src - 1
            off = 1 if scenario.n_singletons else 0
            trace.append(GroupingStep(it, moved, src + off, src - 1 + off, gamma))
            # compact labels if the source group emptied
            if src not in labels:
                labels = [l - 1 if l > src else l for l in labels]
        else:
            trace.append(GroupingStep(it, -1, -1, -1, gamma))
        delta = gamma - gamma_old
        gamma_old = gamma
        if delta <= eps_gamma or moved < 0:
            converged = True
            break

    g_best, a_best, gam_best = best
    return GroupingResult(g_best, a_best, gam_best, it, converged, trace,
                          last_grouping=grouping, last_gamma_th=gamma,
                          kmeans_degenerate=km.degenerate)
