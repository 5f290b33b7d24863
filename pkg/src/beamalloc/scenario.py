"""Problem instances, groupings and allocations shared by all allocators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import DomainError, PairProfile, SystemDims, from_db


@dataclass(frozen=True)
class ScenarioConfig:
    """A NOMA downlink instance: singletons, pairs and budgets.

    Beams are ordered singletons first (``0 .. n_singletons-1``), then pairs.
    """

    n_tx: int
    n_singletons: int
    pairs: tuple[PairProfile, ...]
    b_hat_tot: float
    sigma_tilde: float
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if self.n_singletons < 0:
            raise DomainError("n_singletons must be nonnegative")
        if self.n_beams < 1:
            raise DomainError("scenario has no beams")
        if not self.b_hat_tot > 0:
            raise DomainError("b_hat_tot must be positive")
        if not (self.sigma_tilde >= 0 and math.isfinite(self.sigma_tilde)):
            raise DomainError("sigma_tilde must be finite and nonnegative")
        self.dims  # validates counts

    @classmethod
    def from_snr_db(cls, n_tx, n_singletons, pairs, b_hat_tot, snr_db, name="scenario"):
        return cls(n_tx, n_singletons, tuple(pairs), b_hat_tot, float(from_db(-snr_db)), name)

    @property
    def n_beams(self) -> int:
        return self.n_singletons + len(self.pairs)

    @property
    def dims(self) -> SystemDims:
        return SystemDims(self.n_tx, self.n_beams, self.n_singletons)

    @property
    def entity_count(self) -> int:
        return self.n_beams

    def replace(self, **kw) -> "ScenarioConfig":
        data = dict(
            n_tx=self.n_tx,
            n_singletons=self.n_singletons,
            pairs=self.pairs,
            b_hat_tot=self.b_hat_tot,
            sigma_tilde=self.sigma_tilde,
            name=self.name,
        )
        data.update(kw)
        return ScenarioConfig(**data)


@dataclass(frozen=True)
class OmaConfig:
    """An OMA downlink instance: ``K`` unpaired users with degradation factors."""

    n_tx: int
    c_sq: tuple[float, ...]
    b_hat_tot: float
    sigma_tilde: float
    name: str = "oma"

    def __post_init__(self):
        object.__setattr__(self, "c_sq", tuple(float(c) for c in self.c_sq))
        if not self.c_sq:
            raise DomainError("OMA scenario needs at least one user")
        if any(not 0 < c <= 1 for c in self.c_sq):
            raise DomainError("OMA c_sq values must lie in (0, 1]")
        if self.n_tx < 1 or not self.b_hat_tot > 0:
            raise DomainError("n_tx and b_hat_tot must be positive")
        if not (self.sigma_tilde >= 0 and math.isfinite(self.sigma_tilde)):
            raise DomainError("sigma_tilde must be finite and nonnegative")

    @property
    def n_users(self) -> int:
        return len(self.c_sq)

    @property
    def k_bar(self) -> float:
        return self.n_users / self.n_tx

    def replace(self, **kw) -> "OmaConfig":
        data = dict(n_tx=self.n_tx, c_sq=self.c_sq, b_hat_tot=self.b_hat_tot,
                    sigma_tilde=self.sigma_tilde, name=self.name)
        data.update(kw)
        return OmaConfig(**data)


@dataclass(frozen=True)
class Grouping:
    """Group index (0-based) of every beam (NOMA) or user (OMA).

    For NOMA scenarios with singletons, group 0 holds exactly the singletons.
    """

    assignment: tuple[int, ...]
    n_groups: int

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(g) for g in self.assignment))
        if self.n_groups < 1:
            raise DomainError("need at least one group")
        if any(not 0 <= g < self.n_groups for g in self.assignment):
            raise DomainError("group index out of range")
        counts = self.counts()
        if np.any(counts == 0):
            empty = [int(g) for g in np.flatnonzero(counts == 0)]
            raise DomainError(f"groups {empty} contain zero beams")

    def counts(self) -> np.ndarray:
        return np.bincount(np.asarray(self.assignment, dtype=int), minlength=self.n_groups)

    def members(self, g: int) -> list[int]:
        return [i for i, gi in enumerate(self.assignment) if gi == g]

    def m_bar(self, n_tx: int) -> np.ndarray:
        """Normalized beam (or user) count per group."""
        return self.counts() / n_tx

    def check(self, scenario) -> None:
        if isinstance(scenario, OmaConfig):
            if len(self.assignment) != scenario.n_users:
                raise DomainError("grouping size does not match the number of OMA users")
            return
        if len(self.assignment) != scenario.n_beams:
            raise DomainError("grouping size does not match the number of beams")
        m1 = scenario.n_singletons
        if m1:
            if any(g != 0 for g in self.assignment[:m1]):
                raise DomainError("all singletons must be in group 0")
            if any(g == 0 for g in self.assignment[m1:]):
                raise DomainError("pairs may not share group 0 with singletons")

    @property
    def pair_groups(self) -> tuple[int, ...]:
        return self.assignment


def single_pair_group(scenario: ScenarioConfig) -> Grouping:
    """G = 2 grouping: singletons in group 0, every pair in group 1."""
    m1, n_p = scenario.n_singletons, len(scenario.pairs)
    if m1 and n_p:
        return Grouping((0,) * m1 + (1,) * n_p, 2)
    return Grouping((0,) * (m1 + n_p), 1)


def grouping_from_pair_labels(scenario: ScenarioConfig, labels: Sequence[int]) -> Grouping:
    """Grouping with singletons in group 0 and pair ``k`` in ``labels[k]``.

    Pair labels are 0-based among pair groups; they are shifted past the
    singleton group when singletons exist. Unused labels are compacted.
    """
    labels = list(labels)
    uniq = sorted(set(labels))
    remap = {old: new for new, old in enumerate(uniq)}
    off = 1 if scenario.n_singletons else 0
    a = (0,) * scenario.n_singletons + tuple(remap[l] + off for l in labels)
    return Grouping(a, len(uniq) + off)


def quantile_grouping(values: Sequence[float], n_groups: int) -> Grouping:
    """Equal-count grouping by ascending value (ties by index)."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if not 1 <= n_groups <= n:
        raise DomainError("need 1 <= n_groups <= number of users")
    order = np.argsort(values, kind="stable")
    assignment = np.empty(n, dtype=int)
    for g, chunk in enumerate(np.array_split(order, n_groups)):
        assignment[chunk] = g
    return Grouping(tuple(assignment), n_groups)


@dataclass
class Allocation:
    """Per-group power fractions and normalized CDI bits, plus pair/OMA extras."""

    zeta: np.ndarray
    b_bar: np.ndarray
    alpha: np.ndarray | None = None
    phi: float | None = None
    gamma_th: float = float("nan")
    method: str = ""
    iterations: int = 0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.zeta = np.asarray(self.zeta, dtype=float)
        self.b_bar = np.asarray(self.b_bar, dtype=float)
        if self.alpha is not None:
            self.alpha = np.asarray(self.alpha, dtype=float)

    def power_usage(self, m_bar_g) -> float:
        return float(np.dot(self.zeta, m_bar_g))

    def bit_usage(self, m_bar_g) -> float:
        return float(np.dot(self.b_bar, m_bar_g))

    def to_dict(self) -> dict:
        return {
            "zeta": [float(v) for v in self.zeta],
            "b_bar": [float(v) for v in self.b_bar],
            "alpha": None if self.alpha is None else [float(v) for v in self.alpha],
            "phi": self.phi,
            "gamma_th": self.gamma_th,
            "method": self.method,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Allocation":
        return cls(
            zeta=np.asarray(d["zeta"], dtype=float),
            b_bar=np.asarray(d["b_bar"], dtype=float),
            alpha=None if d.get("alpha") is None else np.asarray(d["alpha"], dtype=float),
            phi=d.get("phi"),
            gamma_th=float(d.get("gamma_th", float("nan"))),
            method=d.get("method", ""),
            iterations=int(d.get("iterations", 0)),
        )


def uniform_allocation(scenario, grouping: Grouping) -> Allocation:
    """Equal power fraction and equal normalized bits on every beam/user."""
    m_bar_g = grouping.m_bar(scenario.n_tx)
    total = m_bar_g.sum()
    k_bar = scenario.k_bar if isinstance(scenario, OmaConfig) else scenario.dims.k_bar
    g = grouping.n_groups
    return Allocation(
        zeta=np.full(g, k_bar / total),
        b_bar=np.full(g, scenario.b_hat_tot / total),
        method="uniform",
    )


# ---------------------------------------------------------------------------
# random instance generators
# ---------------------------------------------------------------------------


def random_pairs(n_pairs, rng, c_sq_range=(0.2, 0.6), rho_sq_range=(0.8, 1.0)):
    """Pairs with ``c^2`` and ``rho^2`` uniform on the given intervals."""
    c = rng.uniform(*c_sq_range, size=n_pairs)
    r = rng.uniform(*rho_sq_range, size=n_pairs)
    return tuple(PairProfile(float(ci), float(ri)) for ci, ri in zip(c, r))


def geometric_pairs(n_pairs, rng, rho_sq_min=0.9, radius=100.0, inner=50.0, outer_min=60.0,
                    pathloss_exp=2.0):
    """Pairs from a disc-cell placement.

    The strong user is uniform in the disc of radius ``inner``; the weak user
    is uniform in the annulus ``[outer_min, radius]``. The squared degradation
    factor is the path-loss ratio ``(d_s / d_w)**pathloss_exp``; ``rho^2`` is
    uniform on ``[rho_sq_min, 1]``.
    """
    d_s = inner * np.sqrt(rng.uniform(size=n_pairs))
    d_w = np.sqrt(rng.uniform(outer_min**2, radius**2, size=n_pairs))
    c_sq = np.clip((d_s / d_w) ** pathloss_exp, 1e-6, 1.0)
    r = rng.uniform(rho_sq_min, 1.0, size=n_pairs)
    return tuple(PairProfile(float(ci), float(ri)) for ci, ri in zip(c_sq, r))


def oma_users_from_noma(scenario: ScenarioConfig) -> tuple[float, ...]:
    """Users of a NOMA scenario served without pairing.

    Singletons and strong users keep unit degradation; weak users keep theirs.
    """
    return (1.0,) * scenario.n_singletons + tuple(
        c for p in scenario.pairs for c in (1.0, p.c_sq)
    )
