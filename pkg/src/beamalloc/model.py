"""Large-system SINR models for zeroforcing MIMO-NOMA.

All SINRs are linear, dimensionless ratios. Noise enters through
``sigma_tilde`` = noise power / total transmit power.

The functions broadcast over numpy arrays so that grid oracles and
vectorized sweeps can call them directly; scalar inputs return floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .scenario import Allocation, Grouping, ScenarioConfig

LN2 = math.log(2.0)


class DomainError(ValueError):
    """Raised when a model input lies outside its admissible domain."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemDims:
    """Antenna/beam counts of a NOMA downlink.

    ``n_beams`` beams serve ``n_singleton_beams`` unpaired users and
    ``n_beams - n_singleton_beams`` user pairs.
    """

    n_tx: int
    n_beams: int
    n_singleton_beams: int = 0

    def __post_init__(self):
        if self.n_tx < 1 or self.n_beams < 1:
            raise DomainError("n_tx and n_beams must be positive")
        if not 0 <= self.n_singleton_beams <= self.n_beams:
            raise DomainError("need 0 <= n_singleton_beams <= n_beams")

    @property
    def n_pairs(self) -> int:
        return self.n_beams - self.n_singleton_beams

    @property
    def n_users(self) -> int:
        return 2 * self.n_beams - self.n_singleton_beams

    @property
    def k_bar(self) -> float:
        return self.n_users / self.n_tx

    @property
    def m_bar(self) -> float:
        return self.n_beams / self.n_tx


class Load(NamedTuple):
    """Raw load ratios, for evaluating the models off the integer lattice."""

    k_bar: float
    m_bar: float


@dataclass(frozen=True)
class PairProfile:
    """Channel statistics of one user pair (squared degradation and correlation)."""

    c_sq: float
    rho_sq: float

    def __post_init__(self):
        c = np.asarray(self.c_sq)
        r = np.asarray(self.rho_sq)
        if np.any(~(c > 0)) or np.any(c > 1):
            raise DomainError(f"c_sq must lie in (0, 1], got {self.c_sq}")
        if np.any(~(r >= 0)) or np.any(r > 1):
            raise DomainError(f"rho_sq must lie in [0, 1], got {self.rho_sq}")


class EntityRef(NamedTuple):
    kind: str  # "singleton" | "pair"
    index: int


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _out(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def _nonneg(name, x):
    if np.any(~(np.asarray(x) >= 0)):
        raise DomainError(f"{name} must be nonnegative, got {x}")


def beta_of(b_bar):
    """Quantization distortion 2**(-b_bar); underflows cleanly to 0."""
    return np.exp2(-np.asarray(b_bar, dtype=float))


def _load(dims):
    # scalars or broadcastable arrays
    k_bar, m_bar = dims.k_bar, dims.m_bar
    if np.any(~(np.asarray(k_bar) > 0)):
        raise DomainError("k_bar must be positive")
    if np.any(np.asarray(m_bar) > 1):
        raise DomainError(f"zeroforcing needs m_bar <= 1, got {m_bar}")
    return k_bar, m_bar


# ---------------------------------------------------------------------------
# FTPA split and limiting SINRs
# ---------------------------------------------------------------------------


def ftpa_split(c_sq, alpha, p=1.0):
    """Fractional transmit power split of a pair's power ``p``.

    Returns ``(p_strong, p_weak)`` with ``p_strong = p a/(1+a)``,
    ``p_weak = p/(1+a)`` and ``a = c_sq**alpha``.
    """
    c_sq = np.asarray(c_sq, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(~(c_sq > 0)) or np.any(c_sq > 1):
        raise DomainError("c_sq must lie in (0, 1]")
    _nonneg("alpha", alpha)
    _nonneg("p", p)
    a = c_sq**alpha
    p_weak = np.asarray(p, dtype=float) / (1.0 + a)
    # p - p_weak keeps the split exactly power conserving
    p_strong = np.asarray(p, dtype=float) - p_weak
    return _out(p_strong), _out(p_weak)


def _gain(zeta, beta, k_bar, m_bar):
    # zeta (1 - M)(1 - beta) / K, shared by all three SINR families
    return zeta * (1.0 - m_bar) * (1.0 - beta) / k_bar


def sinr_singleton(zeta, b_bar, dims, sigma_tilde):
    """Limiting SINR of an unpaired user."""
    _nonneg("zeta", zeta)
    _nonneg("b_bar", b_bar)
    _nonneg("sigma_tilde", sigma_tilde)
    k_bar, m_bar = _load(dims)
    beta = beta_of(b_bar)
    return _out(_gain(zeta, beta, k_bar, m_bar) / (beta + sigma_tilde))


def _strong(q, a, beta, st):
    return q * a / ((1.0 + a) * (beta + st))


def _weak(q, a, beta, st, c2, r2):
    y = c2 * (1.0 - r2 * (1.0 - beta)) + st
    return q * r2 / ((1.0 + a) * y + q * a * c2)


def sinr_strong(zeta, b_bar, pair: PairProfile, alpha, dims, sigma_tilde):
    """Limiting SINR of the cell-center user of a pair (perfect SIC)."""
    _nonneg("zeta", zeta)
    _nonneg("b_bar", b_bar)
    _nonneg("alpha", alpha)
    _nonneg("sigma_tilde", sigma_tilde)
    k_bar, m_bar = _load(dims)
    beta = beta_of(b_bar)
    a = np.asarray(pair.c_sq, dtype=float) ** np.asarray(alpha, dtype=float)
    return _out(_strong(_gain(zeta, beta, k_bar, m_bar), a, beta, sigma_tilde))


def sinr_weak(zeta, b_bar, pair: PairProfile, alpha, dims, sigma_tilde):
    """Limiting SINR of the cell-edge user of a pair.

    ``zeta rho^2 (1-M)(1-beta) / [K (1+a) Y + zeta a c^2 (1-M)(1-beta)]`` with
    ``Y = c^2 (1 - rho^2 (1-beta)) + sigma_tilde``. This is the form whose
    crossing with :func:`sinr_strong` yields the closed-form decay factor of
    :func:`optimal_decay`.
    """
    _nonneg("zeta", zeta)
    _nonneg("b_bar", b_bar)
    _nonneg("alpha", alpha)
    _nonneg("sigma_tilde", sigma_tilde)
    k_bar, m_bar = _load(dims)
    beta = beta_of(b_bar)
    c2 = np.asarray(pair.c_sq, dtype=float)
    a = c2 ** np.asarray(alpha, dtype=float)
    q = _gain(zeta, beta, k_bar, m_bar)
    return _out(_weak(q, a, beta, sigma_tilde, c2, pair.rho_sq))


# ---------------------------------------------------------------------------
# closed-form intra-pair optimum
# ---------------------------------------------------------------------------


class DecayResult(NamedTuple):
    alpha: float | np.ndarray
    gamma: float | np.ndarray
    a: float | np.ndarray
    interior: bool | np.ndarray
    degenerate: bool | np.ndarray


def decay_coefficients(zeta, b_bar, pair: PairProfile, dims, sigma_tilde):
    """Coefficients ``(A, B, C)`` of ``A a^2 + B a + C = 0`` at the SINR crossing."""
    k_bar, m_bar = _load(dims)
    beta = beta_of(b_bar)
    c2 = np.asarray(pair.c_sq, dtype=float)
    r2 = np.asarray(pair.rho_sq, dtype=float)
    st = sigma_tilde
    A = c2 + c2 * (zeta * (1.0 - m_bar) / k_bar - r2) * (1.0 - beta) + st
    B = (1.0 - r2) * (c2 + st) - r2 * (1.0 - c2) * beta
    C = -r2 * (beta + st)
    return _out(A), _out(B), _out(C)


def equal_split_is_optimal(zeta, b_bar, pair: PairProfile, dims, sigma_tilde):
    """True where the weak user already dominates at an equal power split."""
    k_bar, m_bar = _load(dims)
    beta = beta_of(b_bar)
    c2 = np.asarray(pair.c_sq, dtype=float)
    r2 = np.asarray(pair.rho_sq, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = zeta * c2 * (1.0 - m_bar) / (2.0 * r2 * k_bar)
        lhs = beta * (1.0 - c2 + x)
        rhs = (1.0 / r2 - 1.0) * (c2 + sigma_tilde) + x
    return _out(lhs >= rhs)


def optimal_decay(zeta, b_bar, pair: PairProfile, dims, sigma_tilde) -> DecayResult:
    """Decay factor maximizing ``min(sinr_strong, sinr_weak)`` of one pair.

    When the weak user wins at ``alpha = 0`` the equal split is optimal;
    otherwise both users meet at ``a* = c^(2 alpha*)``, the positive root of
    the crossing quadratic. ``rho_sq = 0`` pairs are returned with
    ``degenerate=True`` and zero SINR (the weak user has no useful signal).
    ``c_sq = 1`` pairs cannot be steered by ``alpha``; ``alpha* = 0``.
    """
    _nonneg("zeta", zeta)
    _nonneg("b_bar", b_bar)
    _nonneg("sigma_tilde", sigma_tilde)
    k_bar, m_bar = _load(dims)
    scalar = all(np.ndim(v) == 0 for v in (zeta, b_bar, pair.c_sq, pair.rho_sq))
    beta = beta_of(b_bar)
    c2 = np.asarray(pair.c_sq, dtype=float)
    r2 = np.asarray(pair.rho_sq, dtype=float)
    st = sigma_tilde
    q = _gain(zeta, beta, k_bar, m_bar)

    A, B, C = (np.asarray(v) for v in decay_coefficients(zeta, b_bar, pair, dims, st))
    disc = np.sqrt(np.maximum(B * B - 4.0 * A * C, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        # pick the cancellation-free branch of the positive root
        root = np.where(B >= 0, -2.0 * C / (B + disc), (disc - B) / (2.0 * A))
    root = np.clip(np.nan_to_num(root, nan=1.0), 0.0, 1.0)

    degenerate = ~(r2 > 0)
    flat = c2 >= 1.0
    equal = np.asarray(equal_split_is_optimal(zeta, b_bar, pair, dims, st), dtype=bool)
    interior = ~(equal | degenerate | flat)

    a = np.where(interior, root, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(interior, np.log(a) / np.log(c2), 0.0)
    g_s = _strong(q, a, beta, st)
    g_flat = np.minimum(g_s, _weak(q, a, beta, st, c2, r2))
    gamma = np.where(flat, g_flat, g_s)
    gamma = np.where(degenerate, 0.0, gamma)

    if scalar:
        return DecayResult(float(alpha), float(gamma), float(a), bool(interior), bool(degenerate))
    return DecayResult(alpha, gamma, a, interior, degenerate)


def pair_gamma_fast(q, beta, st, c2, r2):
    """Scalar pair min-SINR at the optimal split, from the gain ``q``.

    Inner-loop version of :func:`optimal_decay` for the progressive filler;
    no validation, pure float arithmetic.
    """
    if r2 <= 0.0:
        return 0.0
    bs = beta + st
    y = c2 * (1.0 - r2 * (1.0 - beta)) + st
    if c2 >= 1.0:
        return min(0.5 * q / bs, q * r2 / (2.0 * y + q * c2))
    # weak user dominates at a = 1
    if 2.0 * r2 * bs >= 2.0 * y + q * c2:
        return 0.5 * q / bs
    A = y + c2 * q
    B = y - r2 * bs
    C = -r2 * bs
    disc = math.sqrt(B * B - 4.0 * A * C)
    a = -2.0 * C / (B + disc) if B >= 0 else (disc - B) / (2.0 * A)
    if a > 1.0:
        a = 1.0
    return q * a / ((1.0 + a) * bs)


# ---------------------------------------------------------------------------
# min-SINR objective
# ---------------------------------------------------------------------------


def entity_sinrs(scenario: "ScenarioConfig", grouping: "Grouping", allocation: "Allocation"):
    """Per-entity SINRs: singleton SINRs and per-pair ``min(strong, weak)``.

    Pairs are evaluated at the allocation's decay factors when present,
    otherwise at the Prop.-1 optimum for their group's resources.
    """
    dims = scenario.dims
    st = scenario.sigma_tilde
    zeta = np.asarray(allocation.zeta, dtype=float)
    b_bar = np.asarray(allocation.b_bar, dtype=float)
    grouping.check(scenario)
    if zeta.shape != (grouping.n_groups,) or b_bar.shape != (grouping.n_groups,):
        raise DomainError("allocation does not match the grouping's group count")
    g_of = np.asarray(grouping.assignment, dtype=int)
    m1 = scenario.n_singletons

    singles = np.empty(m1)
    if m1:
        gs = g_of[:m1]
        singles[:] = sinr_singleton(zeta[gs], b_bar[gs], dims, st)
    n_p = len(scenario.pairs)
    pairs = np.empty(n_p)
    if n_p:
        gp = g_of[m1:]
        prof = PairProfile(
            np.array([p.c_sq for p in scenario.pairs]), np.array([p.rho_sq for p in scenario.pairs])
        )
        if allocation.alpha is None:
            pairs[:] = optimal_decay(zeta[gp], b_bar[gp], prof, dims, st).gamma
        else:
            alpha = np.asarray(allocation.alpha, dtype=float)
            s = sinr_strong(zeta[gp], b_bar[gp], prof, alpha, dims, st)
            w = sinr_weak(zeta[gp], b_bar[gp], prof, alpha, dims, st)
            pairs[:] = np.minimum(s, w)
    return singles, pairs


def min_sinr(scenario, grouping, allocation) -> tuple[float, EntityRef]:
    """Minimum SINR over all entities and the entity attaining it.

    Ties go to the lowest entity index, singletons before pairs.
    """
    singles, pairs = entity_sinrs(scenario, grouping, allocation)
    allv = np.concatenate([singles, pairs])
    idx = int(np.argmin(allv))  # argmin returns the first minimum
    if idx < len(singles):
        return float(allv[idx]), EntityRef("singleton", idx)
    return float(allv[idx]), EntityRef("pair", idx - len(singles))


def to_db(x):
    with np.errstate(divide="ignore"):
        return _out(10.0 * np.log10(np.asarray(x, dtype=float)))


def from_db(x_db):
    return _out(10.0 ** (np.asarray(x_db, dtype=float) / 10.0))
