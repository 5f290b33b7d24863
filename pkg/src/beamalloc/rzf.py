"""Large-system SINR of regularized-zeroforcing OMA with quantized CDI."""

from __future__ import annotations

import math

import numpy as np

from .model import DomainError, _out, beta_of


def m_circ(k_bar, phi):
    """Stieltjes-type constant ``m°`` of the regularized Gram matrix.

    ``m° = (sqrt(u**2 + 4/phi) - u) / 2`` with ``u = 1 + (k_bar - 1)/phi``;
    evaluated without cancellation for large ``phi``.
    """
    k_bar = np.asarray(k_bar, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(~(phi > 0)):
        raise DomainError("phi must be positive")
    if np.any(~(k_bar > 0)):
        raise DomainError("k_bar must be positive")
    u = 1.0 + (k_bar - 1.0) / phi
    r = np.sqrt(u * u + 4.0 / phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(u >= 0, (2.0 / phi) / (r + u), 0.5 * (r - u))
    return _out(m)


def a_circ(k_bar, phi, m):
    """``a° = (sqrt(k_bar) + phi (1 + m°)/sqrt(k_bar))**2 - 1``."""
    k_bar = np.asarray(k_bar, dtype=float)
    phi = np.asarray(phi, dtype=float)
    m = np.asarray(m, dtype=float)
    if np.any(~(k_bar > 0)) or np.any(~(phi > 0)) or np.any(~(m > 0)):
        raise DomainError("a_circ needs positive k_bar, phi and m")
    sk = np.sqrt(k_bar)
    return _out((sk + phi * (1.0 + m) / sk) ** 2 - 1.0)


def oma_sinr(zeta, b_bar, c_sq, k_bar, phi, sigma_tilde, paper_literal=False):
    """Limiting SINR of an OMA user under regularized zeroforcing.

    ``zeta (1-beta) m°**2 a° / [1 + m°(m°+2) beta + (1+m°)**2 sigma_tilde/c_sq]``.

    Parameters
    ----------
    paper_literal : bool
        Use ``1 - m°(m°+2) beta`` in the denominator instead. That variant is
        not monotone in ``beta`` and can turn negative; offered only for
        comparison.
    """
    zeta = np.asarray(zeta, dtype=float)
    c_sq = np.asarray(c_sq, dtype=float)
    if np.any(~(zeta >= 0)):
        raise DomainError("zeta must be nonnegative")
    if np.any(~(c_sq > 0)) or np.any(c_sq > 1):
        raise DomainError("c_sq must lie in (0, 1]")
    if np.any(~(np.asarray(b_bar) >= 0)) or sigma_tilde < 0:
        raise DomainError("b_bar and sigma_tilde must be nonnegative")
    m = np.asarray(m_circ(k_bar, phi))
    a = np.asarray(a_circ(k_bar, phi, m))
    beta = beta_of(b_bar)
    sign = -1.0 if paper_literal else 1.0
    den = 1.0 + sign * m * (m + 2.0) * beta + (1.0 + m) ** 2 * sigma_tilde / c_sq
    return _out(zeta * (1.0 - beta) * m * m * a / den)


def worst_user_per_group(c_sq, grouping) -> list[int]:
    """Index of the member with the smallest ``c_sq`` in every group.

    Ties go to the lowest user index.
    """
    c_sq = np.asarray(c_sq, dtype=float)
    if len(c_sq) != len(grouping.assignment):
        raise DomainError("grouping size does not match the number of users")
    out = []
    for g in range(grouping.n_groups):
        members = grouping.members(g)
        if not members:
            raise DomainError(f"group {g} is empty")
        out.append(min(members, key=lambda n: (c_sq[n], n)))
    return out


def fullload_phi(d) -> float:
    """Regularizer implied by ``d = 2 m° + 1`` at full load."""
    if not d > 1:
        raise DomainError("d must exceed 1")
    return 4.0 / (d * d - 1.0)


def fullload_m(d) -> float:
    return 0.5 * (d - 1.0)


LOG_PHI_RANGE = (math.log(1e-4), math.log(1e4))
