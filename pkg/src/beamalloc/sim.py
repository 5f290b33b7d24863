"""Finite-size Monte Carlo: Gauss-Markov channels, quantized CDI, ZF/RZF links."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .model import DomainError, ftpa_split
from .scenario import Allocation, Grouping, OmaConfig, ScenarioConfig

CODEBOOK_MAX_BITS = 24
_CODEBOOK_CHUNK = 1 << 14
ERROR_INJECTION = "error-injection"
CODEBOOK = "codebook"


class RankDeficientError(np.linalg.LinAlgError):
    """The quantized channel matrix cannot be zero-forced."""


def crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    """Circularly-symmetric complex Gaussian entries with unit variance."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


class ChannelSet(NamedTuple):
    singles: np.ndarray  # (M1, N_t)
    strong: np.ndarray   # (P, N_t)
    weak: np.ndarray     # (P, N_t)
    errors: np.ndarray   # (P, N_t), the innovation e of each pair


def gen_channels(n_tx: int, n_singletons: int, pairs, rng: np.random.Generator) -> ChannelSet:
    """Singleton and pair channels, ``h_w = c (rho h_s + sqrt(1 - rho^2) e)``.

    ``pairs`` is a sequence of :class:`~beamalloc.model.PairProfile`; ``c`` and
    ``rho`` are the square roots of ``c_sq`` and ``rho_sq``.
    """
    if n_tx < 1 or n_singletons < 0:
        raise DomainError("n_tx must be positive and n_singletons nonnegative")
    singles = crandn(rng, n_singletons, n_tx)
    n_p = len(pairs)
    strong = crandn(rng, n_p, n_tx)
    errors = crandn(rng, n_p, n_tx)
    c = np.array([math.sqrt(p.c_sq) for p in pairs]).reshape(-1, 1)
    rho_sq = np.array([p.rho_sq for p in pairs]).reshape(-1, 1)
    weak = c * (np.sqrt(rho_sq) * strong + np.sqrt(1.0 - rho_sq) * errors)
    return ChannelSet(singles, strong, weak, errors)


def normalize_rows(h: np.ndarray) -> np.ndarray:
    h = np.atleast_2d(h)
    n = np.linalg.norm(h, axis=1, keepdims=True)
    if np.any(n == 0):
        raise DomainError("cannot normalize a zero channel")
    return h / n


def quantize_cdi(h_bar: np.ndarray, bits: float, mode: str, rng: np.random.Generator) -> np.ndarray:
    """Quantize one unit-norm direction with ``bits`` bits.

    ``"codebook"`` picks the best of ``2**bits`` i.i.d. isotropic unit vectors
    (first index on ties; ``bits`` must be an integer at most 24).
    ``"error-injection"`` returns ``sqrt(1-z) h_bar + sqrt(z) u`` with ``u`` a
    random unit vector orthogonal to ``h_bar`` and ``z = 2**(-bits/N_t)``, so
    ``1 - |h_hat^H h_bar|^2 = z`` exactly.
    """
    h_bar = np.asarray(h_bar, dtype=complex)
    n_tx = h_bar.size
    if not bits >= 0:
        raise DomainError("bits must be nonnegative")
    if mode == ERROR_INJECTION:
        z = 2.0 ** (-bits / n_tx)
        g = crandn(rng, n_tx)
        u = g - h_bar * np.vdot(h_bar, g)
        u /= np.linalg.norm(u)
        return math.sqrt(1.0 - z) * h_bar + math.sqrt(z) * u
    if mode == CODEBOOK:
        if bits > CODEBOOK_MAX_BITS or bits != int(bits):
            raise DomainError(f"codebook mode needs an integer bit count up to {CODEBOOK_MAX_BITS}")
        size = 1 << int(bits)
        best, best_val = None, -1.0
        for start in range(0, size, _CODEBOOK_CHUNK):
            cb = normalize_rows(crandn(rng, min(_CODEBOOK_CHUNK, size - start), n_tx))
            corr = np.abs(cb.conj() @ h_bar)
            j = int(np.argmax(corr))
            if corr[j] > best_val:
                best, best_val = cb[j], corr[j]
        return best
    raise DomainError(f"unknown quantizer mode {mode!r}")


def zf_precoder(h_hat: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    """Unit-norm zeroforcing columns for the rows of ``h_hat``.

    Column ``m`` satisfies ``h_hat[j]^H w_m = 0`` for ``j != m``.
    """
    h_hat = np.atleast_2d(h_hat)
    m, n_tx = h_hat.shape
    if m > n_tx:
        raise RankDeficientError(f"cannot zero-force {m} beams with {n_tx} antennas")
    a = h_hat.conj()
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] <= rcond * s[0]:
        raise RankDeficientError(f"quantized channel matrix is rank deficient (cond {s[0] / s[-1]:.3g})")
    w = np.linalg.pinv(a)
    return w / np.linalg.norm(w, axis=0, keepdims=True)


def rzf_precoder(h_hat: np.ndarray, phi: float) -> np.ndarray:
    """Regularized zeroforcing ``v_n = (H^H H + phi N_t I)^-1 h_n`` (columns).

    Rows of ``h_hat`` are unit-norm CDI; they enter scaled by ``sqrt(N_t)`` so
    that ``phi`` is measured against unit-variance channels. ``phi = 0`` is
    plain zeroforcing and needs ``K <= N_t``.
    """
    h_hat = np.atleast_2d(h_hat)
    k, n_tx = h_hat.shape
    if phi < 0:
        raise DomainError("phi must be nonnegative")
    if phi == 0:
        if k > n_tx:
            raise RankDeficientError("phi = 0 needs K <= N_t")
        return zf_precoder(h_hat)
    hs = h_hat.T  # columns h_n
    if k < n_tx:
        # push-through: (H^H H + c I)^-1 H^H = H^H (H H^H + c I)^-1
        gram = hs.conj().T @ hs + phi * np.eye(k)
        v = hs @ np.linalg.solve(gram, np.eye(k))
    else:
        gram = hs @ hs.conj().T + phi * np.eye(n_tx)
        v = np.linalg.solve(gram, hs)
    return v / n_tx


def beam_powers(scenario: ScenarioConfig, grouping: Grouping, allocation: Allocation,
                p_tot: float = 1.0) -> np.ndarray:
    """Per-beam power ``zeta_g P_tot / K``; sums to ``P_tot`` on a full allocation."""
    k = scenario.dims.n_users
    zeta = np.asarray(allocation.zeta)
    return zeta[np.asarray(grouping.assignment)] * p_tot / k


class NomaSinrs(NamedTuple):
    singles: np.ndarray
    strong: np.ndarray
    weak: np.ndarray


def instant_sinr_noma(channels: ChannelSet, w: np.ndarray, p_beam: np.ndarray,
                      p_strong: np.ndarray, p_weak: np.ndarray, sigma_sq: float) -> NomaSinrs:
    """Instantaneous SINRs with perfect SIC at the strong users.

    Beams ``0..M1-1`` serve the singletons, the rest serve pairs in order.
    ``p_strong`` and ``p_weak`` split the pair beams' power.
    """
    if np.any(np.linalg.norm(w, axis=0) == 0):
        raise DomainError("zero-norm precoder column")
    m1 = channels.singles.shape[0]
    n_p = channels.strong.shape[0]

    def gains(h):
        return np.abs(h.conj() @ w) ** 2  # (users, beams)

    g_l, g_s, g_w = gains(channels.singles), gains(channels.strong), gains(channels.weak)
    total_l = g_l @ p_beam
    own_l = g_l[np.arange(m1), np.arange(m1)]
    singles = p_beam[:m1] * own_l / (total_l - p_beam[:m1] * own_l + sigma_sq)
    idx = m1 + np.arange(n_p)
    own_s = g_s[np.arange(n_p), idx]
    strong = p_strong * own_s / (g_s @ p_beam - p_beam[idx] * own_s + sigma_sq)
    own_w = g_w[np.arange(n_p), idx]
    weak = p_weak * own_w / (g_w @ p_beam - p_beam[idx] * own_w + p_strong * own_w + sigma_sq)
    return NomaSinrs(singles, strong, weak)


def instant_sinr_oma(h: np.ndarray, c: np.ndarray, v: np.ndarray, p: np.ndarray,
                     sigma_sq: float) -> np.ndarray:
    """Per-user SINR ``p_n c_n^2 |h_n^H v_n|^2 / ||v_n||^2`` over interference plus noise."""
    norms = np.linalg.norm(v, axis=0)
    if np.any(norms == 0):
        raise DomainError("zero-norm precoder column")
    g = np.abs(h.conj() @ (v / norms)) ** 2 * (np.asarray(c) ** 2)[:, None]
    own = np.diag(g)
    return p * own / (g @ p - p * own + sigma_sq)


@dataclass
class TrialRecord:
    trial: int
    sinrs: dict
    cond: float
    zf_residual: float = 0.0


@dataclass
class TrialSummary:
    """Per-user means, rates and standard errors over the successful trials."""

    mean_sinr: dict
    stderr_sinr: dict
    mean_rate: dict
    class_mean: dict
    min_mean_sinr: float
    n_trials: int
    n_failed: int
    seed: int
    max_zf_residual: float = 0.0
    records: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        def lst(d):
            return {k: [float(x) for x in v] for k, v in d.items()}
        return {"mean_sinr": lst(self.mean_sinr), "stderr_sinr": lst(self.stderr_sinr),
                "mean_rate": lst(self.mean_rate),
                "class_mean": {k: float(v) for k, v in self.class_mean.items()},
                "min_mean_sinr": self.min_mean_sinr, "n_trials": self.n_trials,
                "n_failed": self.n_failed, "seed": self.seed,
                "max_zf_residual": self.max_zf_residual}


def _quantize_rows(hbar, bits, mode, rng):
    return np.array([quantize_cdi(h, b, mode, rng) for h, b in zip(hbar, bits)]).reshape(hbar.shape)


def _noma_trial(args):
    scenario, grouping, allocation, seq, mode, trial = args
    rng = np.random.default_rng(seq)
    n_tx = scenario.n_tx
    m1 = scenario.n_singletons
    ch = gen_channels(n_tx, m1, scenario.pairs, rng)
    assign = np.asarray(grouping.assignment)
    bits = np.asarray(allocation.b_bar)[assign] * n_tx
    dirs = normalize_rows(np.vstack([ch.singles, ch.strong]))
    h_hat = _quantize_rows(dirs, bits, mode, rng)
    try:
        w = zf_precoder(h_hat)
    except RankDeficientError:
        return None
    resid = np.abs(h_hat.conj() @ w)
    np.fill_diagonal(resid, 0.0)
    p = beam_powers(scenario, grouping, allocation)
    c_sq = np.array([q.c_sq for q in scenario.pairs])
    alpha = np.zeros(len(scenario.pairs)) if allocation.alpha is None else allocation.alpha
    ps, pw = ftpa_split(c_sq, alpha, p[m1:]) if len(c_sq) else (np.zeros(0), np.zeros(0))
    s = instant_sinr_noma(ch, w, p, np.atleast_1d(ps), np.atleast_1d(pw), scenario.sigma_tilde)
    sv = np.linalg.svd(h_hat, compute_uv=False)
    return TrialRecord(trial, {"singleton": s.singles, "strong": s.strong, "weak": s.weak},
                       float(sv[0] / sv[-1]), float(resid.max(initial=0.0)))


def _oma_trial(args):
    scenario, grouping, allocation, seq, mode, trial = args
    rng = np.random.default_rng(seq)
    n_tx = scenario.n_tx
    h = crandn(rng, scenario.n_users, n_tx)
    assign = np.asarray(grouping.assignment)
    bits = np.asarray(allocation.b_bar)[assign] * n_tx
    h_hat = _quantize_rows(normalize_rows(h), bits, mode, rng)
    v = rzf_precoder(h_hat, allocation.phi)
    p = np.asarray(allocation.zeta)[assign] / scenario.n_users
    c = np.sqrt(np.asarray(scenario.c_sq))
    sinr = instant_sinr_oma(h, c, v, p, scenario.sigma_tilde)
    return TrialRecord(trial, {"user": sinr}, float("nan"))


def trial_seeds(seed: int, n_trials: int) -> list:
    """Independent per-trial streams derived from ``(seed, trial index)``."""
    return np.random.SeedSequence(seed).spawn(n_trials)


def _run(fn, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [fn(j) for j in jobs]


def _summarize(records, n_trials, seed, keep_records) -> TrialSummary:
    ok = [r for r in records if r is not None]
    if not ok:
        raise RankDeficientError("every trial failed")
    keys = list(ok[0].sinrs)
    stack = {k: np.array([r.sinrs[k] for r in ok]) for k in keys}
    n = len(ok)
    mean = {k: v.mean(axis=0) for k, v in stack.items()}
    se = {k: (v.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(v.shape[1], np.nan))
          for k, v in stack.items()}
    rate = {k: np.log2(1.0 + v).mean(axis=0) for k, v in stack.items()}
    cls = {k: float(v.mean()) for k, v in stack.items() if v.size}
    means = [m for m in mean.values() if m.size]
    return TrialSummary(mean, se, rate, cls, float(min(m.min() for m in means)), n,
                        len(records) - n, seed,
                        max(r.zf_residual for r in ok), ok if keep_records else [])


def run_trials(scenario: ScenarioConfig, grouping: Grouping, allocation: Allocation,
               n_trials: int, seed: int, quantizer: str = ERROR_INJECTION,
               workers: int | None = None, keep_records: bool = False) -> TrialSummary:
    """Monte Carlo NOMA link simulation of an allocation.

    Trials whose quantized channel matrix is rank deficient are counted in
    ``n_failed`` and left out; they are not redrawn. Results depend only on
    ``seed``, not on ``workers``.
    """
    if n_trials < 1:
        raise DomainError("n_trials must be at least 1")
    grouping.check(scenario)
    jobs = [(scenario, grouping, allocation, s, quantizer, i)
            for i, s in enumerate(trial_seeds(seed, n_trials))]
    return _summarize(_run(_noma_trial, jobs, workers), n_trials, seed, keep_records)


def run_oma_trials(scenario: OmaConfig, grouping: Grouping, allocation: Allocation,
                   n_trials: int, seed: int, quantizer: str = ERROR_INJECTION,
                   workers: int | None = None, keep_records: bool = False) -> TrialSummary:
    """Monte Carlo regularized-zeroforcing OMA simulation of an allocation."""
    if n_trials < 1:
        raise DomainError("n_trials must be at least 1")
    if allocation.phi is None or not allocation.phi > 0:
        raise DomainError("OMA simulation needs a positive phi")
    grouping.check(scenario)
    jobs = [(scenario, grouping, allocation, s, quantizer, i)
            for i, s in enumerate(trial_seeds(seed, n_trials))]
    return _summarize(_run(_oma_trial, jobs, workers), n_trials, seed, keep_records)
