import numpy as np
import pytest

from beamalloc.model import DomainError, PairProfile, min_sinr
from beamalloc.progressive import FillParams, _GroupEval, bit_chunk, progressive_fill
from beamalloc.scenario import Grouping, ScenarioConfig, grouping_from_pair_labels

from conftest import mixed_scenario


def test_bit_chunk_example():
    p = FillParams(n_zeta0=10, n_b0=4, delta=0.5)
    assert bit_chunk(1, p, 1.0, 2) == pytest.approx(0.33333, abs=1e-5)
    assert bit_chunk(2, p, 1.0, 2) == pytest.approx(0.16667, abs=1e-5)
    with pytest.raises(DomainError):
        bit_chunk(3, p, 1.0, 2)


@pytest.mark.parametrize("delta", [0.1, 0.6, 0.95])
def test_bit_chunks_sum_and_decrease(delta):
    p = FillParams(n_zeta0=500, n_b0=50, delta=delta)
    G, B = 3, 2.5
    ch = np.array([bit_chunk(i, p, B, G) for i in range(1, p.n_b0 - G + 1)])
    assert ch.sum() == pytest.approx(B * (1 - G / p.n_b0), rel=1e-12)
    assert np.all(np.diff(ch) < 0)


def test_uniform_bits_option():
    p = FillParams(n_zeta0=20, n_b0=12, uniform_bits=True)
    ch = [bit_chunk(i, p, 1.0, 2) for i in range(1, 11)]
    assert ch == pytest.approx([0.1 * (1 - 2 / 12)] * 10)


def test_params_must_exceed_group_count():
    with pytest.raises(DomainError):
        FillParams(n_zeta0=3, n_b0=50).check(3)
    with pytest.raises(DomainError):
        FillParams(delta=1.0)


def test_single_group_gets_everything():
    sc = ScenarioConfig(32, 0, tuple(PairProfile(c, 0.9) for c in (0.2, 0.5, 0.8)), 2.0, 0.01)
    g = Grouping((0,) * 3, 1)
    alloc, _ = progressive_fill(sc, g)
    m = float(g.m_bar(sc.n_tx)[0])
    assert alloc.zeta[0] * m == pytest.approx(sc.dims.k_bar, rel=1e-12)
    assert alloc.b_bar[0] * m == pytest.approx(sc.b_hat_tot, rel=1e-12)


def test_symmetric_groups_end_level():
    # the geometric bit chunks break the symmetry, but the group SINRs equalize
    pairs = (PairProfile(0.4, 0.9),) * 8
    sc = ScenarioConfig(32, 0, pairs, 2.0, 0.01)
    g = grouping_from_pair_labels(sc, [0, 1] * 4)
    alloc, _ = progressive_fill(sc, g, FillParams(n_zeta0=202, n_b0=52))
    ev = _GroupEval(sc, g)
    g0, g1 = (ev(j, alloc.zeta[j], alloc.b_bar[j]) for j in range(2))
    assert g0 == pytest.approx(g1, rel=5e-3)


@pytest.mark.parametrize("seed", range(4))
def test_budgets_exhausted_and_trace_monotone(seed):
    sc = mixed_scenario(seed, 20, 1.5)
    g = grouping_from_pair_labels(sc, [k % 2 for k in range(len(sc.pairs))])
    alloc, trace = progressive_fill(sc, g)
    m_g = g.m_bar(sc.n_tx)
    assert alloc.power_usage(m_g) == pytest.approx(sc.dims.k_bar, abs=1e-10)
    assert alloc.bit_usage(m_g) == pytest.approx(sc.b_hat_tot, abs=1e-10)
    mins = np.array([r.min_sinr for r in trace])
    assert np.all(np.diff(mins) >= -1e-12)
    assert alloc.gamma_th == pytest.approx(min_sinr(sc, g, alloc)[0], rel=1e-10)


def test_iteration_count_at_defaults():
    # loop runs until both chunk pools are empty: max(N_zeta, N_B) - G rounds
    sc = mixed_scenario(1, 20, 1.0)
    g = grouping_from_pair_labels(sc, [k % 2 for k in range(len(sc.pairs))])
    alloc, trace = progressive_fill(sc, g)
    assert g.n_groups == 3
    assert alloc.iterations == 500 - 3
    assert sum(r.resource == "power" for r in trace) == 500 - 3
    assert sum(r.resource == "bits" for r in trace) == 50 - 3


def test_paper_literal_leaves_bits_unspent():
    sc = mixed_scenario(2, 20, 1.0)
    g = grouping_from_pair_labels(sc, [k % 2 for k in range(len(sc.pairs))])
    alloc, _ = progressive_fill(sc, g, paper_literal=True)
    # unscaled grants count M_g dB per group against the budget, so much of it is never used
    assert alloc.bit_usage(g.m_bar(sc.n_tx)) < sc.b_hat_tot
    assert alloc.diagnostics["paper_literal"]


def test_deterministic():
    sc = mixed_scenario(3, 20, 1.0)
    g = grouping_from_pair_labels(sc, [k % 3 for k in range(len(sc.pairs))])
    a, _ = progressive_fill(sc, g)
    b, _ = progressive_fill(sc, g)
    assert np.array_equal(a.zeta, b.zeta) and np.array_equal(a.b_bar, b.b_bar)
