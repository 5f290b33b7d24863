import numpy as np
import pytest

from beamalloc.model import Load, PairProfile
from beamalloc.scenario import (Allocation, Grouping, OmaConfig, ScenarioConfig, geometric_pairs,
                                random_pairs)

SNR25 = 10 ** (-2.5)


def mixed_scenario(seed: int, n_beams: int, b_hat_tot: float) -> ScenarioConfig:
    """N_t = 32, 25 dB, half singletons and half pairs, c2 in [0.2, 0.6], rho2 >= 0.8."""
    rng = np.random.default_rng(seed)
    m1 = n_beams // 2
    pairs = random_pairs(n_beams - m1, rng)
    return ScenarioConfig.from_snr_db(32, m1, pairs, b_hat_tot, 25.0, name=f"mixed-{seed}-{n_beams}")


def disc_cell_scenario(seed: int, b_hat_tot: float = 2.5) -> ScenarioConfig:
    """N_t = 64, 8 singletons, 28 pairs from the disc-cell placement, rho2 >= 0.7."""
    rng = np.random.default_rng(seed)
    pairs = geometric_pairs(28, rng, rho_sq_min=0.7)
    return ScenarioConfig.from_snr_db(64, 8, pairs, b_hat_tot, 25.0, name=f"disc-{seed}")


def three_group_setup(n_tx: int, b_bar: float):
    """Singletons plus two equal pair groups at fixed c = 0.8, rho = 0.95, alpha = 5."""
    m1 = n_tx // 8
    n_p = n_tx // 8
    pairs = (PairProfile(0.64, 0.9025),) * n_p
    sc = ScenarioConfig(n_tx, m1, pairs, b_bar * (m1 + n_p) / n_tx, 0.01, name=f"three-group-{n_tx}")
    grouping = Grouping(tuple([0] * m1 + [1] * (n_p // 2) + [2] * (n_p // 2)), 3)
    alloc = Allocation(np.full(3, 1.5), np.full(3, b_bar), alpha=np.full(n_p, 5.0))
    return sc, grouping, alloc


def full_load_oma_scenario(seed: int, b_hat_tot: float) -> OmaConfig:
    """N_t = K = 32 OMA users with c2 uniform on [0.1, 1] at 25 dB."""
    rng = np.random.default_rng(seed)
    return OmaConfig(32, tuple(rng.uniform(0.1, 1.0, 32)), b_hat_tot, SNR25)


@pytest.fixture
def half_load():
    return Load(k_bar=0.5, m_bar=0.5)
