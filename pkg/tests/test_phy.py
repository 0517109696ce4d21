import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from hbfsim.phy import (
    BLER_CURVE,
    MCS_TABLE,
    SLOT,
    McsTable,
    PhyConfig,
    bler,
    linear_to_db,
    select_mcs,
    sinr_dl,
    sinr_ul,
    transport_block_bits,
    wideband,
)

PHY = PhyConfig()


def test_numerology():
    assert PHY.subcarrier_spacing == 60e3
    assert PHY.n_subcarriers == 3300
    assert PHY.symbol_duration == pytest.approx(17.857e-6, rel=1e-4)
    assert PHY.slot_duration * PHY.slots_per_subframe == pytest.approx(1e-3)
    assert PHY.slot_duration == pytest.approx(250e-6)
    assert PHY.subcarrier_spacing * PHY.n_subcarriers <= PHY.bandwidth_hz
    assert SLOT.n_data_symbols == 12 and SLOT.first_data_symbol == 1
    assert len(PHY.evaluation_subcarriers()) == 275


def test_noise_and_power():
    # -174 dBm/Hz + 5 dB over 60 kHz
    assert 10 * math.log10(PHY.noise_power) + 30 == pytest.approx(-174 + 5 + 10 * math.log10(60e3))
    assert PHY.power_per_subcarrier("DL") == pytest.approx(1.0 / 3300)
    assert PHY.noise_over_power() == pytest.approx(PHY.noise_power / 1.0)


def test_mcs_table_invariants():
    eff = np.array(MCS_TABLE.efficiencies)
    assert len(MCS_TABLE) == 15 and eff[0] == 0.2 and eff[-1] == 5.5
    assert 3.64 in MCS_TABLE.efficiencies and 1.82 in MCS_TABLE.efficiencies
    assert np.all(np.diff(MCS_TABLE.thresholds_db) > 0)
    assert MCS_TABLE.threshold(9) == pytest.approx(10 * math.log10(10**0.3 * (2**3.64 - 1)), abs=1e-12)
    with pytest.raises(ValueError):
        McsTable(efficiencies=(1.0, 0.5))


def test_select_mcs_boundaries():
    assert select_mcs(-50.0) == 0
    assert select_mcs(MCS_TABLE.threshold(7)) == 7
    assert select_mcs(np.nextafter(MCS_TABLE.threshold(7), -np.inf)) == 6
    assert select_mcs(80.0) == 14


def test_select_mcs_monotone_sweep():
    values = [select_mcs(s) for s in np.linspace(-20, 40, 6001)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_bler_anchors():
    for m in range(len(MCS_TABLE)):
        t = MCS_TABLE.threshold(m)
        assert bler(t, m) == pytest.approx(1e-2, abs=1e-4)
        assert bler(t - 6.0, m) >= 0.99
    assert BLER_CURVE(-1e6, 0.0) == 1.0 and BLER_CURVE(1e6, 0.0) == 0.0


@given(st.floats(-40, 40), st.floats(1e-3, 10))
def test_bler_strictly_decreasing(s, step):
    lo, hi = float(bler(s, 5)), float(bler(s + step, 5))
    assert hi <= lo
    if 1e-12 < lo < 1 - 1e-12:
        assert hi < lo


def test_transport_block_bits():
    assert transport_block_bits(9, 1, 3300) == 12012
    assert transport_block_bits(5, 2, 3300) == 12012
    assert transport_block_bits(0, 1, 3300) == 660
    with pytest.raises(ValueError):
        transport_block_bits(0, 0, 3300)


def _cross(g):
    return np.asarray(g, dtype=complex)[:, :, None]


def test_sinr_single_layer_is_snr():
    L = np.array([1e-10])
    g = _cross([[30.0]])
    snr = L[0] * 900 * PHY.power_per_subcarrier("DL") / PHY.noise_power
    assert sinr_dl(g, L, 0, PHY.power_per_subcarrier("DL"), PHY.noise_power)[0] == pytest.approx(snr)
    assert sinr_ul(g, L, 0, PHY.power_per_subcarrier("UL"), PHY.noise_power)[0] == pytest.approx(snr)


def test_sinr_zero_forcing_equals_snr():
    L = np.array([1e-10, 3e-11])
    g = _cross([[20.0, 0.0], [0.0, 10.0]])
    for u in range(2):
        snr = L[u] * abs(g[u, u, 0]) ** 2 * 1e-3 / 1e-12
        assert sinr_dl(g, L, u, 1e-3, 1e-12)[0] == pytest.approx(snr)
        assert sinr_ul(g, L, u, 1e-3, 1e-12)[0] == pytest.approx(snr)


def test_sinr_symmetric_two_users_is_zero_db():
    g = _cross(np.ones((2, 2)))
    L = np.array([1.0, 1.0])
    assert linear_to_db(sinr_dl(g, L, 0, 1.0, 1e-12))[0] == pytest.approx(0.0, abs=1e-6)


def test_sinr_ul_near_interferer_is_minus_20_db():
    g = _cross(np.ones((2, 2)))
    L = np.array([1e-10, 1e-8])
    assert linear_to_db(sinr_ul(g, L, 0, 1.0, 1e-30))[0] == pytest.approx(-20.0, abs=1e-6)
    # DL is immune to the interferer's pathloss
    assert linear_to_db(sinr_dl(g, L, 0, 1.0, 1e-30))[0] == pytest.approx(0.0, abs=1e-6)


@given(st.integers(0, 2**31), st.integers(1, 5))
def test_sinr_matches_oracle_and_is_bounded_by_snr(seed, n):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, n, 3)) + 1j * rng.standard_normal((n, n, 3))
    L = rng.uniform(1e-3, 1.0, n)
    P, N = 0.7, 0.05
    for u in range(n):
        dl, ul = sinr_dl(g, L, u, P, N), sinr_ul(g, L, u, P, N)
        for k in range(3):
            gk = g[:, :, k]
            assert dl[k] == pytest.approx(oracles.sinr_dl(gk, L, u, P, N), rel=1e-12)
            assert ul[k] == pytest.approx(oracles.sinr_ul(gk, L, u, P, N), rel=1e-12)
        snr = L[u] * np.abs(g[u, u]) ** 2 * P / N
        assert np.all(dl <= snr * (1 + 1e-12)) and np.all(ul <= snr * (1 + 1e-12))


@given(st.integers(0, 2**31))
def test_dl_ul_coincide_for_symmetric_channels(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 3, 2)) + 1j * rng.standard_normal((3, 3, 2))
    g = a + a.transpose(1, 0, 2)
    L = np.full(3, 0.3)
    for u in range(3):
        np.testing.assert_allclose(sinr_dl(g, L, u, 1.0, 0.1), sinr_ul(g, L, u, 1.0, 0.1), rtol=1e-12)


def test_wideband_is_mean():
    assert wideband([1.0, 3.0]) == 2.0
