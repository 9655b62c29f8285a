import numpy as np
import pytest

from fedslice.config import ConfigError, validate_scenario_config
from fedslice.network import (GAIN_FLOOR, build_scenario, channel_gain,
                              prb_bandwidth)


def test_prb_bandwidth_values():
    assert prb_bandwidth(1) == 360_000.0
    assert prb_bandwidth(0) == 180_000.0
    assert prb_bandwidth(3) == 1_440_000.0


def test_prb_bandwidth_doubles_per_numerology():
    for g in range(6):
        assert prb_bandwidth(g + 1) == 2 * prb_bandwidth(g)


def test_prb_bandwidth_rejects_negative():
    with pytest.raises(ValueError):
        prb_bandwidth(-1)


def test_channel_gain_reference_point():
    assert channel_gain(1.0, 1.0) == pytest.approx(1e-3, rel=1e-12)
    assert channel_gain(10.0, 1.0) == pytest.approx(1e-6, rel=1e-12)
    # D2D exponent is steeper
    assert channel_gain(10.0, 1.0, d2d=True) < channel_gain(10.0, 1.0)


def test_channel_gain_floor_and_clamp():
    assert channel_gain(100.0, 0.0) == GAIN_FLOOR
    with pytest.warns(UserWarning):
        g = channel_gain(0.2, 1.0)
    assert g == pytest.approx(1e-3, rel=1e-12)   # clamped to reference distance


def _cfg(**over):
    base = {"seed": 3, "oru_positions_m": [[0.0, 0.0], [100.0, 100.0]],
            "flus_per_oru": [2, 3]}
    base.update(over)
    return base


def test_build_scenario_counts_and_membership():
    sc = build_scenario(_cfg())
    assert sc.n_orus == 2
    assert sc.n_flus == 5
    assert sc.cell_members(0) == [0, 1]
    assert sc.cell_members(1) == [2, 3, 4]
    # placement stays within the disc
    for u in range(sc.n_flus):
        b = sc.flu_cell[u]
        d = np.linalg.norm(sc.flu_positions[u]
                           - np.array(sc.orus[b].position))
        assert d <= sc.placement_radius + 1e-9


def test_build_scenario_deterministic():
    a = build_scenario(_cfg())
    b = build_scenario(_cfg())
    assert np.array_equal(a.flu_positions, b.flu_positions)
    assert [f.p_max for f in a.flus] == [f.p_max for f in b.flus]
    ca, cb = a.channels(), b.channels()
    assert np.array_equal(ca.oru_flu_gains(0, 1), cb.oru_flu_gains(0, 1))
    assert np.array_equal(ca.flu_flu_gains(2, 0), cb.flu_flu_gains(2, 0))


def test_channel_gains_vary_per_fgti_and_stay_positive():
    sc = build_scenario(_cfg())
    ch = sc.channels()
    g0, g1 = ch.oru_flu_gains(0, 0), ch.oru_flu_gains(0, 1)
    assert not np.array_equal(g0, g1)
    assert (g0 >= GAIN_FLOOR).all()
    gff = ch.flu_flu_gains(0, 0)
    assert np.allclose(gff, gff.T)


def test_degenerate_scenario_without_flus():
    sc = build_scenario(_cfg(oru_positions_m=[[0.0, 0.0]], flus_per_oru=[0]))
    assert sc.n_flus == 0
    assert sc.cell_members(0) == []


def test_config_error_carries_field_path():
    with pytest.raises(ConfigError) as ei:
        validate_scenario_config(_cfg(flus_per_oru=[2]))
    assert ei.value.field_path == "flus_per_oru"
    with pytest.raises(ConfigError) as ei:
        validate_scenario_config(_cfg(bogus_field=1))
    assert ei.value.field_path == "bogus_field"
    with pytest.raises(ConfigError) as ei:
        validate_scenario_config(_cfg(flus_per_oru=[2, -1]))
    assert "flus_per_oru[1]" == ei.value.field_path
