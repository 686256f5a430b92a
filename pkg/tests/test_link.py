import dataclasses
import math

import numpy as np
import pytest

from xrsched.errors import ConfigError
from xrsched.link import (
    NUM_CBG,
    LinkConfig,
    McsEntry,
    TransportBlock,
    bits_per_prb,
    cbg_failure_probability,
    compute_avg_sinr,
    default_mcs_table,
    draw_cbg_outcomes,
    olla_update,
    pathloss_db,
    select_link,
    select_mcs,
)
from xrsched.sim import SimConfig

TABLE = default_mcs_table()


def test_mcs_table_shape():
    assert len(TABLE) == 15
    assert TABLE[0].spectral_efficiency == pytest.approx(0.2)
    assert TABLE[-1].spectral_efficiency == pytest.approx(7.4)
    ses = [m.spectral_efficiency for m in TABLE]
    thr = [m.sinr_threshold_db for m in TABLE]
    assert ses == sorted(ses) and thr == sorted(thr)
    # inverse Shannon: 10log10(2^SE - 1)
    assert TABLE[0].sinr_threshold_db == pytest.approx(-8.276938359142397, rel=1e-9)
    assert TABLE[-1].sinr_threshold_db == pytest.approx(22.25042968728709, rel=1e-9)


@pytest.mark.parametrize("se, bits", [(4.0, 624), (7.4, 1154), (0.2, 31)])
def test_bits_per_prb(se, bits):
    assert bits_per_prb(McsEntry(0, se, 0.0)) == bits


def test_select_mcs_clamps_and_boundary():
    assert select_mcs(-100, 0, TABLE) is TABLE[0]
    assert select_mcs(100, 0, TABLE) is TABLE[-1]
    m = TABLE[6]
    assert select_mcs(m.sinr_threshold_db, 0.0, TABLE) is m
    assert select_mcs(m.sinr_threshold_db - 1e-9, 0.0, TABLE) is TABLE[5]
    # the offset adds to the report
    assert select_mcs(m.sinr_threshold_db - 2.0, 2.0, TABLE) is m


def test_select_link_prefers_two_layers_at_high_sinr():
    cfg = LinkConfig()
    mcs, layers = select_link(30.0, 0.0, cfg)
    assert layers == 2
    assert mcs == select_mcs(30.0 - 10 * math.log10(2), 0.0, TABLE)
    _, layers1 = select_link(-7.0, 0.0, cfg)
    assert layers1 == 1


def test_pathloss_clamps_distance():
    cfg = LinkConfig()
    assert pathloss_db(0.0, cfg) == pathloss_db(1.0, cfg) == 38.0
    assert pathloss_db(10.0, cfg) == pytest.approx(58.0)


def test_sinr_at_serving_site_is_positive():
    cells = SimConfig(num_cells=12).cell_positions()
    sinr = compute_avg_sinr(cells[0], 0, cells, config=LinkConfig(serving_beam_gain_db=0.0))
    assert sinr > 0


def test_sinr_symmetric_two_cells():
    cfg = LinkConfig(serving_beam_gain_db=0.0, noise_figure_db=-100.0)
    cells = [(0.0, 0.0), (20.0, 0.0)]
    assert compute_avg_sinr((10.0, 5.0), 0, cells, config=cfg) == pytest.approx(0.0, abs=1e-6)


def test_median_sinr_in_operating_window():
    cfg = SimConfig()
    cells = cfg.cell_positions()
    rng = np.random.default_rng(0)
    sinrs = []
    for _ in range(500):
        p = rng.uniform((0, 0), (cfg.world_width_m, cfg.world_height_m))
        c = int(np.argmin(np.hypot(cells[:, 0] - p[0], cells[:, 1] - p[1])))
        shadow = rng.normal(0, cfg.link.shadowing_std_db, len(cells))
        sinrs.append(compute_avg_sinr(p, c, cells, shadow, cfg.link))
    assert 0 <= np.median(sinrs) <= 30


def test_world_is_120_by_50():
    cfg = SimConfig()
    assert (cfg.world_width_m, cfg.world_height_m) == (120.0, 50.0)


def test_cbg_error_at_threshold_matches_target():
    cfg = LinkConfig()
    m = TABLE[7]
    assert cbg_failure_probability(m.sinr_threshold_db, m, 1, cfg) == pytest.approx(0.125, rel=1e-12)


def test_chase_combining_lowers_error():
    m = TABLE[7]
    ps = [cbg_failure_probability(m.sinr_threshold_db, m, n) for n in (1, 2, 3, 4)]
    assert all(b < a for a, b in zip(ps, ps[1:]))


def test_cbg_draw_tails():
    rng = np.random.default_rng(0)
    m = TABLE[7]
    tb = TransportBlock(0, 8000, m, 1, 10)
    assert all(draw_cbg_outcomes(tb, m.sinr_threshold_db + 40, m, 1, rng))
    assert not any(draw_cbg_outcomes(tb, m.sinr_threshold_db - 40, m, 1, rng))


def test_decoded_cbgs_stay_decoded():
    rng = np.random.default_rng(0)
    m = TABLE[7]
    tb = TransportBlock(0, 8000, m, 1, 10)
    tb.cbg_states = [True, False] * 4
    out = draw_cbg_outcomes(tb, -50.0, m, 2, rng)
    assert out == [True, False] * 4
    with pytest.raises(ValueError):
        draw_cbg_outcomes(tb, 0.0, m, 0, rng)


def test_empty_cbgs_count_as_decoded():
    tb = TransportBlock(0, 3, TABLE[0], 1, 1)
    assert tb.failed_cbgs == 3
    assert sum(tb.cbg_states) == NUM_CBG - 3


def test_segment_to_cbg_mapping():
    tb = TransportBlock(0, 800, TABLE[0], 1, 1, [("a", None, 100), ("b", None, 250), ("c", None, 450)])
    spans = [(s[0], f, l) for s, f, l in tb.segment_cbgs()]
    assert spans == [("a", 0, 0), ("b", 1, 3), ("c", 3, 7)]


def test_olla_update_examples():
    assert olla_update(0.0, [True] * 8) == pytest.approx(0.5714285714285714, rel=1e-12)
    assert olla_update(0.0, [False] + [True] * 7) == pytest.approx(0.0, abs=1e-12)
    assert olla_update(10.0, [True] * 8) == 10.0
    assert olla_update(-10.0, [False] * 8) == -10.0


@pytest.mark.parametrize("kwargs", [{"olla_target": 1.0}, {"max_harq_tx": 0}, {"max_layers": 0},
                                    {"mcs_table": ()}, {"bler_slope_db": 0.0}])
def test_link_config_validation(kwargs):
    with pytest.raises(ConfigError):
        LinkConfig(**kwargs)


def test_link_config_is_frozen():
    with pytest.raises(dataclasses.FrozenInstanceError):
        LinkConfig().olla_step_db = 1.0
