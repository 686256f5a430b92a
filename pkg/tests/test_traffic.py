import math

import numpy as np
import pytest

from xrsched.errors import ConfigError, ContractError, GenerationError
from xrsched.scheduler import TrafficType, UeContext
from xrsched.traffic import (
    TruncatedGaussianParams,
    XrTrafficConfig,
    embb_has_data,
    generate_frame_arrivals,
    make_pdu_set,
    sample_truncated_gaussian,
    segment_frame,
)


def test_defaults_match_reference_traffic():
    cfg = XrTrafficConfig()
    assert cfg.frame_rate == 60
    assert cfg.frame_size_dist == TruncatedGaussianParams(93, 10, 46, 141)
    assert cfg.jitter_dist == TruncatedGaussianParams(0, 2, -4, 4)
    assert cfg.pdu_payload_bytes == 1500
    assert cfg.period_ms == pytest.approx(16.6666666667)


@pytest.mark.parametrize("args", [
    (0, -1, -4, 4),          # negative std
    (5, 1, -4, 4),           # mean above upper
    (0, 1, 1, 1),            # empty interval with spread
    (float("nan"), 1, 0, 1),
])
def test_invalid_truncated_gaussian(args):
    with pytest.raises(ConfigError):
        TruncatedGaussianParams(*args)


@pytest.mark.parametrize("kwargs", [{"frame_rate": 0}, {"psdb_ms": 0}, {"pdu_payload_bytes": 0}])
def test_invalid_traffic_config(kwargs):
    with pytest.raises(ConfigError):
        XrTrafficConfig(**kwargs)


def test_jitter_sample_within_bounds():
    rng = np.random.default_rng(3)
    p = TruncatedGaussianParams(0, 2, -4, 4)
    assert all(-4 <= sample_truncated_gaussian(p, rng) <= 4 for _ in range(2000))


def test_zero_std_returns_mean():
    assert sample_truncated_gaussian(TruncatedGaussianParams(93, 0, 46, 141), np.random.default_rng(0)) == 93


def test_frame_size_sample_mean():
    # truncated mean of TN(93, 10, 46, 141) is 93.000024 (closed form)
    rng = np.random.default_rng(11)
    p = TruncatedGaussianParams(93, 10, 46, 141)
    xs = np.array([sample_truncated_gaussian(p, rng) for _ in range(100_000)])
    assert abs(xs.mean() - 93.0) <= 0.3
    assert xs.min() >= 46 and xs.max() <= 141


def test_zero_jitter_arrivals_are_periodic():
    cfg = XrTrafficConfig(jitter_dist=TruncatedGaussianParams(0, 0, 0, 0))
    arr = generate_frame_arrivals(cfg, 100.0, np.random.default_rng(0))
    assert [round(t, 3) for t, _ in arr] == [0.0, 16.667, 33.333, 50.0, 66.667, 83.333]


def test_jittered_arrivals_near_nominal_and_ordered():
    cfg = XrTrafficConfig()
    arr = generate_frame_arrivals(cfg, 5000.0, np.random.default_rng(5), offset_ms=7.0)
    for n, (t, size) in enumerate(arr):
        nominal = 7.0 + n * cfg.period_ms
        assert abs(t - nominal) <= 4 + 1e-12
        assert 46_000 <= size <= 141_000
    times = [t for t, _ in arr]
    assert times == sorted(times) and len(set(times)) == len(times)


def test_arrivals_clamped_at_zero_and_cut_at_duration():
    arr = generate_frame_arrivals(XrTrafficConfig(), 1000.0, np.random.default_rng(1))
    assert arr[0][0] >= 0.0
    assert all(t < 1000.0 for t, _ in arr)


def test_arrivals_need_positive_duration():
    with pytest.raises(ConfigError):
        generate_frame_arrivals(XrTrafficConfig(), 0.0, np.random.default_rng(0))


def test_offered_load_over_long_trace():
    cfg = XrTrafficConfig()
    assert cfg.mean_rate_bps == pytest.approx(44.64e6)
    arr = generate_frame_arrivals(cfg, 60_000.0, np.random.default_rng(2))
    rate = sum(b for _, b in arr) * 8 / 60.0
    assert abs(rate - 45e6) / 45e6 <= 0.02


@pytest.mark.parametrize("frame, count, last", [(93000, 62, 1500), (46000, 31, 1000), (1, 1, 1)])
def test_segment_frame(frame, count, last):
    pdus = segment_frame(frame, 1500)
    assert len(pdus) == count == math.ceil(frame / 1500)
    assert pdus[-1].size_bits == 8 * last
    assert all(p.size_bits == 8 * 1500 for p in pdus[:-1])
    assert sum(p.size_bits for p in pdus) == 8 * frame
    assert [p.pdu_index for p in pdus] == list(range(count))


@pytest.mark.parametrize("frame", [0, -10])
def test_segment_frame_rejects_empty(frame):
    with pytest.raises(GenerationError):
        segment_frame(frame, 1500)


def test_make_pdu_set_fields():
    ps = make_pdu_set(4, 2, 10.0, 93000, XrTrafficConfig(psdb_ms=15.0))
    assert ps.deadline_ms == 25.0 and ps.psdb_ms == 15.0
    assert ps.total_size_bits == 744_000 == sum(p.size_bits for p in ps.pdus)
    assert ps.served_bits == 0 and ps.unsent_bits == 744_000 and not ps.delivered
    assert ps.hol_delay_ms(12.5) == 2.5


def test_embb_always_has_data():
    ue = UeContext(0, TrafficType.EMBB)
    assert embb_has_data(ue)
    ue.tp_tracker.average_tp_bps = 1e6  # after heavy service
    assert embb_has_data(ue)
    with pytest.raises(ContractError):
        embb_has_data(UeContext(1, TrafficType.XR, psdb_ms=15.0))
