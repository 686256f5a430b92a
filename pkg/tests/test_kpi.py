import math

import pytest

from xrsched.kpi import (
    avg_queued_ues,
    ccdf_at,
    delay_ccdf,
    delay_percentile,
    embb_cell_tp,
    satisfaction_ratio,
    ue_satisfied,
    xr_capacity,
    xr_capacity_detail,
)
from xrsched.sim import KpiRecord


def record(delays=(), ue=0, cell=0, psdb=15.0, **kw):
    rec = KpiRecord(0, psdb, kw.pop("duration_ms", 10_000.0), kw.pop("warmup_ms", 0.0), kw.pop("num_cells", 1), **kw)
    for i, d in enumerate(delays):
        t = 100.0 + 20 * i
        rec.sets.append((cell, ue, i, 1000, t, None if d is None else t + d, 1000, 1000 if d is not None else 0))
    return rec


def ue_record(in_time, total, ue, psdb=15.0):
    return record([5.0] * in_time + [30.0] * (total - in_time), ue=ue, psdb=psdb, duration_ms=1e6)


def test_threshold_at_540_sets():
    assert not ue_satisfied(534, 540)
    assert ue_satisfied(540, 540)
    assert ue_satisfied(535, 540)  # 0.99074
    assert not ue_satisfied(0, 0)


def test_satisfaction_ratio_counts_ues():
    recs = [ue_record(540, 540, ue) for ue in range(9)] + [ue_record(534, 540, 9)]
    assert satisfaction_ratio(recs) == pytest.approx(0.9)
    assert satisfaction_ratio([ue_record(540, 540, 0)]) == 1.0


def test_satisfaction_uses_given_budget():
    rec = record([12.0] * 10, duration_ms=1e6)
    assert satisfaction_ratio([rec], psdb_ms=15.0) == 1.0
    assert satisfaction_ratio([rec], psdb_ms=10.0) == 0.0


def test_kpi_window_excludes_warmup_and_tail():
    rec = KpiRecord(0, 15.0, 1000.0, 500.0, 1)
    rec.sets = [(0, 0, 0, 8, 100.0, 200.0, 8, 8), (0, 0, 1, 8, 600.0, 601.0, 8, 8),
                (0, 0, 2, 8, 990.0, None, 0, 0)]
    assert [rec.counted(r) for r in rec.sets] == [False, True, False]
    assert satisfaction_ratio([rec]) == 1.0


def test_capacity_interpolation():
    assert xr_capacity([(5, 0.95), (6, 0.85)]) == pytest.approx(5.5)
    assert xr_capacity([(3, 1.0), (4, 0.95), (5, 0.85), (6, 0.5)]) == pytest.approx(4.5)


def test_capacity_censoring():
    cap = xr_capacity_detail([(n, 1.0) for n in range(3, 9)])
    assert cap.value == 8 and cap.censored == "right"
    cap = xr_capacity_detail([(3, 0.80)])
    assert cap.value < 3 and cap.censored == "left"
    assert xr_capacity_detail([(5, 0.95), (6, 0.85)]).censored is None


def test_capacity_uses_last_crossing():
    # noisy non-monotone curve: the last point at or above target governs
    assert xr_capacity([(3, 0.95), (4, 0.85), (5, 0.92), (6, 0.80)]) == pytest.approx(5 + 0.02 / 0.12)


def test_ccdf_point_mass():
    points, residual = delay_ccdf([record([5.0] * 4)])
    assert ccdf_at(points, residual, 4.9) == 1.0
    assert ccdf_at(points, residual, 5.0) == 0.0
    assert residual == 0.0


def test_ccdf_empirical_count():
    points, residual = delay_ccdf([record([1.0, 2.0, 3.0, 4.0])])
    assert ccdf_at(points, residual, 2.0) == 0.5


def test_ccdf_residual_for_undelivered():
    points, residual = delay_ccdf([record([1.0, None, 3.0, None])])
    assert residual == 0.5
    assert ccdf_at(points, residual, 100.0) == 0.5


def test_percentile_definition():
    rec = record([float(d) for d in range(1, 101)])
    assert delay_percentile([rec], 0.95) == 95.0
    points, residual = delay_ccdf([rec])
    assert ccdf_at(points, residual, 95.0) <= 0.05 < ccdf_at(points, residual, 94.0)
    assert math.isinf(delay_percentile([record([1.0] * 90 + [None] * 10)], 0.95))


def test_avg_queued():
    assert avg_queued_ues([KpiRecord(0, 15, 10, 0, 1, queued={0: [0, 0, 0]})]) == 0.0
    assert avg_queued_ues([KpiRecord(0, 15, 10, 0, 1, queued={0: [3] * 10})]) == 3.0
    assert avg_queued_ues([KpiRecord(0, 15, 10, 0, 1, queued={0: [2, 4] * 5})]) == 3.0


def test_embb_throughput():
    assert embb_cell_tp([KpiRecord(0, 15, 1000.0, 0.0, 1, embb_bits=[10**9])]) == pytest.approx(1000.0)
    assert embb_cell_tp([KpiRecord(0, 15, 1000.0, 0.0, 1, embb_bits=[0])]) == 0.0
    two = KpiRecord(0, 15, 1000.0, 0.0, 2, embb_bits=[400e6, 600e6])
    assert embb_cell_tp([two]) == pytest.approx(500.0)
    with pytest.raises(ValueError):
        embb_cell_tp([two], duration_ms=0)
