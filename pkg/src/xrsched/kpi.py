"""KPI reductions over per-drop records."""

from __future__ import annotations

import bisect
import math
from typing import NamedTuple

import numpy as np

SATISFACTION_THRESHOLD = 0.99
CAPACITY_TARGET = 0.90


class Capacity(NamedTuple):
    value: float
    # None, "left" (below the smallest swept load) or "right" (at or above the largest)
    censored: str | None = None


def ue_satisfied(in_time: int, total: int, threshold: float = SATISFACTION_THRESHOLD) -> bool:
    return total > 0 and in_time / total >= threshold


def per_ue_outcomes(records, psdb_ms=None):
    """Map (drop, cell, ue) -> (in-time sets, counted sets)."""
    out = {}
    for rec in records:
        psdb = rec.psdb_ms if psdb_ms is None else psdb_ms
        for (cell, ue), rows in rec.sets_per_ue().items():
            counted = [r for r in rows if rec.counted(r)]
            ok = sum(1 for r in counted if r[5] is not None and r[5] - r[4] <= psdb + 1e-9)
            out[(rec.drop_index, cell, ue)] = (ok, len(counted))
    return out


def satisfaction_ratio(records, psdb_ms=None, threshold: float = SATISFACTION_THRESHOLD) -> float:
    outcomes = per_ue_outcomes(records, psdb_ms)
    if not outcomes:
        raise ValueError("no XR UEs in records")
    return sum(ue_satisfied(ok, n, threshold) for ok, n in outcomes.values()) / len(outcomes)


def xr_capacity_detail(load_points, target: float = CAPACITY_TARGET) -> Capacity:
    pts = sorted((float(n), float(r)) for n, r in load_points)
    if not pts:
        raise ValueError("no load points")
    above = [i for i, (_, r) in enumerate(pts) if r >= target]
    if not above:
        return Capacity(pts[0][0] - 1.0, "left")
    i = above[-1]
    if i == len(pts) - 1:
        return Capacity(pts[-1][0], "right")
    (n0, r0), (n1, r1) = pts[i], pts[i + 1]
    return Capacity(n0 + (r0 - target) / (r0 - r1) * (n1 - n0))


def xr_capacity(load_points, target: float = CAPACITY_TARGET) -> float:
    """Largest (interpolated) XR load per cell with at least ``target`` of XR UEs satisfied.

    Loads below the smallest swept point come back as ``min N - 1``; use
    :func:`xr_capacity_detail` to see the censoring flag.
    """
    return xr_capacity_detail(load_points, target).value


def set_delays(records):
    """Delays of counted sets (ms) and how many counted sets were never delivered."""
    delays, undelivered = [], 0
    for rec in records:
        for r in rec.sets:
            if not rec.counted(r):
                continue
            if r[5] is None:
                undelivered += 1
            else:
                delays.append(r[5] - r[4])
    return np.sort(np.asarray(delays, dtype=float)), undelivered


def delay_ccdf(records):
    """Empirical CCDF of PDU-set delay pooled over XR UEs.

    Returns ``(points, residual)`` where ``points`` holds ``(d, P(delay > d))``
    at each distinct delivered delay. Undelivered sets count as infinitely late,
    so the curve flattens at ``residual``, their share of all counted sets.
    """
    delays, undelivered = set_delays(records)
    total = len(delays) + undelivered
    if total == 0:
        return [], 0.0
    values, counts = np.unique(delays, return_counts=True)
    above = total - np.cumsum(counts)
    return [(float(d), float(a / total)) for d, a in zip(values, above)], undelivered / total


def ccdf_at(points, residual, d: float) -> float:
    """Evaluate the step CCDF returned by :func:`delay_ccdf` at ``d``."""
    i = bisect.bisect_right([p[0] for p in points], d)
    if i == 0:
        return 1.0 if points else residual
    return points[i - 1][1]


def delay_percentile(records, q: float = 0.95) -> float:
    """Smallest delay d with CCDF(d) <= 1 - q; inf when undelivered sets exceed that mass."""
    points, residual = delay_ccdf(records)
    for d, c in points:
        if c <= 1 - q + 1e-12:
            return d
    return math.inf


def avg_queued_ues(records) -> float:
    samples = [n for rec in records for counts in rec.queued.values() for n in counts]
    return float(np.mean(samples)) if samples else 0.0


def embb_cell_tp(records, duration_ms=None) -> float:
    """Mean eMBB cell throughput in Mbps over cells and drops (post-warm-up window)."""
    vals = []
    for rec in records:
        window = (rec.duration_ms - rec.warmup_ms) if duration_ms is None else duration_ms
        if window <= 0:
            raise ValueError("duration must be positive")
        vals.extend(b / (window / 1000.0) / 1e6 for b in rec.embb_bits)
    return float(np.mean(vals)) if vals else 0.0
