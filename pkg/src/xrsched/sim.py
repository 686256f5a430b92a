"""Slot-driven multi-cell downlink simulation (TDD DDDSU)."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from bisect import insort
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .link import (
    NUM_CBG,
    HarqProcess,
    LinkConfig,
    UeChannelState,
    compute_avg_sinr,
    draw_cbg_outcomes,
    olla_update,
    pathloss_db,
    select_link,
    bits_per_prb,
)
from .scheduler import (
    QosParams,
    SchedulerConfig,
    SchedulerKind,
    TrafficType,
    UeContext,
    allocate_tti,
    update_throughput_tracker,
)
from .traffic import XrTrafficConfig, generate_frame_arrivals, make_pdu_set

# stream tags for numpy SeedSequence entropy
_XR_PLACE, _EMBB_PLACE, _SHADOW, _TRAFFIC, _LINK = range(5)


@dataclass(frozen=True)
class SimConfig:
    num_cells: int = 12
    isd_m: float = 20.0
    world_height_m: float = 50.0
    xr_ues_per_cell: int = 3
    embb_ues_per_cell: int = 3
    slot_ms: float = 0.5
    tdd_pattern: str = "DDDSU"
    prbs: int = 272
    duration_ms: float = 10_000.0
    warmup_ms: float = 500.0
    drops: int = 10
    seed: int = 0
    # error-draw stream; None reuses ``seed``
    run_seed: int | None = None
    scheduler_kind: SchedulerKind = SchedulerKind.PROPOSED
    xr_a_k: float = 1000.0
    # desynchronize XR UEs with a uniform phase in [0, frame period); off puts frame 0 at t = 0
    random_frame_phase: bool = True
    traffic: XrTrafficConfig = field(default_factory=XrTrafficConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)

    def __post_init__(self):
        object.__setattr__(self, "scheduler_kind", SchedulerKind(self.scheduler_kind))
        if self.num_cells < 1:
            raise ConfigError("num_cells must be >= 1")
        if self.xr_ues_per_cell < 0 or self.embb_ues_per_cell < 0:
            raise ConfigError("UE counts per cell must be >= 0")
        if self.prbs < 1:
            raise ConfigError("prbs must be >= 1")
        if not self.slot_ms > 0 or not self.duration_ms > 0 or self.warmup_ms < 0:
            raise ConfigError("slot_ms and duration_ms must be > 0, warmup_ms >= 0")
        if self.warmup_ms >= self.duration_ms:
            raise ConfigError("warmup_ms must be shorter than duration_ms")
        if not self.tdd_pattern or set(self.tdd_pattern) - set("DSU"):
            raise ConfigError(f"tdd_pattern must use only D/S/U, got {self.tdd_pattern!r}")
        if self.drops < 1:
            raise ConfigError("drops must be >= 1")
        if self.isd_m <= 0 or self.world_height_m <= 0:
            raise ConfigError("isd_m and world_height_m must be positive")

    @property
    def rows(self) -> int:
        return 2 if self.num_cells >= 2 and self.num_cells % 2 == 0 else 1

    @property
    def world_width_m(self) -> float:
        return math.ceil(self.num_cells / self.rows) * self.isd_m

    @property
    def slots_per_second(self) -> float:
        return 1000.0 / self.slot_ms

    def cell_positions(self) -> np.ndarray:
        cols = math.ceil(self.num_cells / self.rows)
        h = self.world_height_m
        ys = [h / 2 - self.isd_m / 2, h / 2 + self.isd_m / 2] if self.rows == 2 else [h / 2]
        pos = [((c + 0.5) * self.isd_m, y) for y in ys for c in range(cols)]
        return np.array(pos[: self.num_cells])

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["scheduler_kind"] = self.scheduler_kind.value
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class KpiRecord:
    """Outcome of one drop.

    ``sets`` rows: (cell, ue_id, set_index, size_bits, first_arrival_ms,
    delivered_at_ms or None, served_bits, decoded_bits).
    """

    drop_index: int
    psdb_ms: float
    duration_ms: float
    warmup_ms: float
    num_cells: int
    sets: list = field(default_factory=list)
    # queued-UE count per cell per post-warm-up D slot, cell-major
    queued: dict = field(default_factory=dict)
    embb_bits: list = field(default_factory=list)
    credited_bits: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def counted(self, row) -> bool:
        """Whether a set falls in the KPI window (after warm-up, before the final PSDB)."""
        t = row[4]
        return self.warmup_ms <= t < self.duration_ms - self.psdb_ms

    def sets_per_ue(self) -> dict:
        out = {}
        for row in self.sets:
            out.setdefault((row[0], row[1]), []).append(row)
        return out


def _place(rng, cells, cell, count, width, height):
    out = []
    while len(out) < count:
        p = rng.uniform((0.0, 0.0), (width, height))
        if int(np.argmin(np.hypot(cells[:, 0] - p[0], cells[:, 1] - p[1]))) == cell:
            out.append(p)
    return out


def _rng(*entropy):
    return np.random.default_rng(np.random.SeedSequence([int(e) for e in entropy]))


def build_ues(config: SimConfig, drop_index: int):
    """Place UEs and draw their traffic for one drop.

    Per-cell placement streams make XR UE ``k`` of cell ``c`` identical for any
    ``xr_ues_per_cell`` > k, so load sweeps share geometry.
    """
    cells = config.cell_positions()
    width, height = config.world_width_m, config.world_height_m
    link = config.link
    base = (config.seed, drop_index)
    ues_by_cell = [[] for _ in range(config.num_cells)]
    arrivals = {}
    uid = 0
    for c in range(config.num_cells):
        xr_pos = _place(_rng(*base, _XR_PLACE, c), cells, c, config.xr_ues_per_cell, width, height)
        embb_pos = _place(_rng(*base, _EMBB_PLACE, c), cells, c, config.embb_ues_per_cell, width, height)
        for kind, positions in ((TrafficType.XR, xr_pos), (TrafficType.EMBB, embb_pos)):
            for k, pos in enumerate(positions):
                tag = 0 if kind is TrafficType.XR else 1
                shadow = _rng(*base, _SHADOW, c, tag, k).normal(0.0, link.shadowing_std_db, config.num_cells)
                sinr = compute_avg_sinr(pos, c, cells, shadow, link)
                d = float(max(np.hypot(*(pos - cells[c])), 1.0))
                ch = UeChannelState(d, pathloss_db(d, link), float(shadow[c]), sinr, sinr)
                if kind is TrafficType.XR:
                    ue = UeContext(uid, kind, ch, QosParams(config.xr_a_k, config.scheduler.wpf_xr_weight,
                                                            config.scheduler.mlwdf_delta_xr),
                                   psdb_ms=config.traffic.psdb_ms)
                    trng = _rng(*base, _TRAFFIC, c, k)
                    offset = 0.0
                    if config.random_frame_phase:
                        offset = float(trng.uniform(0.0, config.traffic.period_ms))
                    arrivals[uid] = generate_frame_arrivals(config.traffic, config.duration_ms, trng, offset)
                else:
                    ue = UeContext(uid, kind, ch, QosParams(0.0, config.scheduler.wpf_embb_weight,
                                                            config.scheduler.mlwdf_delta_embb))
                ue.tp_tracker.average_tp_bps = config.scheduler.tp_floor_bps
                ue.cell = c
                ue.position = tuple(float(v) for v in pos)
                ues_by_cell[c].append(ue)
                uid += 1
    return ues_by_cell, arrivals


class _Cell:
    __slots__ = ("index", "ues", "embb_bits", "queued")

    def __init__(self, index, ues):
        self.index = index
        self.ues = ues
        self.embb_bits = 0
        self.queued = []


def run_drop(config: SimConfig, drop_index: int = 0, observer=None, trace: list | None = None) -> KpiRecord:
    """Simulate one drop; deterministic in ``(config, drop_index)``.

    ``observer(slot, cell, ues, grants, snapshot)`` is called after every
    allocation; ``snapshot`` captures per-UE state taken just before it.
    """
    link, sched_cfg = config.link, config.scheduler
    ues_by_cell, arrivals = build_ues(config, drop_index)
    run_seed = config.seed if config.run_seed is None else config.run_seed
    rng = _rng(run_seed, drop_index, _LINK)

    cells = [_Cell(c, ues) for c, ues in enumerate(ues_by_cell)]
    all_ues = [u for c in cells for u in c.ues]
    xr_ues = [u for u in all_ues if u.is_xr]
    sets_by_ue = {u.ue_id: [] for u in xr_ues}
    next_arrival = {u.ue_id: 0 for u in xr_ues}
    credited = {u.ue_id: 0 for u in xr_ues}
    link_key = {}

    slot_ms = config.slot_ms
    slot_s = slot_ms / 1000.0
    pattern = config.tdd_pattern
    n_slots = int(round(config.duration_ms / slot_ms))
    warmup_slot = int(math.ceil(config.warmup_ms / slot_ms))
    rtt = link.harq_rtt_slots
    window = sched_cfg.tp_window_ttis

    def credit(ue, tb, slot, count_embb):
        if ue.is_embb:
            if count_embb:
                bits = 0
                for c in range(NUM_CBG):
                    if tb.cbg_states[c] and not tb.credited[c]:
                        lo, hi = tb.cbg_bounds(c)
                        bits += hi - lo
                        tb.credited[c] = True
                return bits
            for c in range(NUM_CBG):
                if tb.cbg_states[c]:
                    tb.credited[c] = True
            return 0
        done_at = (slot + 1) * slot_ms
        states = tb.cbg_states
        everything = all(states)
        for i, (seg, first, last) in enumerate(tb.segment_cbgs()):
            if tb.credited[i]:
                continue
            if everything or all(states[first:last + 1]):
                tb.credited[i] = True
                ps, _, bits = seg
                ps.decoded_bits += bits
                credited[ue.ue_id] += bits
                if ps.decoded_bits == ps.total_size_bits:
                    ps.delivered_at_ms = done_at
        return 0

    def rollback(ue, tb):
        for i, (seg, _, _) in enumerate(tb.segment_cbgs()):
            if tb.credited[i]:
                continue
            ps, pdu, bits = seg
            pdu.remaining_bits += bits
            ps.served_bits -= bits
            ps.cursor = min(ps.cursor, pdu.pdu_index)
            ue.buffered_bits += bits
            if all(q is not ps for q in ue.pdu_set_queue):
                items = list(ue.pdu_set_queue)
                insort(items, ps, key=lambda q: (q.first_arrival_ms, q.set_index))
                ue.pdu_set_queue.clear()
                ue.pdu_set_queue.extend(items)

    for slot in range(n_slots):
        now = slot * slot_ms
        stype = pattern[slot % len(pattern)]
        measuring = slot >= warmup_slot

        for ue in xr_ues:
            arr = arrivals[ue.ue_id]
            i = next_arrival[ue.ue_id]
            while i < len(arr) and arr[i][0] <= now:
                t, size = arr[i]
                ps = make_pdu_set(ue.ue_id, i, t, size, config.traffic)
                ue.pdu_set_queue.append(ps)
                ue.buffered_bits += ps.total_size_bits
                sets_by_ue[ue.ue_id].append(ps)
                i += 1
            next_arrival[ue.ue_id] = i

        for ue in all_ues:
            if not ue.harq:
                continue
            keep = []
            for proc in ue.harq:
                if proc.feedback_due_slot == slot and not proc.retx_ready:
                    ch = ue.channel
                    if proc.first_tx_results is not None:
                        ch.olla_offset_db = olla_update(ch.olla_offset_db, proc.first_tx_results,
                                                        link.olla_step_db, link.olla_target, link.olla_bound_db)
                        proc.first_tx_results = None
                    if proc.tb.all_decoded:
                        continue
                    if proc.num_transmissions >= link.max_harq_tx:
                        if ue.is_xr:
                            rollback(ue, proc.tb)
                        continue
                    proc.retx_ready = True
                keep.append(proc)
            ue.harq = keep

        if stype != "D":
            continue

        cqi_due = slot >= link.cqi_delay_slots and (slot - link.cqi_delay_slots) % link.cqi_period_slots == 0
        for cell in cells:
            ues = cell.ues
            for ue in ues:
                ch = ue.channel
                if cqi_due:
                    # static channel: the report measured cqi_delay_slots ago equals the mean SINR
                    ch.last_cqi_sinr_db = ch.avg_sinr_db
                key = (ch.last_cqi_sinr_db, ch.olla_offset_db)
                if link_key.get(ue.ue_id) != key:
                    link_key[ue.ue_id] = key
                    mcs, layers = select_link(ch.last_cqi_sinr_db, ch.olla_offset_db, link)
                    ue.mcs, ue.layers = mcs, layers
                    ue.prb_bits = layers * bits_per_prb(mcs)
                    ue.tp_tracker.instantaneous_rate_bps = ue.prb_bits * config.prbs / slot_s

            if measuring:
                cell.queued.append(sum(1 for u in ues if u.is_embb or u.buffered_bits > 0 or
                                       any(p.retx_ready for p in u.harq)))
            snapshot = _snapshot(ues, now) if observer is not None else None
            grants = allocate_tti(ues, config.prbs, slot, now, config.scheduler_kind, sched_cfg,
                                  slot_type=stype, trace=trace, cell_id=cell.index)

            served = {}
            by_id = {u.ue_id: u for u in ues}
            for g in grants:
                ue = by_id[g.ue_id]
                tb = g.tb
                if g.harq is None:
                    proc = HarqProcess(tb, 1, slot + rtt, tb.prb_count, slot)
                    tb.credited = [False] * (NUM_CBG if ue.is_embb else len(tb.carried_segments))
                    ue.harq.append(proc)
                    served[ue.ue_id] = served.get(ue.ue_id, 0) + tb.size_bits
                else:
                    proc = g.harq
                    proc.num_transmissions += 1
                    proc.feedback_due_slot = slot + rtt
                sinr = ue.channel.avg_sinr_db - 10 * math.log10(tb.layers)
                states = draw_cbg_outcomes(tb, sinr, tb.mcs, proc.num_transmissions, rng, link)
                if proc.num_transmissions == 1:
                    proc.first_tx_results = list(states)
                tb.cbg_states = states
                cell.embb_bits += credit(ue, tb, slot, measuring)

            for ue in ues:
                update_throughput_tracker(ue.tp_tracker, served.get(ue.ue_id, 0), slot_s, window)

            if observer is not None:
                observer(slot, cell.index, ues, grants, snapshot)

    record = KpiRecord(drop_index, config.traffic.psdb_ms, config.duration_ms, config.warmup_ms,
                       config.num_cells)
    for cell in cells:
        record.queued[cell.index] = cell.queued
        record.embb_bits.append(cell.embb_bits)
        for ue in cell.ues:
            if ue.is_xr:
                for ps in sets_by_ue[ue.ue_id]:
                    record.sets.append((cell.index, ue.ue_id, ps.set_index, ps.total_size_bits,
                                        ps.first_arrival_ms, ps.delivered_at_ms, ps.served_bits,
                                        ps.decoded_bits))
    record.credited_bits = credited
    record.meta = {
        "drop_index": drop_index,
        "seed": config.seed,
        "run_seed": run_seed,
        "scheduler": config.scheduler_kind.value,
        "xr_ues_per_cell": config.xr_ues_per_cell,
        "embb_ues_per_cell": config.embb_ues_per_cell,
        "config_hash": config.config_hash(),
        "ue_sinr_db": {u.ue_id: round(u.channel.avg_sinr_db, 6) for u in all_ues},
    }
    return record


def _snapshot(ues, now):
    snap = {}
    for u in ues:
        hol = u.hol_set
        snap[u.ue_id] = {
            "is_xr": u.is_xr,
            "buffered_bits": u.buffered_bits,
            "hol_in_time": bool(hol is not None and now - hol.first_arrival_ms < hol.psdb_ms),
            "retx_ready": [(id(p), p.tb.failed_cbgs, p.prb_count) for p in u.harq if p.retx_ready],
            "prb_bits": u.prb_bits,
        }
    return snap
