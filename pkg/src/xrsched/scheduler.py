"""Per-TTI downlink schedulers: the PDU-set aware policy and the PF/WPF/M-LWDF baselines."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

from .errors import ConfigError, ContractError
from .link import NUM_CBG, HarqProcess, McsEntry, TransportBlock, UeChannelState


class TrafficType(str, enum.Enum):
    XR = "xr"
    EMBB = "embb"


class SchedulerKind(str, enum.Enum):
    PROPOSED = "proposed"
    WPF = "wpf"
    MLWDF = "mlwdf"
    PF = "pf"


@dataclass(frozen=True)
class SchedulerConfig:
    wpf_xr_weight: float = 1e8
    wpf_embb_weight: float = 1.0
    mlwdf_delta_xr: float = 0.01
    # -ln(0.99) ~ 0.01 sits ~460x below the XR coefficient so XR keeps its priority
    mlwdf_delta_embb: float = 0.99
    tp_window_ttis: float = 100.0
    tp_floor_bps: float = 1e3
    eps_beta: float = 1e-6

    def __post_init__(self):
        for name in ("mlwdf_delta_xr", "mlwdf_delta_embb"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ConfigError(f"{name} must be in (0, 1), got {v}")
        if self.wpf_xr_weight <= 0 or self.wpf_embb_weight <= 0:
            raise ConfigError("WPF weights must be positive")
        if self.tp_window_ttis < 1:
            raise ConfigError("tp_window_ttis must be >= 1")
        if self.tp_floor_bps <= 0 or self.eps_beta <= 0:
            raise ConfigError("tp_floor_bps and eps_beta must be positive")


@dataclass(slots=True)
class QosParams:
    a_k: float = 1000.0
    w_k: float = 1.0
    delta: float = 0.01

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ConfigError(f"M-LWDF delta must be in (0, 1), got {self.delta}")


@dataclass(slots=True)
class ThroughputTracker:
    instantaneous_rate_bps: float = 0.0
    average_tp_bps: float = 1e3


@dataclass(slots=True, eq=False)
class UeContext:
    ue_id: int
    traffic_type: TrafficType
    channel: UeChannelState | None = None
    qos: QosParams = field(default_factory=QosParams)
    tp_tracker: ThroughputTracker = field(default_factory=ThroughputTracker)
    pdu_set_queue: deque = field(default_factory=deque)
    harq: list = field(default_factory=list)
    psdb_ms: float | None = None
    # link choice for this TTI, refreshed by the simulation loop
    mcs: McsEntry | None = None
    layers: int = 1
    prb_bits: int = 0
    buffered_bits: int = 0
    cell: int = 0
    position: tuple | None = None

    def __post_init__(self):
        if self.traffic_type is TrafficType.XR and self.psdb_ms is None:
            raise ConfigError(f"XR UE {self.ue_id} needs a PSDB")
        if self.traffic_type is TrafficType.EMBB and self.psdb_ms is not None:
            raise ConfigError(f"eMBB UE {self.ue_id} has no PSDB")

    @property
    def is_xr(self) -> bool:
        return self.traffic_type is TrafficType.XR

    @property
    def is_embb(self) -> bool:
        return self.traffic_type is TrafficType.EMBB

    @property
    def hol_set(self):
        return self.pdu_set_queue[0] if self.pdu_set_queue else None

    def has_new_data(self) -> bool:
        return self.is_embb or self.buffered_bits > 0

    def pending_retx(self):
        return [p for p in self.harq if p.retx_ready]


@dataclass(slots=True, eq=False)
class Grant:
    ue_id: int
    prb_indices: range
    tb: TransportBlock
    is_retransmission: bool
    harq: HarqProcess | None = None
    metric: float = float("nan")


def alpha(pdu_set) -> float:
    if pdu_set.total_size_bits <= 0:
        raise ContractError("empty PDU-set")
    return pdu_set.served_bits / pdu_set.total_size_bits


def beta(pdu_set, now_ms: float) -> float:
    psdb = pdu_set.deadline_ms - pdu_set.first_arrival_ms
    return 1.0 - (now_ms - pdu_set.first_arrival_ms) / psdb


def proposed_metric(pdu_set, now_ms: float, eps_beta: float = 1e-6) -> float:
    """exp(alpha) / beta while the set is within its delay budget, 0 afterwards."""
    if now_ms - pdu_set.first_arrival_ms >= pdu_set.deadline_ms - pdu_set.first_arrival_ms:
        return 0.0
    return math.exp(alpha(pdu_set)) / max(beta(pdu_set, now_ms), eps_beta)


def pf_metric(ue, tp_floor_bps: float = 1e3) -> float:
    t = ue.tp_tracker
    return t.instantaneous_rate_bps / max(t.average_tp_bps, tp_floor_bps)


def wpf_metric(ue, tp_floor_bps: float = 1e3) -> float:
    return ue.qos.w_k * pf_metric(ue, tp_floor_bps)


def mlwdf_metric(ue, pdu_set, now_ms: float, tp_floor_bps: float = 1e3) -> float:
    delta = ue.qos.delta
    if not 0 < delta < 1:
        raise ConfigError(f"M-LWDF delta must be in (0, 1), got {delta}")
    m = -math.log(delta) * pf_metric(ue, tp_floor_bps)
    if ue.is_xr:
        if pdu_set is None:
            return 0.0
        m *= (now_ms - pdu_set.first_arrival_ms) / (pdu_set.deadline_ms - pdu_set.first_arrival_ms)
    return m


def update_throughput_tracker(tracker: ThroughputTracker, served_bits_this_tti: float,
                              tti_duration_s: float, window_ttis: float = 100.0) -> ThroughputTracker:
    k = 1.0 / window_ttis
    tracker.average_tp_bps = (1 - k) * tracker.average_tp_bps + k * served_bits_this_tti / tti_duration_s
    return tracker


def retx_prbs(proc: HarqProcess) -> int:
    return max(1, math.ceil(proc.tb.failed_cbgs / NUM_CBG * proc.prb_count))


def build_transport_block(ue: UeContext, n_prbs: int) -> TransportBlock:
    """Fill ``n_prbs`` PRBs FIFO from the UE's PDU-set queue (or full buffer for eMBB)."""
    capacity = n_prbs * ue.prb_bits
    if ue.is_embb:
        return TransportBlock(ue.ue_id, capacity, ue.mcs, ue.layers, n_prbs)
    segments = []
    room = capacity
    queue = ue.pdu_set_queue
    while room > 0 and queue:
        ps = queue[0]
        pdus = ps.pdus
        j = ps.cursor
        while room > 0 and j < len(pdus):
            pdu = pdus[j]
            if pdu.remaining_bits:
                take = min(room, pdu.remaining_bits)
                pdu.remaining_bits -= take
                ps.served_bits += take
                room -= take
                segments.append((ps, pdu, take))
                if pdu.remaining_bits:
                    break
            j += 1
        ps.cursor = j
        if ps.served_bits == ps.total_size_bits:
            queue.popleft()
    size = capacity - room
    ue.buffered_bits -= size
    return TransportBlock(ue.ue_id, size, ue.mcs, ue.layers, n_prbs, segments)


def _new_tx_order(ues, kind: SchedulerKind, now_ms: float, cfg: SchedulerConfig):
    """Candidates with new data, in scheduling order, paired with their metric."""
    floor = cfg.tp_floor_bps
    cands = [u for u in ues if u.has_new_data()]
    if kind is SchedulerKind.PROPOSED:
        # (stage, sort key, reported metric, ue)
        ranked = []
        for u in cands:
            if u.is_embb:
                m = pf_metric(u, floor)
                ranked.append((2, -m, u.ue_id, m, u))
                continue
            hol = u.hol_set
            if now_ms - hol.first_arrival_ms < hol.psdb_ms:
                m = proposed_metric(hol, now_ms, cfg.eps_beta)
                ranked.append((0, -m, u.ue_id, m, u))
            else:
                # expired payload goes last among XR, nearly complete sets first
                ranked.append((1, -math.exp(alpha(hol)), u.ue_id, 0.0, u))
        ranked.sort(key=lambda r: r[:3])
        return [(r[3], r[4]) for r in ranked]
    if kind is SchedulerKind.PF:
        scored = [(pf_metric(u, floor), u) for u in cands]
    elif kind is SchedulerKind.WPF:
        scored = [(wpf_metric(u, floor), u) for u in cands]
    elif kind is SchedulerKind.MLWDF:
        scored = [(mlwdf_metric(u, u.hol_set if u.is_xr else None, now_ms, floor), u) for u in cands]
    else:
        raise ConfigError(f"unknown scheduler kind {kind!r}")
    scored.sort(key=lambda mu: (-mu[0], mu[1].ue_id))
    return scored


def allocate_tti(ues, available_prbs: int, slot_index: int, now_ms: float, kind: SchedulerKind,
                 config: SchedulerConfig = SchedulerConfig(), slot_type: str = "D",
                 trace: list | None = None, cell_id: int = 0) -> list[Grant]:
    """Allocate one downlink slot's PRBs.

    HARQ retransmissions go first (XR before eMBB, oldest feedback first); the
    rest goes to new transmissions in the order defined by ``kind``. A UE
    receives as many PRBs as its buffer needs, capped by what is left.
    Building a new transport block consumes the UE's buffer.
    """
    if slot_type != "D":
        raise ContractError(f"slot {slot_index} is not a downlink slot ({slot_type})")
    kind = SchedulerKind(kind)
    grants: list[Grant] = []
    next_prb = 0

    retx = [(0 if u.is_xr else 1, p.feedback_due_slot, u.ue_id, p) for u in ues for p in u.harq if p.retx_ready]
    retx.sort(key=lambda r: r[:3])
    for _, _, ue_id, proc in retx:
        need = retx_prbs(proc)
        if need > available_prbs - next_prb:
            continue
        proc.retx_ready = False
        grants.append(Grant(ue_id, range(next_prb, next_prb + need), proc.tb, True, proc))
        if trace is not None:
            trace.append((slot_index, cell_id, ue_id, float("nan"), need, 1))
        next_prb += need

    for metric, ue in _new_tx_order(ues, kind, now_ms, config):
        left = available_prbs - next_prb
        if left <= 0:
            break
        if ue.prb_bits <= 0:
            continue
        need = left if ue.is_embb else min(left, -(-ue.buffered_bits // ue.prb_bits))
        tb = build_transport_block(ue, need)
        grants.append(Grant(ue.ue_id, range(next_prb, next_prb + need), tb, False, None, metric))
        if trace is not None:
            trace.append((slot_index, cell_id, ue.ue_id, metric, need, 0))
        next_prb += need
    return grants
