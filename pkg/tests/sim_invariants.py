"""Runtime checks of the simulation's structural invariants."""

from __future__ import annotations

import math

from xrsched.scheduler import SchedulerKind
from xrsched.sim import SimConfig, run_drop


class InvariantObserver:
    def __init__(self, config: SimConfig):
        self.config = config
        self.slots = set()
        self.violations = []

    def fail(self, slot, cell, what):
        self.violations.append(f"slot {slot} cell {cell}: {what}")

    def __call__(self, slot, cell, ues, grants, snap):
        cfg = self.config
        self.slots.add(slot)
        if cfg.tdd_pattern[slot % len(cfg.tdd_pattern)] != "D":
            self.fail(slot, cell, "allocation outside a D slot")

        used = set()
        for g in grants:
            prbs = set(g.prb_indices)
            if used & prbs or min(prbs) < 0 or max(prbs) >= cfg.prbs:
                self.fail(slot, cell, "PRB granted twice or out of range")
            used |= prbs

        flags = [g.is_retransmission for g in grants]
        if flags != sorted(flags, reverse=True):
            self.fail(slot, cell, "new transmission before a retransmission")
        retx_total = sum(len(g.prb_indices) for g in grants if g.is_retransmission)
        granted_retx = {id(g.harq) for g in grants if g.is_retransmission}
        for uid, s in snap.items():
            for pid, failed, prb_count in s["retx_ready"]:
                need = max(1, math.ceil(failed / 8 * prb_count))
                if pid not in granted_retx and need <= cfg.prbs - retx_total:
                    self.fail(slot, cell, f"eligible retransmission of UE {uid} skipped")

        has_embb = any(u.is_embb for u in ues)
        if has_embb and len(used) != cfg.prbs:
            self.fail(slot, cell, f"only {len(used)} of {cfg.prbs} PRBs used with eMBB present")

        if cfg.scheduler_kind is SchedulerKind.PROPOSED:
            new = {g.ue_id: len(g.prb_indices) for g in grants if not g.is_retransmission}
            low_priority = any(not snap[u]["is_xr"] or not snap[u]["hol_in_time"] for u in new)
            if low_priority:
                for uid, s in snap.items():
                    if s["is_xr"] and s["hol_in_time"] and s["buffered_bits"] > 0:
                        need = -(-s["buffered_bits"] // s["prb_bits"])
                        if new.get(uid, 0) < need:
                            self.fail(slot, cell, f"in-time XR UE {uid} starved by lower-priority grant")

        for u in ues:
            for ps in u.pdu_set_queue:
                sent = sum(p.size_bits - p.remaining_bits for p in ps.pdus)
                if sent != ps.served_bits or not 0 <= ps.decoded_bits <= ps.served_bits <= ps.total_size_bits:
                    self.fail(slot, cell, f"bit accounting broken for UE {u.ue_id} set {ps.set_index}")


def check_drop(config: SimConfig, drop: int = 0) -> list[str]:
    """Run one drop under the observer and return every violated invariant."""
    obs = InvariantObserver(config)
    rec = run_drop(config, drop, observer=obs)
    out = list(obs.violations)
    n_slots = int(round(config.duration_ms / config.slot_ms))
    d_slots = {s for s in range(n_slots) if config.tdd_pattern[s % len(config.tdd_pattern)] == "D"}
    if obs.slots != d_slots:
        out.append("allocations did not happen on exactly the D slots")
    decoded = {}
    for cell, ue, idx, size, arr, dlv, served, dec in rec.sets:
        decoded[ue] = decoded.get(ue, 0) + dec
        if not 0 <= dec <= served <= size:
            out.append(f"set {ue}/{idx}: decoded {dec} served {served} size {size}")
        if (dlv is not None) != (dec == size):
            out.append(f"set {ue}/{idx}: delivery flag inconsistent with decoded bits")
        if dlv is not None and dlv < arr:
            out.append(f"set {ue}/{idx}: delivered before arrival")
    for ue, bits in rec.credited_bits.items():
        if bits != decoded.get(ue, 0):
            out.append(f"UE {ue}: credited {bits} bits but sets hold {decoded.get(ue, 0)}")
    return out
