"""Exact solver for tiny instances of the PDU-set scheduling problem.

The problem: assign each (slot, PRB) to at most one UE so as to maximize
``sum_k a_k * gamma_k + sum_e log(R_e)``, where XR UE ``k`` is satisfied
(``gamma_k = 1``) when enough of its PDU-sets are fully covered by bits sent
no later than their deadline slot.

Bits per PRB are constant per UE, so only per-slot PRB counts matter, and
eMBB utility depends only on how many PRBs eMBB UEs receive in total. The
solver therefore enumerates which XR UEs to satisfy, finds the cheapest
per-slot XR plan covering their sets by memoized search, and hands every
remaining PRB to eMBB.
"""

from __future__ import annotations

import functools
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, InstanceTooLargeError

MAX_SLOTS = 6
MAX_PRBS = 4
MAX_UES = 4
EPS_RATE_BPS = 1.0


@dataclass(frozen=True)
class MiniPduSet:
    size_bits: int
    arrival_slot: int
    deadline_slot: int


@dataclass(frozen=True)
class MiniXrUe:
    a_k: float
    bits_per_prb: int
    pdu_sets: tuple[MiniPduSet, ...]


@dataclass(frozen=True)
class MiniInstance:
    num_slots: int
    num_prbs: int
    xr_ues: tuple[MiniXrUe, ...] = ()
    # bits per PRB of each eMBB UE
    embb_ues: tuple[int, ...] = ()
    satisfaction_fraction: float = 1.0
    slot_ms: float = 0.5

    def __post_init__(self):
        if self.num_slots < 1 or self.num_prbs < 1:
            raise ConfigError("an instance needs at least one slot and one PRB")
        if not 0 <= self.satisfaction_fraction <= 1:
            raise ConfigError("satisfaction_fraction must be in [0, 1]")
        for ue in self.xr_ues:
            if ue.bits_per_prb <= 0:
                raise ConfigError("bits_per_prb must be positive")
            for ps in ue.pdu_sets:
                if ps.size_bits <= 0 or ps.arrival_slot < 0 or ps.deadline_slot < ps.arrival_slot:
                    raise ConfigError(f"invalid PDU-set {ps}")
        if any(b <= 0 for b in self.embb_ues):
            raise ConfigError("eMBB bits_per_prb must be positive")

    @property
    def num_ues(self) -> int:
        return len(self.xr_ues) + len(self.embb_ues)

    @property
    def enumeration_count(self) -> int:
        return (self.num_ues + 1) ** (self.num_slots * self.num_prbs)

    def required_sets(self, k: int) -> int:
        n = len(self.xr_ues[k].pdu_sets)
        return math.ceil(n * self.satisfaction_fraction - 1e-12)

    def ue_bits_per_prb(self, u: int) -> int:
        K = len(self.xr_ues)
        return self.xr_ues[u].bits_per_prb if u < K else self.embb_ues[u - K]

    def to_dict(self) -> dict:
        return {
            "num_slots": self.num_slots,
            "num_prbs": self.num_prbs,
            "slot_ms": self.slot_ms,
            "satisfaction_fraction": self.satisfaction_fraction,
            "xr_ues": [
                {"a_k": u.a_k, "bits_per_prb": u.bits_per_prb,
                 "pdu_sets": [{"size_bits": p.size_bits, "arrival_slot": p.arrival_slot,
                               "deadline_slot": p.deadline_slot} for p in u.pdu_sets]}
                for u in self.xr_ues
            ],
            "embb_ues": [{"bits_per_prb": b} for b in self.embb_ues],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MiniInstance":
        known = {"num_slots", "num_prbs", "slot_ms", "satisfaction_fraction", "xr_ues", "embb_ues"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown instance keys: {sorted(unknown)}")
        try:
            xr = tuple(
                MiniXrUe(float(u.get("a_k", 1000.0)), int(u["bits_per_prb"]),
                         tuple(MiniPduSet(int(p["size_bits"]), int(p["arrival_slot"]), int(p["deadline_slot"]))
                               for p in u.get("pdu_sets", [])))
                for u in d.get("xr_ues", [])
            )
            embb = tuple(int(e["bits_per_prb"] if isinstance(e, dict) else e) for e in d.get("embb_ues", []))
            return cls(int(d["num_slots"]), int(d["num_prbs"]), xr, embb,
                       float(d.get("satisfaction_fraction", 1.0)), float(d.get("slot_ms", 0.5)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed instance: {exc}") from exc


def load_instance(path) -> MiniInstance:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return MiniInstance.from_dict(data)


@dataclass
class ExactSolution:
    # (slot, prb) -> UE index (XR first, then eMBB) or None when idle
    assignment: dict
    y: list
    gamma: list
    # (k, i, s) -> 1 for slots whose bits serve set i of XR UE k
    z: dict
    objective: float
    # (k, i, s) -> bits of UE k's slot-s allocation attributed to set i
    attribution: dict = field(default_factory=dict)


def _counts(instance: MiniInstance, assignment) -> np.ndarray:
    """Per-UE per-slot PRB counts; rejects double-booked or out-of-range PRBs."""
    S, P, U = instance.num_slots, instance.num_prbs, instance.num_ues
    items = assignment.items() if isinstance(assignment, dict) else ((sp[:2], sp[2]) for sp in assignment)
    seen = set()
    counts = np.zeros((U, S), dtype=int)
    for (s, p), u in items:
        if not (0 <= s < S and 0 <= p < P):
            raise ContractError(f"PRB ({s}, {p}) outside the instance grid")
        if (s, p) in seen:
            raise ContractError(f"PRB ({s}, {p}) assigned twice")
        seen.add((s, p))
        if u is None:
            continue
        if not 0 <= u < U:
            raise ContractError(f"unknown UE {u}")
        counts[u, s] += 1
    return counts


def _edf_cover(sets, chosen, capacity):
    """Serve ``chosen`` sets earliest-deadline-first from per-slot bit ``capacity``.

    Returns the per-(set, slot) attribution if every chosen set is covered in
    time, else None. EDF is optimal for this divisible-work feasibility test.
    """
    remaining = {i: sets[i].size_bits for i in chosen}
    attribution = {}
    for s, cap in enumerate(capacity):
        live = sorted((sets[i].deadline_slot, i) for i in remaining
                      if remaining[i] > 0 and sets[i].arrival_slot <= s)
        for d, i in live:
            if cap <= 0:
                break
            if d < s:
                return None
            take = min(cap, remaining[i])
            remaining[i] -= take
            cap -= take
            attribution[(i, s)] = take
        if any(r > 0 and sets[i].deadline_slot <= s for i, r in remaining.items()):
            return None
    if any(remaining.values()):
        return None
    return attribution


def _derive(instance: MiniInstance, counts):
    y, gamma, attribution = [], [], {}
    for k, ue in enumerate(instance.xr_ues):
        capacity = [int(c) * ue.bits_per_prb for c in counts[k]]
        n = len(ue.pdu_sets)
        best, best_attr = (), {}
        for size in range(n, 0, -1):
            for chosen in itertools.combinations(range(n), size):
                attr = _edf_cover(ue.pdu_sets, chosen, capacity)
                if attr is not None:
                    best, best_attr = chosen, attr
                    break
            if best:
                break
        y.append([1 if i in best else 0 for i in range(n)])
        gamma.append(1 if len(best) >= instance.required_sets(k) else 0)
        for (i, s), bits in best_attr.items():
            attribution[(k, i, s)] = bits
    return y, gamma, attribution


def _objective(instance: MiniInstance, counts, gamma, horizon=None) -> float:
    horizon_s = (instance.num_slots if horizon is None else horizon) * instance.slot_ms / 1000.0
    K = len(instance.xr_ues)
    value = sum(ue.a_k * g for ue, g in zip(instance.xr_ues, gamma))
    for e, bpp in enumerate(instance.embb_ues):
        rate = int(counts[K + e].sum()) * bpp / horizon_s
        value += math.log(max(rate, EPS_RATE_BPS))
    return float(value)


def evaluate_objective(instance: MiniInstance, assignment, horizon=None):
    """Objective of an assignment, with the best ``gamma`` and ``y`` it supports.

    A PDU-set counts as served when bits sent in slots between its arrival and
    its deadline slot cover its size; each UE's bits go to sets
    earliest-deadline-first over the largest coverable subset.
    """
    counts = _counts(instance, assignment)
    y, gamma, _ = _derive(instance, counts)
    return _objective(instance, counts, gamma, horizon), gamma, y


def solution_from_assignment(instance: MiniInstance, assignment) -> ExactSolution:
    counts = _counts(instance, assignment)
    y, gamma, attribution = _derive(instance, counts)
    full = {(s, p): None for s in range(instance.num_slots) for p in range(instance.num_prbs)}
    full.update(dict(assignment))
    z = {(k, i, s): 1 for (k, i, s), bits in attribution.items() if bits > 0}
    return ExactSolution(full, y, gamma, z, _objective(instance, counts, gamma), attribution)


def _check_size(instance: MiniInstance):
    if (instance.num_slots > MAX_SLOTS or instance.num_prbs > MAX_PRBS or instance.num_ues > MAX_UES):
        count = instance.enumeration_count
        raise InstanceTooLargeError(
            f"instance with {instance.num_slots} slots, {instance.num_prbs} PRBs and {instance.num_ues} UEs "
            f"exceeds the exact-solver limits ({MAX_SLOTS}/{MAX_PRBS}/{MAX_UES}); "
            f"full enumeration would visit {count} assignments", count)


def _min_prb_plan(instance: MiniInstance, targets):
    """Fewest XR PRBs covering ``targets`` (per-UE tuples of set indices).

    Returns ``(prbs, plan)`` with ``plan[s]`` the per-UE count vector, or None.
    Among equal-cost plans the one giving earlier slots to lower UE indices wins.
    """
    S, P = instance.num_slots, instance.num_prbs
    ues = instance.xr_ues
    K = len(ues)
    keys = [(k, i) for k in range(K) for i in targets[k]]
    sets = [ues[k].pdu_sets[i] for k, i in keys]

    @functools.lru_cache(maxsize=None)
    def go(s, rem):
        if s == S:
            return (0, ()) if not any(rem) else None
        for j, r in enumerate(rem):
            if r > 0 and sets[j].deadline_slot < s:
                return None
        caps = []
        for k in range(K):
            released = sum(r for j, r in enumerate(rem) if keys[j][0] == k and sets[j].arrival_slot <= s)
            caps.append(min(P, -(-released // ues[k].bits_per_prb)))
        best = None
        for vec in itertools.product(*(range(c, -1, -1) for c in caps)):
            if sum(vec) > P:
                continue
            new = list(rem)
            for k, n in enumerate(vec):
                bits = n * ues[k].bits_per_prb
                if not bits:
                    continue
                order = sorted((sets[j].deadline_slot, j) for j in range(len(keys))
                               if keys[j][0] == k and new[j] > 0 and sets[j].arrival_slot <= s)
                for _, j in order:
                    take = min(bits, new[j])
                    new[j] -= take
                    bits -= take
                    if not bits:
                        break
            sub = go(s + 1, tuple(new))
            if sub is None:
                continue
            cost = sum(vec) + sub[0]
            if best is None or cost < best[0]:
                best = (cost, (vec,) + sub[1])
        return best

    return go(0, tuple(s.size_bits for s in sets))


def _embb_split(instance: MiniInstance, total: int) -> tuple[int, ...]:
    """PRB counts per eMBB UE maximizing the summed log-rate (earlier UEs win ties)."""
    E = len(instance.embb_ues)
    if E == 0:
        return ()
    horizon_s = instance.num_slots * instance.slot_ms / 1000.0
    best, best_val = None, -math.inf
    for split in itertools.product(range(total, -1, -1), repeat=E):
        if sum(split) != total:
            continue
        val = sum(math.log(max(n * b / horizon_s, EPS_RATE_BPS)) for n, b in zip(split, instance.embb_ues))
        if val > best_val + 1e-12:
            best, best_val = split, val
    return best


def _layout(instance: MiniInstance, plan, embb_split) -> dict:
    S, P = instance.num_slots, instance.num_prbs
    K = len(instance.xr_ues)
    grid = {}
    left = list(embb_split)
    for s in range(S):
        row = []
        for k, n in enumerate(plan[s] if plan else [0] * K):
            row += [k] * n
        for e in range(len(left)):
            while left[e] and len(row) < P:
                row.append(K + e)
                left[e] -= 1
        row += [None] * (P - len(row))
        for p, u in enumerate(row):
            grid[(s, p)] = u
    return grid


def _grid_key(instance: MiniInstance, grid):
    big = instance.num_ues
    return tuple(big if grid[(s, p)] is None else grid[(s, p)]
                 for s in range(instance.num_slots) for p in range(instance.num_prbs))


def solve_exact(instance: MiniInstance) -> ExactSolution:
    """Optimal assignment; ties go to fewer allocated PRBs, then the lexicographically smallest grid."""
    _check_size(instance)
    S, P = instance.num_slots, instance.num_prbs
    K = len(instance.xr_ues)
    options = []
    for k, ue in enumerate(instance.xr_ues):
        req = instance.required_sets(k)
        opts = [tuple(c) for c in itertools.combinations(range(len(ue.pdu_sets)), req)]
        if req > 0:
            opts.append(None)  # leave the UE unsatisfied
        options.append(opts)

    best = None
    for combo in itertools.product(*options):
        targets = [t or () for t in combo]
        found = _min_prb_plan(instance, targets)
        if found is None:
            continue
        xr_prbs, plan = found
        leftover = S * P - xr_prbs
        split = _embb_split(instance, leftover)
        grid = _layout(instance, plan, split)
        sol = solution_from_assignment(instance, grid)
        allocated = sum(u is not None for u in grid.values())
        key = (-round(sol.objective, 9), allocated, _grid_key(instance, grid))
        if best is None or key < best[0]:
            best = (key, sol)
    return best[1]


def heuristic_on_instance(instance: MiniInstance):
    """Run the PDU-set aware scheduler slot by slot with error-free links.

    Returns ``(assignment, objective)``.
    """
    from .scheduler import SchedulerKind, TrafficType, UeContext, allocate_tti, update_throughput_tracker
    from .traffic import Pdu, PduSet

    K = len(instance.xr_ues)
    slot_s = instance.slot_ms / 1000.0
    ues, pending = [], []
    for k, spec in enumerate(instance.xr_ues):
        ue = UeContext(k, TrafficType.XR, psdb_ms=1.0)
        ue.prb_bits = spec.bits_per_prb
        ues.append(ue)
        # time unit is one slot; a set stays in time through its deadline slot
        for i, ps in sorted(enumerate(spec.pdu_sets), key=lambda t: (t[1].arrival_slot, t[0])):
            pending.append((ps.arrival_slot, k, PduSet(k, i, float(ps.arrival_slot), float(ps.deadline_slot + 1),
                                                       ps.size_bits, [Pdu(0, ps.size_bits, float(ps.arrival_slot))])))
    for e, bpp in enumerate(instance.embb_ues):
        ue = UeContext(K + e, TrafficType.EMBB)
        ue.prb_bits = bpp
        ues.append(ue)
    for ue in ues:
        ue.tp_tracker.instantaneous_rate_bps = ue.prb_bits * instance.num_prbs / slot_s

    pending.sort(key=lambda t: (t[0], t[1], t[2].set_index))
    assignment = {}
    for s in range(instance.num_slots):
        for arrival, k, ps in pending:
            if arrival == s:
                ues[k].pdu_set_queue.append(ps)
                ues[k].buffered_bits += ps.total_size_bits
        grants = allocate_tti(ues, instance.num_prbs, s, float(s), SchedulerKind.PROPOSED)
        served = {}
        for g in grants:
            for p in g.prb_indices:
                assignment[(s, p)] = g.ue_id
            served[g.ue_id] = g.tb.size_bits
        for ue in ues:
            update_throughput_tracker(ue.tp_tracker, served.get(ue.ue_id, 0), slot_s)
    objective, _, _ = evaluate_objective(instance, assignment)
    return assignment, objective


def check_constraints(instance: MiniInstance, solution: ExactSolution, tol: float = 1e-9) -> dict:
    """Re-check a solution against the problem constraints.

    Returns ``{constraint name: passed}``. The per-slot indicator is checked
    per PDU-set through the bit attribution the solution carries.
    """
    S, P, U = instance.num_slots, instance.num_prbs, instance.num_ues
    K = len(instance.xr_ues)
    x = solution.assignment
    results = {}

    grid_ok = all(0 <= s < S and 0 <= p < P for s, p in x) and all(u is None or 0 <= u < U for u in x.values())
    results["one_ue_per_prb"] = grid_ok and len(x) == len(set(x))
    prbs = {(u, s): 0 for u in range(U) for s in range(S)}
    for (s, p), u in x.items():
        if u is not None:
            prbs[(u, s)] += 1

    results["binary_domains"] = (
        all(v in (0, 1) for row in solution.y for v in row)
        and all(v in (0, 1) for v in solution.gamma)
        and all(v in (0, 1) for v in solution.z.values())
    )

    capacity_ok = causal_ok = True
    for k in range(K):
        ue = instance.xr_ues[k]
        for s in range(S):
            used = sum(b for (kk, i, ss), b in solution.attribution.items() if kk == k and ss == s)
            if used > prbs[(k, s)] * ue.bits_per_prb:
                capacity_ok = False
        for (kk, i, s), b in solution.attribution.items():
            if kk == k and b > 0 and s < ue.pdu_sets[i].arrival_slot:
                causal_ok = False
    results["attribution_within_allocation"] = capacity_ok
    results["no_service_before_arrival"] = causal_ok

    cover_ok = True
    for k, ue in enumerate(instance.xr_ues):
        for i, ps in enumerate(ue.pdu_sets):
            got = sum(b for (kk, ii, s), b in solution.attribution.items() if kk == k and ii == i)
            if got < solution.y[k][i] * ps.size_bits:
                cover_ok = False
    results["coverage"] = cover_ok

    results["slot_indicator"] = all(
        solution.z.get((k, i, s), 0) == 1
        for (k, i, s), b in solution.attribution.items() if b > 0
    )
    results["delay_budget"] = all(
        z * s <= instance.xr_ues[k].pdu_sets[i].deadline_slot for (k, i, s), z in solution.z.items()
    )

    sat_ok = True
    for k, ue in enumerate(instance.xr_ues):
        need = math.ceil(len(ue.pdu_sets) * instance.satisfaction_fraction - 1e-12)
        if sum(solution.y[k]) < solution.gamma[k] * need:
            sat_ok = False
    results["satisfaction_fraction"] = sat_ok

    horizon_s = S * instance.slot_ms / 1000.0
    obj = sum(ue.a_k * g for ue, g in zip(instance.xr_ues, solution.gamma))
    for e, bpp in enumerate(instance.embb_ues):
        bits = sum(bpp for u in x.values() if u == K + e)
        obj += math.log(max(bits / horizon_s, EPS_RATE_BPS))
    results["objective"] = abs(obj - solution.objective) <= tol * max(1.0, abs(obj))
    return results


def random_instance(rng: np.random.Generator, max_slots: int = 5, max_prbs: int = 3, max_xr: int = 2,
                    max_sets: int = 2, max_embb: int = 1, prb_aligned: bool = False,
                    a_k: float = 1000.0) -> MiniInstance:
    """Draw a small random instance.

    Deadlines are ``arrival + budget`` with one budget per UE, so arrival order
    and deadline order agree. With ``prb_aligned`` every set size is a whole
    number of the UE's PRBs.
    """
    S = int(rng.integers(1, max_slots + 1))
    P = int(rng.integers(1, max_prbs + 1))
    xr = []
    for _ in range(int(rng.integers(0, max_xr + 1))):
        bpp = int(rng.integers(100, 1200))
        budget = int(rng.integers(0, S))
        sets = []
        for _ in range(int(rng.integers(1, max_sets + 1))):
            arrival = int(rng.integers(0, S))
            if prb_aligned:
                size = bpp * int(rng.integers(1, P + 1))
            else:
                size = int(rng.integers(1, bpp * P + 1))
            sets.append(MiniPduSet(size, arrival, min(arrival + budget, S - 1)))
        sets.sort(key=lambda ps: ps.arrival_slot)
        xr.append(MiniXrUe(a_k, bpp, tuple(sets)))
    embb = tuple(int(rng.integers(100, 1200)) for _ in range(int(rng.integers(0, max_embb + 1))))
    return MiniInstance(S, P, tuple(xr), embb)
