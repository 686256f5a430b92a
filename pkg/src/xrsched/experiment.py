"""Load sweeps over (scheduler, PSDB, XR load, drop) and figure-data emission."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, OutputError
from .kpi import CAPACITY_TARGET, SATISFACTION_THRESHOLD, ue_satisfied, xr_capacity_detail
from .scheduler import SchedulerKind
from .sim import SimConfig, run_drop

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "XRSCHED_OUTPUT_DIR"
MIN_SETS_PER_UE = 540
CCDF_LOAD = 6
# CI-scale profile
FAST_PROFILE = {"num_cells": 4, "duration_ms": 5000.0, "drops": 3, "min_sets_per_ue": 0}
AGGREGATE_FILES = ("fig2_satisfaction.csv", "fig3_capacity.csv", "fig4_ccdf.csv",
                   "fig5_queued.csv", "fig6_embb_tp.csv")


@dataclass(frozen=True)
class ExperimentSpec:
    base: SimConfig = field(default_factory=SimConfig)
    sweep_xr_per_cell: tuple[int, ...] = (3, 4, 5, 6, 7, 8)
    psdb_set_ms: tuple[float, ...] = (10.0, 15.0, 20.0)
    schedulers: tuple[SchedulerKind, ...] = (SchedulerKind.PROPOSED, SchedulerKind.WPF, SchedulerKind.MLWDF)
    drops: int = 10
    seed: int = 0
    output_dir: str = "results"
    workers: int = 1
    # write a per-TTI scheduling trace next to each drop CSV
    trace: bool = False
    # statistical floor on post-warm-up PDU-sets per XR UE; 0 disables the check
    min_sets_per_ue: int = MIN_SETS_PER_UE

    def __post_init__(self):
        object.__setattr__(self, "sweep_xr_per_cell", tuple(int(n) for n in self.sweep_xr_per_cell))
        object.__setattr__(self, "psdb_set_ms", tuple(float(p) for p in self.psdb_set_ms))
        object.__setattr__(self, "schedulers", tuple(SchedulerKind(s) for s in self.schedulers))
        if not self.sweep_xr_per_cell or min(self.sweep_xr_per_cell) < 1:
            raise ConfigError("sweep_xr_per_cell must list positive loads")
        if len(set(self.sweep_xr_per_cell)) != len(self.sweep_xr_per_cell):
            raise ConfigError("sweep_xr_per_cell has duplicates")
        if not self.psdb_set_ms or min(self.psdb_set_ms) <= 0:
            raise ConfigError("psdb_set_ms must list positive budgets")
        if not self.schedulers:
            raise ConfigError("schedulers must not be empty")
        if self.drops < 1:
            raise ConfigError("drops must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.min_sets_per_ue < 0:
            raise ConfigError("min_sets_per_ue must be >= 0")
        if self.min_sets_per_ue:
            expected = self.expected_sets_per_ue()
            if expected < self.min_sets_per_ue:
                raise ConfigError(
                    f"duration_ms={self.base.duration_ms} yields about {expected} counted PDU-sets per XR UE, "
                    f"below min_sets_per_ue={self.min_sets_per_ue}")

    def expected_sets_per_ue(self) -> int:
        b = self.base
        window = b.duration_ms - b.warmup_ms - max(self.psdb_set_ms)
        return int(window / b.traffic.period_ms)

    def fast(self) -> "ExperimentSpec":
        """CI-scale profile: 4 cells, 3 drops, 5 s per drop."""
        f = FAST_PROFILE
        base = dataclasses.replace(self.base, num_cells=f["num_cells"], duration_ms=f["duration_ms"],
                                   drops=f["drops"])
        return dataclasses.replace(self, base=base, drops=f["drops"], min_sets_per_ue=f["min_sets_per_ue"])

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "sweep_xr_per_cell": list(self.sweep_xr_per_cell),
            "psdb_set_ms": list(self.psdb_set_ms),
            "schedulers": [s.value for s in self.schedulers],
            "drops": self.drops,
            "seed": self.seed,
            "trace": self.trace,
            "min_sets_per_ue": self.min_sets_per_ue,
        }

    def config_hash(self) -> str:
        # output_dir and workers do not change results
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def tuples(self):
        return [(s, p, n, d) for s in self.schedulers for p in self.psdb_set_ms
                for n in self.sweep_xr_per_cell for d in range(self.drops)]


def derived_seed(seed: int, scheduler, psdb_ms: float, n: int, drop: int) -> int:
    """``seed`` XOR a 60-bit hash of the sweep tuple."""
    key = f"{SchedulerKind(scheduler).value}|{float(psdb_ms)!r}|{int(n)}|{int(drop)}".encode()
    return int(seed) ^ int(hashlib.sha256(key).hexdigest()[:15], 16)


def run_config(spec: ExperimentSpec, scheduler, psdb_ms: float, n: int) -> SimConfig:
    base = spec.base
    return dataclasses.replace(
        base,
        seed=spec.seed,
        drops=spec.drops,
        scheduler_kind=SchedulerKind(scheduler),
        xr_ues_per_cell=int(n),
        traffic=dataclasses.replace(base.traffic, psdb_ms=float(psdb_ms)),
    )


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return format(x, ".10g")
    return str(x)


def _header(fh, config_hash: str, seed: int, note: str | None = None):
    fh.write(f"# config_hash={config_hash} seed={seed}\n")
    if note:
        fh.write(f"# {note}\n")


def _write_csv(path: Path, columns, rows, config_hash: str, seed: int, note: str | None = None):
    buf = io.StringIO(newline="")
    _header(buf, config_hash, seed, note)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    try:
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def _tag(scheduler, psdb, n, drop) -> str:
    return f"{SchedulerKind(scheduler).value}_psdb{psdb:g}_N{n}_drop{drop}"


def _run_tuple(args):
    """Run one sweep tuple, write its drop CSV and return a compact summary."""
    spec, (scheduler, psdb, n, drop), out_dir = args
    seed = derived_seed(spec.seed, scheduler, psdb, n, drop)
    config = dataclasses.replace(run_config(spec, scheduler, psdb, n), run_seed=seed)
    trace = [] if spec.trace else None
    rec = run_drop(config, drop, trace=trace)
    h = config.config_hash()
    tag = _tag(scheduler, psdb, n, drop)

    rows, outcomes, delays, undelivered = [], {}, [], 0
    for r in rec.sets:
        cell, ue, idx, size, arr, dlv, served, decoded = r
        counted = rec.counted(r)
        delay = None if dlv is None else dlv - arr
        in_time = delay is not None and delay <= psdb + 1e-9
        rows.append((cell, ue, idx, size, arr, dlv, delay, int(in_time), int(counted), served, decoded))
        if counted:
            ok, tot = outcomes.get((cell, ue), (0, 0))
            outcomes[(cell, ue)] = (ok + in_time, tot + 1)
            if delay is None:
                undelivered += 1
            else:
                delays.append(delay)
    _write_csv(Path(out_dir) / "drops" / f"{tag}.csv",
               ["cell", "ue", "set_index", "size_bits", "arrival_ms", "delivered_ms", "delay_ms",
                "in_time", "counted", "served_bits", "decoded_bits"], rows, h, seed)
    if trace is not None:
        _write_csv(Path(out_dir) / "traces" / f"{tag}.csv", ["slot", "cell", "ue", "metric", "prbs", "retx"],
                   trace, h, seed)

    window_s = (rec.duration_ms - rec.warmup_ms) / 1000.0
    queued = [q for c in sorted(rec.queued) for q in rec.queued[c]]
    return {
        "tuple": (SchedulerKind(scheduler).value, float(psdb), int(n), int(drop)),
        "seed": seed,
        "config_hash": h,
        "outcomes": sorted((cell, ue, ok, tot) for (cell, ue), (ok, tot) in outcomes.items()),
        "delays": np.sort(np.asarray(delays, dtype=float)),
        "undelivered": undelivered,
        "queued_sum": float(sum(queued)),
        "queued_count": len(queued),
        "embb_tp_mbps": [b / window_s / 1e6 for b in rec.embb_bits],
    }


def _check_output_dir(out: Path):
    try:
        (out / "drops").mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OutputError(f"output directory {out} is not writable: {exc}") from exc


def _ccdf_rows(delays: np.ndarray, undelivered: int):
    total = len(delays) + undelivered
    if total == 0:
        return []
    values, counts = np.unique(delays, return_counts=True)
    above = total - np.cumsum(counts)
    return [(float(d), float(a / total)) for d, a in zip(values, above)]


def _percentile(delays: np.ndarray, undelivered: int, q: float) -> float:
    for d, c in _ccdf_rows(delays, undelivered):
        if c <= 1 - q + 1e-12:
            return d
    return math.inf


def run_experiment(spec: ExperimentSpec, output_dir=None) -> dict:
    """Execute every sweep tuple and write per-drop and per-figure data.

    Returns the summary that is also written to ``summary.json``.
    """
    out = Path(output_dir if output_dir is not None else spec.output_dir)
    _check_output_dir(out)
    if spec.trace:
        (out / "traces").mkdir(exist_ok=True)
    tuples = spec.tuples()
    jobs = [(spec, t, str(out)) for t in tuples]
    log.info("running %d simulations with %d worker(s)", len(jobs), spec.workers)
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_run_tuple, jobs))
    else:
        results = []
        for i, job in enumerate(jobs):
            results.append(_run_tuple(job))
            log.info("finished %s (%d/%d)", _tag(*job[1]), i + 1, len(jobs))
    return aggregate(spec, results, out)


def aggregate(spec: ExperimentSpec, results, out: Path) -> dict:
    h, seed = spec.config_hash(), spec.seed
    by_point: dict = {}
    for r in results:
        s, p, n, _ = r["tuple"]
        by_point.setdefault((s, p, n), []).append(r)
    for runs in by_point.values():
        runs.sort(key=lambda r: r["tuple"][3])

    scheds = [s.value for s in spec.schedulers]
    psdbs, loads = spec.psdb_set_ms, spec.sweep_xr_per_cell
    ccdf_load = CCDF_LOAD if CCDF_LOAD in loads else max(loads)

    fig2, fig3, fig4, fig5, fig6 = [], [], [], [], []
    summary_points = []
    min_sets = None
    for s in scheds:
        for p in psdbs:
            curve = []
            for n in loads:
                runs = by_point[(s, p, n)]
                ues = [(ok, tot) for r in runs for (_, _, ok, tot) in r["outcomes"]]
                ratio = sum(ue_satisfied(ok, tot, SATISFACTION_THRESHOLD) for ok, tot in ues) / len(ues)
                curve.append((n, ratio))
                fewest = min(tot for _, tot in ues)
                min_sets = fewest if min_sets is None else min(min_sets, fewest)
                delays = np.sort(np.concatenate([r["delays"] for r in runs]))
                undelivered = sum(r["undelivered"] for r in runs)
                queued = sum(r["queued_sum"] for r in runs) / max(1, sum(r["queued_count"] for r in runs))
                tp = float(np.mean([v for r in runs for v in r["embb_tp_mbps"]])) if spec.base.embb_ues_per_cell \
                    else 0.0
                fig2.append((s, p, n, ratio))
                fig5.append((s, p, n, queued))
                fig6.append((s, p, n, tp))
                if n == ccdf_load:
                    fig4.extend((s, p, n, d, c) for d, c in _ccdf_rows(delays, undelivered))
                summary_points.append({
                    "scheduler": s, "psdb_ms": p, "xr_ues_per_cell": n,
                    "satisfaction_ratio": ratio,
                    "delay_p50_ms": _percentile(delays, undelivered, 0.50),
                    "delay_p95_ms": _percentile(delays, undelivered, 0.95),
                    "delay_p99_ms": _percentile(delays, undelivered, 0.99),
                    "undelivered_share": undelivered / max(1, len(delays) + undelivered),
                    "avg_queued_ues": queued,
                    "embb_cell_tp_mbps": tp,
                    "min_counted_sets_per_ue": fewest,
                })
            cap = xr_capacity_detail(curve, CAPACITY_TARGET)
            fig3.append((s, p, cap.value, cap.censored or ""))

    window_note = "PDU-sets arriving during warm-up or within the final PSDB of a drop are not counted"
    _write_csv(out / "fig2_satisfaction.csv", ["scheduler", "psdb", "N", "ratio"], fig2, h, seed, window_note)
    _write_csv(out / "fig3_capacity.csv", ["scheduler", "psdb", "capacity", "censored"], fig3, h, seed)
    _write_csv(out / "fig4_ccdf.csv", ["scheduler", "psdb", "N", "delay_ms", "ccdf"], fig4, h, seed,
               "undelivered sets count as infinitely late; the last ccdf value is their share")
    _write_csv(out / "fig5_queued.csv", ["scheduler", "psdb", "N", "avg_queued_ues"], fig5, h, seed)
    _write_csv(out / "fig6_embb_tp.csv", ["scheduler", "psdb", "N", "embb_cell_tp_mbps"], fig6, h, seed)

    check = {"required": spec.min_sets_per_ue, "min_observed": min_sets,
             "passed": min_sets is not None and min_sets >= spec.min_sets_per_ue}
    summary = {
        "config_hash": h,
        "seed": seed,
        "spec": spec.to_dict(),
        "kpi_window": window_note,
        "runs": [{"scheduler": r["tuple"][0], "psdb_ms": r["tuple"][1], "xr_ues_per_cell": r["tuple"][2],
                  "drop": r["tuple"][3], "seed": r["seed"], "config_hash": r["config_hash"]}
                 for r in sorted(results, key=lambda r: r["tuple"])],
        "points": summary_points,
        "capacity": [{"scheduler": s, "psdb_ms": p, "capacity": c, "censored": cz or None}
                     for s, p, c, cz in fig3],
        "ccdf_load": ccdf_load,
        "sets_per_ue_check": check,
    }
    try:
        with open(out / "summary.json", "w") as fh:
            json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OutputError(f"cannot write summary: {exc}") from exc
    if spec.min_sets_per_ue and not check["passed"]:
        raise ContractError(f"only {min_sets} counted PDU-sets for some XR UE, "
                            f"fewer than the required {spec.min_sets_per_ue}")
    return summary


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def resolve_output_dir(spec: ExperimentSpec, cli_out=None) -> str:
    """``--out`` wins, then the environment override, then the config value."""
    if cli_out:
        return str(cli_out)
    return os.environ.get(OUTPUT_DIR_ENV) or spec.output_dir
