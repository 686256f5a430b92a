"""Human-readable ``key = value`` experiment configuration.

Values are JSON literals (numbers, ``true``/``false``, quoted strings, lists);
bare words such as ``proposed`` are read as strings. ``#`` starts a comment
line. Unknown or repeated keys are rejected with the offending line number.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError, ConfigParseError
from .experiment import FAST_PROFILE, ExperimentSpec
from .link import LinkConfig, default_mcs_table
from .scheduler import SchedulerConfig, SchedulerKind
from .sim import SimConfig
from .traffic import TruncatedGaussianParams, XrTrafficConfig

_BARE_WORD = re.compile(r"^[A-Za-z_][\w\-./]*$")


@dataclass(frozen=True)
class Key:
    name: str
    kind: str  # int, float, bool, str, tn, ints, floats, strs
    doc: str
    check: Callable[[Any], bool] | None = None
    rule: str = ""


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _all_pos(v):
    return len(v) > 0 and all(x > 0 for x in v)


def _kind_names(v):
    return len(v) > 0 and all(_is_kind(x) for x in v)


def _is_kind(v):
    try:
        SchedulerKind(v)
        return True
    except ValueError:
        return False


def _unit_open(v):
    return 0 < v < 1


KEYS = [
    # deployment
    Key("num_cells", "int", "number of cells (two rows when even)", _pos, "must be > 0"),
    Key("isd_m", "float", "inter-site distance in metres", _pos, "must be > 0"),
    Key("world_height_m", "float", "height of the deployment area in metres", _pos, "must be > 0"),
    Key("xr_ues_per_cell", "int", "XR UEs per cell for single runs", _nonneg, "must be >= 0"),
    Key("embb_ues_per_cell", "int", "full-buffer eMBB UEs per cell", _nonneg, "must be >= 0"),
    Key("slot_ms", "float", "slot duration in ms", _pos, "must be > 0"),
    Key("tdd_pattern", "str", "cyclic TDD pattern; only D slots carry downlink data",
        lambda v: bool(v) and not set(v) - set("DSU"), "must use only D, S and U"),
    Key("prbs", "int", "PRBs per slot", _pos, "must be > 0"),
    Key("duration_ms", "float", "simulated time per drop in ms", _pos, "must be > 0"),
    Key("warmup_ms", "float", "initial interval excluded from KPIs in ms", _nonneg, "must be >= 0"),
    Key("xr_a_k", "float", "XR satisfaction weight used by the optimization objective", _nonneg, "must be >= 0"),
    # traffic
    Key("frame_rate_fps", "float", "XR frame rate", _pos, "must be > 0"),
    Key("frame_size_kb", "tn", "XR frame size [mean, std, lower, upper] in kB"),
    Key("jitter_ms", "tn", "XR frame jitter [mean, std, lower, upper] in ms"),
    Key("pdu_payload_bytes", "int", "PDU payload size in bytes", _pos, "must be > 0"),
    Key("random_frame_phase", "bool", "give each XR UE a random frame phase"),
    Key("psdb_ms", "float", "PDU-set delay budget for single runs in ms", _pos, "must be > 0"),
    # link
    Key("tx_power_dbm", "float", "gNB transmit power"),
    Key("pl0_db", "float", "path loss at 1 m"),
    Key("pl_exponent", "float", "path-loss exponent", _pos, "must be > 0"),
    Key("shadowing_std_db", "float", "per-link log-normal shadowing std", _nonneg, "must be >= 0"),
    Key("serving_beam_gain_db", "float", "beamforming gain on the serving link"),
    Key("noise_figure_db", "float", "UE noise figure"),
    Key("bandwidth_hz", "float", "carrier bandwidth", _pos, "must be > 0"),
    Key("max_layers", "int", "maximum spatial layers", _pos, "must be > 0"),
    Key("bler_slope_db", "float", "width of the CBG error sigmoid", _pos, "must be > 0"),
    Key("bler_bias_db", "float", "offset of the CBG error sigmoid from the MCS threshold"),
    Key("olla_step_db", "float", "OLLA down-step on a CBG NACK", _pos, "must be > 0"),
    Key("olla_target", "float", "OLLA first-transmission CBG error target", _unit_open, "must be in (0, 1)"),
    Key("olla_bound_db", "float", "OLLA offset clamp", _pos, "must be > 0"),
    Key("cqi_period_slots", "int", "CQI reporting period", _pos, "must be > 0"),
    Key("cqi_delay_slots", "int", "CQI reporting delay", _nonneg, "must be >= 0"),
    Key("harq_rtt_slots", "int", "HARQ feedback round trip", _pos, "must be > 0"),
    Key("max_harq_tx", "int", "transmissions per TB before it is abandoned", _pos, "must be > 0"),
    Key("mcs_entries", "int", "number of MCS table entries", lambda v: v >= 2, "must be >= 2"),
    Key("mcs_min_se", "float", "lowest MCS spectral efficiency (bit/s/Hz)", _pos, "must be > 0"),
    Key("mcs_max_se", "float", "highest MCS spectral efficiency (bit/s/Hz)", _pos, "must be > 0"),
    # scheduler
    Key("scheduler", "str", "scheduler for single runs (proposed, wpf, mlwdf, pf)", _is_kind,
        "must be one of proposed, wpf, mlwdf, pf"),
    Key("wpf_xr_weight", "float", "WPF weight of XR UEs", _pos, "must be > 0"),
    Key("wpf_embb_weight", "float", "WPF weight of eMBB UEs", _pos, "must be > 0"),
    Key("mlwdf_delta_xr", "float", "M-LWDF delay-violation probability of XR UEs", _unit_open, "must be in (0, 1)"),
    Key("mlwdf_delta_embb", "float", "M-LWDF delay-violation probability of eMBB UEs", _unit_open,
        "must be in (0, 1)"),
    Key("tp_window_ttis", "float", "averaging window of the throughput tracker", lambda v: v >= 1, "must be >= 1"),
    Key("tp_floor_bps", "float", "floor on the averaged throughput", _pos, "must be > 0"),
    Key("eps_beta", "float", "floor on the remaining-budget fraction", _pos, "must be > 0"),
    # experiment
    Key("sweep_xr_per_cell", "ints", "XR loads per cell to sweep", _all_pos, "must list positive loads"),
    Key("psdb_set_ms", "floats", "PDU-set delay budgets to sweep", _all_pos, "must list positive budgets"),
    Key("schedulers", "strs", "schedulers to sweep", _kind_names, "must list known schedulers"),
    Key("drops", "int", "independent UE drops per sweep point", _pos, "must be > 0"),
    Key("seed", "int", "master seed", _nonneg, "must be >= 0"),
    Key("output_dir", "str", "directory for CSV and JSON outputs"),
    Key("workers", "int", "parallel simulation processes", _pos, "must be > 0"),
    Key("trace", "bool", "write a per-TTI scheduling trace for every drop"),
    Key("min_sets_per_ue", "int", "required post-warm-up PDU-sets per XR UE (0 disables)", _nonneg, "must be >= 0"),
]
KEY_BY_NAME = {k.name: k for k in KEYS}


def _tn(p: TruncatedGaussianParams):
    return [p.mean, p.std, p.lower, p.upper]


def defaults() -> dict:
    """Default value of every configuration key."""
    sim, traffic, link, sched, exp = SimConfig(), XrTrafficConfig(), LinkConfig(), SchedulerConfig(), ExperimentSpec()
    table = link.mcs_table
    return {
        "num_cells": sim.num_cells, "isd_m": sim.isd_m, "world_height_m": sim.world_height_m,
        "xr_ues_per_cell": sim.xr_ues_per_cell, "embb_ues_per_cell": sim.embb_ues_per_cell,
        "slot_ms": sim.slot_ms, "tdd_pattern": sim.tdd_pattern, "prbs": sim.prbs,
        "duration_ms": sim.duration_ms, "warmup_ms": sim.warmup_ms, "xr_a_k": sim.xr_a_k,
        "frame_rate_fps": traffic.frame_rate, "frame_size_kb": _tn(traffic.frame_size_dist),
        "jitter_ms": _tn(traffic.jitter_dist), "pdu_payload_bytes": traffic.pdu_payload_bytes,
        "psdb_ms": traffic.psdb_ms, "random_frame_phase": sim.random_frame_phase,
        "tx_power_dbm": link.tx_power_dbm, "pl0_db": link.pl0_db, "pl_exponent": link.pl_exponent,
        "shadowing_std_db": link.shadowing_std_db, "serving_beam_gain_db": link.serving_beam_gain_db,
        "noise_figure_db": link.noise_figure_db, "bandwidth_hz": link.bandwidth_hz,
        "max_layers": link.max_layers, "bler_slope_db": link.bler_slope_db, "bler_bias_db": link.bler_bias_db,
        "olla_step_db": link.olla_step_db, "olla_target": link.olla_target, "olla_bound_db": link.olla_bound_db,
        "cqi_period_slots": link.cqi_period_slots, "cqi_delay_slots": link.cqi_delay_slots,
        "harq_rtt_slots": link.harq_rtt_slots, "max_harq_tx": link.max_harq_tx,
        "mcs_entries": len(table), "mcs_min_se": table[0].spectral_efficiency,
        "mcs_max_se": table[-1].spectral_efficiency,
        "scheduler": sim.scheduler_kind.value,
        "wpf_xr_weight": sched.wpf_xr_weight, "wpf_embb_weight": sched.wpf_embb_weight,
        "mlwdf_delta_xr": sched.mlwdf_delta_xr, "mlwdf_delta_embb": sched.mlwdf_delta_embb,
        "tp_window_ttis": sched.tp_window_ttis, "tp_floor_bps": sched.tp_floor_bps, "eps_beta": sched.eps_beta,
        "sweep_xr_per_cell": list(exp.sweep_xr_per_cell), "psdb_set_ms": list(exp.psdb_set_ms),
        "schedulers": [s.value for s in exp.schedulers], "drops": exp.drops, "seed": exp.seed,
        "output_dir": exp.output_dir, "workers": exp.workers, "trace": exp.trace,
        "min_sets_per_ue": exp.min_sets_per_ue,
    }


def _type_ok(kind: str, v) -> bool:
    def num(x):
        return isinstance(x, (int, float)) and not isinstance(x, bool)

    def integer(x):
        return isinstance(x, int) and not isinstance(x, bool)

    if kind == "int":
        return integer(v)
    if kind == "float":
        return num(v)
    if kind == "bool":
        return isinstance(v, bool)
    if kind == "str":
        return isinstance(v, str)
    if kind == "tn":
        return isinstance(v, list) and len(v) == 4 and all(num(x) for x in v)
    if kind == "ints":
        return isinstance(v, list) and all(integer(x) for x in v)
    if kind == "floats":
        return isinstance(v, list) and all(num(x) for x in v)
    if kind == "strs":
        return isinstance(v, list) and all(isinstance(x, str) for x in v)
    raise AssertionError(kind)


_KIND_TEXT = {"int": "an integer", "float": "a number", "bool": "true or false", "str": "a string",
              "tn": "a list [mean, std, lower, upper]", "ints": "a list of integers",
              "floats": "a list of numbers", "strs": "a list of strings"}


def parse_text(text: str, path: str = "<config>") -> tuple[dict, dict]:
    """Parse config text into ``(values, line_numbers)`` without building objects."""
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', got {line!r}", path, lineno)
        key, _, rhs = line.partition("=")
        key, rhs = key.strip(), rhs.strip()
        if key not in KEY_BY_NAME:
            raise ConfigParseError(f"unknown key {key!r}", path, lineno)
        if key in values:
            raise ConfigParseError(f"{key} set twice (first on line {lines[key]})", path, lineno)
        try:
            value = json.loads(rhs)
        except json.JSONDecodeError:
            if not _BARE_WORD.match(rhs):
                raise ConfigParseError(f"{key}: cannot parse value {rhs!r}", path, lineno) from None
            value = rhs
        spec = KEY_BY_NAME[key]
        if not _type_ok(spec.kind, value):
            raise ConfigParseError(f"{key} must be {_KIND_TEXT[spec.kind]}, got {rhs}", path, lineno)
        if spec.kind == "float":
            value = float(value)
        elif spec.kind == "floats":
            value = [float(x) for x in value]
        if spec.check is not None and not spec.check(value):
            raise ConfigParseError(f"{key} {spec.rule}, got {rhs}", path, lineno)
        values[key] = value
        lines[key] = lineno
    return values, lines


def build_spec(values: dict, lines: dict | None = None, path: str = "<config>") -> ExperimentSpec:
    """Turn parsed values (missing keys take defaults) into an :class:`ExperimentSpec`."""
    lines = lines or {}
    v = defaults()
    v.update(values)
    if "psdb_ms" in values and "psdb_set_ms" not in values:
        v["psdb_set_ms"] = [v["psdb_ms"]]
    if "scheduler" in values and "schedulers" not in values:
        v["schedulers"] = [v["scheduler"]]

    def fail(keys, exc, prefix=""):
        line = min((lines[k] for k in keys if k in lines), default=None)
        raise ConfigParseError(prefix + str(exc), path, line) from exc

    try:
        frame = TruncatedGaussianParams(*map(float, v["frame_size_kb"]))
    except ConfigError as exc:
        fail(["frame_size_kb"], exc, "frame_size_kb: ")
    try:
        jitter = TruncatedGaussianParams(*map(float, v["jitter_ms"]))
    except ConfigError as exc:
        fail(["jitter_ms"], exc, "jitter_ms: ")
    if v["mcs_min_se"] >= v["mcs_max_se"]:
        fail(["mcs_min_se", "mcs_max_se"], ConfigError("mcs_min_se must be below mcs_max_se"))

    traffic_keys = ("frame_rate_fps", "pdu_payload_bytes", "psdb_ms")
    try:
        traffic = XrTrafficConfig(v["frame_rate_fps"], frame, jitter, v["psdb_ms"], v["pdu_payload_bytes"])
    except ConfigError as exc:
        fail(traffic_keys, exc)
    link_keys = ("tx_power_dbm", "pl0_db", "pl_exponent", "shadowing_std_db", "serving_beam_gain_db",
                 "noise_figure_db", "bandwidth_hz", "max_layers", "bler_slope_db", "bler_bias_db",
                 "olla_step_db", "olla_target", "olla_bound_db", "cqi_period_slots", "cqi_delay_slots",
                 "harq_rtt_slots", "max_harq_tx")
    try:
        link = LinkConfig(**{k: v[k] for k in link_keys},
                          mcs_table=default_mcs_table(v["mcs_entries"], v["mcs_min_se"], v["mcs_max_se"]))
    except ConfigError as exc:
        fail(link_keys, exc)
    sched_keys = ("wpf_xr_weight", "wpf_embb_weight", "mlwdf_delta_xr", "mlwdf_delta_embb",
                  "tp_window_ttis", "tp_floor_bps", "eps_beta")
    try:
        sched = SchedulerConfig(**{k: v[k] for k in sched_keys})
    except ConfigError as exc:
        fail(sched_keys, exc)
    sim_keys = ("num_cells", "isd_m", "world_height_m", "xr_ues_per_cell", "embb_ues_per_cell", "slot_ms",
                "tdd_pattern", "prbs", "duration_ms", "warmup_ms", "drops", "seed", "xr_a_k",
                "random_frame_phase")
    try:
        base = SimConfig(**{k: v[k] for k in sim_keys}, scheduler_kind=SchedulerKind(v["scheduler"]),
                         traffic=traffic, link=link, scheduler=sched)
    except ConfigError as exc:
        fail(sim_keys, exc)
    exp_keys = ("sweep_xr_per_cell", "psdb_set_ms", "schedulers", "drops", "seed", "output_dir", "workers",
                "trace", "min_sets_per_ue", "duration_ms")
    try:
        return ExperimentSpec(base, tuple(v["sweep_xr_per_cell"]), tuple(v["psdb_set_ms"]),
                              tuple(SchedulerKind(s) for s in v["schedulers"]), v["drops"], v["seed"],
                              v["output_dir"], v["workers"], v["trace"], v["min_sets_per_ue"])
    except ConfigError as exc:
        fail(exp_keys, exc)


def parse_config(path, fast: bool = False) -> ExperimentSpec:
    """Read a config file; ``fast`` swaps in the CI-scale profile before validation."""
    p = Path(path)
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise ConfigParseError("config file not found", str(p)) from None
    except OSError as exc:
        raise ConfigParseError(f"cannot read config: {exc}", str(p)) from exc
    values, lines = parse_text(text, str(p))
    if fast:
        values.update(FAST_PROFILE)
    return build_spec(values, lines, str(p))


def reference_text() -> str:
    """Every key with its default, as a loadable config file."""
    out = ["# Configuration reference: every key with its default value.",
           "# Generated by `xrsched defaults`; an empty file yields the same settings.", ""]
    d = defaults()
    for key in KEYS:
        out.append(f"# {key.doc}" + (f" ({key.rule})" if key.rule else ""))
        out.append(f"{key.name} = {json.dumps(d[key.name])}")
        out.append("")
    return "\n".join(out)
