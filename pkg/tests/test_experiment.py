import csv
import dataclasses
import json
import os

import pytest

from xrsched.errors import ConfigError, OutputError
from xrsched.experiment import (
    AGGREGATE_FILES,
    OUTPUT_DIR_ENV,
    ExperimentSpec,
    derived_seed,
    resolve_output_dir,
    run_config,
    run_experiment,
)
from xrsched.scheduler import SchedulerKind
from xrsched.sim import SimConfig


def tiny_spec(**kw):
    base = SimConfig(num_cells=1, embb_ues_per_cell=1, duration_ms=700.0, warmup_ms=100.0)
    args = dict(base=base, sweep_xr_per_cell=(3, 4), psdb_set_ms=(15.0,), schedulers=(SchedulerKind.PROPOSED,),
                drops=2, min_sets_per_ue=0)
    args.update(kw)
    return ExperimentSpec(**args)


def read_rows(path):
    with open(path) as fh:
        lines = [l for l in fh if not l.startswith("#")]
    return list(csv.DictReader(lines))


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return tiny_spec(), out, run_experiment(tiny_spec(), out)


def test_tiny_sweep_writes_expected_files(tiny_run):
    spec, out, summary = tiny_run
    assert len(summary["runs"]) == 4
    assert len(list((out / "drops").glob("*.csv"))) == 4
    for name in AGGREGATE_FILES:
        path = out / name
        assert path.exists()
        assert path.read_text().startswith(f"# config_hash={spec.config_hash()} seed=0")
    assert json.loads((out / "summary.json").read_text())["config_hash"] == spec.config_hash()
    sat = read_rows(out / "fig2_satisfaction.csv")
    assert [(r["scheduler"], r["N"]) for r in sat] == [("proposed", "3"), ("proposed", "4")]
    assert all(0.0 <= float(r["ratio"]) <= 1.0 for r in sat)


def test_drop_csv_columns(tiny_run):
    _, out, _ = tiny_run
    rows = read_rows(next((out / "drops").glob("*.csv")))
    assert rows and set(rows[0]) == {"cell", "ue", "set_index", "size_bits", "arrival_ms", "delivered_ms",
                                     "delay_ms", "in_time", "counted", "served_bits", "decoded_bits"}
    for r in rows:
        assert int(r["decoded_bits"]) <= int(r["served_bits"]) <= int(r["size_bits"])


def test_rerun_is_byte_identical(tiny_run, tmp_path):
    spec, out, _ = tiny_run
    run_experiment(spec, tmp_path)
    names = [p.relative_to(out) for p in sorted(out.rglob("*.csv"))] + [out.joinpath("summary.json").relative_to(out)]
    for rel in names:
        assert (out / rel).read_bytes() == (tmp_path / rel).read_bytes(), rel


def test_different_seed_changes_results(tiny_run, tmp_path):
    spec, out, _ = tiny_run
    run_experiment(dataclasses.replace(spec, seed=7), tmp_path)
    a = (out / "drops").glob("*.csv")
    assert any((tmp_path / "drops" / p.name).read_text() != p.read_text() for p in a)


def test_unwritable_output_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError):
        run_experiment(tiny_spec(), blocker / "sub")


def test_derived_seeds_distinct():
    spec = ExperimentSpec(min_sets_per_ue=0)
    seeds = {derived_seed(0, *t) for t in spec.tuples()}
    assert len(seeds) == len(spec.tuples())
    assert derived_seed(5, "wpf", 10, 3, 0) == 5 ^ derived_seed(0, "wpf", 10, 3, 0)


def test_run_config_sets_tuple_fields():
    cfg = run_config(tiny_spec(seed=3), "mlwdf", 20.0, 6)
    assert cfg.scheduler_kind is SchedulerKind.MLWDF and cfg.xr_ues_per_cell == 6
    assert cfg.traffic.psdb_ms == 20.0 and cfg.seed == 3


def test_output_dir_precedence(monkeypatch):
    spec = tiny_spec(output_dir="from_config")
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    assert resolve_output_dir(spec) == "from_config"
    monkeypatch.setenv(OUTPUT_DIR_ENV, "from_env")
    assert resolve_output_dir(spec) == "from_env"
    assert resolve_output_dir(spec, "from_cli") == "from_cli"


def test_hash_ignores_output_dir_and_workers():
    assert tiny_spec(output_dir="a", workers=1).config_hash() == tiny_spec(output_dir="b", workers=3).config_hash()
    assert tiny_spec(seed=1).config_hash() != tiny_spec().config_hash()


def test_short_duration_rejected_by_sets_floor():
    with pytest.raises(ConfigError, match="min_sets_per_ue"):
        tiny_spec(min_sets_per_ue=540)
    assert ExperimentSpec().expected_sets_per_ue() >= 540


def test_spec_validation():
    with pytest.raises(ConfigError):
        tiny_spec(sweep_xr_per_cell=(3, 3))
    with pytest.raises(ConfigError):
        tiny_spec(psdb_set_ms=())
    with pytest.raises(ConfigError):
        tiny_spec(workers=0)


@pytest.mark.skipif((os.cpu_count() or 1) < 2, reason="needs two CPUs")
def test_parallel_matches_serial(tiny_run, tmp_path):
    spec, out, _ = tiny_run
    run_experiment(dataclasses.replace(spec, workers=2), tmp_path)
    assert (out / "fig2_satisfaction.csv").read_bytes() == (tmp_path / "fig2_satisfaction.csv").read_bytes()


def test_fast_profile_matches_config_path(tmp_path):
    from xrsched.config import parse_config
    cfg = tmp_path / "empty.conf"
    cfg.write_text("")
    assert parse_config(cfg, fast=True).config_hash() == ExperimentSpec().fast().config_hash()
