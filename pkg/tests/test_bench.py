import csv
import json
import math

import numpy as np
import pytest

from sparseva import bench
from sparseva.bench import (
    RECORD_COLUMNS,
    ConfigError,
    EmptyRecordsError,
    ExperimentConfig,
    TrialRecord,
    make_trial,
    read_records,
    report,
    run_suite,
    summarize_records,
    trial_keys,
    write_records,
)
from sparseva.cli import main


def small_config(**kw):
    base = dict(num_systems=2, snr_levels_db=[20.0, 6.0], estimators=["LS", "SPe-FIR-N"], N=200, fir_n=15)
    base.update(kw)
    return ExperimentConfig(**base).validate()


def record(estimator="LS", fit=80.0, snr=20.0, system_id=0, converged="true", wall=0.5):
    return TrialRecord(system_id, 3, snr, 0, estimator, fit, wall, converged, 1)


def test_single_record():
    cfg = small_config(num_systems=1, snr_levels_db=[10.0], estimators=["LS"])
    recs = run_suite(cfg)
    assert len(recs) == 1
    assert recs[0].estimator == "LS" and math.isfinite(recs[0].fit)


def test_record_count_formula():
    cfg = ExperimentConfig.preset("full")
    assert len(trial_keys(cfg)) * len(cfg.estimators) == 7200
    cfg = small_config(realizations_per_level=2)
    assert len(run_suite(cfg)) == 2 * 2 * 2 * 2


def test_trial_seeds_independent_of_other_settings():
    a = make_trial(small_config(), 1, 0, 0)
    b = make_trial(small_config(num_systems=5, estimators=["LS"]), 1, 0, 0)
    assert a.seed == b.seed
    np.testing.assert_array_equal(a.data.y, b.data.y)
    c = make_trial(small_config(), 1, 1, 0)
    assert c.system.poles.tolist() == a.system.poles.tolist()
    assert c.seed != a.seed


def test_coloured_noise_trial():
    cfg = small_config(noise_kind="coloured")
    t = make_trial(cfg, 0, 0, 0)
    assert t.noise_model is not None


def test_write_read_roundtrip(tmp_path):
    cfg = small_config(num_systems=1)
    recs = run_suite(cfg)
    path = write_records(recs, tmp_path / "r.csv", cfg)
    with open(path) as fh:
        assert next(csv.reader(fh)) == list(RECORD_COLUMNS)
    back = read_records(path)
    assert [r.row() for r in back] == [r.row() for r in recs]
    side = json.loads(path.with_suffix(".json").read_text())
    assert side["config"]["num_systems"] == 1
    assert side["columns"] == list(RECORD_COLUMNS)


def test_determinism_byte_identical(tmp_path):
    cfg = small_config(timing=False)
    a = write_records(run_suite(cfg), tmp_path / "a.csv", cfg)
    b = write_records(run_suite(cfg, jobs=2), tmp_path / "b.csv", cfg)
    assert a.read_bytes() == b.read_bytes()


def test_report_single_record(tmp_path):
    path = write_records([record(fit=80.0)], tmp_path / "r.csv")
    summary = report(path, tmp_path)
    assert summary["fit_table"] == [{"snr_db": 20.0, "LS": 80.0}]
    for name in ("fit_table.csv", "time_table.csv", "boxplot.csv"):
        assert (tmp_path / name).exists()


def test_report_symmetric_cells():
    recs = [record("LS", 70.0), record("LS", 90.0), record("SPe-FIR-N", 70.0), record("SPe-FIR-N", 90.0)]
    s = summarize_records(recs)
    assert s["fit_table"][0]["LS"] == s["fit_table"][0]["SPe-FIR-N"] == 80.0
    box = {b["estimator"]: {k: v for k, v in b.items() if k != "estimator"} for b in s["boxplot"]}
    assert box["LS"] == box["SPe-FIR-N"]


def test_report_excludes_failed_rows():
    s = summarize_records([record(fit=60.0), record(fit=float("nan"), converged="failed")])
    assert s["fit_table"][0]["LS"] == 60.0
    with pytest.raises(EmptyRecordsError):
        summarize_records([record(fit=float("nan"), converged="failed")])


def test_report_is_pure_function_of_records(tmp_path):
    path = write_records([record(fit=70.0), record(fit=75.0, system_id=1)], tmp_path / "r.csv")
    report(path, tmp_path / "a")
    report(path, tmp_path / "b")
    for name in ("fit_table.csv", "time_table.csv", "boxplot.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_json_roundtrip(tmp_path):
    cfg = small_config(master_seed=7)
    (tmp_path / "c.json").write_text(cfg.to_json())
    assert ExperimentConfig.load(tmp_path / "c.json") == cfg


@pytest.mark.parametrize(
    "change",
    [
        {"orders": [0, 3]},
        {"fir_n": 4},
        {"estimators": ["PEM"]},
        {"noise_kind": "pink"},
        {"epsilon_rule": "XYZ"},
        {"N": 30},
        {"snr_levels_db": []},
    ],
)
def test_config_validation(change):
    with pytest.raises(ConfigError):
        small_config(**change)


def test_config_rejects_unknown_field():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"num_systems": 1, "colour": "red"})


def test_failed_estimator_becomes_flagged_row(monkeypatch):
    def boom(config):
        table = original(config)
        table["SPe-FIR-N"] = ("FIR", lambda reg: 1 / 0)
        return table

    original = bench._estimator_table
    monkeypatch.setattr(bench, "_estimator_table", boom)
    recs = run_suite(small_config(num_systems=1, snr_levels_db=[20.0]))
    assert [r.converged for r in recs] == ["true", "failed"]
    assert math.isnan(recs[1].fit)


# command line


def test_cli_gen_config_run_report(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    assert main(["gen-config", "--out", str(cfg_path), "--seed", "3"]) == 0
    cfg = json.loads(cfg_path.read_text())
    cfg.update(num_systems=1, snr_levels_db=[20.0], N=200, fir_n=15)
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg_path), "--out", str(out), "--estimators", "LS,SPe-FIR-N"]) == 0
    rows = read_records(out / "records.csv")
    assert [r.estimator for r in rows] == ["LS", "SPe-FIR-N"]
    assert main(["report", "--out", str(out)]) == 0
    assert (out / "fit_table.csv").exists()
    assert "SPe-FIR-N" in capsys.readouterr().out


def test_cli_gen_config_stdout_coloured(capsys):
    assert main(["gen-config", "--noise", "coloured", "--preset", "full"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["noise_kind"] == "coloured" and cfg["num_systems"] == 150
    assert len(cfg["estimators"]) == 6


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"fir_n": 4}))
    assert main(["run", "--config", str(bad)]) == 1
    assert main(["run", "--estimators", "NOPE"]) == 1
    assert main(["report", "--out", str(tmp_path / "missing")]) == 3
    empty = write_records([], tmp_path / "empty.csv")
    assert main(["report", str(empty), "--out", str(tmp_path)]) == 3
    garbage = tmp_path / "garbage.csv"
    garbage.write_text("not,a,records,file\n")
    assert main(["report", str(garbage), "--out", str(tmp_path)]) == 2


def test_cli_demo(capsys):
    assert main(["demo", "--order", "2", "--snr", "20", "--estimators", "LS,SPe-FIR-N"]) == 0
    out = capsys.readouterr().out
    assert "system order 2" in out and "SPe-FIR-N" in out


def test_timing_only_touches_wall_column():
    timed = run_suite(small_config(num_systems=1))
    untimed = run_suite(small_config(num_systems=1, timing=False))
    wall = RECORD_COLUMNS.index("wall_s")
    for a, b in zip(timed, untimed):
        ra, rb = a.row(), b.row()
        assert rb[wall] == "" and ra[wall] != ""
        assert ra[:wall] + ra[wall + 1:] == rb[:wall] + rb[wall + 1:]
