import csv
import io
import json
import subprocess
import sys

import pytest

from ttcross.bench import (
    CSV_COLUMNS,
    ConfigError,
    ExperimentConfig,
    cmd_interpolate,
    cmd_quasiopt,
    cmd_recover,
    cmd_table,
    log2_summary,
)
from ttcross.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_interpolate_rank_one_d2():
    cfg = ExperimentConfig(kind="interpolate", dims=[2], mode_size=[6], ranks=[3], oracle="random-tt")
    cfg.ranks = [1]
    rec = cmd_interpolate(cfg)
    assert rec.cheb_err <= 1e-12 and rec.frob_err <= 1e-12
    assert rec.ranks == [1] and rec.converged


def test_interpolate_deterministic():
    cfg = ExperimentConfig(kind="interpolate", dims=[6], mode_size=[8], ranks=[4])
    a, b = cmd_interpolate(cfg), cmd_interpolate(cfg)
    a.seconds = b.seconds = 0.0
    assert a.to_dict() == b.to_dict()


def test_recover_counts():
    rec = cmd_recover(ExperimentConfig(kind="recover", dims=[6], mode_size=[4], ranks=[3]))
    assert rec.converged and rec.cheb_err <= 1e-11
    expected = 1 * 4 * 3 + 4 * (3 * 4 * 3) + 3 * 4 * 1 - 5 * 9
    assert rec.extra["formula_entries"] == rec.extra["parameter_count"] == expected
    assert rec.oracle_calls >= expected
    rec = cmd_recover(ExperimentConfig(kind="recover", dims=[2], mode_size=[7], ranks=[2]))
    assert rec.extra["formula_entries"] == (7 + 7) * 2 - 4
    rec = cmd_recover(ExperimentConfig(kind="recover", dims=[5], mode_size=[3], ranks=[1]))
    assert rec.extra["formula_entries"] == 5 * 3 - 4


def test_quasiopt_guard_excludes_exact_reference():
    cfg = ExperimentConfig(kind="quasiopt", dims=[6], mode_size=[2], ranks=[2], noise=0.0, trials=1, tol=1e-14)
    records, summary = cmd_quasiopt(cfg)
    assert summary["excluded"] == [0] and summary["count"] == 0
    assert records[0].extra["ratio"] is None


def test_quasiopt_summary():
    cfg = ExperimentConfig(kind="quasiopt", dims=[8], mode_size=[2], ranks=[3], noise=1e-5, trials=5, tol=1e-14)
    records, summary = cmd_quasiopt(cfg)
    assert summary["count"] == 5 and sum(summary["counts"]) == 5
    assert summary["bound_violations"] == 0
    assert all(rec.extra["ratio"] >= 1e-3 for rec in records)


def test_log2_summary():
    s = log2_summary([1.0, 2.0, 4.0, 8.0])
    assert s["mean"] == pytest.approx(1.5) and s["std"] == pytest.approx(1.118033988749895)
    assert log2_summary([])["count"] == 0


def test_table_rows_and_failures():
    cfg = ExperimentConfig(kind="table", dims=[4, 5], mode_size=[6], ranks=[2, 3])
    records = cmd_table(cfg)
    assert len(records) == 4 and all(rec.error is None for rec in records)
    assert cmd_table(ExperimentConfig(kind="table", dims=[], mode_size=[6], ranks=[2])) == []


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"kind": "interpolate", "tol": 0.0})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"kind": "interpolate", "trials": 0})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"kind": "nope"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"kind": "interpolate", "dims": [4], "ranks": [1, 2]})


def test_cli_interpolate_csv(capsys):
    code, out, _ = run_cli(capsys, "interpolate", "--dims", "5", "--mode-size", "6", "--ranks", "3", "--format", "csv")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 2
    assert rows[1][:3] == ["5", "6", "3"]


def test_cli_table_csv_row_count_and_empty_grid(capsys):
    code, out, _ = run_cli(
        capsys, "table", "--dims", "4,5", "--mode-size", "4,6", "--rank-cap", "2", "--format", "csv"
    )
    assert code == 0
    assert len(out.strip().splitlines()) == 1 + 4
    code, out, _ = run_cli(capsys, "table", "--dims", "", "--format", "csv")
    assert code == 0 and out.strip() == ",".join(CSV_COLUMNS)


def test_cli_table_cells(capsys):
    code, out, _ = run_cli(capsys, "table", "--dims", "4", "--mode-size", "6", "--ranks", "2,3")
    assert code == 0
    assert "r=2" in out and "r=3" in out and out.count("\n4    6    |") == 1


def test_cli_json_with_trace(capsys, tmp_path):
    path = tmp_path / "out.json"
    code, out, _ = run_cli(
        capsys, "recover", "--dims", "4", "--mode-size", "3", "--ranks", "2", "--format", "json", "--trace", "--out", str(path)
    )
    assert code == 0 and out == ""
    doc = json.loads(path.read_text())
    rec = doc["records"][0]
    assert rec["extra"]["entries_match"] is True
    assert rec["trace"] and {"k", "pivot", "residual", "ranks", "calls"} <= set(rec["trace"][0])


def test_cli_quasiopt_text(capsys):
    code, out, _ = run_cli(capsys, "quasiopt", "--dims", "6", "--ranks", "2", "--trials", "3", "--noise", "1e-4")
    assert code == 0 and "log2 ratio mean" in out and "histogram" in out


def test_cli_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dims": [4], "mode_size": [5], "ranks": [2], "format": "json"}))
    code, out, _ = run_cli(capsys, "interpolate", "--config", str(cfg), "--mode-size", "3")
    assert code == 0
    doc = json.loads(out)
    assert doc["records"][0]["n"] == 3 and doc["records"][0]["d"] == 4


def test_cli_exit_codes(capsys, tmp_path):
    code, _, err = run_cli(capsys, "interpolate", "--tol", "-1")
    assert code == 2 and "invalid configuration" in err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, _ = run_cli(capsys, "interpolate", "--config", str(bad))
    assert code == 2
    code, _, _ = run_cli(capsys, "interpolate", "--dims", "8", "--mode-size", "8", "--ranks", "8", "--sweeps", "1")
    assert code == 1
    with pytest.raises(SystemExit) as info:
        main(["interpolate", "--dims", "x"])
    assert info.value.code == 2


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "ttcross", "recover", "--dims", "3", "--mode-size", "3", "--ranks", "2"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0 and "entries_match" in proc.stdout
