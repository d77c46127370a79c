import csv
import json
from pathlib import Path

import pytest

from ccdispatch.cli import main

SMALL = Path(__file__).resolve().parents[1] / "configs" / "small.json"
TIMING = {"build_s", "solve_s", "mean_time_s", "proxy_speedup"}


def run(tmp_path, *args):
    return main(["--config", str(SMALL), "--out", str(tmp_path), *args])


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    assert main(["--config", str(SMALL), "--out", str(out), "bench"]) == 0
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_help_and_usage_errors(capsys):
    assert main(["--help"]) == 0
    assert main([]) == 1
    assert main(["bench", "--no-such-flag"]) == 1
    assert "usage" in capsys.readouterr().err


def test_solve_pr_requires_p(tmp_path, capsys):
    assert run(tmp_path, "gen-dataset") == 0
    assert run(tmp_path, "solve", "--method", "pr") == 1
    assert "--p" in capsys.readouterr().err
    assert run(tmp_path, "solve", "--method", "ro") == 1
    assert run(tmp_path, "solve", "--method", "pr", "--p", "1.5") == 1


def test_solve_and_sweep(tmp_path):
    assert run(tmp_path, "gen-dataset") == 0
    assert run(tmp_path, "solve", "--method", "sa") == 0
    rows = read_csv(tmp_path / "solve_sa.csv")
    assert list(rows[0]) == ["datapoint_id", "method", "parameter", "objective", "build_s", "solve_s", "status"]
    assert all(int(r["datapoint_id"]) % 2 == 0 and r["status"] == "optimal" for r in rows)
    assert run(tmp_path, "sweep", "--grid", "0,0.25,0.5,0.75,1") == 0
    sweep = read_csv(tmp_path / "sweep.csv")
    assert len(sweep) == 5 and [float(r["parameter"]) for r in sweep] == [0, 0.25, 0.5, 0.75, 1]
    assert run(tmp_path, "sweep", "--grid", "a,b") == 1


def test_stage_commands(tmp_path):
    assert run(tmp_path, "gen-instance") == 0
    assert (tmp_path / "instance.json").exists()
    assert run(tmp_path, "gen-dataset") == 0
    assert run(tmp_path, "gen-targets", "--p", "0.5") == 0
    assert run(tmp_path, "train", "--p", "0.5") == 0
    assert (tmp_path / "weights_p0.5.json").exists()
    assert run(tmp_path, "eval") == 0
    assert json.loads((tmp_path / "eval.json").read_text())["p"] == 0.5
    assert run(tmp_path, "select-p", "--grid", "0,1") == 0
    assert json.loads((tmp_path / "selection.json").read_text())["grid"] == [0.0, 1.0]


def test_missing_dataset_is_runtime_error(tmp_path, capsys):
    assert run(tmp_path, "solve", "--method", "sa") == 2
    assert "gen-dataset" in capsys.readouterr().err


def test_bad_config_is_runtime_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"epsilon": 3}')
    assert main(["--config", str(bad), "--out", str(tmp_path), "gen-instance"]) == 2


def test_global_flags_after_subcommand(tmp_path):
    assert main(["gen-instance", "--config", str(SMALL), "--out", str(tmp_path), "--seed", "4"]) == 0
    assert (tmp_path / "instance.json").exists()


def test_seed_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CCDISPATCH_SEED", "9")
    assert run(tmp_path / "a", "gen-instance") == 0
    monkeypatch.delenv("CCDISPATCH_SEED")
    assert run(tmp_path / "b", "gen-instance") == 0
    assert (tmp_path / "a" / "instance.json").read_text() != (tmp_path / "b" / "instance.json").read_text()


def test_bench_outputs(bench_dir):
    for name in ("report.csv", "report.json", "results.csv", "sweep.csv", "training_log.csv"):
        assert (bench_dir / name).exists()
    report = read_csv(bench_dir / "report.csv")
    assert [r["method"] for r in report] == ["sa", "cvar", "ro", "pr", "proxy"]
    sa = report[0]
    assert float(sa["in_violation"]) == 0.0
    assert float(sa["objective_cost_rate"]) == 1.0
    summary = json.loads((bench_dir / "report.json").read_text())
    assert set(summary["speedup"]) == {"sa", "cvar", "ro", "pr"}
    assert summary["norm_mode"] == "elementwise"
    assert "build_s + solve_s" in summary["timing"]["note"]
    assert list((bench_dir).glob("weights_p*.json"))


def test_bench_deterministic(bench_dir, tmp_path):
    assert run(tmp_path, "bench") == 0
    first = read_csv(bench_dir / "report.csv")
    second = read_csv(tmp_path / "report.csv")
    for a, b in zip(first, second):
        assert {k: v for k, v in a.items() if k not in TIMING} == {k: v for k, v in b.items() if k not in TIMING}


def test_bench_refuses_stale_dataset(bench_dir):
    assert main(["--config", str(SMALL), "--out", str(bench_dir), "--seed", "99", "bench"]) == 2
