import csv
import json
import math
from pathlib import Path

import pytest

from reflift import cli

DATA = Path(__file__).parent / "data"


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def assert_same_table(got, want, rtol=1e-12):
    assert got[0] == want[0]
    assert len(got) == len(want)
    for g_row, w_row in zip(got[1:], want[1:]):
        for g, w in zip(g_row, w_row):
            try:
                wf = float(w)
            except ValueError:
                assert g == w
                continue
            assert float(g) == pytest.approx(wf, rel=rtol, abs=1e-300)


def manifest(out, command):
    return json.loads((out / f"{command}.manifest.json").read_text())


def test_constants_golden(tmp_path):
    assert cli.run(["constants", "--m", "1", "--output-dir", str(tmp_path)]) == 0
    got = read_csv(tmp_path / "constants.csv")
    assert_same_table(got, read_csv(DATA / "golden_constants_m1.csv"))
    row = dict(zip(got[0], got[1]))
    assert row["format_version"] == "1"
    assert float(row["C0"]) == pytest.approx(4 * math.pi ** 2 + 86, rel=1e-14)
    man = manifest(tmp_path, "constants")
    assert man["status"] == "completed" and man["passed"]
    assert man["config"]["potential"] == {"m": 1.0}
    assert man["files"] == ["constants.csv"]
    for key in ("seed", "version", "git_describe", "wall_clock_seconds", "checks"):
        assert key in man


SIM = ["simulate", "--domain", "interval:0,1", "--m", "9.8696", "--process", "rhmc", "--gamma", "1",
       "--horizon", "1", "--output-every", "0.5", "--chains", "20", "--seed", "3"]


def test_simulate_golden(tmp_path):
    assert cli.run(SIM + ["--output-dir", str(tmp_path)]) == 0
    assert_same_table(read_csv(tmp_path / "simulate.csv"), read_csv(DATA / "golden_simulate_rhmc.csv"))


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(SIM + ["--output-dir", str(a)]) == 0
    assert cli.run(SIM + ["--output-dir", str(b), "--n-jobs", "2"]) == 0
    assert (a / "simulate.csv").read_bytes() == (b / "simulate.csv").read_bytes()


def test_config_file_and_override(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[potential]\nm = 4\n[run]\nseed = 2\n")
    out = tmp_path / "out"
    assert cli.run(["constants", "--config", str(ini), "--m", "1", "--output-dir", str(out)]) == 0
    row = dict(zip(*read_csv(out / "constants.csv")))
    assert float(row["m"]) == 1.0
    assert manifest(out, "constants")["seed"] == 2


def test_environment_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.run(["constants", "--m", "2"]) == 0
    assert (tmp_path / "env" / "constants.csv").exists()


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["constants", "--bogus", "1"],
    ["constants", "--m", "-1"],
    ["constants", "--m", "abc"],
    ["simulate", "--process", "walk"],
])
def test_usage_errors_exit_2(argv, tmp_path):
    assert cli.run(argv + (["--output-dir", str(tmp_path)] if argv[:1] == ["constants"] else [])) == 2


def test_unknown_config_key_exits_2(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[potential]\nmm = 1\n")
    assert cli.run(["constants", "--config", str(ini), "--output-dir", str(tmp_path)]) == 2


def test_missing_m_is_a_config_error(tmp_path):
    code = cli.run(["simulate", "--domain", "ball:0,0;1", "--horizon", "1", "--dt", "0.1",
                    "--output-dir", str(tmp_path)])
    assert code == 2
    assert manifest(tmp_path, "simulate")["status"] == "config-error"


def test_runtime_error_exits_1(tmp_path):
    # output spacing that is not a multiple of dt is rejected when the run starts
    code = cli.run(["simulate", "--domain", "interval:0,1", "--horizon", "1", "--dt", "0.3",
                    "--output-every", "0.5", "--output-dir", str(tmp_path)])
    assert code == 1
    man = manifest(tmp_path, "simulate")
    assert man["status"] == "error" and not man["passed"]


def test_failed_check_exits_1(tmp_path):
    code = cli.run(["optimality", "--process", "rhmc", "--d", "1", "--rate", "1e-5",
                    "--output-dir", str(tmp_path)])
    assert code == 1
    man = manifest(tmp_path, "optimality")
    assert man["status"] == "completed"
    assert man["checks"] == {"lower_bound": True, "upper_bound": False}
    row = dict(zip(*read_csv(tmp_path / "optimality.csv")))
    assert row["consistent"] == "0" and row["rate_source"] == "given"


def test_divergence_verify_small(tmp_path, capsys):
    code = cli.run(["divergence-verify", "--T", "1", "--modes", "6", "--time-freqs", "8",
                    "--trials", "3", "--seed", "1", "--output-dir", str(tmp_path)])
    assert code == 0
    assert "3/3 bounds pass" in capsys.readouterr().out
    rows = read_csv(tmp_path / "divergence.csv")
    assert rows[0][:3] == ["format_version", "trial", "residual"]
    assert len(rows) == 4 and all(r[-1] == "1" for r in rows[1:])


def test_simulate_overdamped_stationary_ball(tmp_path):
    code = cli.run(["simulate", "--domain", "ball:0,0;1", "--m", "1", "--process", "overdamped",
                    "--dt", "0.01", "--horizon", "0.2", "--initial", "stationary", "--chains", "50",
                    "--output-dir", str(tmp_path)])
    assert code == 0
    header = read_csv(tmp_path / "simulate.csv")[0]
    assert header == ["format_version", "t", "cos1_mean", "cos1_se", "x0_mean", "x0_se", "x1_mean",
                      "x1_se", "inside_mean", "inside_se"]


def test_manifest_written_before_work(tmp_path, monkeypatch):
    seen = {}

    def spy(cfg, run):
        seen.update(json.loads(run.path.read_text()))
        return {}

    monkeypatch.setitem(cli.COMMANDS, "constants", spy)
    assert cli.run(["constants", "--output-dir", str(tmp_path)]) == 0
    assert seen["status"] == "running"
    assert manifest(tmp_path, "constants")["status"] == "completed"
