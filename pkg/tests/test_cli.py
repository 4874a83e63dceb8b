import csv
import json
import subprocess
import sys

import pytest

from sampled_leader import cli

from test_config import GOOD


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.toml"
    p.write_text(GOOD)
    return p


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_writes_csv_and_metrics(tiny, tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["run", "--scenario", str(tiny), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "PASS arrival" in text and "PASS energy" in text
    table = rows(out / "trajectory.csv")
    assert table[0] == ["t", "agent_id", "x_1", "x_2", "u_1", "epoch_index"]
    body = table[1:]
    assert len(body) == 2 * (2 * 300 + 1)
    assert [r[1] for r in body[:4]] == ["1", "2", "1", "2"]
    assert float(body[-1][0]) == 2.0 and body[-1][-1] == "1"
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["passed"] and len(metrics["epochs"]) == 2
    rec = metrics["epochs"][0]
    assert set(rec["followers"]["1"]) >= {"arrival_error", "energy", "oracle_energy", "max_abs_u"}
    assert "sync_residual" in rec


def test_output_dir_precedence(tiny, tmp_path, monkeypatch):
    cfg = cli.cfgmod.load_config(tiny)
    monkeypatch.delenv(cli.OUT_ENV, raising=False)
    assert str(cli.output_dir(cfg)) == "out/tiny"
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.output_dir(cfg) == tmp_path / "env"
    assert cli.output_dir(cfg, "explicit") == cli.Path("explicit")
    assert cli.main(["run", "--scenario", str(tiny), "--steps", "300"]) == 0
    assert (tmp_path / "env" / "trajectory.csv").exists()


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(GOOD.replace("[[0.0, 1.0], [-1.0, 0.0]]", "[[0.0, 0.0], [0.0, 0.0]]"))
    assert cli.main(["validate", str(p)]) == cli.EXIT_CONFIG
    assert "follower 2: (A,B) uncontrollable" in capsys.readouterr().err
    assert cli.main(["run", "--scenario", str(p)]) == cli.EXIT_CONFIG


def test_invariant_failure_exit_code(tiny, tmp_path, capsys):
    p = tmp_path / "zero.toml"
    p.write_text(GOOD.replace("steps_per_epoch = 300", "steps_per_epoch = 400\n"
                              'deadzone_mode = "zero"'))
    assert cli.main(["run", "--scenario", str(p), "--out", str(tmp_path / "z")]) == 1
    captured = capsys.readouterr()
    assert "FAIL arrival" in captured.out
    assert "invariant failed: arrival" in captured.err


def test_runtime_error_exit_code(tmp_path, capsys):
    chain = GOOD.replace("A = [[0.0, 1.0], [0.0, 0.0]]\nB = [[0.0], [1.0]]\nx0 = [0.0, 0.0]",
                         "A = [[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0], "
                         "[0.0, 0.0, 0.0, 0.0]]\nB = [[0.0], [0.0], [0.0], [1.0]]\n"
                         "x0 = [0.0, 0.0, 0.0, 0.0]", 1)
    chain = chain.replace("A = [[0.0, 1.0], [-1.0, 0.0]]\nB = [[0.0], [1.0]]\nx0 = [1.0, 0.0]",
                          "A = [[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0], "
                          "[0.0, 0.0, 0.0, 0.0]]\nB = [[0.0], [0.0], [0.0], [1.0]]\n"
                          "x0 = [1.0, 1.0, 1.0, 1.0]")
    chain = chain.replace("states = [[1.0, 0.0], [2.0, 0.0]]",
                          "states = [[1.0, 0.0, 0.0, 0.0], [2.0, 0.0, 0.0, 0.0]]")
    p = tmp_path / "chain.toml"
    p.write_text(chain)
    code = cli.main(["run", "--scenario", str(p), "--steps", "20000", "--deadzone", "0",
                     "--out", str(tmp_path / "c")])
    assert code == cli.EXIT_RUNTIME
    assert "epoch 0: follower 1" in capsys.readouterr().err


def test_design_command(tmp_path, capsys):
    assert cli.main(["design", "--scenario", "waypoints", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "6.717" in out and "40.48" in out
    plan = rows(tmp_path / "plan.csv")
    assert plan[0] == ["k", "t", "T", "position", "velocity"] and len(plan) == 5
    data = json.loads((tmp_path / "plan.json").read_text())
    assert data["u_max"] == 5.0 and len(data["times"]) == 5
    assert cli.main(["design", "--scenario", "msd", "--out", str(tmp_path)]) == cli.EXIT_RUNTIME


def test_validate_and_module_entry(tiny):
    assert cli.main(["validate", str(tiny)]) == 0
    res = subprocess.run([sys.executable, "-m", "sampled_leader.cli", "validate", "aircraft"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "ok (6 followers, tracking output)" in res.stdout
