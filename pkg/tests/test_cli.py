import json
import subprocess
import sys

import pytest

from irlteach.cli import main

TINY = {"n_seeds": 1, "roads_per_type": 1, "n_weight_samples": 20, "mce_iters": 2, "max_iters": 3, "variants": ["Rnd", "Cur"]}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(TINY))
    return path


def test_run_and_summarize(tmp_path, config_file, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(config_file), "--out", str(out)]) == 0
    for name in ("losses.csv", "summary.csv", "config.json", "sessions.jsonl"):
        assert (out / name).is_file()
    before = (out / "summary.csv").read_bytes()
    capsys.readouterr()
    assert main(["summarize", "--in", str(out), "--write"]) == 0
    assert "mean_iters" in capsys.readouterr().out
    assert (out / "summary.csv").read_bytes() == before


def test_overrides(tmp_path, config_file):
    out = tmp_path / "o"
    assert main(["run", "--config", str(config_file), "--out", str(out), "--seeds", "2", "--variants", "Cur"]) == 0
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["n_seeds"]["value"] == 2 and cfg["variants"]["value"] == ["Cur"]


def test_config_errors_exit_2(tmp_path, config_file):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2
    assert main(["run", "--config", str(config_file), "--variants", "Bogus", "--out", str(tmp_path)]) == 2
    assert main(["run", "--config", str(config_file), "--seeds", "0", "--out", str(tmp_path)]) == 2
    assert main(["summarize", "--in", str(tmp_path / "empty")]) == 2


def test_runtime_error_exit_3(tmp_path, config_file):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["run", "--config", str(config_file), "--out", str(blocker / "x")]) == 3


def test_gen_env(tmp_path):
    path = tmp_path / "env.json"
    assert main(["gen-env", "--seed", "3", "--out", str(path)]) == 0
    doc = json.loads(path.read_text())
    assert len(doc["roads"]) == 40 and doc["seed"] == 3


def test_console_script_usage_error():
    proc = subprocess.run([sys.executable, "-m", "irlteach.cli", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 2
