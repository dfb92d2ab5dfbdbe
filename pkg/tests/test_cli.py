import json
import subprocess
import sys

import pytest

from apcrw.cli import main


def test_cli_speed(tmp_path, capsys):
    assert main(["speed", "--seed", "3", "--replicas", "200", "--out", str(tmp_path), "--set", "L=4"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert "speed.csv" in out["files"] and (tmp_path / "manifest.json").exists()


def test_cli_reads_config_and_replays(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 2\nL: 4\nreplicas: 100\n")
    assert main(["speed", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    capsys.readouterr()
    assert main(["replay", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")]) == 0
    assert all(json.loads(capsys.readouterr().out)["identical"].values())


def test_cli_manifest_as_config(tmp_path, capsys):
    main(["speed", "--seed", "8", "--replicas", "50", "--out", str(tmp_path / "a"), "--set", "L=2"])
    main(["speed", "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "speed.csv").read_bytes() == (tmp_path / "b" / "speed.csv").read_bytes()


def test_cli_config_errors_exit_2(tmp_path, capsys):
    assert main(["speed", "--seed", "1", "--out", str(tmp_path)]) == 2
    assert "'L'" in capsys.readouterr().err
    assert main(["kernel", "--seed", "1", "--set", "p_occ=0.2", "--set", "p_vac=0.7"]) == 2
    assert "p_occ > p_vac" in capsys.readouterr().err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "apcrw", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "verify-conditions" in r.stdout
