import json
import subprocess
import sys

import pytest

from coneflow.cli import main


def run_dir(root, command):
    (d,) = [p for p in root.iterdir() if p.name.startswith(command + "-")]
    return d


def test_truncate_command(tmp_path):
    rc = main(["truncate", "--set", "beta=-0.5", "--set", "solver.n=256",
               "-o", str(tmp_path), "--log-level", "quiet"])
    assert rc == 0
    d = run_dir(tmp_path, "truncate")
    assert (d / "resolved_config.json").exists()
    assert (d / "sequence" / "manifest.json").exists()
    assert json.loads((d / "truncation.json").read_text())["pass"]


def test_simulate_command(tmp_path):
    rc = main(["simulate", "--set", "beta=-0.5", "--set", "solver.n=128",
               "--set", "solver.t_end=0.01", "--set", "probes.t_min=1e-4",
               "--set", "probes.count=5", "-o", str(tmp_path), "--log-level", "quiet"])
    assert rc == 0
    d = run_dir(tmp_path, "simulate")
    meta = json.loads((d / "flow" / "meta.json").read_text())
    assert meta["status"] == "completed" and len(meta["files"]) >= 5


def test_barrier_check_command(tmp_path):
    rc = main(["barrier-check", "--beta", "-0.5", "--t-lo", "1e-4", "--t-hi", "1e-2",
               "--calibrate", "-o", str(tmp_path), "--log-level", "quiet"])
    assert rc == 0
    d = run_dir(tmp_path, "barrier-check")
    rep = json.loads((d / "barrier.json").read_text())
    assert rep["pass"]
    header = (d / "barrier_surface.csv").read_text().splitlines()[0]
    assert header == "r,t,U"


def test_experiment_command_writes_reports(tmp_path):
    rc = main(["experiment", "--set", "beta=-0.5", "--set", "solver.n=256",
               "--set", "levels=[2,3]", "-o", str(tmp_path), "--log-level", "quiet"])
    # the coarse default levels do not meet the Cauchy gap: reported, exit 1
    assert rc == 1
    d = run_dir(tmp_path, "experiment")
    for name in ("smoothening.json", "decay.json", "summary.md", "sequence/manifest.json"):
        assert (d / name).exists()
    assert not (d / "uniqueness.json").exists()
    assert "cauchy_gap" in (d / "summary.md").read_text()


def test_config_errors_exit_2(tmp_path, capsys):
    rc = main(["simulate", "--set", "beta=0.5", "-o", str(tmp_path)])
    assert rc == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: ConfigError: beta")
    assert len(err.splitlines()) == 1
    assert main(["no-such-command"]) == 2
    assert main(["experiment", "--set", "beta=-0.5", "--set", "bogus=1"]) == 2


def test_help_exits_cleanly(capsys):
    assert main(["--help"]) == 0
    assert "experiment" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "coneflow.cli", "barrier-check", "--beta",
                          "-0.25", "--t-lo", "1e-4", "--t-hi", "1e-2", "-o", str(tmp_path),
                          "--log-level", "quiet"], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr


@pytest.mark.parametrize("flag", ["--beta", "--t-lo"])
def test_barrier_check_missing_values(tmp_path, flag):
    args = ["barrier-check", "--beta", "-0.5", "--t-lo", "1e-4", "--t-hi", "1e-2"]
    i = args.index(flag)
    del args[i:i + 2]
    rc = main(args + ["-o", str(tmp_path), "--log-level", "quiet"])
    # t-lo has a config default; beta does not
    assert rc == (2 if flag == "--beta" else 0)
