import json
import math
import sys

import pytest

from vbmcts.cli import main


def test_oracle_command_prints_frozen_optimum(capsys):
    assert main(["oracle", "--horizon", "5"]) == 0
    out = capsys.readouterr().out
    assert "217.81852245775855" in out
    assert "t=1: itn=1.0 irs=0.1" in out
    assert out.count("t=") == 5


def test_oracle_command_custom_grid(capsys):
    assert main(["oracle", "--grid", "0.5,0.5", "--horizon", "3"]) == 0
    out = capsys.readouterr().out
    assert out.count("itn=0.5 irs=0.5") == 3


def test_bound_command_reference_values(capsys):
    assert main([
        "bound", "--v-max", "1", "--epsilon", "0.5", "--delta", "0.1",
        "--epsilon1", "0.1", "--delta1", "0.1", "--gamma", "0.5",
        "--noise-variance", "0.01", "--dims", "2",
        "--side-lengths", "1", "1", "--d-max", "0.5",
        "--lipschitz-r", "7", "--lipschitz-p", "3",
    ]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["sigma_tol"] == pytest.approx(2e-4 / math.log(20.0), rel=1e-9)
    assert doc["covering"] == pytest.approx(16.0)
    assert doc["zeta"] == pytest.approx(64.0 * math.log(320.0) * 16.0, rel=1e-9)
    assert doc["steps"] > 0
    assert doc["beta1"] == pytest.approx(7.0 / 0.02)
    assert doc["beta2"] == pytest.approx(3.0 / 0.02)


def test_bound_command_minimal(capsys):
    assert main(["bound"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert set(doc) == {"sigma_tol"}


def test_run_command_tiny_benchmark(tmp_path, capsys):
    out_dir = tmp_path / "results"
    code = main([
        "run", "--agents", "random", "--seeds", "0", "1", "--episodes", "2",
        "--out", str(out_dir), "--emit", "csv", "json", "--workers", "1",
    ])
    assert code == 0
    printed = capsys.readouterr().out
    assert "random" in printed
    assert "median" in printed
    assert (out_dir / "results.csv").exists()
    assert (out_dir / "records.jsonl").exists()


def test_run_command_with_config_file(tmp_path, capsys):
    cfg = {
        "agents": ["random"],
        "seeds": [0],
        "episodes_budget": 2,
        "out_dir": str(tmp_path / "out"),
        "emit": ["json"],
        "workers": 1,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(path)]) == 0
    assert (tmp_path / "out" / "results.json").exists()


def test_run_command_external_env(tmp_path, capsys):
    # the served surrogate must behave exactly like the built-in one; the
    # command is a single shell-quoted string so option-like tokens (-m) work
    out_dir = tmp_path / "ext"
    code = main([
        "run", "--agents", "random", "--seeds", "0", "--episodes", "2",
        "--out", str(out_dir), "--emit", "json", "--workers", "1",
        "--env", f"{sys.executable} -m vbmcts.cli serve-env",
    ])
    assert code == 0
    capsys.readouterr()
    ext = json.loads((out_dir / "results.json").read_text())

    built_in = tmp_path / "builtin"
    main(["run", "--agents", "random", "--seeds", "0", "--episodes", "2",
          "--out", str(built_in), "--emit", "json", "--workers", "1"])
    capsys.readouterr()
    ref = json.loads((built_in / "results.json").read_text())
    # config blocks differ (external_command, out_dir); the results must not
    assert ext["agents"] == ref["agents"]
    assert ext["failures"] == ref["failures"] == {}


def test_curve_command(tmp_path, capsys):
    out_dir = tmp_path / "results"
    main(["run", "--agents", "random", "--seeds", "0", "--episodes", "3",
          "--out", str(out_dir), "--emit", "json", "--workers", "1"])
    capsys.readouterr()
    csv_path = tmp_path / "c.csv"
    svg_path = tmp_path / "c.svg"
    assert main(["curve", str(out_dir / "records.jsonl"),
                 "--csv", str(csv_path), "--svg", str(svg_path)]) == 0
    assert csv_path.read_text().startswith("agent,seed,episode")
    assert svg_path.read_text().startswith("<svg")
    assert main(["curve", str(out_dir / "records.jsonl")]) == 0
    assert "best-so-far mean" in capsys.readouterr().out


def test_unknown_command_rejected():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
