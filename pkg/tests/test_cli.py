import json
import subprocess
import sys
from pathlib import Path

import pytest

from coulomb_ot import cli
from coulomb_ot.dgf1 import read_dgf1

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _cfg(tmp_path, **cfg):
    base = {"version": 1, "grid": {"d": 1, "box_min": -3, "box_max": 3, "n": 24},
            "density": {"family": "mixture", "weights": [1, 1],
                        "components": [{"family": "gaussian", "mu": -1, "sigma": 0.35},
                                       {"family": "gaussian", "mu": 1, "sigma": 0.35}]}}
    base.update(cfg)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(base))
    return p


def _snapshot(out):
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


def test_constants(tmp_path, capsys):
    assert cli.run(["constants", "--d", "1,3", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert [row["d"] for row in summary["constants"]] == [1, 3]
    assert (tmp_path / "report.csv").read_text().splitlines()[0] == "d,k,K"


@pytest.mark.parametrize("argv", [["constants", "--d", "0..2"], ["nope"], ["solve"]])
def test_bad_arguments(argv, tmp_path):
    assert cli.run(argv + ["--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_solve_dumps_plan(tmp_path):
    cfg = _cfg(tmp_path, command="solve", dump_fields=True)
    out = tmp_path / "out"
    assert cli.run(["solve", "--config", str(cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "optimal" and summary["diagonal_mass"] == 0
    d, N, n, _ = read_dgf1(out / "plan.dgf1")
    assert (d, N, n) == (1, 2, 24)


def test_smooth_records(tmp_path):
    cfg = _cfg(tmp_path, command="smooth", eps_cells=[2, 4], bl_tests=8)
    out = tmp_path / "out"
    assert cli.run(["smooth", "--config", str(cfg), "--out", str(out)]) == 0
    recs = json.loads((out / "summary.json").read_text())["records"]
    assert len(recs) == 2
    assert all(r["marginal_err"] <= 1e-10 and r["kinetic"] <= r["kinetic_bound"] for r in recs)


@pytest.mark.parametrize("text, code", [
    ("{not json", 2),
    (json.dumps({"version": 2}), 2),
    (json.dumps({"version": 1, "grid": {"d": 1, "box_min": 0, "box_max": 1, "n": 1},
                 "density": {"family": "uniform", "low": 0, "high": 1}}), 2),
    (json.dumps({"version": 1, "grid": {"d": 1, "box_min": 1, "box_max": 0, "n": 4},
                 "density": {"family": "uniform", "low": 0, "high": 1}}), 2),
    (json.dumps({"version": 1, "command": "sweep", "grid": {"d": 1, "box_min": 0, "box_max": 1, "n": 4},
                 "density": {"family": "uniform", "low": 0, "high": 1}}), 2),
    (json.dumps({"version": 1, "grid": {"d": 1, "box_min": 0, "box_max": 1, "n": 4},
                 "density": {"family": "file", "path": "missing.dgf1"}}), 2),
])
def test_malformed_config_writes_nothing(tmp_path, capsys, text, code):
    p = tmp_path / "bad.json"
    p.write_text(text)
    out = tmp_path / "out"
    assert cli.run(["solve", "--config", str(p), "--out", str(out)]) == code
    assert not out.exists()
    err = json.loads(capsys.readouterr().err)
    assert err["exit"] == code


def test_cap_exit_code(tmp_path):
    cfg = _cfg(tmp_path, command="solve", N=3, grid={"d": 1, "box_min": -3, "box_max": 3, "n": 40},
               solver={"method": "exact-lp", "cap": 100})
    assert cli.run(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_convergence_exit_code(tmp_path):
    cfg = _cfg(tmp_path, command="solve", solver={"method": "entropic", "eta": 0.001, "max_iter": 1,
                                                    "tol": 1e-14})
    out = tmp_path / "o"
    assert cli.run(["solve", "--config", str(cfg), "--out", str(out)]) == 4
    partial = json.loads((out / "summary.json").read_text())
    assert partial["complete"] is False and partial["iterations"] == 1


def test_incomplete_sweep_exit_code(tmp_path):
    cfg = _cfg(tmp_path, command="sweep", statistics="fermionic", hbar=[1e-2])
    out = tmp_path / "o"
    assert cli.run(["sweep", "--config", str(cfg), "--out", str(out)]) == 4
    assert json.loads((out / "summary.json").read_text())["complete"] is False


def test_fermionize_on_1d_is_invalid(tmp_path):
    cfg = _cfg(tmp_path, command="fermionize")
    assert cli.run(["fermionize", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_shipped_configs_validate():
    for p in sorted(CONFIGS.glob("*.json")):
        cfg = cli.load_config(p)
        assert cfg["command"] in cli.HANDLERS


def test_console_script_runs(tmp_path):
    out = tmp_path / "o"
    proc = subprocess.run([sys.executable, "-m", "coulomb_ot", "constants", "--d", "1..2", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (out / "summary.json").exists()


def test_sweep_is_deterministic(tmp_path):
    cfg = _cfg(tmp_path, command="sweep", hbar=[1e-1, 1e-2, 1e-3])
    snaps = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert cli.run(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
        snaps.append(_snapshot(out))
    assert snaps[0] == snaps[1]
