import csv
import io
import json
import os

import pytest

from conftest import CONFIGS
from logholder.experiments.cli import main, parse_range
from logholder.kernel import KernelParams, U
from logholder.measure import EmpiricalMeasure


def test_parse_range():
    r = parse_range("1e-3..1e-1:3")
    assert r.tolist() == pytest.approx([1e-3, 1e-2, 1e-1])
    for bad in ("1e-3..1e-1", "a..b:3", "0..1:3", "1..0.5:4"):
        with pytest.raises(ValueError):
            parse_range(bad)


def test_kernel_table(tmp_path, capsys):
    out = tmp_path / "k.csv"
    assert main(["kernel-table", "--alpha", "1", "--eps", "1e-4", "--r-grid", "1e-3..1e-2:4", "-o", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 4
    assert float(rows[-1]["U"]) == pytest.approx(U(KernelParams(1.0, 1e-4), 1e-2), rel=1e-14)
    assert main(["kernel-table", "--alpha", "1", "--eps", "1e-4", "--r-grid", "1e-3..1e-2:2"]) == 0
    assert capsys.readouterr().out.startswith("r,U,V,phi_eps")


def test_kernel_table_bad_params():
    assert main(["kernel-table", "--alpha", "-1", "--eps", "1e-4", "--r-grid", "1e-3..1e-2:4"]) == 2


def test_fit_command(tmp_path, capsys):
    path = tmp_path / "m.csv"
    EmpiricalMeasure.uniform_grid(5000).to_csv(path)
    assert main(["fit", str(path), "--radii", "3e-3..0.3:8", "--centers", "16"]) == 0
    fit = json.loads(capsys.readouterr().out)
    assert fit["holder_slope"] == pytest.approx(1.0, abs=0.05)
    assert main(["fit", str(path), "--radii", "1e-5..0.3:8"]) == 2
    assert main(["fit", str(tmp_path / "missing.csv"), "--radii", "3e-3..0.3:8"]) == 2


def test_run_command(tmp_path, capsys):
    cfg = {"name": "cli", "family": os.path.join(CONFIGS, "families", "rotation_uniform.json"),
           "n_atoms": 300, "n_steps": 2, "seed": 0, "kernel": {"alpha": 1.0, "eps": 1e-3},
           "radii": {"r_min": 0.04, "r_max": 0.3, "count": 6}, "fit_centers": 16}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    code = main(["run", str(path), "--out", str(tmp_path / "out"), "--quiet", "--exponent"])
    assert code == 0
    result = json.loads(capsys.readouterr().out)
    assert result["summary"]["checks"]["energy_upper_bound"]
    for f in ("report.json", "steps.csv", "final_measure.csv", "exponent.json"):
        assert (tmp_path / "out" / f).exists()


def test_run_bad_config(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"family": {"kind": "rotation_uniform"}, "n_atoms": 10}')
    assert main(["run", str(path)]) == 2
    path.write_text("{not json")
    assert main(["run", str(path)]) == 2


def test_verify_command_writes_verdict(tmp_path, capsys):
    out = tmp_path / "v.json"
    assert main(["verify", "rds", "--json", str(out)]) == 0
    verdict = json.loads(out.read_text())
    assert verdict["suite"] == "rds" and verdict["passed"]


def test_verify_tol_file_forced_failure(tmp_path):
    tol = tmp_path / "tol.json"
    tol.write_text(json.dumps({"energy": {"triple_grid": 64, "sweep": {"grid_cap": 1024}}}))
    assert main(["verify", "energy", "--tol-file", str(tol)]) == 3
    assert main(["verify", "energy", "--tol-file", str(tmp_path / "none.json")]) == 2
