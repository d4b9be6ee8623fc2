import json
import os

import numpy as np
import pytest

from conftest import CONFIGS
from logholder.errors import ConfigError, GridTooCoarseError
from logholder.experiments import ExperimentConfig, ExperimentReport, exponent_experiment, load_config, run_iteration
from logholder.experiments.runner import decay_rate, detect_plateau, summarize
from logholder.experiments.verify import load_tolerances, verify_suite

FAMILY = {"kind": "rotation_uniform", "params": {"spread": 1.0}}


def small_config(**kw):
    d = {"name": "small", "family": FAMILY, "n_atoms": 400, "n_steps": 3, "seed": 1,
         "kernel": {"alpha": 1.0, "eps": 1e-3, "dim": 1},
         "radii": {"r_min": 0.03, "r_max": 0.3, "count": 6}, "fit_centers": 32}
    d.update(kw)
    return ExperimentConfig.from_dict(d)


# --- configuration -------------------------------------------------------------

@pytest.mark.parametrize("name", ["sl2_heavy_p3.json", "sl2_heavy_p2.toml", "sl2_exponential.json",
                                  "degenerate.json", "two_rotation.json", "sl2_narrow_p3.json"])
def test_shipped_configs_load(name):
    cfg = load_config(os.path.join(CONFIGS, name))
    assert cfg.n_atoms >= 100
    assert ExperimentConfig.from_dict(cfg.to_dict(), CONFIGS).to_dict() == cfg.to_dict()


def test_toml_and_json_agree():
    a = load_config(os.path.join(CONFIGS, "sl2_heavy_p2.toml"))
    assert a.family.params["tail_index"] == 2.0
    assert a.expectations == {"exponent_min": 0.7}


@pytest.mark.parametrize("bad", [
    {"bogus": 1},
    {"n_atoms": 50},
    {"kernel": {"alpha": 1.0, "eps": 0.0}},
    {"kernel": {"alpha": 1.0, "eps": 1e-3, "dim": 2}},
    {"eps_schedule": {"kind": "geometric", "kappa": 1.5}},
    {"eps_schedule": {"kind": "fixed", "kappa": 0.5}},
    {"initial_measure": {"kind": "arc", "center": 0.1}},
    {"radii": {"r_min": 0.1, "r_max": 0.05, "count": 6}},
    {"expectations": {"lambdaa": 0.5}},
    {"family": {"kind": "nope"}},
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        small_config(**bad)


def test_missing_config_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.json")


def test_geometric_schedule():
    cfg = small_config(eps_schedule={"kind": "geometric", "kappa": 0.5})
    assert [cfg.eps_at(n) for n in range(4)] == [1e-3, 1e-3, 1e-3, 1e-3]
    cfg = small_config(kernel={"alpha": 1.0, "eps": 0.3}, eps_schedule={"kind": "geometric", "kappa": 0.5})
    assert [cfg.eps_at(n) for n in range(3)] == [0.3, 0.3, 0.25]


# --- summary statistics -------------------------------------------------------

def test_detect_plateau():
    e = [10, 6, 4, 3.01, 3.0, 3.02, 3.0, 3.01, 3.0, 3.0]
    assert detect_plateau(e) == 3
    assert detect_plateau([10, 9, 8, 7, 6, 5, 4]) is None


def test_decay_rate_geometric_excess():
    n = np.arange(30)
    e = 5.0 + 8.0 * 0.5**n
    rate = decay_rate(list(e), 20, 5.0, 1e-3)
    assert 0.5 <= rate < 0.7


def _records(e, bound=100.0):
    return [{"step": k, "e_pair": x, "e_upper_bound": bound, "alpha_hat": None} for k, x in enumerate(e)]


def test_summary_flags_contraction_violation():
    e = [10.0, 5.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 9.0]
    s = summarize(_records(e), {"lambda": 0.6, "c_tilde": 3.5})
    assert s["contraction_violations"] == [7]
    assert not s["passed"]


def test_summary_negative_control():
    assert summarize(_records([4.0] * 6), {"contraction": False})["checks"]["no_decay"]
    assert not summarize(_records([4.0, 3.0, 3.0]), {"contraction": False})["checks"]["no_decay"]


def test_summary_upper_bound_check():
    s = summarize(_records([4.0, 3.0], bound=3.5), {})
    assert not s["checks"]["energy_upper_bound"]


# --- runs and reports ---------------------------------------------------------

def test_run_save_load_round_trip(tmp_path):
    rep = run_iteration(small_config())
    paths = rep.save(tmp_path)
    assert set(paths) == {"report", "steps", "measure"}
    back = ExperimentReport.load(paths["report"])
    assert back.summary_consistent
    assert back.to_json(with_timestamp=False) == rep.to_json(with_timestamp=False)
    lines = open(paths["steps"]).read().splitlines()
    assert lines[0].startswith("step,eps,grid_size") and len(lines) == 5


def test_tampered_report_detected(tmp_path):
    rep = run_iteration(small_config())
    d = json.loads(rep.to_json())
    d["summary"]["c_tilde_hat"] = 0.0
    assert not ExperimentReport.from_dict(d).summary_consistent
    d["records"] = d["records"][1:]
    with pytest.raises(ValueError):
        ExperimentReport.from_dict(d)


def test_same_seed_byte_identical():
    a = run_iteration(small_config()).to_json(with_timestamp=False)
    b = run_iteration(small_config()).to_json(with_timestamp=False)
    c = run_iteration(small_config(seed=2)).to_json(with_timestamp=False)
    assert a == b and a != c


def test_grid_cap_too_small_raises():
    cfg = small_config(kernel={"alpha": 1.0, "eps": 1e-5}, grid={"cap": 1 << 12})
    with pytest.raises(GridTooCoarseError):
        run_iteration(cfg)


def test_exponent_window_too_small():
    cfg = small_config(radii={"r_min": 1e-3, "r_max": 2e-3, "count": 6})
    with pytest.raises(ConfigError):
        exponent_experiment(cfg)


def test_narrow_angle_law_against_frozen_baseline():
    base = load_tolerances()["experiments"]["sl2_narrow_p3"]
    cfg = load_config(os.path.join(CONFIGS, "sl2_narrow_p3.json"))
    rep = run_iteration(cfg)
    e = rep.energies()
    assert all(e[k + 1] <= max(base["lambda"] * e[k], base["c_tilde"]) for k in range(len(e) - 1))
    # a concentrated stationary law: plateau well above the uniform-measure energy
    assert rep.summary["plateau_mean"] > 10.0


# --- verify suites ------------------------------------------------------------

def test_verify_unknown_suite():
    with pytest.raises(ValueError):
        verify_suite("bogus")


def test_tolerance_overrides_merge():
    tol = load_tolerances({"kernel": {"partint_rel": 1e-3}})
    assert tol["kernel"]["partint_rel"] == 1e-3
    assert tol["kernel"]["tail_tol"] == 0.05


def test_verify_measure_suite_passes():
    rep = verify_suite("measure")
    assert rep.passed and rep.exit_code == 0
    json.dumps(rep.to_dict())


def test_verify_energy_coarse_grid_fails_numerically():
    over = {"energy": {"triple_grid": 64, "sweep": {"grid_cap": 1 << 10}}}
    rep = verify_suite("energy", over)
    assert rep.exit_code == 3
    errs = [c.error for c in rep.checks if c.error]
    assert any("GridTooCoarseError" in e for e in errs)
