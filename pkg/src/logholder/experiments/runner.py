"""Iterate ``nu_{n+1} = mu * nu_n`` and record energies and ball masses."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from ..energy import energy_pair, energy_tilde, energy_upper_bound, grid_for_eps
from ..errors import ConfigError
from ..geometry import CircleGrid
from ..measure import EmpiricalMeasure, LogHolderFit, ball_mass_table, convolve, fit_log_holder
from .config import ExperimentConfig

PLATEAU_REL = 0.01
PLATEAU_WINDOW = 5
HOLDER_SLOPE_MIN = 0.1
DEFAULT_EXPONENT_SLACK = 0.3


def initial_measure(cfg: ExperimentConfig) -> EmpiricalMeasure:
    spec, n = cfg.initial_measure, cfg.n_atoms
    kind = spec["kind"]
    if kind == "delta":
        return EmpiricalMeasure.delta(spec.get("position", 0.0), n)
    if kind == "uniform":
        return EmpiricalMeasure.uniform_grid(n)
    if kind == "arc":
        return EmpiricalMeasure.uniform_arc(n, spec["center"], spec["length"])
    return EmpiricalMeasure.from_csv(spec["path"])


def config_radii(cfg: ExperimentConfig) -> np.ndarray:
    r = cfg.radii
    return np.geomspace(r["r_min"], r["r_max"], int(r["count"]))


def _fit_or_none(nu, centers, radii, floor):
    use = radii[radii >= floor * (1 - 1e-12)]
    if len(use) < 5:
        return None
    try:
        return fit_log_holder(nu, centers, use, enforce_floor=False)
    except ValueError:
        return None


# ---------------------------------------------------------------------------
# summary statistics, recomputable from the records alone


def detect_plateau(e, rel: float = PLATEAU_REL, window: int = PLATEAU_WINDOW):
    """First index from which ``window`` consecutive relative changes are below ``rel``."""
    e = np.asarray(e, dtype=float)
    for n in range(len(e) - window):
        seg = e[n:n + window + 1]
        if np.all(np.abs(np.diff(seg)) <= rel * np.abs(seg[:-1])):
            return n
    return None


def decay_rate(e, plateau: int, level: float, spread: float):
    """Geometric rate at which the excess ``e(n) - level`` falls from its first
    value to the noise floor ``3 * spread``; an upper bound on the transient
    decay rate. None when the run starts on the plateau."""
    noise = max(3.0 * spread, 1e-12 * abs(level))
    ex = [x - level for x in e[:plateau + 1]]
    if ex[0] <= noise:
        return None
    k1 = next(k for k in range(len(ex)) if ex[k] <= noise) if any(x <= noise for x in ex) else plateau
    return (noise / ex[0]) ** (1.0 / max(k1, 1))


def summarize(records: list, expectations: dict) -> dict:
    e = [r["e_pair"] for r in records]
    out = {"n_records": len(records)}
    plateau = detect_plateau(e)
    out["plateau_step"] = plateau
    if plateau is not None:
        tail = e[plateau:]
        out["c_tilde_hat"] = max(tail)
        out["plateau_mean"] = float(np.mean(tail))
        out["plateau_std"] = float(np.std(tail))
        ratios = [e[k + 1] / e[k] for k in range(plateau)]
        out["lambda_hat"] = max(ratios) if ratios else None
        out["decay_rate"] = decay_rate(e, plateau, out["plateau_mean"], out["plateau_std"])
    else:
        out["c_tilde_hat"] = None
        out["plateau_mean"] = out["plateau_std"] = None
        ratios = [e[k + 1] / e[k] for k in range(len(e) - 1)]
        out["lambda_hat"] = max(ratios) if ratios else None
        out["decay_rate"] = None

    checks = {}
    band = float(expectations.get("noise_band", 0.0))
    bound_ok = all(r["e_pair"] <= r["e_upper_bound"] for r in records)
    checks["energy_upper_bound"] = bound_ok
    if expectations.get("contraction", True) is False:
        # negative control: no energy decay at all
        floor = e[0] * (1.0 - band) - 1e-12 * abs(e[0])
        checks["no_decay"] = all(x >= floor for x in e)
    else:
        lam = expectations.get("lambda", out["lambda_hat"])
        ct = expectations.get("c_tilde", out["c_tilde_hat"])
        if lam is not None and ct is not None:
            viol = [k for k in range(len(e) - 1) if e[k + 1] > max(lam * e[k], ct) * (1.0 + band)]
            out["contraction_violations"] = viol
            out["contraction_source"] = "declared" if "lambda" in expectations else "empirical"
            checks["contraction"] = not viol
    last_fit = records[-1].get("alpha_hat") if records else None
    out["final_alpha_hat"] = last_fit
    if "exponent_min" in expectations:
        checks["exponent"] = last_fit is not None and last_fit >= expectations["exponent_min"]
    out["checks"] = checks
    out["passed"] = all(checks.values())
    return out


# ---------------------------------------------------------------------------
# report


@dataclass
class ExperimentReport:
    config: dict
    records: list
    summary: dict
    timestamp: str = ""
    final_measure: EmpiricalMeasure | None = None
    summary_consistent: bool = True

    def to_dict(self, with_timestamp: bool = True) -> dict:
        d = {"config": self.config, "records": self.records, "summary": self.summary}
        if with_timestamp:
            d["timestamp"] = self.timestamp
        return d

    def to_json(self, with_timestamp: bool = True) -> str:
        return json.dumps(self.to_dict(with_timestamp), sort_keys=True, indent=1, allow_nan=True)

    def energies(self) -> np.ndarray:
        return np.array([r["e_pair"] for r in self.records])

    def save(self, out_dir) -> dict:
        os.makedirs(out_dir, exist_ok=True)
        paths = {"report": os.path.join(out_dir, "report.json"),
                 "steps": os.path.join(out_dir, "steps.csv")}
        with open(paths["report"], "w") as fh:
            fh.write(self.to_json())
        with open(paths["steps"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "eps", "grid_size", "e_pair", "e_tilde", "ratio", "alpha_hat", "c_hat"])
            for r in self.records:
                w.writerow([r["step"], repr(r["eps"]), r["grid_size"], repr(r["e_pair"]), repr(r["e_tilde"]),
                            "" if r["ratio"] is None else repr(r["ratio"]),
                            "" if r["alpha_hat"] is None else repr(r["alpha_hat"]),
                            "" if r["c_hat"] is None else repr(r["c_hat"])])
        if self.final_measure is not None:
            paths["measure"] = os.path.join(out_dir, "final_measure.csv")
            self.final_measure.to_csv(paths["measure"])
        return paths

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        records = d["records"]
        steps = [r["step"] for r in records]
        if steps != list(range(len(records))):
            raise ValueError("records must be contiguous in step from 0")
        recomputed = summarize(records, d["config"].get("expectations", {}))
        stored = d.get("summary", {})
        consistent = json.dumps(stored, sort_keys=True) == json.dumps(recomputed, sort_keys=True)
        return cls(d["config"], records, recomputed, d.get("timestamp", ""), None, consistent)

    @classmethod
    def load(cls, path) -> "ExperimentReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _grid_for(cfg: ExperimentConfig, eps: float, step: int) -> CircleGrid:
    from ..errors import GridTooCoarseError

    try:
        return grid_for_eps(eps, cap=int(cfg.grid["cap"]), factor=float(cfg.grid["factor"]))
    except GridTooCoarseError as exc:
        raise GridTooCoarseError(f"step {step}: {exc}") from exc


def run_iteration(cfg: ExperimentConfig, progress=None) -> ExperimentReport:
    """Iterate the Monte-Carlo convolution ``n_steps`` times from the initial
    measure, recording energies under the scheduled cutoff and ball masses."""
    nu = initial_measure(cfg)
    radii = config_radii(cfg)
    centers = np.arange(cfg.fit_centers) / cfg.fit_centers
    records = []
    prev = None
    for step in range(cfg.n_steps + 1):
        if step > 0:
            nu = convolve(cfg.family, nu, cfg.seed, step, mode=cfg.convolve_mode)
        eps = cfg.eps_at(step)
        p = cfg.kernel.with_eps(eps)
        grid = _grid_for(cfg, eps, step)
        e = energy_pair(nu, p, threads=cfg.threads)
        et = energy_tilde(nu, p, grid, threads=cfg.threads) if cfg.compute_tilde else None
        masses = ball_mass_table(nu, np.concatenate([centers, nu.positions]), radii).max(axis=0)
        fit = _fit_or_none(nu, centers, radii, nu.resolution_floor)
        rec = {
            "step": step, "eps": eps, "grid_size": grid.size, "n_atoms": nu.n_atoms,
            "e_pair": e, "e_tilde": et, "e_upper_bound": energy_upper_bound(p),
            "ratio": None if prev is None else e / prev,
            "radii": [float(r) for r in radii], "ball_masses": [float(m) for m in masses],
            "alpha_hat": None if fit is None else fit.alpha_hat,
            "c_hat": None if fit is None else fit.c_hat,
            "holder_slope": None if fit is None else fit.holder_slope,
        }
        records.append(rec)
        prev = e
        if progress is not None:
            progress(rec)
    summary = summarize(records, cfg.expectations)
    ts = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return ExperimentReport(cfg.to_dict(), records, summary, ts, nu)


# ---------------------------------------------------------------------------
# exponents


@dataclass(frozen=True)
class ExponentResult:
    fit: LogHolderFit
    window: tuple
    kappa: float | None
    target: float | None
    exponent_min: float | None
    meets_target: bool | None
    better_than_target: bool

    def to_dict(self) -> dict:
        return {"fit": self.fit.to_dict(), "window": list(self.window), "kappa": self.kappa,
                "target": self.target, "exponent_min": self.exponent_min,
                "meets_target": self.meets_target, "better_than_target": self.better_than_target}


def declared_target(cfg: ExperimentConfig) -> float | None:
    """Guaranteed exponent for a logarithmic moment class ``p``: ``p/2``
    for Lipschitz families (moments of every order below ``p``)."""
    prof = cfg.family.moment_profile
    if prof.startswith("logarithmic-"):
        order = float(prof.split("-", 1)[1])
        return order / 2.0 if cfg.family.is_lipschitz else order
    return None


def exponent_experiment(cfg: ExperimentConfig, report: ExperimentReport | None = None) -> ExponentResult:
    """Fit the log-Hölder exponent of the final measure of a run.

    The radii window is cut below at the atom resolution floor and at
    ``kappa**n`` with ``kappa = rate**(1/k)``, ``rate`` being the observed
    decay rate of the excess energy; an empty window raises ``ConfigError``.
    """
    if report is None or report.final_measure is None:
        report = run_iteration(cfg)
    nu = report.final_measure
    radii = config_radii(cfg)
    lam = report.summary.get("decay_rate")
    kappa = None
    floor = nu.resolution_floor
    if lam is not None and lam > 0:
        kappa = lam ** (1.0 / cfg.kernel.dim)
        floor = max(floor, kappa ** cfg.n_steps)
    use = radii[radii >= floor * (1 - 1e-12)]
    if len(use) < 5:
        raise ConfigError(f"radii window above floor {floor:.3g} has {len(use)} radii; need 5")
    centers = np.arange(cfg.fit_centers) / cfg.fit_centers
    fit = fit_log_holder(nu, centers, use, enforce_floor=False)
    target = declared_target(cfg)
    emin = cfg.expectations.get("exponent_min")
    if emin is None and target is not None:
        emin = target - DEFAULT_EXPONENT_SLACK
    meets = None if emin is None else bool(fit.alpha_hat >= emin)
    better = bool(fit.holder_slope >= HOLDER_SLOPE_MIN)
    return ExponentResult(fit, (float(use[0]), float(use[-1])), kappa, target, emin, meets, better)
