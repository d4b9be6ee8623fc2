"""Experiment configuration: JSON or TOML, validated, unknown keys rejected."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

from ..errors import ConfigError
from ..kernel import KernelParams
from ..rds import RandomMapFamily

try:  # Python 3.11+
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as _toml

TOP_KEYS = {
    "name", "family", "initial_measure", "n_atoms", "n_steps", "kernel", "eps_schedule",
    "grid", "radii", "fit_centers", "seed", "output_dir", "threads", "compute_tilde",
    "convolve_mode", "expectations",
}
INITIAL_KINDS = {"delta": {"kind", "position"}, "uniform": {"kind"},
                 "arc": {"kind", "center", "length"}, "file": {"kind", "path"}}
INITIAL_REQUIRED = {"delta": set(), "uniform": set(), "arc": {"center", "length"}, "file": {"path"}}
SCHEDULE_KEYS = {"fixed": {"kind"}, "geometric": {"kind", "kappa"}}
GRID_KEYS = {"cap", "factor"}
RADII_KEYS = {"r_min", "r_max", "count"}
EXPECTATION_KEYS = {"lambda", "c_tilde", "contraction", "exponent_min", "noise_band", "better_than_target"}


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a table/object")
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


@dataclass
class ExperimentConfig:
    family: RandomMapFamily
    family_spec: dict
    initial_measure: dict = field(default_factory=lambda: {"kind": "delta", "position": 0.0})
    n_atoms: int = 10_000
    n_steps: int = 30
    kernel: KernelParams = field(default_factory=lambda: KernelParams(1.0, 1e-3, 1))
    eps_schedule: dict = field(default_factory=lambda: {"kind": "fixed"})
    grid: dict = field(default_factory=lambda: {"cap": 1 << 20, "factor": 20.0})
    radii: dict = field(default_factory=lambda: {"r_min": 1e-3, "r_max": 0.3, "count": 12})
    fit_centers: int = 256
    seed: int = 0
    output_dir: str | None = None
    threads: int = 1
    compute_tilde: bool = True
    convolve_mode: str = "independent"
    expectations: dict = field(default_factory=dict)
    name: str = "experiment"

    def __post_init__(self):
        if self.n_atoms < 100:
            raise ConfigError("n_atoms must be at least 100")
        if self.n_steps < 0:
            raise ConfigError("n_steps must be non-negative")
        if self.kernel.eps <= 0:
            raise ConfigError("kernel.eps must be positive")
        if self.kernel.dim != 1:
            raise ConfigError("experiments run on the circle: kernel.dim must be 1")
        kind = self.eps_schedule.get("kind")
        if kind not in SCHEDULE_KEYS:
            raise ConfigError(f"eps_schedule.kind must be one of {sorted(SCHEDULE_KEYS)}")
        _check_keys(self.eps_schedule, SCHEDULE_KEYS[kind], "eps_schedule")
        if kind == "geometric" and not (0.0 < self.eps_schedule.get("kappa", -1) < 1.0):
            raise ConfigError("geometric schedule needs 0 < kappa < 1")
        ikind = self.initial_measure.get("kind")
        if ikind not in INITIAL_KINDS:
            raise ConfigError(f"initial_measure.kind must be one of {sorted(INITIAL_KINDS)}")
        _check_keys(self.initial_measure, INITIAL_KINDS[ikind], "initial_measure")
        missing = INITIAL_REQUIRED[ikind] - set(self.initial_measure)
        if missing:
            raise ConfigError(f"initial_measure of kind {ikind!r} needs {sorted(missing)}")
        _check_keys(self.grid, GRID_KEYS, "grid")
        _check_keys(self.radii, RADII_KEYS, "radii")
        _check_keys(self.expectations, EXPECTATION_KEYS, "expectations")
        r = self.radii
        if not (0 < r.get("r_min", 0) < r.get("r_max", 0) <= math.exp(-1.0)) or r.get("count", 0) < 5:
            raise ConfigError("radii need 0 < r_min < r_max <= 1/e and count >= 5")
        if self.convolve_mode not in ("independent", "average"):
            raise ConfigError("convolve_mode must be 'independent' or 'average'")
        if self.threads < 1:
            raise ConfigError("threads must be positive")

    def eps_at(self, step: int) -> float:
        """Cutoff used at ``step``: fixed, or ``min(eps, kappa**step)``."""
        eps = self.kernel.eps
        if self.eps_schedule["kind"] == "geometric":
            return min(eps, self.eps_schedule["kappa"] ** step)
        return eps

    def to_dict(self) -> dict:
        return {
            "name": self.name, "family": self.family_spec, "initial_measure": self.initial_measure,
            "n_atoms": self.n_atoms, "n_steps": self.n_steps, "kernel": self.kernel.as_dict(),
            "eps_schedule": self.eps_schedule, "grid": self.grid, "radii": self.radii,
            "fit_centers": self.fit_centers, "seed": self.seed, "output_dir": self.output_dir,
            "threads": self.threads, "compute_tilde": self.compute_tilde,
            "convolve_mode": self.convolve_mode, "expectations": self.expectations,
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> "ExperimentConfig":
        _check_keys(d, TOP_KEYS, "config")
        if "family" not in d:
            raise ConfigError("config needs a 'family'")
        fam = d["family"]
        try:
            if isinstance(fam, str):
                path = fam if os.path.isabs(fam) else os.path.join(base_dir, fam)
                with open(path) as fh:
                    fam = json.load(fh)
            family = RandomMapFamily.from_dict(fam)
            kd = dict(d.get("kernel", {}))
            _check_keys(kd, {"alpha", "eps", "dim"}, "kernel")
            kernel = KernelParams(kd.get("alpha", 1.0), kd.get("eps", 1e-3), kd.get("dim", 1))
        except (ValueError, KeyError, OSError) as exc:
            raise ConfigError(str(exc)) from exc
        init = dict(d.get("initial_measure", {"kind": "delta", "position": 0.0}))
        if init.get("kind") == "file" and not os.path.isabs(init.get("path", "")):
            init["path"] = os.path.join(base_dir, init.get("path", ""))
        grid = {"cap": 1 << 20, "factor": 20.0}
        grid.update(d.get("grid", {}))
        radii = {"r_min": 1e-3, "r_max": 0.3, "count": 12}
        radii.update(d.get("radii", {}))
        try:
            return cls(
                family=family, family_spec=fam, initial_measure=init,
                n_atoms=int(d.get("n_atoms", 10_000)), n_steps=int(d.get("n_steps", 30)),
                kernel=kernel, eps_schedule=dict(d.get("eps_schedule", {"kind": "fixed"})),
                grid=grid, radii=radii, fit_centers=int(d.get("fit_centers", 256)),
                seed=int(d.get("seed", 0)), output_dir=d.get("output_dir"),
                threads=int(d.get("threads", 1)), compute_tilde=bool(d.get("compute_tilde", True)),
                convolve_mode=d.get("convolve_mode", "independent"),
                expectations=dict(d.get("expectations", {})), name=d.get("name", "experiment"),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    """Read a ``.json`` or ``.toml`` experiment file."""
    path = str(path)
    try:
        if path.endswith(".toml"):
            with open(path, "rb") as fh:
                d = _toml.load(fh)
        else:
            with open(path) as fh:
                d = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except (json.JSONDecodeError, _toml.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(d, base_dir=os.path.dirname(os.path.abspath(path)))
