"""Logarithmic energies, singular kernels and random circle dynamics."""
from .energy import EnergyReport, energy_pair, energy_report, energy_tilde, energy_upper_bound
from .errors import ConfigError, GridTooCoarseError, LogHolderError, QuadratureError, SingularEvaluationError
from .geometry import CircleGrid, CirclePoint, circle_distance
from .kernel import KernelParams, U, V, c_const, phi, phi_eps
from .measure import EmpiricalMeasure, GridDensity, ball_mass, convolve, fit_log_holder, wasserstein_circle
from .rds import CircleMap, RandomMapFamily

__version__ = "0.1.0"

__all__ = [
    "CircleGrid", "CircleMap", "CirclePoint", "ConfigError", "EmpiricalMeasure", "EnergyReport",
    "GridDensity", "GridTooCoarseError", "KernelParams", "LogHolderError", "QuadratureError",
    "RandomMapFamily", "SingularEvaluationError", "U", "V", "ball_mass", "c_const", "circle_distance",
    "convolve", "energy_pair", "energy_report", "energy_tilde", "energy_upper_bound", "fit_log_holder",
    "phi", "phi_eps", "wasserstein_circle",
]
