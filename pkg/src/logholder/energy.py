"""Logarithmic pair energies of measures on the circle.

``energy_pair``   sum_ij w_i w_j U(d(x_i, x_j)), diagonal included.
``energy_tilde``  (1/G) sum_g rho(y_g)**2 with rho the smoothed density.
``k_kernel``      (1/G) sum_g phi_eps(d(x, y_g)) phi_eps(d(z, y_g)).

The two energies agree when the measure is concentrated: on the circle the
continuous K kernel equals ``U(d) + U(1 - d)`` and ``U(1 - d)`` vanishes for
``d < 1 - 2/e``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import rng
from .errors import GridTooCoarseError
from .geometry import CircleGrid, circle_distance, unit_ball_volume
from .kernel import DEFAULT_SPEC, INV_E, KernelParams, QuadratureSpec, U, U_batch, _phi_eps_raw, c_const, u_table
from .measure import (
    EmpiricalMeasure,
    GridDensity,
    check_grid,
    density_on_grid,
    pushforward,
    convolve,
    wasserstein_circle,
)
from .parallel import chunked_sum, stable_sum

EXACT_PAIR_LIMIT = 20_000
EXACT_U_LIMIT = 64
DEFAULT_GRID_CAP = 1 << 24


# ---------------------------------------------------------------------------
# grid policy


def grid_for_eps(eps: float, cap: int = DEFAULT_GRID_CAP, factor: float = 20.0) -> CircleGrid:
    """Smallest power-of-two grid with at least ``factor/eps`` nodes, falling
    back to ``cap`` as long as it still resolves ``eps`` (``G >= 10/eps``)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    want = 1 << max(0, math.ceil(math.log2(factor / eps)))
    if want <= cap:
        return CircleGrid(want)
    if cap * eps >= 10.0:
        return CircleGrid(cap)
    raise GridTooCoarseError(f"eps = {eps:.3g} needs at least {math.ceil(10 / eps)} nodes; cap is {cap}")


def energy_upper_bound(p: KernelParams) -> float:
    """``omega_k (-log eps)**(alpha-1) / (e**k eps**k)``, valid for every measure."""
    return unit_ball_volume(p.dim) * (-math.log(p.eps)) ** (p.alpha - 1.0) / (math.e ** p.dim * p.eps ** p.dim)


def ball_mass_energy_bound(p: KernelParams, r: float) -> float:
    """Lower factor ``(c/2)(-log 2r)**alpha`` multiplying ``nu(B_r(x))**2`` below E."""
    return 0.5 * c_const(p.alpha, p.dim) * (-math.log(2.0 * r)) ** p.alpha


# ---------------------------------------------------------------------------
# E


@dataclass(frozen=True)
class PairEnergy:
    value: float
    stderr: float
    method: str
    n_pairs: int


def _u_evaluator(p: KernelParams, q: QuadratureSpec, nu: EmpiricalMeasure, force_table: bool):
    if not force_table and nu.n_atoms <= EXACT_U_LIMIT:
        # few distinct distances: exact quadrature on each
        return lambda d: U_batch(p, d, q), "exact"
    table = u_table(p, q)
    return table, "table"


def energy_pair_detail(nu: EmpiricalMeasure, p: KernelParams, q: QuadratureSpec = DEFAULT_SPEC,
                       threads: int | None = None, exact_limit: int = EXACT_PAIR_LIMIT,
                       n_sample_pairs: int = 2_000_000, seed: int = 0,
                       force_table: bool = False) -> PairEnergy:
    """E with a record of how it was computed.

    Coincident atoms are merged first. Up to ``exact_limit`` distinct atoms
    the double sum is exact (upper triangle doubled plus the diagonal, in
    fixed row blocks combined with ``fsum``); beyond that an unbiased
    estimate from ``n_sample_pairs`` independent pairs drawn from
    ``nu x nu`` is returned with its standard error.
    """
    if p.eps <= 0:
        raise ValueError("energy_pair needs eps > 0")
    if p.dim != 1:
        raise ValueError("energies on the circle use dim = 1")
    m = nu.merged()
    x, w = m.positions, m.weights
    n = len(x)
    Ufun, how = _u_evaluator(p, q, m, force_table)
    if n <= exact_limit:
        u0 = float(U(p, 0.0, q))
        diag = u0 * math.fsum(w * w)
        block = max(1, (1 << 22) // max(n, 1))

        def rows(a, b):
            # pairs (i, j) with a <= i < b and j > i
            parts = []
            for i0 in range(a, b, 64):
                i1 = min(b, i0 + 64)
                j0 = i0 + 1
                if j0 >= n:
                    continue
                d = circle_distance(x[i0:i1, None], x[None, j0:])
                vals = Ufun(d)
                # zero out j <= i inside the leading square
                ii = np.arange(i0, i1)[:, None]
                jj = np.arange(j0, n)[None, :]
                vals = np.where(jj > ii, vals, 0.0)
                parts.append(float(w[i0:i1] @ (vals @ w[j0:])))
            return math.fsum(parts)

        off = chunked_sum(rows, n, block, threads)
        return PairEnergy(diag + 2.0 * off, 0.0, f"exact-{how}", n * (n + 1) // 2)
    gen = rng.stream(seed, "pair-estimator", n)
    cw = np.cumsum(w)
    i = np.minimum(np.searchsorted(cw, gen.uniform(0, cw[-1], n_sample_pairs), side="right"), n - 1)
    j = np.minimum(np.searchsorted(cw, gen.uniform(0, cw[-1], n_sample_pairs), side="right"), n - 1)
    vals = Ufun(circle_distance(x[i], x[j]))
    mean = stable_sum(vals) / n_sample_pairs
    se = float(np.std(vals, ddof=1)) / math.sqrt(n_sample_pairs)
    return PairEnergy(mean, se, f"sampled-{how}", n_sample_pairs)


def energy_pair(nu: EmpiricalMeasure, p: KernelParams, q: QuadratureSpec = DEFAULT_SPEC,
                **kw) -> float:
    """``sum_i sum_j w_i w_j U(d(x_i, x_j))`` including ``i = j``."""
    return energy_pair_detail(nu, p, q, **kw).value


# ---------------------------------------------------------------------------
# K and E-tilde


def k_kernel(x, z, p: KernelParams, grid: CircleGrid) -> float:
    """Grid quadrature of ``int phi_eps(d(x, y)) phi_eps(d(z, y)) dy``."""
    check_grid(p, grid)
    x = float(getattr(x, "position", x))
    z = float(getattr(z, "position", z))
    y = grid.points
    a = _phi_eps_raw(p.alpha, 1, p.eps, circle_distance(x, y))
    b = _phi_eps_raw(p.alpha, 1, p.eps, circle_distance(z, y))
    return stable_sum(a * b) / grid.size


def k_kernel_self_closed_form(p: KernelParams) -> float:
    """Continuous ``K(x, x) = 2 [eps phi(eps)**2 + int_eps^{1/e} phi**2]``."""
    from .kernel import u_zero_closed_form

    return u_zero_closed_form(p)


def energy_tilde(nu: EmpiricalMeasure, p: KernelParams, grid: CircleGrid, method: str = "auto",
                 threads: int | None = None) -> float:
    """``(1/G) sum_g rho(y_g)**2``."""
    rho = density_on_grid(nu, p, grid, method=method, threads=threads)
    return stable_sum(rho.values * rho.values) / grid.size


def energy_tilde_double_sum(nu: EmpiricalMeasure, p: KernelParams, grid: CircleGrid) -> float:
    """``sum_ij w_i w_j k_kernel(x_i, x_j)`` computed from the atom profiles."""
    check_grid(p, grid)
    m = nu.merged()
    prof = np.stack([_phi_eps_raw(p.alpha, 1, p.eps, circle_distance(x, grid.points)) for x in m.positions])
    K = (prof @ prof.T) / grid.size
    return math.fsum((m.weights[:, None] * K * m.weights[None, :]).ravel())


def theta_measure(nu: EmpiricalMeasure, p: KernelParams, grid: CircleGrid, method: str = "auto") -> GridDensity:
    """Normalised density ``rho**2 / E_tilde``."""
    rho = density_on_grid(nu, p, grid, method=method)
    sq = rho.values * rho.values
    e = stable_sum(sq) / grid.size
    return GridDensity(grid, sq / e)


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class EnergyReport:
    e_pair: float
    e_tilde: float
    params: KernelParams
    grid_size: int
    n_atoms: int

    def to_dict(self) -> dict:
        return {"alpha": self.params.alpha, "eps": self.params.eps, "dim": self.params.dim,
                "n_atoms": self.n_atoms, "grid_size": self.grid_size,
                "e_pair": self.e_pair, "e_tilde": self.e_tilde}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EnergyReport":
        return cls(float(d["e_pair"]), float(d["e_tilde"]),
                   KernelParams(d["alpha"], d["eps"], d["dim"]), int(d["grid_size"]), int(d["n_atoms"]))

    @property
    def within_upper_bound(self) -> bool:
        return self.e_pair <= energy_upper_bound(self.params)


def energy_report(nu: EmpiricalMeasure, p: KernelParams, grid: CircleGrid,
                  q: QuadratureSpec = DEFAULT_SPEC, threads: int | None = None,
                  with_tilde: bool = True) -> EnergyReport:
    e = energy_pair(nu, p, q, threads=threads)
    et = energy_tilde(nu, p, grid, threads=threads) if with_tilde else float("nan")
    return EnergyReport(e, et, p, grid.size, nu.n_atoms)


# ---------------------------------------------------------------------------
# one-step bounds


@dataclass(frozen=True)
class OneStepBound:
    lhs: float
    rhs: float
    factor: float
    e_before: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


def one_step_holder_bound(nu: EmpiricalMeasure, f, p: KernelParams, q: QuadratureSpec = DEFAULT_SPEC,
                          delta: float = 0.5, r0: float = 1e-2, constants=None) -> OneStepBound:
    """``E(f_* nu)`` against ``(2(1 + log L)/gamma)**alpha ((1 + delta) E(nu) + A)``
    with ``A = 2 c (-log r0)**alpha``. ``constants`` overrides ``(gamma, L)``."""
    from .rds import holder_constants

    gamma, L = constants if constants is not None else holder_constants(f)
    factor = (2.0 * (1.0 + math.log(L)) / gamma) ** p.alpha
    A = 2.0 * c_const(p.alpha, p.dim) * (-math.log(r0)) ** p.alpha
    before = energy_pair(nu, p, q)
    after = energy_pair(pushforward(nu, f), p, q)
    return OneStepBound(after, factor * ((1.0 + delta) * before + A), factor, before)


@dataclass(frozen=True)
class AveragedRatio:
    ratio: float
    stderr: float
    m_samples: int


def averaged_step_ratio(mu, nu: EmpiricalMeasure, p: KernelParams, grid: CircleGrid,
                        m_samples: int, seed: int) -> AveragedRatio:
    """Monte-Carlo mean of ``E_tilde(f_* nu) / E_tilde(nu)`` over ``f ~ mu``."""
    base = energy_tilde(nu, p, grid)
    ratios = np.empty(m_samples)
    for k in range(m_samples):
        f = mu.sample_map(seed, k)
        ratios[k] = energy_tilde(pushforward(nu, f), p, grid) / base
    se = float(np.std(ratios, ddof=1) / math.sqrt(m_samples)) if m_samples > 1 else 0.0
    return AveragedRatio(stable_sum(ratios) / m_samples, se, m_samples)


def push_grid_density(theta: GridDensity, f) -> GridDensity:
    """Transport the cell masses of ``theta`` through ``f`` and re-bin each
    onto its nearest node."""
    G = theta.grid.size
    img = np.asarray(f.apply(theta.grid.points), dtype=float)
    idx = np.rint(img * G).astype(np.int64) % G
    out = np.zeros(G)
    np.add.at(out, idx, theta.values)
    return GridDensity(theta.grid, out)


def wasserstein_stability(nu: EmpiricalMeasure, f, p: KernelParams, grid: CircleGrid) -> float:
    """``W(f_* theta[nu], theta[f_* nu])``."""
    a = push_grid_density(theta_measure(nu, p, grid), f)
    b = theta_measure(pushforward(nu, f), p, grid)
    return wasserstein_circle(a, b)


def contraction_step(mu, nu: EmpiricalMeasure, p: KernelParams, grid: CircleGrid, seed: int,
                     step: int = 0, q: QuadratureSpec = DEFAULT_SPEC, threads: int | None = None):
    """Energies of ``nu`` and of one Monte-Carlo realisation of ``mu * nu``."""
    before = energy_report(nu, p, grid, q, threads)
    nxt = convolve(mu, nu, seed, step)
    after = energy_report(nxt, p, grid, q, threads)
    return before, after
