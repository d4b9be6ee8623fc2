"""Probability measures on the circle: atoms, grid densities and distances.

An :class:`EmpiricalMeasure` is a finite weighted set of atoms; a
:class:`GridDensity` holds values at the nodes of a :class:`CircleGrid`
(with Lebesgue weight ``1/G`` per node). Ball masses use open balls.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import GridTooCoarseError
from .geometry import CircleGrid, CirclePoint, circle_distance, wrap
from .kernel import KernelParams, _phi_eps_raw
from .parallel import DEFAULT_CHUNK, map_chunks, stable_sum

WEIGHT_TOL = 1e-12
DENSITY_TOL = 1e-8


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Weighted atoms on the circle; weights are positive and sum to 1."""

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pos = wrap(np.atleast_1d(np.asarray(self.positions, dtype=float)).copy())
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if pos.shape != w.shape or pos.ndim != 1:
            raise ValueError("positions and weights must be 1-D arrays of equal length")
        if len(pos) == 0:
            raise ValueError("a measure needs at least one atom")
        if not np.all(np.isfinite(pos)) or not np.all(w > 0):
            raise ValueError("positions must be finite and weights positive")
        if abs(math.fsum(w) - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {math.fsum(w)!r}, expected 1")
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "weights", _frozen(w))

    # constructors -----------------------------------------------------------
    @classmethod
    def from_positions(cls, positions) -> "EmpiricalMeasure":
        positions = np.asarray(positions, dtype=float)
        return cls(positions, np.full(len(positions), 1.0 / len(positions)))

    @classmethod
    def delta(cls, x: float = 0.0, n: int = 1) -> "EmpiricalMeasure":
        """``n`` replicated atoms at ``x`` (the Dirac mass, split ``n`` ways)."""
        return cls.from_positions(np.full(n, float(getattr(x, "position", x))))

    @classmethod
    def uniform_grid(cls, n: int, offset: float = 0.0) -> "EmpiricalMeasure":
        return cls.from_positions((np.arange(n) + offset) / n)

    @classmethod
    def uniform_arc(cls, n: int, center: float, length: float) -> "EmpiricalMeasure":
        """``n`` equal atoms evenly spread over an arc of the given length."""
        return cls.from_positions(center + length * ((np.arange(n) + 0.5) / n - 0.5))

    @classmethod
    def random_arc(cls, n: int, center: float, length: float, seed: int) -> "EmpiricalMeasure":
        u = rng.stream(seed, "random-arc").uniform(-0.5, 0.5, n)
        return cls.from_positions(center + length * u)

    # basic properties -------------------------------------------------------
    def __len__(self):
        return len(self.positions)

    @property
    def n_atoms(self) -> int:
        return len(self.positions)

    @property
    def atoms(self):
        return [(CirclePoint(x), float(w)) for x, w in zip(self.positions, self.weights)]

    @property
    def max_weight(self) -> float:
        return float(np.max(self.weights))

    @property
    def resolution_floor(self) -> float:
        """Smallest radius at which ball masses count about ten atoms."""
        return 10.0 * self.max_weight

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights)

    def merged(self) -> "EmpiricalMeasure":
        """Same measure with coincident atoms combined (sorted by position)."""
        uniq, inv = np.unique(self.positions, return_inverse=True)
        w = np.zeros(len(uniq))
        np.add.at(w, inv, self.weights)
        return EmpiricalMeasure(uniq, w / math.fsum(w))

    def sorted(self):
        order = np.argsort(self.positions, kind="stable")
        return self.positions[order], self.weights[order]

    # io ---------------------------------------------------------------------
    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["position", "weight"])
            for x, m in zip(self.positions, self.weights):
                w.writerow([f"{x:.17g}", f"{m:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "EmpiricalMeasure":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if [h.strip() for h in header] != ["position", "weight"]:
                raise ValueError(f"expected header 'position,weight', got {header}")
            rows = [(float(a), float(b)) for a, b in reader]
        arr = np.array(rows, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Nonnegative values at the nodes of ``grid``."""

    grid: CircleGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("grid density values must be finite and nonnegative")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def mass(self) -> float:
        """Lebesgue integral ``(1/G) sum values``."""
        return stable_sum(self.values) / self.grid.size

    def is_normalized(self, tol: float = DENSITY_TOL) -> bool:
        return abs(self.mass - 1.0) <= tol

    def normalized(self) -> "GridDensity":
        return GridDensity(self.grid, self.values / self.mass)

    def cell_masses(self) -> np.ndarray:
        return self.values / self.grid.size

    def inner(self, other: "GridDensity") -> float:
        _same_grid(self, other)
        return stable_sum(self.values * other.values) / self.grid.size

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["grid_index", "value"])
            for j, v in enumerate(self.values):
                w.writerow([j, f"{v:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "GridDensity":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if [h.strip() for h in header] != ["grid_index", "value"]:
                raise ValueError(f"expected header 'grid_index,value', got {header}")
            rows = [(int(a), float(b)) for a, b in reader]
        idx = np.array([r[0] for r in rows])
        if not np.array_equal(idx, np.arange(len(rows))):
            raise ValueError("grid indices must be 0..G-1 in order")
        return cls(CircleGrid(len(rows)), np.array([r[1] for r in rows]))


def _same_grid(a: GridDensity, b: GridDensity):
    if a.grid.size != b.grid.size:
        raise ValueError(f"grid mismatch: {a.grid.size} vs {b.grid.size}")


# ---------------------------------------------------------------------------
# ball masses


class _SortedAtoms:
    """Cumulative weights of a measure for O(log n) arc masses."""

    def __init__(self, nu: EmpiricalMeasure):
        self.pos, w = nu.sorted()
        self.cum = np.concatenate([[0.0], np.cumsum(w)])
        self.total = self.cum[-1]

    def _below(self, t, side):
        # weight of atoms with lifted coordinate < t (side='left') or <= t
        t = np.asarray(t, dtype=float)
        k = np.floor(t)
        idx = np.searchsorted(self.pos, t - k, side=side)
        return k * self.total + self.cum[idx]

    def open_arc(self, lo, hi):
        """Mass of the open arc ``(lo, hi)`` of the lifted line, ``hi - lo <= 1``."""
        return self._below(hi, "left") - self._below(lo, "right")


def ball_mass(nu: EmpiricalMeasure, x, r):
    """Mass of the open ball ``{y : d(x, y) < r}``; vectorised over ``x`` and ``r``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("radius must be positive")
    x = np.asarray(getattr(x, "position", x), dtype=float)
    s = _SortedAtoms(nu)
    rr = np.minimum(r, 0.5)
    m = s.open_arc(x - rr, x + rr)
    # r > 1/2 captures the antipode too
    m = np.where(r > 0.5, s.total, np.clip(m, 0.0, s.total))
    return float(m) if m.ndim == 0 else m


def ball_mass_table(nu: EmpiricalMeasure, centers, radii) -> np.ndarray:
    """``table[i, j] = nu(B(centers[i], radii[j]))``."""
    centers = np.asarray(getattr(centers, "points", centers), dtype=float)
    return ball_mass(nu, centers[:, None], np.asarray(radii, dtype=float)[None, :])


# ---------------------------------------------------------------------------
# pushforward and convolution


def pushforward(nu: EmpiricalMeasure, f) -> EmpiricalMeasure:
    """``f_* nu``: atoms moved by ``f``, weights unchanged."""
    return EmpiricalMeasure(np.asarray(f.apply(nu.positions), dtype=float), nu.weights)


def convolve(mu, nu: EmpiricalMeasure, seed: int, step: int = 0, mode: str = "independent",
             m: int = 1) -> EmpiricalMeasure:
    """Monte-Carlo realisation of ``mu * nu``.

    ``mode='independent'`` moves atom ``i`` by its own map drawn from ``mu``
    (one map per atom; exact in law). ``mode='average'`` draws ``m`` maps and
    returns the ``n*m``-atom average of the ``m`` pushforwards.
    """
    if mode == "independent":
        batch = mu.sample_maps(seed, step, nu.n_atoms)
        return EmpiricalMeasure(batch.apply(nu.positions), nu.weights)
    if mode == "average":
        if m < 1:
            raise ValueError("m must be positive")
        batch = mu.sample_maps(seed, step, m)
        pos = np.concatenate([batch.item(j).apply(nu.positions) for j in range(m)])
        w = np.tile(nu.weights, m) / m
        return EmpiricalMeasure(pos, w / math.fsum(w))
    raise ValueError(f"unknown convolution mode {mode!r}")


# ---------------------------------------------------------------------------
# smoothed density rho


def check_grid(p: KernelParams, grid: CircleGrid):
    """Raise unless the grid spacing resolves the cutoff: ``1/G <= eps/10``."""
    if p.eps <= 0:
        raise ValueError("grid densities need eps > 0")
    if grid.spacing > p.eps / 10.0 * (1.0 + 1e-12):
        raise GridTooCoarseError(
            f"grid spacing 1/{grid.size} exceeds eps/10 = {p.eps / 10:.3g}; "
            f"need at least {math.ceil(10.0 / p.eps)} nodes"
        )


DIRECT_LIMIT = 1 << 23
NEAR_CELLS = 256


def density_on_grid(nu: EmpiricalMeasure, p: KernelParams, grid: CircleGrid,
                    method: str = "auto", threads: int | None = None) -> GridDensity:
    """``rho(y_g) = sum_i w_i phi_eps(d(x_i, y_g))`` at every grid node.

    ``method='direct'`` sums atom by atom (cost ``n G``). ``method='fft'``
    splits each atom's mass linearly onto its two neighbouring nodes,
    convolves with the sampled kernel by FFT, then replaces the
    contribution of the ``NEAR_CELLS`` nodes on either side of each atom
    (and of the nodes next to the support edge at distance 1/e) by the
    exact value. The remaining far-field error is second order in
    ``1/(G d)``. ``'auto'`` picks ``direct`` when
    ``n G <= DIRECT_LIMIT``.
    """
    check_grid(p, grid)
    if p.dim != 1:
        raise ValueError("densities on the circle use dim = 1")
    nu = nu.merged() if nu.n_atoms > 1 else nu
    if method == "auto":
        method = "direct" if nu.n_atoms * grid.size <= DIRECT_LIMIT else "fft"
    if method == "direct":
        vals = _density_direct(nu, p, grid, threads)
    elif method == "fft":
        vals = _density_fft(nu, p, grid)
    else:
        raise ValueError(f"unknown method {method!r}")
    return GridDensity(grid, vals)


def _density_direct(nu, p, grid, threads):
    G = grid.size
    y = grid.points
    block = max(1, (1 << 20) // G)

    def part(a, b):
        d = circle_distance(nu.positions[a:b, None], y[None, :])
        return nu.weights[a:b] @ _phi_eps_raw(p.alpha, 1, p.eps, d)

    parts = map_chunks(part, nu.n_atoms, block, threads)
    # node-wise sums in fixed chunk order
    out = np.zeros(G)
    for q in parts:
        out += q
    return out


def _kernel_samples(p, G):
    m = np.arange(G)
    d = np.minimum(m, G - m) / G
    return _phi_eps_raw(p.alpha, 1, p.eps, d)


def _density_fft(nu, p, grid):
    G = grid.size
    u = nu.positions * G
    j = np.floor(u).astype(np.int64) % G
    t = u - np.floor(u)
    mass = np.zeros(G)
    np.add.at(mass, j, nu.weights * (1.0 - t))
    np.add.at(mass, (j + 1) % G, nu.weights * t)
    ker = _kernel_samples(p, G)
    rho = np.fft.irfft(np.fft.rfft(mass) * np.fft.rfft(ker), n=G)
    # exact values next to each atom and next to the support edge at 1/e,
    # where the linear mass split is least accurate
    h = min(NEAR_CELLS, G // 2 - 1)
    edge = int(round(G * math.exp(-1.0)))
    offs = np.unique(np.concatenate([np.arange(-h, h + 2),
                                     np.arange(edge - 3, edge + 5), np.arange(-edge - 4, -edge + 4)]))
    offs = offs[(offs > -G // 2) & (offs < G // 2)]
    for a, b in [(s, min(nu.n_atoms, s + 4096)) for s in range(0, nu.n_atoms, 4096)]:
        nodes = (j[a:b, None] + offs[None, :]) % G
        exact = _phi_eps_raw(p.alpha, 1, p.eps,
                             circle_distance(nu.positions[a:b, None], nodes / G))
        approx = (1.0 - t[a:b, None]) * ker[offs[None, :] % G] + t[a:b, None] * ker[(offs[None, :] - 1) % G]
        np.add.at(rho, nodes.ravel(), (nu.weights[a:b, None] * (exact - approx)).ravel())
    return np.maximum(rho, 0.0)


# ---------------------------------------------------------------------------
# distances between probability measures


def _as_atoms(a):
    if isinstance(a, EmpiricalMeasure):
        if abs(a.total_mass - 1.0) > 1e-9:
            raise ValueError("measure is not normalized")
        return a.sorted()
    if isinstance(a, GridDensity):
        if not a.is_normalized(1e-9):
            raise ValueError(f"grid density has mass {a.mass!r}, expected 1")
        return a.grid.points, a.cell_masses() / math.fsum(a.cell_masses())
    raise TypeError(f"unsupported measure type {type(a).__name__}")


def _weighted_median(values, lengths):
    order = np.argsort(values, kind="stable")
    v, w = values[order], lengths[order]
    c = np.cumsum(w)
    k = int(np.searchsorted(c, 0.5 * c[-1]))
    return float(v[min(k, len(v) - 1)])


def wasserstein_circle(a, b) -> float:
    """W1 on the circle with arc-length cost.

    With ``D = F_a - F_b`` the difference of CDFs anchored at 0, the cost is
    ``min_t int_0^1 |D(s) - t| ds``, attained at a median of ``D``.
    """
    if isinstance(a, GridDensity) and isinstance(b, GridDensity) and a.grid.size == b.grid.size:
        _as_atoms(a), _as_atoms(b)
        D = np.cumsum(a.cell_masses() / a.mass - b.cell_masses() / b.mass)
        med = float(np.median(D))
        return stable_sum(np.abs(D - med)) / a.grid.size
    xa, wa = _as_atoms(a)
    xb, wb = _as_atoms(b)
    x = np.concatenate([xa, xb])
    w = np.concatenate([wa, -wb])
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    D = np.cumsum(w)
    # D is constant on [x_k, x_{k+1}); the interval before x_0 carries D = 0
    # and joins the last interval through the wrap
    lengths = np.diff(np.concatenate([x, [x[0] + 1.0]]))
    med = _weighted_median(D, lengths)
    return stable_sum(lengths * np.abs(D - med))


def total_variation(a: GridDensity, b: GridDensity) -> float:
    """``(1/2)(1/G) sum |a_g - b_g|``."""
    _same_grid(a, b)
    return 0.5 * stable_sum(np.abs(a.values - b.values)) / a.grid.size


# ---------------------------------------------------------------------------
# log-Hölder fit


@dataclass(frozen=True)
class LogHolderFit:
    """Fit of ``log m(r) = log c - alpha log(-log r)`` to the worst-center
    ball-mass envelope ``m(r)``.

    ``holder_slope`` is the slope of ``log m`` against ``log r`` over the same
    radii: a positive value means the masses decay like a power of ``r``,
    which is faster than any log-Hölder rate.
    """

    alpha_hat: float
    c_hat: float
    worst_center: CirclePoint
    r_range: tuple
    residual: float
    holder_slope: float
    radii: tuple
    masses: tuple

    def to_dict(self):
        return {"alpha_hat": self.alpha_hat, "c_hat": self.c_hat,
                "worst_center": self.worst_center.position, "r_range": list(self.r_range),
                "residual": self.residual, "holder_slope": self.holder_slope,
                "radii": list(self.radii), "masses": list(self.masses)}


def geometric_radii(r_min: float, r_max: float, n: int) -> np.ndarray:
    return np.geomspace(r_min, r_max, n)


def fit_log_holder(nu: EmpiricalMeasure, centers, radii, enforce_floor: bool = True,
                   extra_centers: bool = True) -> LogHolderFit:
    """Fit the log-Hölder exponent of ``nu`` from ball masses.

    For every radius the largest mass over ``centers`` (plus, by default,
    the atom positions themselves) forms the envelope; ``log`` of the
    envelope is regressed on ``log(-log r)``, skipping radii whose balls
    are empty or already hold the whole mass.
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    if len(radii) < 5:
        raise ValueError("need at least 5 radii")
    if radii[-1] > math.exp(-1.0) * (1 + 1e-12):
        raise ValueError("radii must not exceed 1/e")
    if enforce_floor and radii[0] < nu.resolution_floor * (1 - 1e-12):
        raise ValueError(f"smallest radius {radii[0]:.3g} is below the resolution floor "
                         f"{nu.resolution_floor:.3g}")
    c = np.asarray(getattr(centers, "points", centers), dtype=float)
    if extra_centers:
        c = np.concatenate([c, nu.merged().positions])
    table = ball_mass_table(nu, c, radii)
    env = table.max(axis=0)
    if not np.any(env > 0):
        raise ValueError("all ball masses are zero over the radii range")
    # balls holding all the mass say nothing about the decay rate
    keep = (env > 0) & (env < nu.total_mass * (1.0 - 1e-9))
    if keep.sum() < 2:
        raise ValueError("fewer than two radii carry a nonzero, non-saturated mass")
    lr, lm = np.log(-np.log(radii[keep])), np.log(env[keep])
    slope, intercept = np.polyfit(lr, lm, 1)
    resid = float(np.max(np.abs(lm - (slope * lr + intercept))))
    hslope = float(np.polyfit(np.log(radii[keep]), lm, 1)[0])
    worst = float(c[int(np.argmax(table[:, 0]))])
    return LogHolderFit(float(-slope), float(math.exp(intercept)), CirclePoint(worst),
                        (float(radii[0]), float(radii[-1])), resid, hslope,
                        tuple(map(float, radii)), tuple(map(float, env)))


# ---------------------------------------------------------------------------
# variance identity


def variance_identity_check(vectors, weights) -> tuple[float, float]:
    """Both sides of ``E<v - vbar, v - vbar> = E<v, v> - <vbar, vbar>``
    under ``<u, v> = (1/G) sum u_g v_g``."""
    w = np.asarray(weights, dtype=float)
    if len(w) != len(vectors) or abs(math.fsum(w) - 1.0) > 1e-12:
        raise ValueError("weights must be a probability vector matching the vectors")
    G = vectors[0].grid.size
    for v in vectors:
        if v.grid.size != G:
            raise ValueError("all vectors must share one grid")
    V = np.stack([v.values for v in vectors])
    vbar = np.zeros(G)
    for wi, row in zip(w, V):
        vbar += wi * row
    lhs = math.fsum(wi * stable_sum((row - vbar) ** 2) for wi, row in zip(w, V)) / G
    rhs = (math.fsum(wi * stable_sum(row * row) for wi, row in zip(w, V)) - stable_sum(vbar * vbar)) / G
    return lhs, rhs
