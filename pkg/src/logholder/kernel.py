"""Singular potentials with a logarithmic self-convolution.

The potential ``phi`` behaves like ``(-log x)**((alpha-1)/2) / x**(k/2)`` on
``(0, 1/e)`` and vanishes beyond; ``phi_eps`` freezes it at its value at
``eps`` below the cutoff. The pair kernel ``U`` is the R^k self-convolution
of ``phi_eps`` evaluated at separation ``r``, which grows like
``c_const(alpha, k) * (-log r)**alpha`` as ``r -> 0``.

``U`` has no closed form. In one dimension it is integrated directly on
panels split at every kink; for ``k = 2, 3`` a radial-angular product rule
is used on the half-space nearer to the origin (the integrand is symmetric
under reflection through the midpoint of the two centres).
"""
from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import SingularEvaluationError
from .geometry import unit_ball_volume
from .quadrature import (
    DEFAULT_SPEC,
    LEFT_SINGULAR,
    PLAIN,
    RIGHT_SINGULAR,
    QuadratureSpec,
    integrate_panels,
)

INV_E = math.exp(-1.0)
R_MAX = 1e-2

# inner angular rule for k >= 2: composite Gauss-Legendre on each kink-free piece
_INNER_SUB = 4
_INNER_ORDER = 16


@dataclass(frozen=True)
class KernelParams:
    alpha: float
    eps: float = 0.0
    dim: int = 1

    def __post_init__(self):
        if not (0.0 < self.alpha <= 4.0):
            raise ValueError(f"alpha must lie in (0, 4], got {self.alpha}")
        if not (0.0 <= self.eps < INV_E):
            raise ValueError(f"eps must lie in [0, 1/e), got {self.eps}")
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "eps", float(self.eps))

    def with_eps(self, eps):
        return KernelParams(self.alpha, eps, self.dim)

    def as_dict(self):
        return {"alpha": self.alpha, "eps": self.eps, "dim": self.dim}


def _phi_raw(alpha, k, x):
    """phi on an array without the pole check; 0 outside (0, 1/e)."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < INV_E)
    xs = np.where(inside, x, 0.5 * INV_E)
    val = (-np.log(xs)) ** ((alpha - 1.0) / 2.0) / xs ** (k / 2.0)
    return np.where(inside, val, 0.0)


def phi(p: KernelParams, x):
    """Uncut potential. ``x = 0`` is a pole and raises."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("phi is defined for x >= 0")
    if np.any(xa == 0.0):
        raise SingularEvaluationError("phi has a pole at x = 0")
    out = _phi_raw(p.alpha, p.dim, xa)
    return float(out) if out.ndim == 0 else out


def _phi_eps_raw(alpha, k, eps, x):
    x = np.abs(np.asarray(x, dtype=float))
    return _phi_raw(alpha, k, np.maximum(x, eps))


def phi_eps(p: KernelParams, x):
    """Potential with the plateau ``phi(eps)`` on ``[0, eps)``."""
    if p.eps <= 0:
        raise ValueError("phi_eps needs eps > 0; use phi for the uncut potential")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("phi_eps is defined for x >= 0")
    out = _phi_eps_raw(p.alpha, p.dim, p.eps, xa)
    return float(out) if out.ndim == 0 else out


def c_const(alpha: float, k: int) -> float:
    """``k * omega_k / alpha``, the coefficient of the log singularity of U."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return k * unit_ball_volume(k) / alpha


def V(p: KernelParams, r):
    """Comparison profile ``c (-log max(r, eps))**alpha`` for ``0 <= r < 1/e``."""
    if p.eps <= 0:
        raise ValueError("V needs eps > 0")
    r = np.asarray(r, dtype=float)
    if np.any((r < 0) | (r >= INV_E)):
        raise ValueError("V is defined for 0 <= r < 1/e")
    out = c_const(p.alpha, p.dim) * (-np.log(np.maximum(r, p.eps))) ** p.alpha
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# U in one dimension


def _geometric_ladder(start, stop, ratio=2.0):
    if start <= 0 or start >= stop:
        return np.empty(0)
    n = int(math.ceil(math.log(stop / start) / math.log(ratio)))
    return start * ratio ** np.arange(n + 1)


def _u_1d(alpha, eps, r, spec):
    lo, hi = r - INV_E, 0.5 * r
    pts = [lo, hi]
    singular = eps == 0.0
    if singular:
        # grade toward the pole at 0 from both sides
        scale = 0.5 * r
        ladder = scale * 2.0 ** -np.arange(1, 48)
        pts += list(ladder) + list(-ladder) + list(-_geometric_ladder(scale, INV_E))
        pts.append(0.0)
    else:
        ladder = _geometric_ladder(eps, INV_E)
        pts += [0.0, eps, -eps, r - eps] + list(ladder) + list(-ladder)
        if r > 0:
            pts += list(0.5 * r - _geometric_ladder(max(eps, r * 1e-3), 0.5 * r)[:-1])
    edges = np.unique(np.clip(np.array(pts), lo, hi))
    kinds = np.full(len(edges) - 1, PLAIN)
    if singular:
        j = int(np.searchsorted(edges, 0.0))
        if 0 < j < len(edges):
            kinds[j - 1] = RIGHT_SINGULAR
        if j < len(edges) - 1:
            kinds[j] = LEFT_SINGULAR

    def integrand(x):
        return _phi_eps_raw(alpha, 1, eps, x) * _phi_eps_raw(alpha, 1, eps, r - x)

    val, _ = integrate_panels(integrand, edges, spec, kinds)
    return 2.0 * val


# ---------------------------------------------------------------------------
# U in two and three dimensions


def _inner_angular(alpha, k, eps, r, rho):
    """Angular integral of phi_eps(|r e1 - x|) over the part of the sphere of
    radius ``rho`` with ``x_1 < r/2``. Vectorised over ``rho``."""
    rho = np.asarray(rho, dtype=float)
    shape = rho.shape
    rho = rho.ravel()
    # angular variable: theta in [tmin, pi] for k=2, u=cos(theta) in [-1, umax] for k=3
    cmax = np.minimum(1.0, r / (2.0 * np.maximum(rho, 1e-300)))

    def cos_at(s):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (rho**2 + r**2 - s**2) / (2.0 * rho * r)

    if k == 2:
        t_lo = np.arccos(cmax)
        t_hi = np.full_like(rho, math.pi)
        brk = []
        for s in (eps, INV_E):
            if s > 0 and r > 0:
                c = cos_at(s)
                brk.append(np.arccos(np.clip(c, -1.0, 1.0)))
        lo, hi = t_lo, t_hi
    else:
        lo = np.full_like(rho, -1.0)
        hi = cmax
        brk = []
        for s in (eps, INV_E):
            if s > 0 and r > 0:
                brk.append(np.clip(cos_at(s), -1.0, 1.0))
    cuts = [lo] + [np.clip(b, lo, hi) for b in brk] + [hi]
    cuts = np.sort(np.stack(cuts, axis=1), axis=1)
    # composite rule on each piece
    v, w = np.polynomial.legendre.leggauss(_INNER_ORDER)
    v = (v + 1.0) / 2.0
    w = w / 2.0
    sub = (np.arange(_INNER_SUB)[:, None] + v[None, :]).ravel() / _INNER_SUB
    ws = np.tile(w, _INNER_SUB) / _INNER_SUB
    total = np.zeros_like(rho)
    for j in range(cuts.shape[1] - 1):
        a = cuts[:, j][:, None]
        b = cuts[:, j + 1][:, None]
        t = a + (b - a) * sub[None, :]
        if k == 2:
            s2 = rho[:, None] ** 2 + r**2 - 2.0 * rho[:, None] * r * np.cos(t)
        else:
            s2 = rho[:, None] ** 2 + r**2 - 2.0 * rho[:, None] * r * t
        s = np.sqrt(np.maximum(s2, 0.0))
        f = _phi_eps_raw(alpha, k, eps, s)
        total += np.sum(f * ws[None, :], axis=1) * (b - a)[:, 0]
    # k=2: theta over [0, pi] counted twice; k=3: azimuth contributes 2 pi
    factor = 2.0 if k == 2 else 2.0 * math.pi
    return (factor * total).reshape(shape)


def _u_kd(alpha, k, eps, r, spec):
    singular = eps == 0.0
    pts = {0.0, INV_E}
    for b in (eps, 0.5 * r, r - eps, r + eps, eps - r, INV_E - r, r - INV_E):
        if 0.0 < b < INV_E:
            pts.add(b)
    base = eps if eps > 0 else 0.5 * r
    pts.update(_geometric_ladder(base, INV_E)[:-1].tolist())
    if r > 0:
        pts.update((0.5 * r * 2.0 ** -np.arange(1, 30)).tolist())
        pts.update((r - _geometric_ladder(max(r * 1e-3, eps), 0.5 * r)[:-1]).tolist())
    edges = np.array(sorted(p for p in pts if 0.0 <= p <= INV_E))
    kinds = np.full(len(edges) - 1, PLAIN)
    if singular:
        kinds[0] = LEFT_SINGULAR

    def integrand(rho):
        radial = _phi_eps_raw(alpha, k, eps, rho) * rho ** (k - 1)
        return radial * _inner_angular(alpha, k, eps, r, rho)

    val, _ = integrate_panels(integrand, edges, spec, kinds)
    return 2.0 * val


def _check_u_args(p, r):
    if r < 0:
        raise ValueError("U is defined for r >= 0")
    if p.eps == 0.0 and r == 0.0:
        raise SingularEvaluationError("U with eps = 0 diverges at r = 0")


def U(p: KernelParams, r: float, q: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Self-convolution of ``phi_eps`` in R^dim at separation ``r``."""
    r = float(r)
    _check_u_args(p, r)
    if r >= 2.0 * INV_E:
        return 0.0
    return _u_cached(p, _round_sig(r), q)


def _round_sig(r, digits=12):
    if r == 0.0:
        return 0.0
    return float(f"{r:.{digits - 1}e}")


_memo_lock = threading.Lock()


@lru_cache(maxsize=200_000)
def _u_cached_inner(p, r, q):
    if p.dim == 1:
        return _u_1d(p.alpha, p.eps, r, q)
    return _u_kd(p.alpha, p.dim, p.eps, r, q)


def _u_cached(p, r, q):
    # lru_cache is internally locked in CPython; the lock keeps the
    # compute-then-insert step from duplicating work across threads
    with _memo_lock:
        return _u_cached_inner(p, r, q)


def U_batch(p: KernelParams, r, q: QuadratureSpec = DEFAULT_SPEC) -> np.ndarray:
    """Evaluate U on an array of separations, once per distinct value."""
    r = np.asarray(r, dtype=float)
    flat = r.ravel()
    uniq, inv = np.unique(flat, return_inverse=True)
    vals = np.array([U(p, x, q) for x in uniq])
    return vals[inv].reshape(r.shape)


# ---------------------------------------------------------------------------
# verification quantities


def annulus_integral(p: KernelParams, r: float, q: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Integral of ``phi**2`` over the shell ``r < |x| < 1/e`` in R^dim.

    Computed as a radial integral against the sphere area ``k * omega_k``.
    """
    if not (0.0 < r < INV_E):
        raise ValueError("annulus_integral needs 0 < r < 1/e")
    k = p.dim
    edges = np.unique(np.concatenate([_geometric_ladder(r, INV_E, 1.5), [INV_E]]))
    edges = edges[(edges >= r) & (edges <= INV_E)]

    def f(t):
        return _phi_raw(p.alpha, k, t) ** 2 * t ** (k - 1)

    val, _ = integrate_panels(f, edges, q)
    return k * unit_ball_volume(k) * val


def annulus_closed_form(p: KernelParams, r: float) -> float:
    return c_const(p.alpha, p.dim) * ((-math.log(r)) ** p.alpha - 1.0)


def u_zero_closed_form(p: KernelParams) -> float:
    """``U(0) = int phi_eps**2``: the plateau ball plus the shell outside eps."""
    if p.eps <= 0:
        raise ValueError("U(0) is finite only for eps > 0")
    plateau = unit_ball_volume(p.dim) * p.eps ** p.dim * float(_phi_raw(p.alpha, p.dim, p.eps)) ** 2
    return plateau + annulus_closed_form(p, p.eps)


def _half_space_phi2(alpha, k, r, q):
    """``int_{x_1 > 2r} phi(|x|)**2 dx`` in R^k."""
    a = 2.0 * r
    if k == 1:
        edges = np.concatenate([_geometric_ladder(a, INV_E, 1.5), [INV_E]])
        edges = np.unique(edges[(edges >= a) & (edges <= INV_E)])
        val, _ = integrate_panels(lambda t: _phi_raw(alpha, 1, t) ** 2, edges, q)
        return val
    # radial shells t > a, with the cap {x_1 > a} of relative measure
    # depending on a / t
    edges = np.concatenate([_geometric_ladder(a, INV_E, 1.25), [INV_E]])
    edges = np.unique(edges[(edges >= a) & (edges <= INV_E)])

    def cap_fraction(t):
        c = np.clip(a / t, -1.0, 1.0)
        if k == 2:
            # arc |theta| < arccos(c) out of 2 pi
            return np.arccos(c) / math.pi
        return (1.0 - c) / 2.0

    area = k * unit_ball_volume(k)

    def f(t):
        return _phi_raw(alpha, k, t) ** 2 * t ** (k - 1) * area * cap_fraction(t)

    val, _ = integrate_panels(f, edges, q, kinds=[LEFT_SINGULAR] + [PLAIN] * (len(edges) - 2))
    return val


def half_space_tail(p: KernelParams, r: float, q: QuadratureSpec = DEFAULT_SPEC,
                    r_max: float = R_MAX) -> float:
    """Ratio ``2 * int_{x_1 > 2r} phi**2 / (c (-log r)**alpha)``; tends to 1 as r -> 0."""
    if not (0.0 < r <= r_max):
        raise ValueError(f"half_space_tail needs 0 < r <= {r_max}")
    num = 2.0 * _half_space_phi2(p.alpha, p.dim, r, q)
    return num / (c_const(p.alpha, p.dim) * (-math.log(r)) ** p.alpha)


def half_space_tail_closed_form_1d(alpha: float, r: float) -> float:
    """One-dimensional tail ratio from the shell identity."""
    return ((-math.log(2 * r)) ** alpha - 1.0) / (-math.log(r)) ** alpha


def middle_strip(p: KernelParams, r: float, q: QuadratureSpec = DEFAULT_SPEC,
                 r_max: float = R_MAX) -> float:
    """Ratio ``int_{|x_1| <= 2r} phi(|x|) phi(|r e1 - x|) dx / (-log r)**alpha``."""
    if not (0.0 < r <= r_max):
        raise ValueError(f"middle_strip needs 0 < r <= {r_max}")
    alpha, k = p.alpha, p.dim
    if k != 1:
        raise NotImplementedError("middle_strip is implemented for dim = 1")

    def f(x):
        return _phi_raw(alpha, 1, np.abs(x)) * _phi_raw(alpha, 1, np.abs(r - x))

    # the piece x > r/2 is reflected through r/2 so that both pieces have
    # their pole at 0, where |x| is exact; r - x loses digits next to x = r
    left = np.array([-2 * r, -r, 0.0, 0.5 * r])
    right = np.array([-r, -0.5 * r, 0.0, 0.5 * r])
    kinds = [PLAIN, RIGHT_SINGULAR, LEFT_SINGULAR]
    val = integrate_panels(f, left, q, kinds)[0] + integrate_panels(f, right, q, kinds)[0]
    return val / (-math.log(r)) ** alpha


def sing_ratio(p: KernelParams, r: float, q: QuadratureSpec = DEFAULT_SPEC,
               r_max: float = R_MAX) -> float:
    """``U(r) / V(r)``; close to 1 for small r and eps."""
    if p.eps <= 0:
        raise ValueError("sing_ratio needs eps > 0")
    if not (0.0 <= r <= r_max):
        raise ValueError(f"sing_ratio needs 0 <= r <= {r_max}")
    return U(p, r, q) / V(p, r)


# ---------------------------------------------------------------------------
# tabulated U for large pair sums


class UTable:
    """Fast monotone interpolant of the one-dimensional U on ``[0, r_top]``.

    Exact quadrature values on a node set that is geometric from ``eps/64``
    and graded geometrically toward ``1/e`` from both sides (U has a
    square-root cusp there, inherited from the jump of phi at its support
    edge) are resampled by linear interpolation onto a dense table uniform
    in ``t = log(r + eps/8)``; lookups are then an index computation and one
    linear blend. Node values are made non-increasing, so no interpolated
    value exceeds ``U(0)``.
    """

    def __init__(self, p: KernelParams, q: QuadratureSpec = DEFAULT_SPEC,
                 n_exact: int = 3000, n_dense: int = 1 << 20, r_top: float = 0.5):
        if p.dim != 1:
            raise ValueError("UTable is for the circle (dim = 1)")
        if p.eps <= 0:
            raise ValueError("UTable needs eps > 0")
        self.params = p
        eps = p.eps
        self.r_top = r_top
        cusp = np.geomspace(eps / 4.0, 0.1, 160)
        nodes = np.concatenate([[0.0, r_top, INV_E], np.geomspace(eps / 64.0, r_top, n_exact),
                                INV_E - cusp, INV_E + cusp, eps * np.linspace(0.5, 2.5, 41)])
        nodes = np.unique(nodes[(nodes >= 0) & (nodes <= r_top)])
        exact = np.array([_u_1d(p.alpha, eps, float(x), q) if x < 2 * INV_E else 0.0
                          for x in nodes])
        self.nodes = nodes
        self.values = np.minimum.accumulate(exact)
        self.u0 = float(self.values[0])
        self.shift = eps / 8.0
        self.t0 = math.log(self.shift)
        self.t1 = math.log(r_top + self.shift)
        t = np.linspace(self.t0, self.t1, n_dense)
        rr = np.clip(np.exp(t) - self.shift, 0.0, r_top)
        rr[0], rr[-1] = 0.0, r_top
        self.dense = np.interp(rr, nodes, self.values)
        self._inv_dt = (n_dense - 1) / (self.t1 - self.t0)

    def __call__(self, r):
        x = (np.log(np.asarray(r, dtype=float) + self.shift) - self.t0) * self._inv_dt
        n = len(self.dense)
        np.clip(x, 0.0, n - 1.0, out=x)
        i = np.minimum(x.astype(np.int64), n - 2)
        x -= i
        lo = self.dense[i]
        return lo + (self.dense[i + 1] - lo) * x


_table_lock = threading.Lock()
_tables: "OrderedDict" = OrderedDict()
TABLE_CACHE_SIZE = 8


def u_table(p: KernelParams, q: QuadratureSpec = DEFAULT_SPEC) -> UTable:
    """Shared, lazily built :class:`UTable` per parameter triple (small LRU)."""
    key = (p, q)
    with _table_lock:
        tab = _tables.get(key)
        if tab is None:
            tab = UTable(p, q)
            _tables[key] = tab
            while len(_tables) > TABLE_CACHE_SIZE:
                _tables.popitem(last=False)
        else:
            _tables.move_to_end(key)
        return tab


def pair_integral_2d(p: KernelParams, x, z, q: QuadratureSpec = DEFAULT_SPEC) -> float:
    """``int_{R^2} phi_eps(|y - x|) phi_eps(|y - z|) dy`` for arbitrary centres.

    Uses polar coordinates about ``x`` over the full plane, a different route
    from :func:`U`, so agreement checks that the integral depends only on
    ``|x - z|``.
    """
    if p.dim != 2 or p.eps <= 0:
        raise ValueError("pair_integral_2d needs dim = 2 and eps > 0")
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    dvec = z - x
    r = float(np.hypot(*dvec))
    psi = math.atan2(dvec[1], dvec[0])
    alpha, eps = p.alpha, p.eps
    v, w = np.polynomial.legendre.leggauss(_INNER_ORDER)
    v = (v + 1.0) / 2.0
    w = w / 2.0
    sub = (np.arange(8)[:, None] + v[None, :]).ravel() / 8
    ws = np.tile(w, 8) / 8
    ladder = np.unique(np.concatenate([[eps, INV_E], _geometric_ladder(eps, INV_E)]))

    def angular(rho):
        rho = np.asarray(rho, dtype=float)
        shape = rho.shape
        rho = rho.ravel()
        # angles measured from psi; integrand even in (theta - psi)
        cuts = [np.zeros_like(rho), np.full_like(rho, math.pi)]
        # cuts where |y - z| crosses eps, 1/e and a geometric ladder between,
        # so the peak of phi_eps(|y - z|) near theta = psi is resolved
        for s in ladder:
            with np.errstate(divide="ignore", invalid="ignore"):
                c = (rho**2 + r**2 - s**2) / (2.0 * rho * r)
            cuts.append(np.arccos(np.clip(c, -1.0, 1.0)))
        cuts = np.sort(np.stack(cuts, axis=1), axis=1)
        total = np.zeros_like(rho)
        for j in range(cuts.shape[1] - 1):
            a = cuts[:, j][:, None]
            b = cuts[:, j + 1][:, None]
            for sign in (1.0, -1.0):
                theta = psi + sign * (a + (b - a) * sub[None, :])
                y0 = x[0] + rho[:, None] * np.cos(theta)
                y1 = x[1] + rho[:, None] * np.sin(theta)
                s = np.hypot(y0 - z[0], y1 - z[1])
                total += np.sum(_phi_eps_raw(alpha, 2, eps, s) * ws[None, :], axis=1) * (b - a)[:, 0]
        return total.reshape(shape)

    pts = {0.0, INV_E}
    for b in (eps, r - eps, r + eps, eps - r, INV_E - r, r - INV_E, r):
        if 0.0 < b < INV_E:
            pts.add(b)
    pts.update(_geometric_ladder(eps, INV_E)[:-1].tolist())
    edges = np.array(sorted(pts))

    def integrand(rho):
        return _phi_eps_raw(alpha, 2, eps, rho) * rho * angular(rho)

    val, _ = integrate_panels(integrand, edges, q)
    return val
