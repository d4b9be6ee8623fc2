"""Circle homeomorphisms, random map families and their regularity constants.

Maps act on the circle coordinate ``x in [0, 1)``. Four kinds are provided:

``rotation``
    ``x + a``.
``sine_perturbed_rotation``
    ``x + b sin(2 pi x) / (2 pi) + a`` with ``|b| < 1``.
``projective_sl2``
    the action of ``A in SL(2, R)`` on lines, with ``x`` the line angle
    divided by ``pi``.
``power_kink``
    ``h(x) = (2x)**g / 2`` on ``[0, 1/2]``, mirrored as ``1 - h(1 - x)`` on
    ``[1/2, 1]``, followed by a rotation by ``a``. Only ``g``-Hölder at 0.

Families (``RandomMapFamily``) draw maps in batches from labeled streams, one
map per atom, so a step of the Markov chain is a single vectorised call.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import rng
from .geometry import circle_distance, wrap

MAP_KINDS = ("rotation", "sine_perturbed_rotation", "projective_sl2", "power_kink")
FAMILY_KINDS = ("finite_support", "rotation_uniform", "sl2_heavy_tail", "kink_heavy_tail")
DEFAULT_TRUNCATION = 1e12


# ---------------------------------------------------------------------------
# elementwise map actions; every parameter may be an array broadcasting with x


def _rotation(x, a):
    return x + a


def _sine(x, a, b):
    return x + b * np.sin(2.0 * np.pi * x) / (2.0 * np.pi) + a


def _sine_inverse(y, a, b):
    # g(x) = x + b sin(2 pi x)/(2 pi) is increasing with |g(x) - x| <= |b|/(2 pi)
    t = np.asarray(y - a, dtype=float)
    half = np.abs(b) / (2.0 * np.pi) + 1e-15
    lo, hi = t - half, t + half
    lo, hi = np.broadcast_arrays(lo, hi)
    lo, hi = lo.copy(), hi.copy()
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        above = mid + b * np.sin(2.0 * np.pi * mid) / (2.0 * np.pi) > t
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


def _projective(x, m00, m01, m10, m11):
    ang = np.pi * x
    c, s = np.cos(ang), np.sin(ang)
    u = m00 * c + m01 * s
    v = m10 * c + m11 * s
    return np.arctan2(v, u) / np.pi


def _kink_profile(x, g):
    x = np.asarray(x, dtype=float)
    xm = x - np.floor(x)
    low = 0.5 * (2.0 * np.minimum(xm, 0.5)) ** g
    high = 1.0 - 0.5 * (2.0 * np.minimum(1.0 - xm, 0.5)) ** g
    return np.floor(x) + np.where(xm <= 0.5, low, high)


def _kink(x, g, a):
    return _kink_profile(x, g) + a


def _kink_inverse(y, g, a):
    return _kink_profile(np.asarray(y, dtype=float) - a, 1.0 / g)


@dataclass(frozen=True)
class CircleMap:
    """Orientation-preserving circle homeomorphism of one of ``MAP_KINDS``.

    ``params`` holds floats keyed by name: ``a`` (rotation offset), ``b``
    (sine amplitude), ``matrix`` (2x2 nested tuple), ``gamma`` (kink exponent).
    """

    kind: str
    params: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in MAP_KINDS:
            raise ValueError(f"unknown map kind {self.kind!r}")
        d = dict(self.params)
        if self.kind == "sine_perturbed_rotation" and not abs(d.get("b", 0.0)) < 1.0:
            raise ValueError("sine_perturbed_rotation needs |b| < 1")
        if self.kind == "projective_sl2":
            m = np.asarray(d["matrix"], dtype=float)
            if m.shape != (2, 2):
                raise ValueError("matrix must be 2x2")
            if abs(np.linalg.det(m) - 1.0) > 1e-12:
                raise ValueError(f"matrix must have determinant 1, got {np.linalg.det(m)!r}")
        if self.kind == "power_kink" and not (0.0 < d.get("gamma", 0.0) <= 1.0):
            raise ValueError("power_kink needs 0 < gamma <= 1")

    # constructors -----------------------------------------------------------
    @classmethod
    def rotation(cls, a: float) -> "CircleMap":
        return cls("rotation", (("a", float(a)),))

    @classmethod
    def sine_perturbed(cls, b: float, a: float = 0.0) -> "CircleMap":
        return cls("sine_perturbed_rotation", (("a", float(a)), ("b", float(b))))

    @classmethod
    def projective(cls, matrix) -> "CircleMap":
        m = tuple(tuple(float(v) for v in row) for row in np.asarray(matrix, dtype=float))
        return cls("projective_sl2", (("matrix", m),))

    @classmethod
    def power_kink(cls, gamma: float, a: float = 0.0) -> "CircleMap":
        return cls("power_kink", (("a", float(a)), ("gamma", float(gamma))))

    @classmethod
    def identity(cls) -> "CircleMap":
        return cls.rotation(0.0)

    @property
    def p(self) -> dict:
        return dict(self.params)

    # action -----------------------------------------------------------------
    def lift_sorted(self, x):
        """Increasing lift evaluated on an increasing sample ``x`` spanning
        less than one turn: successive image gaps are taken mod 1."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(self.apply(x), dtype=float)
        gaps = np.mod(np.diff(y), 1.0)
        return np.concatenate([[y[0]], y[0] + np.cumsum(gaps)])

    def __call__(self, x):
        return self.apply(x)

    def apply(self, x):
        """Image of ``x`` (float, array or ``CirclePoint``) reduced to ``[0, 1)``."""
        x = getattr(x, "position", x)
        d = self.p
        xa = np.asarray(x, dtype=float)
        if self.kind == "rotation":
            y = _rotation(xa, d["a"])
        elif self.kind == "sine_perturbed_rotation":
            y = _sine(xa, d["a"], d["b"])
        elif self.kind == "power_kink":
            y = _kink(xa, d["gamma"], d["a"])
        else:
            (m00, m01), (m10, m11) = d["matrix"]
            y = _projective(xa, m00, m01, m10, m11)
        out = wrap(y)
        return float(out) if np.ndim(out) == 0 else out

    def inverse(self) -> "CircleMap | _InverseMap":
        d = self.p
        if self.kind == "rotation":
            return CircleMap.rotation(-d["a"])
        if self.kind == "projective_sl2":
            m = np.asarray(d["matrix"])
            return CircleMap.projective(np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]))
        return _InverseMap(self)

    # analytic constants -----------------------------------------------------
    def lipschitz_constant(self) -> float:
        return lipschitz_constant(self)

    def to_dict(self) -> dict:
        d = self.p
        if "matrix" in d:
            d["matrix"] = [list(r) for r in d["matrix"]]
        return {"kind": self.kind, "params": d}

    @classmethod
    def from_dict(cls, d: dict) -> "CircleMap":
        kind = d["kind"]
        p = dict(d.get("params", {}))
        unknown = set(p) - {"rotation": {"a"}, "sine_perturbed_rotation": {"a", "b"},
                            "projective_sl2": {"matrix"}, "power_kink": {"a", "gamma"}}[kind]
        if unknown:
            raise ValueError(f"unknown parameters for {kind}: {sorted(unknown)}")
        if kind == "rotation":
            return cls.rotation(p.get("a", 0.0))
        if kind == "sine_perturbed_rotation":
            return cls.sine_perturbed(p["b"], p.get("a", 0.0))
        if kind == "projective_sl2":
            return cls.projective(p["matrix"])
        return cls.power_kink(p["gamma"], p.get("a", 0.0))


class _InverseMap:
    """Inverse of a sine-perturbed rotation or power kink."""

    def __init__(self, f: CircleMap):
        self.forward = f
        self.kind = f.kind + "_inverse"

    def apply(self, x):
        x = getattr(x, "position", x)
        d = self.forward.p
        xa = np.asarray(x, dtype=float)
        if self.forward.kind == "sine_perturbed_rotation":
            y = _sine_inverse(xa, d["a"], d["b"])
        else:
            y = _kink_inverse(xa, d["gamma"], d["a"])
        out = wrap(y)
        return float(out) if np.ndim(out) == 0 else out

    __call__ = apply

    def inverse(self):
        return self.forward


# ---------------------------------------------------------------------------
# regularity constants


def lipschitz_constant(f: CircleMap) -> float:
    """Analytic bi-Lipschitz constant: the larger of the sup expansion and
    sup contraction ratios."""
    d = f.p
    if f.kind == "rotation":
        return 1.0
    if f.kind == "sine_perturbed_rotation":
        b = abs(d["b"])
        return max(1.0 + b, 1.0 / (1.0 - b))
    if f.kind == "projective_sl2":
        # derivative of the projective action at unit v is |Av|^-2
        return float(np.linalg.norm(np.asarray(d["matrix"]), 2) ** 2)
    raise ValueError("power_kink is not bi-Lipschitz")


def _pair_ratio(g, x, delta, expo):
    return circle_distance(g(x), g(x + delta)) / delta**expo


def sup_ratio(g, expo: float, n_x: int = 2048, n_delta: int = 72,
              delta_min: float = 1e-12, rounds: int = 6, n_starts: int = 8) -> float:
    """``sup d(g(x), g(y)) / d(x, y)**expo`` by a dense pair search with zoom.

    Pairs ``(x, x + delta)`` are taken on a uniform grid in ``x`` and a
    grid in ``delta`` (geometric, plus linear near 1/2); the search then
    zooms into each of the ``n_starts`` best cells.
    """
    xs = np.arange(n_x) / n_x
    # geometric spacing for small separations, linear near the antipode
    ds = np.unique(np.concatenate([np.geomspace(delta_min, 0.5, n_delta), np.linspace(0.02, 0.5, 97)]))
    vals = _pair_ratio(g, xs[:, None], ds[None, :], expo)
    best = float(np.max(vals))
    for flat in np.argsort(vals, axis=None)[-n_starts:]:
        i, j = np.unravel_index(flat, vals.shape)
        x0, d0 = xs[i], ds[j]
        hx = 1.0 / n_x
        fd = ds[min(j + 1, len(ds) - 1)] / ds[max(j - 1, 0)]
        for _ in range(rounds):
            xl = x0 + np.linspace(-hx, hx, 33)
            dl = np.clip(d0 * np.geomspace(1.0 / fd, fd, 33), delta_min, 0.5)
            v = _pair_ratio(g, xl[:, None], dl[None, :], expo)
            i, j = np.unravel_index(np.argmax(v), v.shape)
            if v[i, j] >= best:
                best = float(v[i, j])
            x0, d0 = xl[i], dl[j]
            hx /= 8.0
            fd = fd ** 0.25
    return best


def holder_constants(f: CircleMap) -> tuple[float, float]:
    """``(gamma, L)``: Hölder exponent of ``f`` and its inverse, and the
    two-sided sup-ratio at the halved exponent ``gamma / 2``."""
    if f.kind == "power_kink":
        gamma = f.p["gamma"]
        return gamma, _kink_L(round(gamma, 12))
    gamma = 1.0
    inv = f.inverse()
    L = max(sup_ratio(f.apply, gamma / 2.0), sup_ratio(inv.apply, gamma / 2.0))
    return gamma, L


@lru_cache(maxsize=4096)
def _kink_L(gamma: float) -> float:
    # rotation offset does not change distances, so L depends on gamma only
    f = CircleMap.power_kink(gamma)
    inv = f.inverse()
    return max(sup_ratio(f.apply, gamma / 2.0), sup_ratio(inv.apply, gamma / 2.0))


@dataclass(frozen=True)
class RegularityEstimate:
    lip_hat: float
    gamma_hat: float
    scale_range: tuple
    n_pairs: int


def _envelope(g, xs, scales, refine_rng, n_refine):
    """Max image distance over pairs ``(x, x + s)`` for each scale ``s``
    (coarse to fine), with extra pairs around the worst pair found so far."""
    env = np.empty(len(scales))
    center = None
    for j, s in enumerate(scales):
        starts = np.concatenate([xs, xs - 0.5 * s])
        if center is not None:
            local = center - 0.5 * s + s * np.concatenate(
                [refine_rng.uniform(-2.0, 2.0, n_refine), np.linspace(-2.0, 2.0, 65)])
            starts = np.concatenate([starts, local])
        d = circle_distance(g(starts), g(starts + s))
        k = int(np.argmax(d))
        env[j] = float(d[k])
        center = starts[k] + 0.5 * s
    return env


def estimate_regularity(f, n_pairs: int = 4096, seed: int = 0,
                        lip_scales=(2.0**-1, 2.0**-10),
                        holder_scales=(2.0**-6, 2.0**-24)) -> RegularityEstimate:
    """Empirical ``(lip_hat, gamma_hat)`` from sampled pairs.

    ``lip_hat`` is the largest of the forward and backward distance ratios
    over pairs at dyadic separations in ``lip_scales`` (kept above 2**-10 so
    that roundoff in the distances stays below 1e-12 relative).
    ``gamma_hat`` is the smaller of the two branches' log-log slopes of the
    worst-pair envelope across ``holder_scales``.
    """
    if n_pairs < 1000:
        raise ValueError("n_pairs must be at least 1000")
    gen = rng.stream(seed, "regularity")
    inv = f.inverse()
    lip_s = 2.0 ** -np.arange(round(-math.log2(lip_scales[0])), round(-math.log2(lip_scales[1])) + 1)
    hol_s = 2.0 ** -np.arange(round(-math.log2(holder_scales[0])), round(-math.log2(holder_scales[1])) + 1)
    per_scale = max(16, n_pairs // (len(lip_s) + len(hol_s)))
    xs = gen.uniform(0.0, 1.0, per_scale)
    n_refine = per_scale

    lip_hat = 0.0
    for g in (f.apply, inv.apply):
        env = _envelope(g, xs, lip_s, gen, n_refine)
        lip_hat = max(lip_hat, float(np.max(env / lip_s)))
    gamma_hat = math.inf
    for g in (f.apply, inv.apply):
        env = _envelope(g, xs, hol_s, gen, n_refine)
        slope = np.polyfit(np.log(hol_s), np.log(env), 1)[0]
        gamma_hat = min(gamma_hat, float(slope))
    return RegularityEstimate(lip_hat, gamma_hat, (float(hol_s[-1]), float(lip_s[0])), n_pairs)


# ---------------------------------------------------------------------------
# batches of maps and random families


@dataclass(frozen=True)
class MapBatch:
    """``n`` maps of one family, stored as parameter arrays; map ``i`` acts on
    atom ``i``."""

    kind: str
    arrays: dict
    maps: tuple = ()

    def __len__(self):
        return len(next(iter(self.arrays.values())))

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        A = self.arrays
        if self.kind == "finite_support":
            out = np.empty_like(x)
            idx = A["index"]
            for j, m in enumerate(self.maps):
                sel = idx == j
                if np.any(sel):
                    out[sel] = m.apply(x[sel])
            return out
        if self.kind == "rotation_uniform":
            y = x + A["a"]
        elif self.kind == "sl2_heavy_tail":
            y = _projective(x, A["m00"], A["m01"], A["m10"], A["m11"])
        else:
            y = _kink(x, A["gamma"], A["a"])
        return wrap(y)

    def item(self, i: int) -> CircleMap:
        A = self.arrays
        if self.kind == "finite_support":
            return self.maps[int(A["index"][i])]
        if self.kind == "rotation_uniform":
            return CircleMap.rotation(float(A["a"][i]))
        if self.kind == "sl2_heavy_tail":
            return CircleMap.projective([[A["m00"][i], A["m01"][i]], [A["m10"][i], A["m11"][i]]])
        return CircleMap.power_kink(float(A["gamma"][i]), float(A["a"][i]))


def _sl2_from(theta, s):
    # A = R_theta diag(e^s, e^-s)
    c, sn = np.cos(theta), np.sin(theta)
    es, ems = np.exp(s), np.exp(-s)
    return c * es, -sn * ems, sn * es, c * ems


_FAMILY_PARAMS = {
    "finite_support": {"maps", "weights"},
    "rotation_uniform": {"spread"},
    "sl2_heavy_tail": {"tail_index", "scale", "angle_spread"},
    "kink_heavy_tail": {"tail_index", "scale", "angle_spread"},
}


@dataclass(frozen=True)
class RandomMapFamily:
    """A sampleable law on circle maps.

    Parameters by kind
    ------------------
    finite_support
        ``maps`` (tuple of ``CircleMap``), ``weights`` (sum to 1).
    rotation_uniform
        ``spread``: offsets uniform on ``[0, spread)`` (default 1).
    sl2_heavy_tail
        ``A = R_theta diag(e^s, e^-s)``, ``theta`` uniform on
        ``[0, pi * angle_spread)``, ``s = scale * U**(-1/tail_index)``
        (Pareto). ``log Lip = 2 s`` has finite ``alpha``-moment iff
        ``alpha < tail_index``.
    kink_heavy_tail
        power kink with ``1/gamma = 1 + s``, ``s`` Pareto as above, and a
        uniform rotation offset on ``[0, angle_spread)``.

    Heavy tails are clipped at ``Lip <= truncation`` (and ``1/gamma`` at
    ``log(truncation)``) for floating-point safety.
    """

    kind: str
    params: dict
    moment_profile: str = "exponential"
    truncation: float = DEFAULT_TRUNCATION
    name: str = "family"

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        unknown = set(self.params) - _FAMILY_PARAMS[self.kind]
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        if self.kind == "finite_support":
            w = np.asarray(self.params["weights"], dtype=float)
            if len(w) != len(self.params["maps"]) or len(w) == 0:
                raise ValueError("weights and maps must have the same positive length")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("finite_support weights must be nonnegative and sum to 1")
        if self.kind in ("sl2_heavy_tail", "kink_heavy_tail"):
            if self.params.get("tail_index", 0) <= 0 or self.params.get("scale", 0) <= 0:
                raise ValueError("tail_index and scale must be positive")
        _parse_profile(self.moment_profile)
        if not self.truncation > 1.0:
            raise ValueError("truncation must exceed 1")

    # constructors -----------------------------------------------------------
    @classmethod
    def finite(cls, maps, weights=None, **kw) -> "RandomMapFamily":
        maps = tuple(maps)
        if weights is None:
            weights = [1.0 / len(maps)] * len(maps)
        return cls("finite_support", {"maps": maps, "weights": tuple(float(w) for w in weights)}, **kw)

    @classmethod
    def degenerate(cls, f: CircleMap | None = None) -> "RandomMapFamily":
        return cls.finite([f or CircleMap.identity()], [1.0], name="degenerate")

    @classmethod
    def sl2_heavy_tail(cls, tail_index, scale=1.0, angle_spread=1.0, **kw):
        kw.setdefault("moment_profile", f"logarithmic-{tail_index:g}")
        return cls("sl2_heavy_tail", {"tail_index": float(tail_index), "scale": float(scale),
                                      "angle_spread": float(angle_spread)}, **kw)

    @property
    def s_max(self) -> float:
        return 0.5 * math.log(self.truncation)

    # sampling ---------------------------------------------------------------
    def sample_batch(self, gen: np.random.Generator, n: int) -> MapBatch:
        k, P = self.kind, self.params
        if k == "finite_support":
            w = np.asarray(P["weights"], dtype=float)
            idx = np.searchsorted(np.cumsum(w), gen.uniform(0.0, 1.0, n), side="right")
            idx = np.minimum(idx, len(w) - 1)
            return MapBatch(k, {"index": idx}, tuple(P["maps"]))
        if k == "rotation_uniform":
            return MapBatch(k, {"a": gen.uniform(0.0, P.get("spread", 1.0), n)})
        u_ang = gen.uniform(0.0, 1.0, n)
        u_tail = 1.0 - gen.uniform(0.0, 1.0, n)  # in (0, 1]
        s = P["scale"] * u_tail ** (-1.0 / P["tail_index"])
        spread = P.get("angle_spread", 1.0)
        if k == "sl2_heavy_tail":
            s = np.minimum(s, self.s_max)
            m00, m01, m10, m11 = _sl2_from(np.pi * spread * u_ang, s)
            return MapBatch(k, {"m00": m00, "m01": m01, "m10": m10, "m11": m11, "s": s})
        s = np.minimum(s, math.log(self.truncation))
        return MapBatch(k, {"gamma": 1.0 / (1.0 + s), "a": spread * u_ang})

    def sample_maps(self, seed: int, step: int, n: int, chunk: int = 4096) -> MapBatch:
        """Maps for atoms ``0..n-1`` at a given step; independent of chunk
        scheduling because each chunk has its own stream."""
        parts = [self.sample_batch(g, b - a) for a, b, g in rng.chunk_streams(seed, "maps", n, chunk, step)]
        if not parts:
            raise ValueError("n must be positive")
        arrays = {key: np.concatenate([p.arrays[key] for p in parts]) for key in parts[0].arrays}
        return MapBatch(self.kind, arrays, parts[0].maps)

    def sample_map(self, seed: int, *counters: int) -> CircleMap:
        return self.sample_batch(rng.stream(seed, "map", *counters), 1).item(0)

    # moments ----------------------------------------------------------------
    def log_lip(self, batch: MapBatch) -> np.ndarray:
        if self.kind == "finite_support":
            vals = np.array([math.log(lipschitz_constant(m)) if m.kind != "power_kink" else math.inf
                             for m in batch.maps])
            return vals[batch.arrays["index"]]
        if self.kind == "rotation_uniform":
            return np.zeros(len(batch))
        if self.kind == "sl2_heavy_tail":
            return 2.0 * batch.arrays["s"]
        return np.full(len(batch), math.inf)

    def holder_moment_terms(self, batch: MapBatch) -> np.ndarray:
        """``(1 + log L(f)) / gamma(f)`` per map."""
        if self.kind == "kink_heavy_tail":
            g = batch.arrays["gamma"]
            table_g, table_L = _kink_L_table()
            L = np.exp(np.interp(np.log(g), np.log(table_g), np.log(table_L)))
            return (1.0 + np.log(np.maximum(L, 1e-300))) / g
        out = np.empty(len(batch))
        for i in range(len(batch)):
            gamma, L = holder_constants(batch.item(i))
            out[i] = (1.0 + math.log(L)) / gamma
        return out

    @property
    def is_lipschitz(self) -> bool:
        if self.kind == "finite_support":
            return all(m.kind != "power_kink" for m in self.params["maps"])
        return self.kind != "kink_heavy_tail"

    # serialisation ----------------------------------------------------------
    def to_dict(self) -> dict:
        params = dict(self.params)
        if self.kind == "finite_support":
            params = {"maps": [m.to_dict() for m in params["maps"]], "weights": list(params["weights"])}
        return {"kind": self.kind, "params": params, "moment_profile": self.moment_profile,
                "truncation": self.truncation}

    @classmethod
    def from_dict(cls, d: dict, name: str = "family") -> "RandomMapFamily":
        extra = set(d) - {"kind", "params", "moment_profile", "truncation", "name"}
        if extra:
            raise ValueError(f"unknown family keys: {sorted(extra)}")
        params = dict(d.get("params", {}))
        if d["kind"] == "finite_support":
            params["maps"] = tuple(CircleMap.from_dict(m) for m in params["maps"])
            params["weights"] = tuple(float(w) for w in params["weights"])
        return cls(d["kind"], params, d.get("moment_profile", "exponential"),
                   float(d.get("truncation", DEFAULT_TRUNCATION)), d.get("name", name))

    @classmethod
    def load(cls, path) -> "RandomMapFamily":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@lru_cache(maxsize=1)
def _kink_L_table():
    g = np.geomspace(1.0 / (1.0 + math.log(DEFAULT_TRUNCATION)) * 0.99, 1.0, 48)
    return g, np.array([_kink_L(round(float(x), 12)) for x in g])


def _parse_profile(profile: str):
    """``'exponential'`` -> ``(exponential, inf)``; ``'logarithmic-2'`` -> ``(logarithmic, 2.0)``."""
    if profile == "exponential":
        return "exponential", math.inf
    if profile.startswith("logarithmic-"):
        return "logarithmic", float(profile.split("-", 1)[1])
    raise ValueError(f"unknown moment profile {profile!r}")


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    stderr: float
    n_samples: int
    declared_finite: bool
    consistent: bool


def moment_integral(mu: RandomMapFamily, alpha: float, n_samples: int = 10_000,
                    seed: int = 0) -> MomentEstimate:
    """Monte-Carlo ``E (log Lip f)**alpha`` for Lipschitz families, or
    ``E ((1 + log L f) / gamma f)**alpha`` otherwise.

    ``consistent`` is False when the family declares a finite moment but the
    estimate's relative standard error exceeds 1/2 (a symptom of an
    infinite-mean sample), or declares an infinite one and the sample shows
    no heavy tail at all.
    """
    batch = mu.sample_batch(rng.stream(seed, "moment"), n_samples)
    if mu.is_lipschitz:
        terms = mu.log_lip(batch) ** alpha
    else:
        terms = mu.holder_moment_terms(batch) ** alpha
    value = float(np.mean(terms))
    stderr = float(np.std(terms, ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else math.inf
    _, order = _parse_profile(mu.moment_profile)
    declared_finite = alpha < order
    rel = stderr / value if value > 0 else 0.0
    consistent = (rel <= 0.5) if declared_finite else (float(np.max(terms)) > 10.0 * value or rel > 0.05)
    return MomentEstimate(value, stderr, n_samples, declared_finite, bool(consistent))


@dataclass
class CompositionState:
    """Bookkeeping for ``T_n = f_n o ... o f_1``."""

    step: int = 0
    maps_applied: int = 0
    seed_lineage: str = ""

    def advance(self, n_maps: int):
        self.step += 1
        self.maps_applied += n_maps
