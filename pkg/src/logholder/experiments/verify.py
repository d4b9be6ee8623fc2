"""Invariant suites behind ``logholder verify``.

Each check returns a :class:`CheckResult`; a suite collects them into a
JSON-ready verdict. Tolerances come from ``data/tolerances.json`` and can be
overridden key by key.
"""
from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from .. import rng
from ..energy import (
    ball_mass_energy_bound,
    energy_pair,
    energy_tilde,
    energy_tilde_double_sum,
    energy_upper_bound,
    grid_for_eps,
    wasserstein_stability,
)
from ..errors import GridTooCoarseError, QuadratureError
from ..geometry import CircleGrid
from ..kernel import (
    KernelParams,
    U,
    annulus_closed_form,
    annulus_integral,
    c_const,
    half_space_tail,
    middle_strip,
    pair_integral_2d,
    sing_ratio,
)
from ..measure import (
    EmpiricalMeasure,
    GridDensity,
    ball_mass,
    convolve,
    fit_log_holder,
    total_variation,
    variance_identity_check,
    wasserstein_circle,
)
from ..rds import CircleMap, RandomMapFamily, estimate_regularity, holder_constants, lipschitz_constant

SUITES = ("kernel", "energy", "measure", "rds", "all")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0
    error: str | None = None
    numerical_failure: bool = False

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  ({self.seconds:.1f}s)"


def load_tolerances(override: dict | None = None) -> dict:
    text = resources.files("logholder").joinpath("data/tolerances.json").read_text()
    tol = json.loads(text)
    if override:
        _deep_update(tol, override)
    return tol


def _deep_update(base, upd):
    for k, v in upd.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v


def _timed(name, fn, *args):
    t = time.perf_counter()
    try:
        passed, detail = fn(*args)
        res = CheckResult(name, bool(passed), _jsonable(detail))
    except (QuadratureError, GridTooCoarseError) as exc:
        res = CheckResult(name, False, {}, error=f"{type(exc).__name__}: {exc}", numerical_failure=True)
    res.seconds = time.perf_counter() - t
    return res


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


# ---------------------------------------------------------------------------
# kernel checks


def check_annulus_closed_form(tol):
    t = tol["kernel"]
    worst, rows = 0.0, []
    for a, k, lr in itertools.product(t["partint_alphas"], t["partint_dims"], t["partint_log_r"]):
        p = KernelParams(a, 0.0, k)
        r = math.exp(lr)
        v, c = annulus_integral(p, r), annulus_closed_form(p, r)
        rel = abs(v - c) / abs(c)
        worst = max(worst, rel)
        rows.append([a, k, r, v, c, rel])
    return worst <= t["partint_rel"], {"worst_rel": worst, "rows": rows}


def uaeps_grid(tol):
    u = tol["kernel"]["uaeps"]
    alphas = np.linspace(u["alpha_min"], u["alpha_max"], u["n_alpha"])
    eps = np.asarray(u["eps"], dtype=float)
    rs = np.geomspace(u["r_min"], u["r_max"], u["n_r"])
    return alphas, eps, rs


def check_uaeps(tol):
    """Monotonicity, two-sided log bounds and the log-ratio bound for U."""
    u = tol["kernel"]["uaeps"]
    qt = u["quad_tol"]
    alphas, eps_list, rs = uaeps_grid(tol)
    viol = {"I": [], "II": [], "III": [], "IV": []}
    worst = {"I": 0.0, "II": 0.0, "III": 0.0, "IV": 0.0}
    npts = 0
    for a in alphas:
        c = c_const(a, 1)
        for e in eps_list:
            p = KernelParams(a, e, 1)
            vals = np.array([U(p, r) for r in rs])
            npts += len(rs)
            L = -np.log(rs)
            for i in range(len(rs) - 1):
                excess = (vals[i + 1] - vals[i]) / vals[i]
                worst["I"] = max(worst["I"], excess)
                if excess > qt:
                    viol["I"].append([a, e, rs[i], rs[i + 1]])
            if e <= u["eps_max"]:
                for r, v, l in zip(rs, vals, L):
                    if r > u["r_max"]:
                        continue
                    worst["II"] = max(worst["II"], v / (2 * c * l**a))
                    if v >= 2 * c * l**a:
                        viol["II"].append([a, e, r])
                    if e < r:
                        worst["III"] = max(worst["III"], (c / 2) * l**a / v)
                        if v <= (c / 2) * l**a:
                            viol["III"].append([a, e, r])
            if e <= u["eps_max_iv"]:
                for i, j in itertools.combinations(range(len(rs)), 2):
                    r1, r2 = rs[i], rs[j]
                    if e <= r1 <= r2 <= u["r_max_iv"]:
                        bound = (1 + u["delta_iv"]) * (math.log(r1) / math.log(r2)) ** a * vals[j]
                        worst["IV"] = max(worst["IV"], vals[i] / bound)
                        if vals[i] > bound * (1 + qt):
                            viol["IV"].append([a, e, r1, r2])
    passed = not any(viol.values())
    return passed, {"n_points": npts, "violations": viol, "worst_ratio_to_bound": worst}


def check_half_space_tail(tol):
    t = tol["kernel"]
    p = KernelParams(1.0, 0.0, 1)
    seq = [half_space_tail(p, r) for r in t["tail_sequence"]]
    at = half_space_tail(p, t["tail_r"])
    mono = all(abs(1 - b) < abs(1 - a) for a, b in zip(seq, seq[1:]))
    close = abs(at - 1.0) <= t["tail_tol"]
    return mono and close, {"ratio_at_r": at, "tolerance": t["tail_tol"], "sequence": seq,
                            "monotone": mono, "within_tolerance": close}


def check_middle_strip(tol):
    t = tol["kernel"]
    p = KernelParams(1.0, 0.0, 1)
    seq = [middle_strip(p, r) for r in t["middle_sequence"]]
    dec = all(b < a for a, b in zip(seq, seq[1:]))
    small = seq[-1] < t["middle_max"]
    return dec and small, {"sequence": seq, "decreasing": dec, "bound": t["middle_max"], "below_bound": small}


def check_sing_ratio(tol):
    t = tol["kernel"]
    lo, hi = t["sing_window"]
    rows, ok = [], True
    for e in t["sing_eps"]:
        for r in t["sing_r"]:
            v = sing_ratio(KernelParams(1.0, e, 1), r)
            rows.append([e, r, v])
            ok &= lo < v < hi
    return ok, {"rows": rows, "window": [lo, hi]}


def check_symmetry_2d(tol):
    t = tol["kernel"]
    p = KernelParams(1.0, t["symmetry_eps"], 2)
    r = t["symmetry_r"]
    a = pair_integral_2d(p, (0.0, 0.0), (r, 0.0))
    th = 0.7
    b = pair_integral_2d(p, (0.1, -0.2), (0.1 + r * math.cos(th), -0.2 + r * math.sin(th)))
    u = U(p, r)
    rel = max(abs(a - u), abs(b - u)) / u
    return rel <= t["symmetry_rel"], {"placement_a": a, "placement_b": b, "U": u, "rel": rel}


# ---------------------------------------------------------------------------
# energy checks


def _random_measures(count, seed, n_range=(5, 40), spread=(1e-4, 0.3)):
    out = []
    for k in range(count):
        g = rng.stream(seed, "random-measure", k)
        n = int(g.integers(*n_range))
        width = math.exp(g.uniform(math.log(spread[0]), math.log(spread[1])))
        pos = g.uniform(0, 1) + width * g.standard_normal(n)
        w = g.uniform(0.2, 1.0, n)
        out.append(EmpiricalMeasure(pos, w / math.fsum(w)))
    return out


def check_triple_identity(tol):
    t = tol["energy"]
    p = KernelParams(t["triple_alpha"], t["triple_eps"], 1)
    grid = CircleGrid(t["triple_grid"])
    worst = 0.0
    for nu in _random_measures(t["triple_count"], t["seed"], (3, 25)):
        a = energy_tilde(nu, p, grid, method="direct")
        b = energy_tilde_double_sum(nu, p, grid)
        worst = max(worst, abs(a - b) / a)
    return worst <= t["triple_rel"], {"worst_rel": worst}


def check_variance_identity(tol):
    t = tol["energy"]
    grid = CircleGrid(t["variance_grid"])
    worst = 0.0
    for k in range(t["variance_trials"]):
        g = rng.stream(t["seed"], "variance", k)
        m = int(g.integers(1, 6))
        vecs = [GridDensity(grid, g.gamma(2.0, 1.0, grid.size)) for _ in range(m)]
        w = g.uniform(0.1, 1.0, m)
        w /= math.fsum(w)
        w[-1] = 1.0 - math.fsum(w[:-1])
        lhs, rhs = variance_identity_check(vecs, w)
        scale = max(abs(lhs), abs(rhs), math.fsum(wi * v.inner(v) for wi, v in zip(w, vecs)) * 1e-6)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst <= t["variance_rel"], {"worst_rel": worst}


def check_upper_bound(tol):
    t = tol["energy"]
    bad = []
    n = 0
    for a in (0.5, 1.0, 2.0):
        for e in (1e-2, 1e-3, 1e-4):
            p = KernelParams(a, e, 1)
            for nu in _random_measures(4, t["seed"] + 1) + [EmpiricalMeasure.delta(0.3)]:
                v = energy_pair(nu, p)
                n += 1
                if not v <= energy_upper_bound(p):
                    bad.append([a, e, v, energy_upper_bound(p)])
    return not bad, {"n_checked": n, "violations": bad}


def check_ball_mass_bound(tol):
    """``nu(B_r(x))**2 (c/2)(-log 2r)**alpha <= E`` for random measures."""
    t = tol["energy"]["ball_mass"]
    p = KernelParams(t["alpha"], t["eps"], 1)
    radii = np.geomspace(max(t["r_min"], 1.0001 * p.eps), t["r_max"], t["n_r"])
    viol, n, worst = [], 0, 0.0
    for k, nu in enumerate(_random_measures(t["n_measures"], t["seed"], (20, 200))):
        e = energy_pair(nu, p)
        centers = np.concatenate([nu.positions, rng.stream(t["seed"], "centers", k).uniform(0, 1, 64)])
        for r in radii:
            m = ball_mass(nu, centers, r)
            lhs = m**2 * ball_mass_energy_bound(p, r)
            n += len(centers)
            worst = max(worst, float(np.max(lhs)) / e)
            if np.any(lhs > e):
                viol.append([k, r, float(np.max(lhs)), e])
    return not viol, {"n_checked": n, "violations": viol, "worst_lhs_over_energy": worst}


def concentration_sweep(tol):
    t = tol["energy"]["sweep"]
    p = KernelParams(t["alpha"], t["eps"], 1)
    grid = grid_for_eps(p.eps, cap=t["grid_cap"])
    f = CircleMap.sine_perturbed(t["map_b"], t["map_a"])
    rows = []
    for L in t["arc_lengths"]:
        nu = EmpiricalMeasure.uniform_arc(t["n_atoms"], t["center"], L)
        e = energy_pair(nu, p)
        et = energy_tilde(nu, p, grid)
        w = wasserstein_stability(nu, f, p, grid) if t.get("with_wasserstein", True) else None
        rows.append({"arc": L, "e_pair": e, "e_tilde": et, "ratio": et / e, "wasserstein": w})
    return rows


def check_comparability(tol, rows=None):
    t = tol["energy"]["sweep"]
    rows = rows if rows is not None else concentration_sweep(tol)
    lo, hi = t["ratio_window"]
    high = [r for r in rows if r["e_pair"] >= t["calibrated_C"]]
    ok = bool(high) and all(lo < r["ratio"] < hi for r in high)
    return ok, {"rows": rows, "calibrated_C": t["calibrated_C"], "window": [lo, hi]}


def check_wasserstein_stability(tol, rows=None):
    t = tol["energy"]["sweep"]
    rows = rows if rows is not None else concentration_sweep(tol)
    w = [r["wasserstein"] for r in rows]
    band = t["noise_band"]
    ok = all(b <= a * (1 + band) for a, b in zip(w, w[1:])) and w[-1] < w[0]
    return ok, {"wasserstein": w, "noise_band": band}


# ---------------------------------------------------------------------------
# measure checks


def check_wasserstein_tv(tol):
    t = tol["measure"]
    grid = CircleGrid(t["wtv_grid"])
    worst = 0.0
    for k in range(t["wtv_trials"]):
        g = rng.stream(t["seed"], "wtv", k)
        a = GridDensity(grid, g.exponential(1.0, grid.size) * (g.uniform(size=grid.size) < g.uniform())).normalized() \
            if k % 2 else GridDensity(grid, g.exponential(1.0, grid.size)).normalized()
        b = GridDensity(grid, g.exponential(1.0, grid.size)).normalized()
        worst = max(worst, wasserstein_circle(a, b) / (0.5 * total_variation(a, b)))
    return worst <= 1.0 + 1e-12, {"worst_w_over_half_tv": worst}


def check_convolve_binomial(tol):
    t = tol["measure"]
    n = t["binomial_n"]
    maps = [CircleMap.rotation(0.25), CircleMap.rotation(-0.25)]
    mu = RandomMapFamily.finite(maps, [0.5, 0.5])
    out = convolve(mu, EmpiricalMeasure.delta(0.0, n), t["seed"], 1)
    m = ball_mass(out, 0.25, 1e-9)
    sd = math.sqrt(0.25 / n)
    return abs(m - 0.5) <= 4 * sd, {"mass_at_quarter": m, "four_sigma": 4 * sd}


def check_planted_fit(tol):
    t = tol["measure"]
    n = t["planted_n"]
    u = (np.arange(n) + 0.5) / n
    x = np.exp(-u ** (-1.0 / t["planted_alpha"]))
    sign = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    nu = EmpiricalMeasure.from_positions(sign * x)
    radii = np.geomspace(nu.resolution_floor, 0.3, 12)
    fit = fit_log_holder(nu, np.arange(64) / 64, radii)
    rel = abs(fit.alpha_hat - t["planted_alpha"]) / t["planted_alpha"]
    return rel <= t["planted_rel"], {"alpha_hat": fit.alpha_hat, "rel": rel}


# ---------------------------------------------------------------------------
# rds checks


def _sample_maps(seed):
    g = rng.stream(seed, "rds-check")
    maps = [CircleMap.rotation(g.uniform()), CircleMap.sine_perturbed(g.uniform(-0.9, 0.9), g.uniform())]
    th, s = g.uniform(0, math.pi), g.uniform(0, 2)
    c, sn = math.cos(th), math.sin(th)
    maps.append(CircleMap.projective(np.array([[c, -sn], [sn, c]]) @ np.diag([math.exp(s), math.exp(-s)])))
    return maps


def check_bilipschitz_sandwich(tol):
    t = tol["rds"]
    from ..geometry import circle_distance

    worst = 0.0
    for k in range(t["trials"]):
        g = rng.stream(t["seed"], "sandwich", k)
        for f in _sample_maps(t["seed"] + k):
            L = lipschitz_constant(f)
            x = g.uniform(0, 1, 2000)
            y = x + np.exp(g.uniform(math.log(1e-6), math.log(0.5), 2000))
            d = circle_distance(x, y)
            dd = circle_distance(f.apply(x), f.apply(y))
            worst = max(worst, float(np.max(dd / (L * d))), float(np.max(d / (L * dd))))
    return worst <= 1.0 + 1e-9, {"worst_ratio": worst}


def check_holder_sandwich(tol):
    t = tol["rds"]
    from ..geometry import circle_distance

    bad = 0
    for gamma in t["kink_gammas"]:
        f = CircleMap.power_kink(gamma, 0.3)
        gam, L = holder_constants(f)
        g = rng.stream(t["seed"], "holder", int(gamma * 1000))
        x = g.uniform(0, 1, 5000)
        z = x + np.exp(g.uniform(math.log(1e-9), math.log(0.5), 5000))
        d = circle_distance(x, z)
        lhs = circle_distance(f.apply(x), f.apply(z))
        bad += int(np.sum(lhs > L * d ** (gam / 2) * (1 + 1e-12)))
        bad += int(np.sum(lhs < (d / L) ** (2.0 / gam) * (1 - 1e-12)))
    return bad == 0, {"violations": bad}


def check_estimator_consistency(tol):
    t = tol["rds"]
    rows, ok = [], True
    for f in _sample_maps(t["seed"]) + [CircleMap.power_kink(g, 0.1) for g in t["kink_gammas"]]:
        est = estimate_regularity(f, 4000, t["seed"])
        gam = holder_constants(f)[0] if f.kind == "power_kink" else 1.0
        ok &= est.gamma_hat <= gam + 0.05
        if f.kind != "power_kink":
            ok &= est.lip_hat <= lipschitz_constant(f) * (1 + 1e-9)
        rows.append([f.kind, est.gamma_hat, gam, est.lip_hat])
    return ok, {"rows": rows}


def check_moment_formula(tol):
    from ..rds import moment_integral

    t = tol["rds"]
    # log Lip = 2 s with s Pareto(p, scale): E log Lip = 2 scale p / (p - 1)
    p = t["moment_tail_index"]
    mu = RandomMapFamily.sl2_heavy_tail(p, t["moment_scale"])
    est = moment_integral(mu, 1.0, t["moment_samples"], t["seed"])
    exact = 2.0 * t["moment_scale"] * p / (p - 1.0)
    ok = abs(est.value - exact) <= 5 * est.stderr + 0.02 * exact
    return ok, {"estimate": est.value, "stderr": est.stderr, "exact": exact}


SUITE_CHECKS = {
    "kernel": [("annulus_closed_form", check_annulus_closed_form), ("uaeps", check_uaeps),
               ("half_space_tail", check_half_space_tail), ("middle_strip", check_middle_strip),
               ("sing_ratio", check_sing_ratio), ("symmetry_2d", check_symmetry_2d)],
    "energy": [("triple_identity", check_triple_identity), ("variance_identity", check_variance_identity),
               ("upper_bound", check_upper_bound), ("ball_mass_bound", check_ball_mass_bound),
               ("comparability", check_comparability), ("wasserstein_stability", check_wasserstein_stability)],
    "measure": [("wasserstein_vs_tv", check_wasserstein_tv), ("convolve_binomial", check_convolve_binomial),
                ("planted_fit", check_planted_fit)],
    "rds": [("bilipschitz_sandwich", check_bilipschitz_sandwich), ("holder_sandwich", check_holder_sandwich),
            ("estimator_consistency", check_estimator_consistency), ("moment_formula", check_moment_formula)],
}


@dataclass
class SuiteReport:
    suite: str
    checks: list
    seconds: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def exit_code(self) -> int:
        if self.passed:
            return 0
        if any(c.numerical_failure for c in self.checks):
            return 3
        return 1

    def to_dict(self) -> dict:
        return {"suite": self.suite, "passed": self.passed, "exit_code": self.exit_code,
                "seconds": self.seconds, "checks": [asdict(c) for c in self.checks]}


def verify_suite(suite: str, overrides: dict | None = None, progress=None) -> SuiteReport:
    """Run the named invariant suite (``kernel``, ``energy``, ``measure``,
    ``rds`` or ``all``)."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    tol = load_tolerances(overrides)
    names = list(SUITE_CHECKS) if suite == "all" else [suite]
    t0 = time.perf_counter()
    results = []
    sweep_cache = {}
    for s in names:
        for name, fn in SUITE_CHECKS[s]:
            if fn in (check_comparability, check_wasserstein_stability):
                if "rows" not in sweep_cache:
                    try:
                        sweep_cache["rows"] = concentration_sweep(tol)
                    except (QuadratureError, GridTooCoarseError) as exc:
                        sweep_cache["rows"] = exc
                rows = sweep_cache["rows"]
                if isinstance(rows, Exception):
                    res = CheckResult(f"{s}.{name}", False, {}, 0.0,
                                      f"{type(rows).__name__}: {rows}", True)
                else:
                    res = _timed(f"{s}.{name}", fn, tol, rows)
            else:
                res = _timed(f"{s}.{name}", fn, tol)
            results.append(res)
            if progress is not None:
                progress(res)
    return SuiteReport(suite, results, time.perf_counter() - t0)
