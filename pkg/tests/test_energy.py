import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logholder.energy import (
    EnergyReport,
    averaged_step_ratio,
    ball_mass_energy_bound,
    energy_pair,
    energy_pair_detail,
    energy_report,
    energy_tilde,
    energy_tilde_double_sum,
    energy_upper_bound,
    grid_for_eps,
    k_kernel,
    k_kernel_self_closed_form,
    one_step_holder_bound,
    wasserstein_stability,
)
from logholder.errors import GridTooCoarseError
from logholder.geometry import CircleGrid, circle_distance
from logholder.kernel import KernelParams, U, u_zero_closed_form
from logholder.measure import EmpiricalMeasure, ball_mass, convolve, pushforward
from logholder.rds import CircleMap, RandomMapFamily

P = KernelParams(1.0, 1e-3)


def test_delta_energy_is_U0():
    assert energy_pair(EmpiricalMeasure.delta(0.3, 50), P) == pytest.approx(u_zero_closed_form(P), rel=1e-12)


def test_two_atom_energy():
    nu = EmpiricalMeasure([0.1, 0.13], [0.3, 0.7])
    exact = (0.09 + 0.49) * U(P, 0.0) + 2 * 0.21 * U(P, 0.03)
    assert energy_pair(nu, P) == pytest.approx(exact, rel=1e-12)


def _lattice_brute(n, p):
    # a uniform lattice has only n//2 + 1 distinct distances
    u = {k: U(p, min(k, n - k) / n) for k in range(n)}
    return math.fsum(u[k] for k in range(n)) / n


def test_table_path_matches_lattice_brute_force():
    n = 128
    nu = EmpiricalMeasure.uniform_grid(n)
    d = energy_pair_detail(nu, P)
    assert d.method == "exact-table"
    assert d.value == pytest.approx(_lattice_brute(n, P), rel=2e-5)


def test_sampled_estimator_unbiased():
    n = 128
    nu = EmpiricalMeasure.uniform_grid(n)
    exact = _lattice_brute(n, P)
    est = energy_pair_detail(nu, P, exact_limit=50, n_sample_pairs=400_000, seed=5)
    assert est.method == "sampled-table"
    assert abs(est.value - exact) < 5 * est.stderr + 1e-4 * exact


def test_thread_count_does_not_change_energy():
    nu = EmpiricalMeasure.random_arc(3000, 0.2, 0.05, seed=9)
    assert energy_pair(nu, P, threads=1) == energy_pair(nu, P, threads=4)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.5, 1.0, 2.0]), st.sampled_from([1e-2, 1e-3, 1e-4]))
def test_upper_bound_always_holds(seed, a, e):
    g = np.random.default_rng(seed)
    nu = EmpiricalMeasure.from_positions(g.uniform(0, 1) + 10 ** g.uniform(-5, -1) * g.standard_normal(30))
    p = KernelParams(a, e)
    rep = energy_report(nu, p, grid_for_eps(e, cap=1 << 18), with_tilde=False)
    assert rep.within_upper_bound


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_ball_mass_lower_bound(seed):
    g = np.random.default_rng(seed)
    p = KernelParams(1.0, 1e-4)
    nu = EmpiricalMeasure.from_positions(g.uniform(0, 1) + 10 ** g.uniform(-4, -1) * g.standard_normal(40))
    e = energy_pair(nu, p)
    for r in np.geomspace(1e-4, 0.18, 8):
        m = ball_mass(nu, np.concatenate([nu.positions, g.uniform(0, 1, 16)]), r)
        assert np.max(m) ** 2 * ball_mass_energy_bound(p, r) <= e


def test_grid_kernel_matches_continuous():
    p = KernelParams(1.0, 1e-2)
    g = CircleGrid(1 << 16)
    for d in (0.0, 0.004, 0.05, 0.3):
        cont = U(p, d) + U(p, 1 - d)
        assert k_kernel(0.2, 0.2 + d, p, g) == pytest.approx(cont, rel=2e-3)
    assert k_kernel(0.7, 0.7, p, g) == pytest.approx(k_kernel_self_closed_form(p), rel=2e-3)


def test_triple_identity():
    p = KernelParams(1.0, 1e-2)
    g = CircleGrid(4096)
    nu = EmpiricalMeasure.random_arc(12, 0.5, 0.1, seed=1)
    assert energy_tilde(nu, p, g, method="direct") == pytest.approx(energy_tilde_double_sum(nu, p, g), rel=1e-8)


def test_energies_comparable_when_concentrated():
    g = grid_for_eps(P.eps)
    for L in (0.1, 1e-2, 1e-3):
        nu = EmpiricalMeasure.uniform_arc(400, 0.3, L)
        assert 0.8 < energy_tilde(nu, P, g) / energy_pair(nu, P) < 1.25


def test_variance_inequality_for_averaged_convolution():
    mu = RandomMapFamily.finite([CircleMap.rotation(0.1), CircleMap.sine_perturbed(0.4, 0.2),
                                 CircleMap.rotation(0.55)])
    nu = EmpiricalMeasure.uniform_arc(200, 0.4, 0.02)
    g = grid_for_eps(P.eps)
    m = 6
    avg = convolve(mu, nu, seed=2, step=1, mode="average", m=m)
    batch = mu.sample_maps(2, 1, m)
    each = [energy_tilde(pushforward(nu, batch.item(j)), P, g) for j in range(m)]
    assert energy_tilde(avg, P, g) <= math.fsum(each) / m * (1 + 1e-10)


def test_report_json_round_trip():
    rep = energy_report(EmpiricalMeasure.delta(0.1, 10), P, grid_for_eps(P.eps))
    d = json.loads(rep.to_json())
    assert set(d) == {"alpha", "eps", "dim", "n_atoms", "grid_size", "e_pair", "e_tilde"}
    assert EnergyReport.from_dict(d) == rep
    assert rep.e_pair <= energy_upper_bound(P)


def test_grid_policy():
    assert grid_for_eps(1e-3).size == 32768
    assert grid_for_eps(1e-6, cap=1 << 24).size == 1 << 24
    with pytest.raises(GridTooCoarseError):
        grid_for_eps(1e-7, cap=1 << 20)


def test_one_step_bound_power_kink():
    p = KernelParams(0.5, 1e-4)
    nu = EmpiricalMeasure.uniform_arc(200, 0.25, 1e-3)
    b = one_step_holder_bound(nu, CircleMap.power_kink(0.5, 0.1), p)
    assert b.holds


def test_wasserstein_stability_zero_for_grid_rotation():
    g = grid_for_eps(P.eps)
    nu = EmpiricalMeasure.uniform_arc(50, 0.3, 0.01)
    assert wasserstein_stability(nu, CircleMap.rotation(5 / g.size), P, g) < 1e-9
    assert wasserstein_stability(nu, CircleMap.sine_perturbed(0.5, 0.1), P, g) > 0


def test_averaged_ratio_identity_is_one():
    mu = RandomMapFamily.degenerate()
    nu = EmpiricalMeasure.uniform_arc(50, 0.3, 0.01)
    r = averaged_step_ratio(mu, nu, P, grid_for_eps(P.eps), 4, seed=0)
    assert r.ratio == pytest.approx(1.0, rel=1e-12) and r.stderr == pytest.approx(0.0, abs=1e-12)
