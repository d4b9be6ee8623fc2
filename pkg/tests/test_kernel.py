import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as si

from logholder.errors import SingularEvaluationError
from logholder.kernel import (
    INV_E,
    KernelParams,
    U,
    U_batch,
    V,
    annulus_closed_form,
    annulus_integral,
    c_const,
    half_space_tail,
    half_space_tail_closed_form_1d,
    middle_strip,
    pair_integral_2d,
    phi,
    phi_eps,
    sing_ratio,
    u_table,
    u_zero_closed_form,
)


def _phi_eps_scalar(a, e, x):
    x = max(abs(x), e)
    return 0.0 if x >= INV_E else (-math.log(x)) ** ((a - 1) / 2) / math.sqrt(x)


def u_scipy(a, e, r):
    """Independent route: scipy.quad over the kink points of the 1-D convolution."""
    pts = sorted({0.0, e, -e, r, r - e, r + e, INV_E, r - INV_E})
    pts = [x for x in pts if r - INV_E <= x <= INV_E]
    f = lambda x: _phi_eps_scalar(a, e, x) * _phi_eps_scalar(a, e, r - x)
    return sum(si.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=500)[0] for lo, hi in zip(pts, pts[1:]))


# --- potentials -------------------------------------------------------------

def test_params_validation():
    with pytest.raises(ValueError):
        KernelParams(0.0)
    with pytest.raises(ValueError):
        KernelParams(1.0, eps=0.5)
    with pytest.raises(ValueError):
        KernelParams(1.0, dim=4)
    assert KernelParams(1.0, 1e-3).with_eps(1e-4).eps == 1e-4


def test_phi_pole_and_support():
    p = KernelParams(1.0)
    with pytest.raises(SingularEvaluationError):
        phi(p, 0.0)
    assert phi(p, 0.5) == 0.0
    assert phi(p, 0.01) == pytest.approx(10.0)


def test_phi_eps_flat_below_cutoff():
    p = KernelParams(0.5, 1e-3)
    np.testing.assert_allclose(phi_eps(p, np.array([0.0, 1e-5, 1e-3])), phi(p, 1e-3))


def test_c_const_and_V():
    assert c_const(1.0, 1) == pytest.approx(2.0)
    assert c_const(2.0, 2) == pytest.approx(math.pi)
    p = KernelParams(1.0, 1e-4)
    assert V(p, 1e-2) == pytest.approx(2 * math.log(100))
    assert V(p, 0.0) == pytest.approx(V(p, 1e-4))


# --- U ------------------------------------------------------------------------

@pytest.mark.parametrize("a,e,r", [(1, 1e-4, 1e-2), (0.5, 1e-3, 3e-2), (2, 1e-5, 1e-3), (1, 1e-3, 0.2), (1.5, 1e-2, 0.5)])
def test_U_matches_scipy(a, e, r):
    assert U(KernelParams(a, e, 1), r) == pytest.approx(u_scipy(a, e, r), rel=1e-9)


def test_U_frozen_reference():
    # scipy oracle at tight tolerance, frozen
    v = U(KernelParams(1.0, 1e-4, 1), 1e-2)
    assert v == pytest.approx(12.697056579268434, rel=1e-9)
    c = c_const(1.0, 1) * math.log(100)
    assert c / 2 < v < 2 * c


@pytest.mark.parametrize("k", [1, 2, 3])
def test_U_zero_closed_form(k):
    p = KernelParams(0.75, 1e-3, k)
    assert U(p, 0.0) == pytest.approx(u_zero_closed_form(p), rel=1e-9)


def test_U_vanishes_beyond_support():
    assert U(KernelParams(1.0, 1e-3), 2 * INV_E) == 0.0


@pytest.mark.parametrize("r", [1e-3, 1e-2, 0.1])
def test_U_2d_against_full_plane_quadrature(r):
    p = KernelParams(1.0, 1e-3, 2)
    assert U(p, r) == pytest.approx(pair_integral_2d(p, (0.3, -0.1), (0.3, -0.1 + r)), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.3, 2.0), st.floats(1e-6, 0.3), st.floats(1.01, 5.0))
def test_U_nonincreasing(a, r, factor):
    p = KernelParams(a, 1e-4, 1)
    assert U(p, r * factor) <= U(p, r) * (1 + 1e-9)


def test_U_batch_matches_scalar():
    p = KernelParams(1.0, 1e-3)
    r = np.array([0.0, 1e-3, 0.05])
    np.testing.assert_allclose(U_batch(p, r), [U(p, x) for x in r], rtol=1e-14)


def test_table_accuracy():
    p = KernelParams(1.0, 1e-4)
    tab = u_table(p)
    r = np.geomspace(1e-6, tab.r_top, 300)
    exact = np.array([U(p, x) for x in r])
    rel = np.abs(tab(r) - exact) / np.maximum(exact, 1e-300)
    mask = exact > 0
    assert np.median(rel[mask]) < 1e-5
    assert np.max(rel[mask]) < 2e-3


# --- tail, middle strip and singular ratio -------------------------------------------------------

@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_annulus_closed_form(k, a):
    p = KernelParams(a, 0.0, k)
    for r in (math.exp(-2), 1e-3, 1e-8):
        assert annulus_integral(p, r) == pytest.approx(annulus_closed_form(p, r), rel=1e-9)


@pytest.mark.parametrize("r", [1e-2, 1e-4, 1e-6])
def test_half_space_tail_1d_closed_form(r):
    assert half_space_tail(KernelParams(1.0), r) == pytest.approx(half_space_tail_closed_form_1d(1.0, r), rel=1e-10)


def test_half_space_tail_2d_dblquad():
    a, r = 0.5, 1e-2
    f = lambda x2, x1: (-math.log(math.hypot(x1, x2))) ** (a - 1) / (x1 * x1 + x2 * x2)
    h = lambda x1: math.sqrt(INV_E**2 - x1**2)
    v = si.dblquad(f, 2 * r, INV_E, lambda x1: -h(x1), h, epsabs=1e-12, epsrel=1e-10)[0]
    ref = 2 * v / (c_const(a, 2) * (-math.log(r)) ** a)
    assert half_space_tail(KernelParams(a, 0.0, 2), r) == pytest.approx(ref, rel=1e-8)


def test_half_space_tail_slow_approach_frozen():
    # quadrature oracle values, frozen: the limit 1 is approached like (-log r)**-alpha
    assert half_space_tail(KernelParams(0.5, 0.0, 2), 1e-6) == pytest.approx(0.6787583237506285, rel=1e-8)
    seq = [half_space_tail(KernelParams(1.0, 0.0, 3), r) for r in (1e-2, 1e-4, 1e-6)]
    assert seq[0] < seq[1] < seq[2] < 1.0


def test_half_space_tail_domain():
    with pytest.raises(ValueError):
        half_space_tail(KernelParams(1.0), 0.05)


def test_middle_strip_scale_invariant_constant():
    # for alpha = 1 the strip integral is int_{-2}^{2} |x|^-1/2 |1-x|^-1/2 dx
    const = math.pi + 2 * math.asinh(1.0) + 2 * math.asinh(math.sqrt(2.0))
    for r in (1e-2, 1e-4, 1e-6):
        assert middle_strip(KernelParams(1.0), r) == pytest.approx(const / -math.log(r), rel=1e-9)


def test_middle_strip_decreasing_alpha_half():
    seq = [middle_strip(KernelParams(0.5), r) for r in (1e-2, 1e-4, 1e-6)]
    assert seq[0] > seq[1] > seq[2]


def test_sing_ratio_window():
    for e in (1e-6, 1e-8):
        for r in (0.0, 1e-6, 1e-5, 1e-4):
            assert 0.8 < sing_ratio(KernelParams(1.0, e), r) < 1.25
    assert sing_ratio(KernelParams(1.0, 1e-6), 0.0) == pytest.approx(1.0, rel=1e-2)
