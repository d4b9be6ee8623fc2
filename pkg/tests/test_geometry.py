import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from logholder.geometry import CircleGrid, CirclePoint, circle_distance, unit_ball_volume, wrap

reals = st.floats(-50, 50, allow_nan=False)


def test_wrap_into_unit_interval():
    x = np.array([-1.25, -0.0, 0.0, 0.5, 1.0, 3.75])
    np.testing.assert_allclose(wrap(x), [0.75, 0.0, 0.0, 0.5, 0.0, 0.75])


@given(reals, reals)
def test_distance_symmetric_and_bounded(a, b):
    d = circle_distance(a, b)
    assert 0.0 <= d <= 0.5
    assert d == pytest.approx(circle_distance(b, a), abs=1e-12)


@given(reals, reals, reals)
def test_triangle_inequality(a, b, c):
    assert circle_distance(a, c) <= circle_distance(a, b) + circle_distance(b, c) + 1e-12


@given(reals, st.integers(-5, 5))
def test_distance_periodic(a, k):
    assert circle_distance(a, a + k) == pytest.approx(0.0, abs=1e-9)


def test_distance_vectorised():
    d = circle_distance(np.array([0.1, 0.9]), 0.0)
    np.testing.assert_allclose(d, [0.1, 0.1])


def test_circle_point_accepts_distance():
    assert circle_distance(CirclePoint(0.95), CirclePoint(0.05)) == pytest.approx(0.1)


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_grid_riemann_sum_exact_for_trig():
    g = CircleGrid(64)
    assert g.riemann_sum(lambda y: np.cos(2 * np.pi * 3 * y) ** 2) == pytest.approx(0.5, abs=1e-14)
    assert g.cell_weight == pytest.approx(1 / 64)
    assert g.doubled().size == 128


def test_grid_rejects_bad_size():
    with pytest.raises(ValueError):
        CircleGrid(0)
