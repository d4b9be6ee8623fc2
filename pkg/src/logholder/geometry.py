"""Flat circle of circumference 1 and uniform grids on it.

Points are plain floats (or float arrays) in ``[0, 1)``; :class:`CirclePoint`
exists for call sites that want the reduction made explicit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CIRCUMFERENCE = 1.0
DIAMETER = 0.5

_UNIT_BALL_VOLUME = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}


def wrap(x):
    """Reduce a coordinate (scalar or array) into ``[0, 1)``."""
    y = np.mod(x, 1.0)
    # np.mod(-1e-20, 1.0) == 1.0 in floating point
    if np.ndim(y) == 0:
        return 0.0 if y >= 1.0 else float(y)
    y[y >= 1.0] = 0.0
    return y


@dataclass(frozen=True)
class CirclePoint:
    position: float

    def __post_init__(self):
        object.__setattr__(self, "position", wrap(float(self.position)))

    def __float__(self):
        return self.position


def _coord(p):
    return p.position if isinstance(p, CirclePoint) else p


def circle_distance(a, b):
    """Arc-length distance on the unit-circumference circle.

    Works elementwise on arrays; the result lies in ``[0, 1/2]``.
    """
    d = np.abs(np.asarray(_coord(a), dtype=float) - np.asarray(_coord(b), dtype=float))
    d = np.mod(d, 1.0)
    d = np.minimum(d, 1.0 - d)
    return float(d) if d.ndim == 0 else d


def unit_ball_volume(k: int) -> float:
    """Volume of the unit ball in R^k for k in {1, 2, 3}."""
    try:
        return _UNIT_BALL_VOLUME[int(k)]
    except KeyError:
        raise ValueError(f"unsupported dimension k={k}; expected 1, 2 or 3") from None


@dataclass(frozen=True)
class CircleGrid:
    """``size`` equispaced nodes ``j/size`` with Lebesgue weight ``1/size`` each."""

    size: int
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise ValueError(f"grid size must be a positive integer, got {self.size}")
        object.__setattr__(self, "size", int(self.size))
        pts = np.arange(self.size, dtype=float) / self.size
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def cell_weight(self) -> float:
        return 1.0 / self.size

    @property
    def spacing(self) -> float:
        return 1.0 / self.size

    def doubled(self) -> "CircleGrid":
        return CircleGrid(2 * self.size)

    def riemann_sum(self, f) -> float:
        """Approximate the Lebesgue integral of ``f`` over the circle."""
        return float(np.sum(f(self.points)) / self.size)
