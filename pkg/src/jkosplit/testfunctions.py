"""Fixed batteries of smooth test functions for weak-form residuals.

Each spatial test function is a linear polynomial times the compact bump
``exp(-1 / (1 - y^2))``, ``y = (x - c) / w``.  Values and the first two
derivatives are closed-form.  The battery is versioned so residuals stay
comparable across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BATTERY_VERSION = "bump-v1"

# (centre, half-width, slope)
_SPATIAL = (
    (0.0, 1.0, 0.0),
    (-0.75, 1.0, 0.4),
    (0.75, 1.0, -0.4),
    (-1.5, 1.25, 0.0),
    (1.5, 1.25, 0.3),
    (0.0, 2.5, 0.5),
    (-0.5, 3.5, -0.2),
    (0.5, 5.0, 0.0),
)

# (temporal frequency, centre, width) for space-time functions
_SPACETIME = (
    (0.0, 0.0, 1.0),
    (1.0, 0.0, 2.0),
    (2.0, 1.0, 1.0),
    (3.0, -1.0, 1.5),
    (0.5, 0.5, 3.0),
    (1.5, -0.5, 0.75),
    (4.0, 0.0, 4.0),
    (0.25, 2.0, 2.0),
)


def _bump(y):
    inside = np.abs(y) < 1.0
    ys = np.where(inside, y, 0.0)
    q = 1.0 - ys * ys
    b = np.where(inside, np.exp(-1.0 / q), 0.0)
    db = np.where(inside, b * (-2.0 * ys / q**2), 0.0)
    d2b = np.where(inside, b * (4.0 * ys * ys / q**4 - (2.0 + 6.0 * ys * ys) / q**3), 0.0)
    return b, db, d2b


@dataclass(frozen=True)
class BumpFunction:
    """``(1 + slope * y) * bump(y)`` with ``y = (x - center) / width``."""

    center: float
    width: float
    slope: float = 0.0

    def derivatives(self, x):
        """Return ``(phi, phi', phi'')`` at ``x``."""
        y = (np.asarray(x, dtype=float) - self.center) / self.width
        b, db, d2b = _bump(y)
        p = 1.0 + self.slope * y
        phi = p * b
        d1 = (self.slope * b + p * db) / self.width
        d2 = (2.0 * self.slope * db + p * d2b) / self.width**2
        return phi, d1, d2

    def __call__(self, x):
        return self.derivatives(x)[0]

    @property
    def support(self):
        return (self.center - self.width, self.center + self.width)


@dataclass(frozen=True)
class SpaceTimeFunction:
    """``cos(freq * t) * exp(-((x - center) / width)^2)``."""

    freq: float
    center: float
    width: float

    def __call__(self, t, x):
        return np.cos(self.freq * t) * np.exp(-(((np.asarray(x) - self.center) / self.width) ** 2))


def spatial_battery(scale: float = 1.0) -> list[BumpFunction]:
    """The eight spatial test functions, optionally dilated by ``scale``."""
    return [BumpFunction(c * scale, w * scale, a) for c, w, a in _SPATIAL]


def spacetime_battery() -> list[SpaceTimeFunction]:
    return [SpaceTimeFunction(*p) for p in _SPACETIME]
