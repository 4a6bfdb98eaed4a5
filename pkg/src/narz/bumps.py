"""Compactly supported C^2 test functions with closed-form calculus.

The entropy certificates integrate step functions in space against a
product test function g(x) h(t).  Both factors use the polynomial bump

    b(u) = (1 - u^2)^3   on [-1, 1],   0 outside,

which is C^2 at the edges (triple zero) and has the elementary
antiderivative needed for the exact plateau-by-plateau spatial
integrals: int b = u - u^3 + (3/5) u^5 - (1/7) u^7.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Bump", "TestFunction"]

_F_EDGE = 16.0 / 35.0  # antiderivative of (1-u^2)^3 at u=1


def _f(u):
    return u - u**3 + 0.6 * u**5 - u**7 / 7.0


@dataclass(frozen=True)
class Bump:
    """(1 - u^2)^3 bump centred at ``center`` with half-width ``width``."""

    center: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("bump width must be positive")

    @property
    def support(self) -> tuple[float, float]:
        return (self.center - self.width, self.center + self.width)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        u = (np.atleast_1d(x) - self.center) / self.width
        out = np.zeros_like(u)
        inside = np.abs(u) < 1.0
        out[inside] = (1.0 - u[inside] ** 2) ** 3
        return float(out[0]) if scalar else out

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        u = (np.atleast_1d(x) - self.center) / self.width
        out = np.zeros_like(u)
        inside = np.abs(u) < 1.0
        ui = u[inside]
        out[inside] = -6.0 * ui * (1.0 - ui**2) ** 2 / self.width
        return float(out[0]) if scalar else out

    def antideriv(self, x):
        """Integral from -infinity to x, exact."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        u = np.clip((np.atleast_1d(x) - self.center) / self.width, -1.0, 1.0)
        out = self.width * (_f(u) + _F_EDGE)
        return float(out[0]) if scalar else out

    @property
    def mass(self) -> float:
        return float(2.0 * _F_EDGE * self.width)


@dataclass(frozen=True)
class TestFunction:
    """Product test function g(x) h(t) on space-time.

    ``space`` and ``time`` are :class:`Bump` factors; the time factor
    should be supported strictly inside the open interval covered by a
    trajectory so no boundary terms appear in the entropy balance.
    """

    __test__ = False  # not a pytest class despite the name

    space: Bump
    time: Bump

    def __call__(self, x, t):
        return self.space(x) * self.time(t)

    def dx(self, x, t):
        return self.space.deriv(x) * self.time(t)

    def dt(self, x, t):
        return self.space(x) * self.time.deriv(t)
