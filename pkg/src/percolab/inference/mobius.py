"""Mobius maps and the covariance factor of connection probabilities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ONE_ARM_EXPONENT = 5.0 / 48.0


def _z(p):
    if isinstance(p, complex):
        return p
    if np.ndim(p) == 0:
        return complex(p)
    return complex(float(p[0]), float(p[1]))


@dataclass(frozen=True)
class MobiusMap:
    """``z -> (A z + B) / (C z + D)`` with ``AD - BC != 0``."""

    A: complex = 1
    B: complex = 0
    C: complex = 0
    D: complex = 1

    def __post_init__(self):
        for k in "ABCD":
            object.__setattr__(self, k, complex(getattr(self, k)))
        if abs(self.A * self.D - self.B * self.C) == 0:
            raise ValueError("singular Mobius map")

    @classmethod
    def scaling(cls, s):
        return cls(s, 0, 0, 1)

    @classmethod
    def inversion(cls):
        return cls(0, 1, 1, 0)

    def _den(self, z):
        d = self.C * z + self.D
        if abs(d) < 1e-300:
            raise ValueError("point at the pole of the map")
        return d

    def __call__(self, p):
        z = _z(p)
        return (self.A * z + self.B) / self._den(z)

    def derivative(self, p):
        z = _z(p)
        return (self.A * self.D - self.B * self.C) / self._den(z) ** 2


def mobius_factor(M: MobiusMap, points, exponent=ONE_ARM_EXPONENT) -> float:
    """``prod_i |M'(x_i)|^(-exponent)``."""
    out = 1.0
    for p in points:
        out *= abs(M.derivative(p)) ** (-exponent)
    return float(out)
