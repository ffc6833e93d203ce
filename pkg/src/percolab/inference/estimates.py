"""Estimates with error bars and mergeable Monte Carlo tallies."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

KINDS = ("binomial", "delta-method", "batch-means", "normal", "exact")


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    n_samples: int
    kind: str = "binomial"

    def __post_init__(self):
        if not self.std_error >= 0:
            raise ValueError("std_error must be nonnegative")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.kind == "binomial" and not (0.0 <= self.mean <= 1.0):
            raise ValueError("binomial mean outside [0, 1]")

    @classmethod
    def binomial(cls, successes, n):
        n = int(n)
        p = float(successes) / n
        return cls(p, math.sqrt(max(p * (1.0 - p), 0.0) / n), n, "binomial")

    @classmethod
    def from_values(cls, values, kind="normal"):
        v = np.asarray(values, dtype=np.float64)
        n = v.size
        se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(v.mean()), se, n, kind)

    def ci(self, z=3.0):
        return self.mean - z * self.std_error, self.mean + z * self.std_error

    def zscore(self, value):
        d = self.mean - value
        if self.std_error == 0:
            return 0.0 if d == 0 else math.copysign(math.inf, d)
        return d / self.std_error

    def to_dict(self):
        return asdict(self)


class Tally:
    """Sums, cross products and counts of per-sample observation vectors.

    Integer observations are summed exactly in int64, so merging partial
    tallies from any split of the replicas reproduces a single pass bit for
    bit.
    """

    def __init__(self, dim, dtype=np.int64):
        self.dim = int(dim)
        self.n = 0
        self.s1 = np.zeros(dim, dtype=dtype)
        self.s2 = np.zeros((dim, dim), dtype=dtype)

    def add(self, x):
        x = np.asarray(x, dtype=self.s1.dtype)
        self.n += 1
        self.s1 += x
        self.s2 += np.outer(x, x)

    def add_batch(self, X):
        X = np.asarray(X, dtype=self.s1.dtype).reshape(-1, self.dim)
        self.n += X.shape[0]
        self.s1 += X.sum(axis=0)
        self.s2 += X.T @ X

    def merge(self, other: "Tally"):
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        out = Tally(self.dim, np.result_type(self.s1, other.s1))
        out.n = self.n + other.n
        out.s1 = self.s1 + other.s1
        out.s2 = self.s2 + other.s2
        return out

    @classmethod
    def merge_all(cls, tallies):
        tallies = list(tallies)
        out = tallies[0]
        for t in tallies[1:]:
            out = out.merge(t)
        return out

    @property
    def means(self):
        return self.s1 / self.n

    @property
    def cov(self):
        """Sample covariance of the observation vector (population form, divisor ``n``)."""
        m = self.means
        return self.s2 / self.n - np.outer(m, m)

    def binomial(self, i):
        return Estimate.binomial(int(self.s1[i]), self.n)

    def mean_estimate(self, i, kind="normal"):
        m = float(self.means[i])
        var = max(float(self.cov[i, i]), 0.0) * self.n / max(self.n - 1, 1)
        return Estimate(m, math.sqrt(var / self.n), self.n, kind)

    def delta(self, func, grad):
        """Delta-method estimate of ``func(means)`` with gradient ``grad(means)``."""
        m = self.means
        g = np.asarray(grad(m), dtype=np.float64)
        var = float(g @ self.cov @ g) / self.n
        return Estimate(float(func(m)), math.sqrt(max(var, 0.0)), self.n, "delta-method")

    def to_dict(self):
        return {"n": self.n, "s1": self.s1.tolist(), "s2": self.s2.tolist()}

    @classmethod
    def from_dict(cls, d):
        s1 = np.asarray(d["s1"])
        t = cls(s1.size, s1.dtype)
        t.n = int(d["n"])
        t.s1 = s1
        t.s2 = np.asarray(d["s2"], dtype=s1.dtype)
        return t


def ratio_R(tally: Tally, i3=0, pairs=(1, 2, 3)) -> Estimate:
    """``P3 / sqrt(P12 P13 P23)`` from indicator columns with delta-method error."""
    idx = [i3, *pairs]

    def f(m):
        return m[i3] / math.sqrt(m[pairs[0]] * m[pairs[1]] * m[pairs[2]])

    def g(m):
        out = np.zeros(tally.dim)
        R = f(m)
        out[i3] = R / m[i3]
        for p in pairs:
            out[p] += -0.5 * R / m[p]
        return out

    if np.any(tally.means[idx] <= 0):
        raise ValueError("ratio undefined: zero frequency")
    return tally.delta(f, g)


def two_proportion_z(k1, n1, k2, n2):
    """Pooled two-proportion z statistic and two-sided p-value."""
    p = (k1 + k2) / (n1 + n2)
    se = math.sqrt(p * (1 - p) * (1 / n1 + 1 / n2))
    if se == 0:
        return 0.0, 1.0
    z = (k1 / n1 - k2 / n2) / se
    return z, math.erfc(abs(z) / math.sqrt(2.0))
