"""Weighted least-squares power-law and linear fits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .estimates import Estimate


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    slope_std_error: float
    r2: float
    points_used: int
    intercept_std_error: float = 0.0

    @property
    def constant(self):
        return math.exp(self.intercept)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    slope_std_error: float
    intercept_std_error: float
    points_used: int


def _unpack(points):
    xs, ys, ses = [], [], []
    for p in points:
        if isinstance(p[1], Estimate):
            xs.append(float(p[0]))
            ys.append(p[1].mean)
            ses.append(p[1].std_error)
        else:
            xs.append(float(p[0]))
            ys.append(float(p[1]))
            ses.append(float(p[2]) if len(p) > 2 and p[2] is not None else float("nan"))
    return np.array(xs), np.array(ys), np.array(ses)


def wls_line(x, y, w):
    """Weighted least squares ``y = b0 + b1 x`` with covariance ``(X^T W X)^-1``."""
    X = np.stack([np.ones_like(x), x], axis=1)
    A = X.T @ (w[:, None] * X)
    cov = np.linalg.inv(A)
    beta = cov @ (X.T @ (w * y))
    yhat = X @ beta
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = np.sum(w * (y - ybar) ** 2)
    ss_res = np.sum(w * (y - yhat) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return beta, cov, float(r2)


def fit_power_law(points) -> PowerLawFit:
    """Fit ``log y = intercept + slope log x``.

    ``points`` are ``(scale, Estimate)`` pairs or ``(scale, mean[, stderr])``
    tuples.  Weights are ``(mean / stderr)^2``; with no (or zero) errors the
    fit is unweighted and reports a zero slope error only for exact data.
    """
    x, y, se = _unpack(points)
    if x.size < 3:
        raise ValueError("a power-law fit needs at least 3 points")
    if np.any(y <= 0) or np.any(x <= 0):
        raise ValueError("power-law fit needs positive scales and means")
    lx, ly = np.log(x), np.log(y)
    weighted = np.all(np.isfinite(se)) and np.all(se > 0)
    w = (y / se) ** 2 if weighted else np.ones_like(y)
    beta, cov, r2 = wls_line(lx, ly, w)
    if not weighted:
        # unit weights: scale the covariance by the residual variance
        res = ly - (beta[0] + beta[1] * lx)
        dof = max(x.size - 2, 1)
        cov = cov * float(np.sum(res ** 2) / dof)
    return PowerLawFit(float(beta[1]), float(beta[0]), float(math.sqrt(max(cov[1, 1], 0.0))), r2, int(x.size),
                       float(math.sqrt(max(cov[0, 0], 0.0))))


def stabilized_fit(points, min_points=3):
    """Drop the smallest scale until the slope moves by less than its stderr.

    Returns ``(raw_fit, stabilized_fit, dropped)``.
    """
    pts = sorted(points, key=lambda p: float(p[0]))
    raw = fit_power_law(pts)
    cur, dropped = raw, 0
    while len(pts) - dropped - 1 >= min_points:
        nxt = fit_power_law(pts[dropped + 1:])
        if abs(nxt.slope - cur.slope) <= max(cur.slope_std_error, nxt.slope_std_error):
            break
        cur, dropped = nxt, dropped + 1
    return raw, cur, dropped


def fit_linear(x, y, se=None) -> LinearFit:
    """Weighted linear fit (used for extrapolations such as ``R`` against ``1/d``)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least 2 points")
    w = np.ones_like(y) if se is None else 1.0 / np.asarray(se, dtype=np.float64) ** 2
    beta, cov, _ = wls_line(x, y, w)
    if se is None:
        res = y - (beta[0] + beta[1] * x)
        cov = cov * float(np.sum(res ** 2) / max(x.size - 2, 1))
    return LinearFit(float(beta[1]), float(beta[0]), float(math.sqrt(max(cov[1, 1], 0))),
                     float(math.sqrt(max(cov[0, 0], 0))), int(x.size))
