"""Divide-and-color spin field, correlation estimators and smoothed fields in a Dirichlet eigenbasis."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng
from .clusters import ClusterLabels
from .lattice import LatticeRegion, hexagon_area


@dataclass(frozen=True)
class SignAssignment:
    """Independent fair signs indexed by canonical cluster label.

    The sign of the cluster labelled ``c`` is bit ``c`` of the sign stream of
    ``(seed, replica)``; closed clusters (for the two-color field) read bit
    ``c + n_sites``, so all signs are distinct fair coins.
    """

    ids: np.ndarray
    signs: np.ndarray
    seed: int
    replica: int
    closed_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    closed_signs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))

    def __len__(self):
        return int(self.ids.size)

    def as_dict(self):
        return dict(zip(self.ids.tolist(), self.signs.tolist()))

    def sign_of(self, cid):
        j = int(np.searchsorted(self.ids, cid))
        if j >= self.ids.size or self.ids[j] != cid:
            raise KeyError(cid)
        return int(self.signs[j])

    def flipped(self, cid):
        """Copy with the sign of cluster ``cid`` reversed."""
        s = self.signs.copy()
        s[self.ids == cid] *= -1
        return SignAssignment(self.ids, s, self.seed, self.replica, self.closed_ids, self.closed_signs)


def _bits_to_signs(seed, replica, idx):
    k0, k1 = rng.stream_key(seed, replica, rng.TAG_SIGNS)
    return np.where(rng.site_bits(k0, k1, np.asarray(idx, dtype=np.int64)), 1, -1).astype(np.int8)


def assign_signs(labels: ClusterLabels, seed, replica, closed_labels: ClusterLabels | None = None) -> SignAssignment:
    """Fair signs for every open cluster (and every closed cluster if ``closed_labels`` given)."""
    ids = labels.ids.astype(np.int64)
    signs = _bits_to_signs(seed, replica, ids)
    if closed_labels is None:
        return SignAssignment(ids, signs, int(seed), int(replica))
    cids = closed_labels.ids.astype(np.int64)
    csigns = _bits_to_signs(seed, replica, cids + labels.region.n_sites)
    return SignAssignment(ids, signs, int(seed), int(replica), cids, csigns)


def field_sample(labels: ClusterLabels, signs: SignAssignment) -> np.ndarray:
    """Per-site values: the cluster sign at open sites, 0 at closed sites."""
    return labels.site_values(signs.signs).astype(np.int8)


def field_sample_two_color(labels: ClusterLabels, closed_labels: ClusterLabels, signs: SignAssignment):
    """Field with independent signs on open and closed clusters (no zero values)."""
    out = labels.site_values(signs.signs).astype(np.int8)
    out += closed_labels.site_values(signs.closed_signs).astype(np.int8)
    return out


def spin_value(labels: ClusterLabels, signs: SignAssignment, x) -> int:
    cid = labels.labels[labels.region.index_of(x)]
    return 0 if cid < 0 else signs.sign_of(cid)


def _point_labels(labels, points):
    reg = labels.region
    idx = [reg.index_of(p) for p in points]
    if len(set(idx)) != len(idx):
        raise ValueError("marked points must be distinct")
    return labels.labels[idx]


def correlation_partition(labels: ClusterLabels, points) -> int:
    """Conditional expectation of the spin product given the clusters.

    1 when every marked point is open and each cluster holds an even number
    of them, else 0.
    """
    labs = _point_labels(labels, points)
    if np.any(labs < 0):
        return 0
    _, counts = np.unique(labs, return_counts=True)
    return int(np.all(counts % 2 == 0))


def correlation_direct(labels: ClusterLabels, signs: SignAssignment, points) -> int:
    labs = _point_labels(labels, points)
    if np.any(labs < 0):
        return 0
    j = np.searchsorted(signs.ids, labs)
    return int(np.prod(signs.signs[j].astype(np.int64)))


def correlation_two_color(labels, closed_labels, signs, points) -> int:
    """Spin product for the two-color field."""
    reg = labels.region
    idx = [reg.index_of(p) for p in points]
    vals = field_sample_two_color(labels, closed_labels, signs)[idx]
    return int(np.prod(vals.astype(np.int64)))


@dataclass(frozen=True)
class TestFunction:
    """Bounded function on the plane with a rectangular support ``(xmin, ymin, xmax, ymax)``."""

    __test__ = False

    func: Callable
    support: tuple

    def __call__(self, x, y):
        return self.func(x, y)


def box_indicator(L, center=(0.0, 0.0)) -> TestFunction:
    """Indicator of the closed square ``[-L, L]^2`` shifted to ``center``."""
    cx, cy = map(float, center)
    tol = 1e-9 * max(1.0, L)

    def f(x, y):
        return ((np.abs(np.asarray(x) - cx) <= L + tol) & (np.abs(np.asarray(y) - cy) <= L + tol)).astype(np.float64)

    return TestFunction(f, (cx - L, cy - L, cx + L, cy + L))


def hexagon_indicator(region: LatticeRegion, site) -> TestFunction:
    """Indicator of one elementary hexagon; only its own center lies inside."""
    from .lattice import hex_near_far

    c = region.positions[region.index_of(site)]
    a = region.spacing

    def f(x, y):
        dx = (np.asarray(x, dtype=np.float64) - c[0]) / a
        dy = (np.asarray(y, dtype=np.float64) - c[1]) / a
        near, _ = hex_near_far(np.atleast_1d(dx), np.atleast_1d(dy))
        return (near == 0).astype(np.float64).reshape(np.shape(dx))

    h = a / np.sqrt(3.0)
    return TestFunction(f, (c[0] - h, c[1] - h, c[0] + h, c[1] + h))


def zero_function() -> TestFunction:
    return TestFunction(lambda x, y: np.zeros(np.shape(x)), (0.0, 0.0, 0.0, 0.0))


def _check_support(region, f: TestFunction):
    if not region.covers_rect(*f.support):
        from .lattice import GeometryError

        raise GeometryError("test function support exceeds the region")


def field_functional(labels: ClusterLabels, signs: SignAssignment, f: TestFunction, pi_norm, route="sites") -> float:
    """Lattice field tested against ``f``: ``a^2 / pi_norm * sum_x f(x) S_x``.

    ``route="clusters"`` evaluates the same number as ``sum_i sigma_i mu_i(f)``.
    """
    reg = labels.region
    _check_support(reg, f)
    a = reg.spacing
    pos = reg.positions
    fx = np.asarray(f(pos[:, 0], pos[:, 1]), dtype=np.float64)
    if route == "sites":
        S = field_sample(labels, signs).astype(np.float64)
        return float(a * a / pi_norm * np.sum(fx * S))
    if route == "clusters":
        ids, starts, _, order = labels._groups
        if order.size == 0:
            return 0.0
        per = np.add.reduceat(fx[order], starts[:-1]) * (a * a / pi_norm)
        return float(np.sum(signs.signs[np.searchsorted(signs.ids, ids)] * per))
    raise ValueError(f"unknown route {route!r}")


def box_moment_weights(labels: ClusterLabels, L, center=(0.0, 0.0)):
    """``|C ∩ [-L, L]^2|`` for every open cluster (aligned with ``labels.ids``)."""
    reg = labels.region
    inside = box_indicator(L, center)(reg.positions[:, 0], reg.positions[:, 1]) > 0
    lab = labels.labels
    m = inside & (lab >= 0)
    j = np.searchsorted(labels.ids, lab[m])
    return np.bincount(j, minlength=labels.count)


# Dirichlet eigenbasis -------------------------------------------------------

@dataclass(frozen=True)
class Eigenbasis:
    """Dirichlet eigenfunctions of ``-Laplacian`` on ``[-n, n]^2``.

    ``u_ij(x, y) = sin(pi i (x + n) / 2n) sin(pi j (y + n) / 2n) / n`` with
    eigenvalue ``pi^2 (i^2 + j^2) / 4n^2``, for ``1 <= i, j <= K``.
    """

    n: float
    K: int = 64

    def __post_init__(self):
        if not (self.n > 0 and self.K >= 1):
            raise ValueError("need n > 0 and K >= 1")

    @property
    def modes(self):
        return np.arange(1, self.K + 1)

    @property
    def eigenvalues(self):
        i = self.modes
        return (np.pi ** 2 / (4.0 * self.n ** 2)) * (i[:, None] ** 2 + i[None, :] ** 2)

    def factor(self, t):
        """``sin(pi k (t + n) / 2n) / sqrt(n)`` for every mode ``k``: shape ``(K, len(t))``."""
        t = np.asarray(t, dtype=np.float64)
        return np.sin(np.pi * self.modes[:, None] * (t[None, :] + self.n) / (2.0 * self.n)) / np.sqrt(self.n)

    def u(self, i, j, x, y):
        n = self.n
        return np.sin(np.pi * i * (np.asarray(x) + n) / (2 * n)) * np.sin(np.pi * j * (np.asarray(y) + n) / (2 * n)) / n


@dataclass(frozen=True)
class FieldCoefficients:
    """Coefficients ``a_ij`` (``K x K``) of a smoothed field with their provenance."""

    a: np.ndarray
    seed: int | None = None
    replica: int | None = None
    cutoff: float | None = None

    @property
    def K(self):
        return self.a.shape[0]

    def to_csv(self, path_or_fh, basis: Eigenbasis):
        own = isinstance(path_or_fh, (str, bytes)) or hasattr(path_or_fh, "__fspath__")
        fh = open(path_or_fh, "w", newline="") if own else path_or_fh
        try:
            w = csv.writer(fh)
            w.writerow(["i", "j", "lambda", "a_ij"])
            lam = basis.eigenvalues
            for i in range(self.K):
                for j in range(self.K):
                    w.writerow([i + 1, j + 1, repr(float(lam[i, j])), repr(float(self.a[i, j]))])
        finally:
            if own:
                fh.close()


class BoxProjector:
    """Projects site fields in ``[-n, n]^2`` onto an eigenbasis.

    Every lattice row has constant ``y`` and the ``x`` coordinates take a
    small set of half-integer values, so ``sum_x w_x U_i(x) V_j(y)`` is a
    scatter of the weights onto an ``(x, y)`` grid followed by two small
    matrix products.
    """

    def __init__(self, region: LatticeRegion, basis: Eigenbasis, center=(0.0, 0.0)):
        n = basis.n
        if not region.covers_rect(center[0] - n, center[1] - n, center[0] + n, center[1] + n):
            from .lattice import GeometryError

            raise GeometryError("eigenbasis box exceeds the region")
        self.region = region
        self.basis = basis
        pos = region.positions - np.asarray(center, dtype=np.float64)
        tol = 1e-9 * max(1.0, basis.n)
        inside = (np.abs(pos[:, 0]) <= basis.n + tol) & (np.abs(pos[:, 1]) <= basis.n + tol)
        self.sites = np.flatnonzero(inside)
        xkey = np.round(2.0 * pos[self.sites, 0] / region.spacing).astype(np.int64)
        ykey = region.r[self.sites]
        xu, xi = np.unique(xkey, return_inverse=True)
        yu, yi = np.unique(ykey, return_inverse=True)
        self.shape = (xu.size, yu.size)
        self.cell = xi * yu.size + yi
        first_x = np.zeros(xu.size, dtype=np.int64)
        first_x[xi] = self.sites
        first_y = np.zeros(yu.size, dtype=np.int64)
        first_y[yi] = self.sites
        self.U = basis.factor(pos[first_x, 0])
        self.V = basis.factor(pos[first_y, 1])

    def project(self, weights):
        """``a_ij = sum_x w_x u_ij(x)`` for site weights ``w`` (length ``n_sites`` or ``(m, n_sites)``)."""
        w = np.asarray(weights, dtype=np.float64)
        batch = w.ndim == 2
        w = np.atleast_2d(w)[:, self.sites]
        size = self.shape[0] * self.shape[1]
        out = []
        for wm in w:
            G = np.bincount(self.cell, weights=wm, minlength=size).reshape(self.shape)
            out.append(self.U @ G @ self.V.T)
        return np.stack(out) if batch else out[0]


def smoothed_coefficients(labels: ClusterLabels, signs: SignAssignment, basis: Eigenbasis, pi_norm,
                          cutoff=None, center=(0.0, 0.0), projector: BoxProjector | None = None) -> FieldCoefficients:
    """Eigen-coefficients of the smoothed field restricted to the box.

    Each hexagon contributes ``u_ij(center) * A_a`` to its integral, which
    cancels the ``1 / A_a`` density, leaving ``a^2 / pi_norm * sum S_x u_ij(x)``.
    With ``cutoff`` only clusters of diameter strictly larger than it are kept;
    a cutoff of 0 keeps every cluster, single sites included.
    """
    reg = labels.region
    P = projector if projector is not None else BoxProjector(reg, basis, center)
    if P.region is not reg and P.region != reg:
        from .lattice import GeometryError

        raise GeometryError("projector built for another region")
    S = field_sample(labels, signs).astype(np.float64)
    if cutoff is not None:
        if cutoff < 0:
            raise ValueError("cutoff must be nonnegative")
    if cutoff:
        keep = labels.diameters > cutoff
        S = S * labels.site_values(keep).astype(np.float64)
    a = reg.spacing
    coef = P.project(S) * (a * a / pi_norm)
    return FieldCoefficients(coef, signs.seed, signs.replica, None if cutoff is None else float(cutoff))


def hminus_norm(coeffs, basis: Eigenbasis, alpha=1.0) -> float:
    """Squared ``H^{-alpha}`` norm ``sum lambda_ij^{-2 alpha} a_ij^2`` over the first ``K`` modes.

    The coefficient matrix may be larger than the basis; it is truncated.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    a = coeffs.a if isinstance(coeffs, FieldCoefficients) else np.asarray(coeffs)
    K = basis.K
    lam = basis.eigenvalues
    return float(np.sum(lam ** (-2.0 * alpha) * a[:K, :K] ** 2))


def hexagon_cell_area(region: LatticeRegion):
    return hexagon_area(region.spacing)
