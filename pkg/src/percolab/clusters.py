"""Open-cluster labeling and per-cluster counting measures."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .lattice import LatticeRegion
from .sampling import Configuration

BRUTE_DIAMETER_LIMIT = 64


def label_array(region: LatticeRegion, open_mask):
    """Canonical labels for an arbitrary open mask (minimum site index, -1 closed)."""
    q0, r0 = region.origin
    mask = np.ascontiguousarray(open_mask, dtype=np.bool_)
    return kernels.active().label_clusters(mask, region.grid, region.q, region.r, q0, r0)


class ClusterLabels:
    """Cluster structure of one configuration.

    ``labels[i]`` is the minimum site index of the cluster of site ``i`` or -1
    when the site is closed.  Cluster ids are these canonical labels.
    """

    def __init__(self, region: LatticeRegion, labels, color="open"):
        self.region = region
        self.labels = np.asarray(labels, dtype=np.int64)
        self.labels.flags.writeable = False
        self.color = color

    @cached_property
    def _groups(self):
        lab = self.labels
        members = np.flatnonzero(lab >= 0)
        order = members[np.argsort(lab[members], kind="stable")]
        ids, starts, sizes = np.unique(lab[order], return_index=True, return_counts=True)
        return ids, np.append(starts, order.size).astype(np.int64), sizes, order

    @property
    def ids(self):
        return self._groups[0]

    @property
    def sizes(self):
        return self._groups[2]

    @property
    def count(self):
        return int(self._groups[0].size)

    def _slot(self, cid):
        ids = self._groups[0]
        j = int(np.searchsorted(ids, cid))
        if j >= ids.size or ids[j] != cid:
            raise KeyError(f"unknown cluster id {cid}")
        return j

    def members(self, cid):
        ids, starts, _, order = self._groups
        j = self._slot(cid)
        return order[starts[j]:starts[j + 1]]

    def size_of(self, cid):
        return int(self.sizes[self._slot(cid)])

    def cluster_of(self, s) -> int:
        return int(self.labels[self.region.index_of(s)])

    @cached_property
    def bboxes(self):
        """Per-cluster (xmin, ymin, xmax, ymax) of embedded sites."""
        ids, starts, _, order = self._groups
        pos = self.region.positions[order]
        if order.size == 0:
            return np.zeros((0, 4))
        seg = starts[:-1]
        return np.stack(
            [
                np.minimum.reduceat(pos[:, 0], seg),
                np.minimum.reduceat(pos[:, 1], seg),
                np.maximum.reduceat(pos[:, 0], seg),
                np.maximum.reduceat(pos[:, 1], seg),
            ],
            axis=1,
        )

    @cached_property
    def diameters(self):
        """Exact Euclidean diameters of the embedded clusters."""
        ids, starts, _, order = self._groups
        pos = self.region.positions
        return kernels.active().cluster_diameters(
            order, starts, np.ascontiguousarray(pos[:, 0]), np.ascontiguousarray(pos[:, 1]), BRUTE_DIAMETER_LIMIT
        )

    def diameter_of(self, cid):
        return float(self.diameters[self._slot(cid)])

    def site_values(self, per_cluster):
        """Broadcast a per-cluster array (aligned with ``ids``) to sites; 0 off-cluster."""
        out = np.zeros(self.region.n_sites, dtype=np.asarray(per_cluster).dtype)
        lab = self.labels
        m = lab >= 0
        out[m] = np.asarray(per_cluster)[np.searchsorted(self.ids, lab[m])]
        return out


def label(config: Configuration) -> ClusterLabels:
    """Union-find labeling of the open clusters of ``config``."""
    return ClusterLabels(config.region, label_array(config.region, config.open), "open")


def label_closed(config: Configuration) -> ClusterLabels:
    """Clusters of closed sites (the complement configuration)."""
    return ClusterLabels(config.region, label_array(config.region, ~config.open), "closed")


def same_cluster(labels: ClusterLabels, x, y) -> bool:
    a = labels.labels[labels.region.index_of(x)]
    b = labels.labels[labels.region.index_of(y)]
    return bool(a >= 0 and a == b)


@dataclass(frozen=True)
class ClusterMeasure:
    """Normalized counting measure of one cluster: mass ``a^2 / pi_norm`` per site."""

    cluster_id: int
    points: np.ndarray
    weight: float
    pi_norm: float

    @property
    def mass(self):
        return self.weight * len(self.points)

    def integrate(self, f):
        """``sum_x weight * f(x)`` with ``f`` vectorized over ``(x, y)`` arrays."""
        vals = np.asarray(f(self.points[:, 0], self.points[:, 1]), dtype=np.float64)
        vals = np.broadcast_to(vals, (len(self.points),))
        return float(self.weight * np.sum(vals))


def cluster_measure(labels: ClusterLabels, cid, pi_norm) -> ClusterMeasure:
    if not pi_norm > 0:
        raise ValueError("pi_norm must be positive")
    idx = labels.members(cid)
    a = labels.region.spacing
    return ClusterMeasure(int(cid), labels.region.positions[idx], a * a / pi_norm, float(pi_norm))


@dataclass
class Exploration:
    """Result of one lazy cluster exploration (continuum units)."""

    sites: np.ndarray
    max_far: float
    found: np.ndarray
    stopped: bool


class Explorer:
    """Reusable lazy BFS over a region.

    Site states are either read from a configuration or regenerated on the
    fly from ``(seed, replica)``, so only the explored part of a large region
    is ever sampled.  The visit array is reused between calls through a
    stamp counter; ``explore(..., fresh=False)`` keeps the marks of the
    previous call so several clusters of one configuration can be explored
    without revisiting.
    """

    def __init__(self, region: LatticeRegion, blocked=None):
        self.region = region
        n = region.n_sites
        self.visit = np.zeros(n, dtype=np.int64)
        self.out = np.empty(n, dtype=np.int64)
        self.stamp = 0
        bl = region.forced_closed
        if blocked is not None:
            bl = blocked if bl is None else (bl | blocked)
        self.blocked = np.zeros(0, dtype=np.bool_) if bl is None else np.ascontiguousarray(bl, dtype=np.bool_)
        self._empty_mask = np.zeros(0, dtype=np.bool_)

    def explore(self, starts, *, config=None, seed=None, replica=None, center=None, stop_radius=0.0,
                targets=(), stop_on_targets=False, fresh=True) -> Exploration:
        from . import rng

        reg = self.region
        if fresh or self.stamp == 0:
            self.stamp += 1
        if config is not None:
            open_mask = np.ascontiguousarray(config.open, dtype=np.bool_)
            use_hash, k0, k1 = False, 0, 0
        else:
            open_mask = self._empty_mask
            use_hash = True
            k0, k1 = rng.stream_key(seed, replica)
        a = reg.spacing
        if center is None:
            cx = cy = 0.0
        else:
            cx, cy = reg.to_lattice_units(center)
        starts = np.atleast_1d(np.asarray(starts, dtype=np.int64))
        targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
        q0, r0 = reg.origin
        n, max_far, found, stopped = kernels.active().bfs(
            open_mask, use_hash, np.uint64(k0), np.uint64(k1), self.blocked, reg.grid, reg.q, reg.r, q0, r0,
            starts, float(cx), float(cy), float(stop_radius / a), targets, bool(stop_on_targets),
            self.visit, self.stamp, self.out,
        )
        return Exploration(self.out[:n].copy(), float(max_far) * a, np.asarray(found), bool(stopped))
