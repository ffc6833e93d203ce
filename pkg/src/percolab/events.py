"""Boolean detectors for connection, arm, crossing and circuit events.

Radii are in continuum units.  A site "touches" a circle when its closed
hexagon meets it (tangency counts), so a set of sites reaches ``dB_r`` as a
union of hexagons.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .clusters import ClusterLabels, label_array
from .lattice import GEOM_TOL, GeometryError, LatticeRegion, SiteCoord, embed
from .sampling import Configuration


@dataclass(frozen=True)
class PartitionSpec:
    """Marked sites and a partition of their indices into blocks."""

    points: tuple
    blocks: tuple

    def __post_init__(self):
        pts = tuple(SiteCoord(*p) for p in self.points)
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "blocks", blocks)
        flat = sorted(i for b in blocks for i in b)
        if flat != list(range(len(pts))):
            raise ValueError("blocks must be disjoint and cover every marked index")
        if any(len(b) == 0 for b in blocks):
            raise ValueError("empty block")

    @property
    def even(self):
        return all(len(b) % 2 == 0 for b in self.blocks)


@dataclass(frozen=True)
class AnnulusSpec:
    """Annulus ``B_R(center) minus B_r(center)``."""

    center: tuple
    r: float
    R: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not (0 < self.r < self.R):
            raise ValueError("annulus radii must satisfy 0 < r < R")

    def check(self, region: LatticeRegion):
        """Require every hexagon meeting the closed outer disk to belong to ``region``."""
        region.require_disk(self.center, self.R, "annulus")

    def to_dict(self):
        return {"center": list(self.center), "r": self.r, "R": self.R}


def _tol(x):
    return GEOM_TOL * max(1.0, x)


@lru_cache(maxsize=256)
def annulus_sets(region: LatticeRegion, ann: AnnulusSpec):
    """Site masks for an annulus.

    Returns a dict with
    ``S`` sites whose hexagon meets the closed annulus,
    ``inner``/``outer`` sites of ``S`` whose hexagon meets the inner/outer circle,
    ``hole`` sites whose hexagon lies inside the open inner disk,
    ``inner_adj``/``outer_adj`` sites of ``S`` adjacent to the hole / to the
    exterior (hexagons beyond the outer circle).
    """
    ann.check(region)
    near, far = region.near_far(ann.center)
    r, R = ann.r, ann.R
    S = (near <= R + _tol(R)) & (far >= r - _tol(r))
    hole = far < r - _tol(r)
    ext = ~S & ~hole
    nbr = region.neighbor_table()
    ok = nbr >= 0
    safe = np.where(ok, nbr, 0)
    # region covers the annulus with margin, so missing neighbours lie outside it
    adj_hole = (ok & hole[safe]).any(axis=1)
    adj_ext = (~ok | ext[safe]).any(axis=1)
    out = {
        "S": S,
        "inner": S & (near <= r + _tol(r)),
        "outer": S & (far >= R - _tol(R)),
        "hole": hole,
        "inner_adj": S & adj_hole,
        "outer_adj": S & adj_ext,
        "near": near,
        "far": far,
    }
    for v in out.values():
        v.flags.writeable = False
    return out


def _open_mask(labels: ClusterLabels):
    return labels.labels >= 0


def connection_event(labels: ClusterLabels, points) -> bool:
    if len(points) < 2:
        raise ValueError("a connection event needs at least two points")
    reg = labels.region
    labs = labels.labels[[reg.index_of(p) for p in points]]
    return bool(labs[0] >= 0 and np.all(labs == labs[0]))


def partition_event(labels: ClusterLabels, spec: PartitionSpec) -> bool:
    reg = labels.region
    labs = labels.labels[[reg.index_of(p) for p in spec.points]]
    if np.any(labs < 0):
        return False
    seen = set()
    for b in spec.blocks:
        vals = {int(labs[i]) for i in b}
        if len(vals) != 1:
            return False
        v = vals.pop()
        if v in seen:
            return False
        seen.add(v)
    return True


def one_arm(labels: ClusterLabels, x, r, convention="hexagon") -> bool:
    """``x`` is open and its cluster reaches the circle of radius ``r`` about ``x``."""
    reg = labels.region
    c = embed(x, reg)
    reg.require_disk(c, r, "one_arm")
    cid = labels.labels[reg.index_of(x)]
    if cid < 0:
        return False
    idx = labels.members(cid)
    return bool(np.any(reach_distance(reg, c, idx, convention) >= r - _tol(r)))


def reach_distance(region, point, idx, convention="hexagon"):
    """Distance at which each site counts as reaching a circle about ``point``."""
    if convention == "center":
        d = region.positions[idx] - np.asarray(point)
        return np.hypot(d[:, 0], d[:, 1])
    from .lattice import hex_near_far

    cx, cy = region.to_lattice_units(point)
    px = region.q[idx] + 0.5 * region.r[idx]
    py = 0.8660254037844386 * region.r[idx]
    return hex_near_far(cx - px, cy - py)[1] * region.spacing


def annulus_crossing(labels: ClusterLabels, ann: AnnulusSpec) -> bool:
    """Some open cluster meets ``B_r`` and reaches the circle ``dB_R`` or beyond."""
    reg = labels.region
    ann.check(reg)
    sets = annulus_sets(reg, ann)
    lab = labels.labels
    a = lab[(sets["near"] <= ann.r + _tol(ann.r)) & (lab >= 0)]
    b = lab[(sets["far"] >= ann.R - _tol(ann.R)) & (lab >= 0)]
    return bool(np.intersect1d(a, b).size)


def closed_crossing_in_annulus(config: Configuration, ann: AnnulusSpec) -> bool:
    """Closed path inside the annulus sites from the hole side to the exterior side."""
    sets = annulus_sets(config.region, ann)
    if not sets["hole"].any():
        raise GeometryError("inner radius must contain at least one whole hexagon")
    lab = label_array(config.region, ~config.open & sets["S"])
    a = lab[sets["inner_adj"] & (lab >= 0)]
    b = lab[sets["outer_adj"] & (lab >= 0)]
    return bool(np.intersect1d(a, b).size)


def open_circuit_in_annulus(config: Configuration, ann: AnnulusSpec) -> bool:
    """Open circuit of annulus sites surrounding the center (by duality)."""
    return not closed_crossing_in_annulus(config, ann)


def crossing_clusters(region, open_mask, ann: AnnulusSpec):
    """Labels of clusters of the annulus-restricted configuration touching both circles."""
    sets = annulus_sets(region, ann)
    lab = label_array(region, open_mask & sets["S"])
    a = lab[sets["inner"] & (lab >= 0)]
    b = lab[sets["outer"] & (lab >= 0)]
    return np.intersect1d(a, b)


def four_arm(labels_open: ClusterLabels, labels_closed: ClusterLabels | None, ann: AnnulusSpec) -> bool:
    """At least two distinct open crossing clusters of the annulus.

    On the triangular lattice this is the alternating four-arm event; the
    closed labels are accepted for symmetry of the call but not needed.
    """
    reg = labels_open.region
    ann.check(reg)
    return crossing_clusters(reg, _open_mask(labels_open), ann).size >= 2


def four_arm_closed(labels_closed: ClusterLabels, ann: AnnulusSpec) -> bool:
    """Two distinct closed crossing clusters (color-flipped detector)."""
    reg = labels_closed.region
    ann.check(reg)
    return crossing_clusters(reg, labels_closed.labels >= 0, ann).size >= 2


@dataclass(frozen=True)
class Hole:
    center: tuple
    radius: float


def _hole_masks(region, holes):
    hs = [Hole(tuple(map(float, h[0])), float(h[1])) if not isinstance(h, Hole) else h for h in holes]
    for i in range(len(hs)):
        for j in range(i + 1, len(hs)):
            d = np.hypot(hs[i].center[0] - hs[j].center[0], hs[i].center[1] - hs[j].center[1])
            if d <= hs[i].radius + hs[j].radius:
                raise GeometryError("holes overlap")
    inside, touch = [], []
    for h in hs:
        region.require_disk(h.center, h.radius, "hole")
        near, far = region.near_far(h.center)
        t = _tol(h.radius)
        inside.append(far < h.radius - t)
        touch.append((near <= h.radius + t) & (far >= h.radius - t))
    return hs, inside, touch


def disjoint_connections(config: Configuration, pairs, holes) -> bool:
    """Disjoint open connections hole(x1)-hole(x2) and hole(x3)-hole(x4).

    ``holes`` are ``(center, radius)`` disks; every endpoint of ``pairs`` is a
    continuum point equal to the center of one hole.  Sites whose hexagon lies
    inside a hole are closed; a cluster touches a hole when one of its sites
    meets the hole's circle.
    """
    reg = config.region
    hs, inside, touch = _hole_masks(reg, holes)

    def hole_of(p):
        for i, h in enumerate(hs):
            if abs(h.center[0] - p[0]) < 1e-9 and abs(h.center[1] - p[1]) < 1e-9:
                return i
        raise ValueError(f"pair endpoint {tuple(p)} is not a hole center")

    (p1, p2), (p3, p4) = pairs
    i1, i2, i3, i4 = (hole_of(p) for p in (p1, p2, p3, p4))
    blocked = np.zeros(reg.n_sites, dtype=bool)
    for m in inside:
        blocked |= m
    lab = label_array(reg, config.open & ~blocked)

    def touching(i):
        v = lab[touch[i] & (lab >= 0)]
        return set(np.unique(v).tolist())

    A = touching(i1) & touching(i2)
    B = touching(i3) & touching(i4)
    if not A or not B:
        return False
    return not (len(A) == 1 and A == B)
