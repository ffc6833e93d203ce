"""Triangular lattice geometry, hexagonal cells and finite regions.

Sites carry integer axial coordinates ``(q, r)``.  A region places site
``(0, 0)`` at ``center`` and embeds ``(q, r)`` at
``center + a * (q + r / 2, r * sqrt(3) / 2)``.  Each site owns the pointy-top
hexagon of its Voronoi cell: inradius ``a / 2``, circumradius ``a / sqrt(3)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

SQRT3 = math.sqrt(3.0)
HALF_SQRT3 = 0.5 * SQRT3
# (dq, dr) in counterclockwise order: direction k points at angle 60k degrees
DIRECTIONS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))
DQ = np.array([d[0] for d in DIRECTIONS], dtype=np.int64)
DR = np.array([d[1] for d in DIRECTIONS], dtype=np.int64)

CIRCUMRADIUS = 1.0 / SQRT3  # in lattice units
_ang = np.deg2rad(30.0 + 60.0 * np.arange(6))
HEX_VERTICES = np.stack([CIRCUMRADIUS * np.cos(_ang), CIRCUMRADIUS * np.sin(_ang)], axis=1)
_nang = np.deg2rad(60.0 * np.arange(6))
HEX_NORMALS = np.stack([np.cos(_nang), np.sin(_nang)], axis=1)

GEOM_TOL = 1e-9


class GeometryError(ValueError):
    """An event or region does not fit the requested geometry."""


class SiteCoord(NamedTuple):
    q: int
    r: int


def neighbors(s) -> list[SiteCoord]:
    q, r = s
    return [SiteCoord(q + dq, r + dr) for dq, dr in DIRECTIONS]


def hexagon_area(a=1.0):
    return HALF_SQRT3 * a * a


def lattice_xy(q, r):
    """Embedded position in lattice units, relative to site (0, 0)."""
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    return q + 0.5 * r, HALF_SQRT3 * r


def nearest_site(x, y):
    """Axial coordinates of the site whose hexagon contains (x, y) in lattice units."""
    rf = y / HALF_SQRT3
    qf = x - 0.5 * rf
    best = None
    for q in (math.floor(qf), math.floor(qf) + 1):
        for r in (math.floor(rf), math.floor(rf) + 1):
            px, py = q + 0.5 * r, HALF_SQRT3 * r
            d = (px - x) ** 2 + (py - y) ** 2
            if best is None or d < best[0] - 1e-15:
                best = (d, q, r)
    return SiteCoord(best[1], best[2])


def hex_near_far(dx, dy):
    """Nearest and farthest distance from a point to hexagons.

    ``dx, dy`` are point-minus-hexagon-center offsets in lattice units.  The
    nearest distance is 0 when the point lies in the closed hexagon.
    """
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    vx = HEX_VERTICES[:, 0]
    vy = HEX_VERTICES[:, 1]
    ex = dx[..., None] - vx
    ey = dy[..., None] - vy
    far = np.sqrt(ex * ex + ey * ey).max(axis=-1)

    proj = dx[..., None] * HEX_NORMALS[:, 0] + dy[..., None] * HEX_NORMALS[:, 1]
    inside = proj.max(axis=-1) <= 0.5
    # distance to each edge segment v_k -> v_{k+1}
    wx = np.roll(vx, -1) - vx
    wy = np.roll(vy, -1) - vy
    seg2 = wx * wx + wy * wy
    t = np.clip((ex * wx + ey * wy) / seg2, 0.0, 1.0)
    px = ex - t * wx
    py = ey - t * wy
    near = np.sqrt(px * px + py * py).min(axis=-1)
    near = np.where(inside, 0.0, near)
    return near, far


def disk_candidates(cx, cy, radius):
    """All sites whose hexagon meets the closed disk; lattice units, relative to site (0, 0)."""
    reach = radius + CIRCUMRADIUS + 1e-9
    r_lo = math.floor((cy - reach) / HALF_SQRT3)
    r_hi = math.ceil((cy + reach) / HALF_SQRT3)
    rr = np.arange(r_lo, r_hi + 1)
    q_lo = math.floor(cx - reach - 0.5 * r_hi) - 1
    q_hi = math.ceil(cx + reach - 0.5 * r_lo) + 1
    qq = np.arange(q_lo, q_hi + 1)
    Q, R = np.meshgrid(qq, rr)
    Q = Q.ravel()
    R = R.ravel()
    x, y = lattice_xy(Q, R)
    near, far = hex_near_far(cx - x, cy - y)
    keep = near <= radius * (1 + GEOM_TOL) + GEOM_TOL
    return Q[keep], R[keep], near[keep], far[keep]


@dataclass(frozen=True)
class Domain:
    """Continuum domain; lattice sites embedded outside it are forced closed."""

    shape: str
    extent: float
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.shape not in ("disk", "box"):
            raise ValueError(f"unknown domain shape {self.shape!r}")
        if not self.extent > 0:
            raise ValueError("domain extent must be positive")

    def contains(self, x, y):
        dx = np.asarray(x) - self.center[0]
        dy = np.asarray(y) - self.center[1]
        tol = GEOM_TOL * max(1.0, self.extent)
        if self.shape == "disk":
            return dx * dx + dy * dy <= (self.extent + tol) ** 2
        return (np.abs(dx) <= self.extent + tol) & (np.abs(dy) <= self.extent + tol)

    def to_dict(self):
        return {"shape": self.shape, "extent": self.extent, "center": list(self.center)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["shape"], float(d["extent"]), tuple(float(c) for c in d.get("center", (0, 0))))


SHAPES = ("box", "disk", "rect", "rhombus", "sites")


@dataclass(frozen=True)
class LatticeRegion:
    """Finite set of sites with free boundary.

    ``shape`` is one of

    * ``box``: embedded positions within ``extent`` lattice steps of the shape center
      in both coordinates (a square of side ``2 * extent * a``),
    * ``disk``: embedded positions within ``extent`` lattice steps of the shape center,
    * ``rect``: ``extent = (W, H)``, H rows of W sites in a brick layout,
    * ``rhombus``: ``extent = L``, the parallelogram ``0 <= q, r < L``,
    * ``sites``: ``extent`` is an explicit tuple of ``(q, r)`` pairs.

    The shape is centered at ``center + a * offset`` while site (0, 0) always
    sits at ``center``.  Sites outside ``domain`` are forced closed.
    """

    shape: str
    extent: object
    spacing: float = 1.0
    center: tuple = (0.0, 0.0)
    offset: tuple = (0.0, 0.0)
    domain: Domain | None = field(default=None)

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown region shape {self.shape!r}")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        ext = self.extent
        if self.shape == "rect":
            ext = tuple(int(e) for e in ext)
            if len(ext) != 2 or min(ext) < 1:
                raise ValueError("rect extent must be (W, H) with W, H >= 1")
        elif self.shape == "sites":
            ext = tuple(sorted({(int(q), int(r)) for q, r in ext}, key=lambda t: (t[1], t[0])))
            if not ext:
                raise ValueError("explicit site list is empty")
        elif self.shape == "rhombus":
            ext = int(ext)
            if ext < 1:
                raise ValueError("rhombus side must be >= 1")
        else:
            ext = float(ext)
            if ext < 1:
                raise ValueError("region extent must be at least one site")
        object.__setattr__(self, "extent", ext)
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "offset", tuple(float(c) for c in self.offset))

    # constructors
    @classmethod
    def box(cls, half_width, spacing=1.0, center=(0.0, 0.0), **kw):
        return cls("box", half_width, spacing, center, **kw)

    @classmethod
    def disk(cls, radius, spacing=1.0, center=(0.0, 0.0), **kw):
        return cls("disk", radius, spacing, center, **kw)

    @classmethod
    def rect(cls, width, height, spacing=1.0, center=(0.0, 0.0), **kw):
        return cls("rect", (width, height), spacing, center, **kw)

    @classmethod
    def from_sites(cls, sites, spacing=1.0, center=(0.0, 0.0), **kw):
        return cls("sites", tuple(tuple(s) for s in sites), spacing, center, **kw)

    @classmethod
    def rhombus(cls, side, spacing=1.0, center=(0.0, 0.0), **kw):
        return cls("rhombus", side, spacing, center, **kw)

    def with_domain(self, domain):
        return LatticeRegion(self.shape, self.extent, self.spacing, self.center, self.offset, domain)

    # site tables
    @cached_property
    def _tables(self):
        q, r = self._enumerate()
        order = np.lexsort((q, r))
        q = q[order].astype(np.int64)
        r = r[order].astype(np.int64)
        q0, r0 = int(q.min()), int(r.min())
        nq, nr = int(q.max()) - q0 + 1, int(r.max()) - r0 + 1
        grid = np.full((nr, nq), -1, dtype=np.int32)
        grid[r - r0, q - q0] = np.arange(q.size, dtype=np.int32)
        return q, r, grid, q0, r0

    def _enumerate(self):
        ox, oy = self.offset
        if self.shape == "sites":
            arr = np.array(self.extent, dtype=np.int64)
            return arr[:, 0], arr[:, 1]
        if self.shape == "rhombus":
            L = self.extent
            Q, R = np.meshgrid(np.arange(L), np.arange(L))
            return Q.ravel(), R.ravel()
        if self.shape == "rect":
            W, H = self.extent
            rr = np.arange(H) - (H - 1) // 2
            Q = (np.arange(W) - (W - 1) // 2)[None, :] - np.floor_divide(rr, 2)[:, None]
            R = np.broadcast_to(rr[:, None], Q.shape)
            return Q.ravel(), R.ravel()
        ext = self.extent
        reach = ext + 1.0
        r_lo = math.floor((oy - reach) / HALF_SQRT3)
        r_hi = math.ceil((oy + reach) / HALF_SQRT3)
        rr = np.arange(r_lo, r_hi + 1)
        qq = np.arange(math.floor(ox - reach - 0.5 * r_hi) - 1, math.ceil(ox + reach - 0.5 * r_lo) + 2)
        Q, R = np.meshgrid(qq, rr)
        Q, R = Q.ravel(), R.ravel()
        x, y = lattice_xy(Q, R)
        tol = GEOM_TOL * max(1.0, ext)
        if self.shape == "box":
            keep = (np.abs(x - ox) <= ext + tol) & (np.abs(y - oy) <= ext + tol)
        else:
            keep = (x - ox) ** 2 + (y - oy) ** 2 <= (ext + tol) ** 2
        return Q[keep], R[keep]

    @property
    def q(self):
        return self._tables[0]

    @property
    def r(self):
        return self._tables[1]

    @property
    def grid(self):
        """Site index per ``(r - r0, q - q0)`` cell, -1 outside the region."""
        return self._tables[2]

    @property
    def origin(self):
        """``(q0, r0)``: axial coordinates of grid cell (0, 0)."""
        return self._tables[3], self._tables[4]

    @property
    def n_sites(self):
        return int(self._tables[0].size)

    def __len__(self):
        return self.n_sites

    def sites(self):
        return [SiteCoord(int(a), int(b)) for a, b in zip(self.q, self.r)]

    def index(self, q, r):
        """Site indices for axial coordinate arrays; -1 outside the region."""
        q = np.asarray(q, dtype=np.int64)
        r = np.asarray(r, dtype=np.int64)
        q0, r0 = self.origin
        gq = q - q0
        gr = r - r0
        nr, nq = self.grid.shape
        ok = (gq >= 0) & (gq < nq) & (gr >= 0) & (gr < nr)
        out = np.full(np.broadcast(q, r).shape, -1, dtype=np.int64)
        out[ok] = self.grid[gr[ok], gq[ok]]
        return out

    def neighbor_table(self, idx=None):
        """(n, 6) neighbor site indices in direction order, -1 outside the region."""
        qs = self.q if idx is None else self.q[idx]
        rs = self.r if idx is None else self.r[idx]
        return self.index(qs[:, None] + DQ[None, :], rs[:, None] + DR[None, :])

    def index_of(self, s) -> int:
        i = int(self.index(s[0], s[1]))
        if i < 0:
            raise GeometryError(f"site {tuple(s)} is outside the region")
        return i

    def contains(self, s) -> bool:
        return int(self.index(s[0], s[1])) >= 0

    def site(self, i) -> SiteCoord:
        return SiteCoord(int(self.q[i]), int(self.r[i]))

    # embedding
    def embed_xy(self, q, r):
        x, y = lattice_xy(q, r)
        a = self.spacing
        return self.center[0] + a * x, self.center[1] + a * y

    @cached_property
    def positions(self):
        x, y = self.embed_xy(self.q, self.r)
        return np.stack([x, y], axis=1)

    def to_lattice_units(self, point):
        a = self.spacing
        return (point[0] - self.center[0]) / a, (point[1] - self.center[1]) / a

    @cached_property
    def forced_closed(self):
        """Boolean mask of sites closed by the domain, or None."""
        if self.domain is None:
            return None
        pos = self.positions
        return ~self.domain.contains(pos[:, 0], pos[:, 1])

    @property
    def n_free(self):
        fc = self.forced_closed
        return self.n_sites if fc is None else int(self.n_sites - fc.sum())

    def near_far(self, point):
        """Nearest/farthest distance (continuum units) from ``point`` to every site's hexagon."""
        cx, cy = self.to_lattice_units(point)
        x, y = lattice_xy(self.q, self.r)
        near, far = hex_near_far(cx - x, cy - y)
        return near * self.spacing, far * self.spacing

    def center_dist(self, point):
        d = self.positions - np.asarray(point, dtype=np.float64)
        return np.hypot(d[:, 0], d[:, 1])

    def disk_sites(self, point, radius):
        """Lattice sites (q, r arrays) whose hexagon meets the closed disk, regardless of region."""
        cx, cy = self.to_lattice_units(point)
        a = self.spacing
        Q, R, near, far = disk_candidates(cx, cy, radius / a)
        return Q, R, near * a, far * a

    def covers_disk(self, point, radius, margin=0.0):
        """True if every hexagon meeting the disk of radius ``radius + margin`` belongs to the region."""
        Q, R, _, _ = self.disk_sites(point, radius + margin)
        return bool(np.all(self.index(Q, R) >= 0))

    def covers_rect(self, xmin, ymin, xmax, ymax):
        """True if every hexagon meeting the closed rectangle belongs to the region."""
        cx, cy = 0.5 * (xmin + xmax), 0.5 * (ymin + ymax)
        Q, R, _, _ = self.disk_sites((cx, cy), 0.5 * float(np.hypot(xmax - xmin, ymax - ymin)))
        a = self.spacing
        x = self.center[0] + a * (Q + 0.5 * R)
        y = self.center[1] + a * HALF_SQRT3 * R
        # hexagon within its circumradius of the rectangle (conservative)
        h = a * CIRCUMRADIUS
        hit = (x >= xmin - h) & (x <= xmax + h) & (y >= ymin - h) & (y <= ymax + h)
        return bool(np.all(self.index(Q[hit], R[hit]) >= 0))

    def require_disk(self, point, radius, what="event"):
        if not self.covers_disk(point, radius):
            raise GeometryError(f"{what}: disk of radius {radius} at {tuple(point)} exceeds the region")

    # serialization
    def to_dict(self):
        d = {"shape": self.shape}
        if self.shape == "box":
            d["half_width"] = self.extent
        elif self.shape == "disk":
            d["radius"] = self.extent
        elif self.shape == "rect":
            d["width"], d["height"] = self.extent
        elif self.shape == "sites":
            d["sites"] = [list(t) for t in self.extent]
        else:
            d["side"] = self.extent
        d["spacing"] = self.spacing
        d["center"] = list(self.center)
        if any(self.offset):
            d["offset"] = list(self.offset)
        if self.domain is not None:
            d["domain"] = self.domain.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        shape = d["shape"]
        if shape == "box":
            ext = d["half_width"]
        elif shape == "disk":
            ext = d["radius"]
        elif shape == "rect":
            ext = (d["width"], d["height"])
        elif shape == "rhombus":
            ext = d["side"]
        elif shape == "sites":
            ext = tuple(tuple(t) for t in d["sites"])
        else:
            raise ValueError(f"unknown region shape {shape!r}")
        dom = d.get("domain")
        return cls(
            shape,
            ext,
            float(d.get("spacing", 1.0)),
            tuple(d.get("center", (0.0, 0.0))),
            tuple(d.get("offset", (0.0, 0.0))),
            Domain.from_dict(dom) if dom else None,
        )

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def embed(s, region: LatticeRegion):
    x, y = region.embed_xy(s[0], s[1])
    return np.array([float(x), float(y)])


def sites_intersecting_circle(region: LatticeRegion, center, radius, convention="hexagon"):
    """Sites of ``region`` whose closed hexagon meets the circle of ``radius`` about ``center``.

    With ``convention="center"`` a site qualifies when its embedded center lies
    within half a lattice step of the circle instead.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    mask = circle_mask(region, center, radius, convention)
    idx = np.flatnonzero(mask)
    return {SiteCoord(int(region.q[i]), int(region.r[i])) for i in idx}


def circle_mask(region: LatticeRegion, center, radius, convention="hexagon"):
    tol = GEOM_TOL * max(1.0, radius)
    if convention == "center":
        d = region.center_dist(center)
        return np.abs(d - radius) <= 0.5 * region.spacing + tol
    if convention != "hexagon":
        raise ValueError(f"unknown boundary convention {convention!r}")
    near, far = region.near_far(center)
    return (near <= radius + tol) & (far >= radius - tol)
