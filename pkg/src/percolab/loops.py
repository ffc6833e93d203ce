"""Interfaces on the dual hexagonal lattice, the innermost open circuit and loop metrics.

An interface edge ``(s, k)`` separates an open site ``s`` from the closed
site ``s + e_k`` and is traversed with ``s`` on the left, so loops wind
counterclockwise around open clusters and clockwise around closed ones.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .clusters import label_array
from .events import AnnulusSpec, annulus_sets
from .lattice import CIRCUMRADIUS, DQ, DR, GeometryError, LatticeRegion
from .sampling import Configuration

_VANG = np.deg2rad(30.0 + 60.0 * np.arange(6))
HEAD_DX = CIRCUMRADIUS * np.cos(_VANG)
HEAD_DY = CIRCUMRADIUS * np.sin(_VANG)


def edge_heads(region: LatticeRegion, sites, dirs):
    """Embedded head vertex of each directed interface edge."""
    a = region.spacing
    pos = region.positions[sites]
    return np.stack([pos[:, 0] + a * HEAD_DX[dirs], pos[:, 1] + a * HEAD_DY[dirs]], axis=1)


def signed_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True)
class LoopPath:
    """Closed oriented polygon on the dual lattice.

    ``vertices`` are hexagon corners in traversal order; the last connects
    back to the first.  ``sites``/``dirs`` hold the interface edges when the
    loop was traced from a configuration.
    """

    vertices: np.ndarray
    orientation: str
    enclosed: str
    sites: np.ndarray | None = field(default=None, compare=False, repr=False)
    dirs: np.ndarray | None = field(default=None, compare=False, repr=False)

    @classmethod
    def from_vertices(cls, vertices, enclosed=None):
        v = np.asarray(vertices, dtype=np.float64)
        ori = "ccw" if signed_area(v) > 0 else "cw"
        if enclosed is None:
            enclosed = "open" if ori == "ccw" else "closed"
        return cls(v, ori, enclosed)

    def __len__(self):
        return len(self.vertices)

    @property
    def area(self):
        return signed_area(self.vertices)

    def reversed(self):
        return LoopPath(self.vertices[::-1].copy(), "cw" if self.orientation == "ccw" else "ccw",
                        self.enclosed)

    def to_json(self):
        return json.dumps({"orientation": self.orientation, "vertices": self.vertices.round(12).tolist()})


@dataclass
class LoopEnsemble:
    """Closed interfaces of a configuration with their nesting forest.

    ``parents[i]`` is the index of the innermost loop enclosing loop ``i`` or
    -1.  Interfaces cut by the region boundary are kept in ``arcs`` (lists of
    edges) for bookkeeping but are not loops.
    """

    loops: list
    parents: np.ndarray
    arcs: list = field(default_factory=list)

    def __len__(self):
        return len(self.loops)

    @property
    def n_edges(self):
        return sum(len(l) for l in self.loops) + sum(len(a[0]) for a in self.arcs)

    def depth(self):
        d = np.zeros(len(self.loops), dtype=np.int64)
        for i in range(len(self.loops)):
            p = self.parents[i]
            while p >= 0:
                d[i] += 1
                p = self.parents[p]
        return d

    def export(self, fh):
        for l in self.loops:
            fh.write(l.to_json() + "\n")


@dataclass
class TracedInterfaces:
    """Flat arrays describing every interface of a configuration."""

    region: LatticeRegion
    sites: np.ndarray
    dirs: np.ndarray
    offsets: np.ndarray
    closed: np.ndarray

    @property
    def n_interfaces(self):
        return self.offsets.size - 1

    @cached_property
    def heads(self):
        return edge_heads(self.region, self.sites, self.dirs)

    @cached_property
    def areas(self):
        v = self.heads
        x, y = v[:, 0], v[:, 1]
        nxt = np.arange(1, x.size + 1)
        # wrap each interface onto its own first vertex
        ends = self.offsets[1:] - 1
        nxt[ends] = self.offsets[:-1]
        cr = x * y[nxt] - x[nxt] * y
        return 0.5 * np.add.reduceat(cr, self.offsets[:-1]) if x.size else np.zeros(0)

    def segment(self, i):
        return slice(self.offsets[i], self.offsets[i + 1])


def trace_edges(config: Configuration) -> TracedInterfaces:
    reg = config.region
    q0, r0 = reg.origin
    s, k, off, closed = kernels.active().trace_edges(
        np.ascontiguousarray(config.open, dtype=np.bool_), reg.grid, reg.q, reg.r, q0, r0
    )
    return TracedInterfaces(reg, s, k, off, closed)


def nesting_parents(config: Configuration, tr: TracedInterfaces, ccw):
    """Innermost enclosing loop of every closed interface.

    The parent of a counterclockwise loop (outer boundary of an open cluster
    A, closed cluster B outside) is the clockwise outer boundary of B, and
    symmetrically for clockwise loops.
    """
    reg = config.region
    loops = np.flatnonzero(tr.closed)
    first = tr.offsets[:-1][loops]
    s = tr.sites[first]
    k = tr.dirs[first]
    t = reg.index(reg.q[s] + DQ[k], reg.r[s] + DR[k])
    lab_o = label_array(reg, config.open)[s]
    lab_c = label_array(reg, ~config.open)[t]
    is_ccw = ccw[loops]
    outer_open = dict(zip(lab_o[is_ccw].tolist(), np.flatnonzero(is_ccw).tolist()))
    outer_closed = dict(zip(lab_c[~is_ccw].tolist(), np.flatnonzero(~is_ccw).tolist()))
    parents = np.full(loops.size, -1, dtype=np.int64)
    for j in range(loops.size):
        if is_ccw[j]:
            parents[j] = outer_closed.get(int(lab_c[j]), -1)
        else:
            parents[j] = outer_open.get(int(lab_o[j]), -1)
    return parents


def trace_interfaces(config: Configuration) -> LoopEnsemble:
    """All interface loops of ``config`` with open sites on their left."""
    tr = trace_edges(config)
    ccw = tr.areas > 0
    parents = nesting_parents(config, tr, ccw)
    loops, arcs = [], []
    heads = tr.heads
    for i in range(tr.n_interfaces):
        sl = tr.segment(i)
        if tr.closed[i]:
            o = "ccw" if ccw[i] else "cw"
            loops.append(LoopPath(heads[sl], o, "open" if ccw[i] else "closed", tr.sites[sl], tr.dirs[sl]))
        else:
            arcs.append((tr.sites[sl], tr.dirs[sl]))
    return LoopEnsemble(loops, parents, arcs)


def interface_pair_count(config: Configuration) -> int:
    """Number of open/closed nearest-neighbour pairs inside the region."""
    reg = config.region
    nbr = reg.neighbor_table()
    ok = nbr >= 0
    o = config.open
    other = np.where(ok, o[np.where(ok, nbr, 0)], True)
    return int(np.sum(o[:, None] & ok & ~other))


def _on_polygon(v, p, tol=1e-12):
    a = v
    b = np.roll(v, -1, axis=0)
    w = b - a
    t = np.clip(((p[0] - a[:, 0]) * w[:, 0] + (p[1] - a[:, 1]) * w[:, 1]) / np.maximum((w * w).sum(1), 1e-300), 0, 1)
    dx = a[:, 0] + t * w[:, 0] - p[0]
    dy = a[:, 1] + t * w[:, 1] - p[1]
    scale = max(1.0, float(np.abs(v).max()))
    return bool(np.min(dx * dx + dy * dy) <= (tol * scale) ** 2)


def winding_number(loop: LoopPath, p) -> int:
    p = (float(p[0]), float(p[1]))
    v = loop.vertices
    if _on_polygon(v, p):
        raise ValueError("point lies on the loop")
    w = kernels.active().winding_numbers(
        np.ascontiguousarray(v[:, 0]), np.ascontiguousarray(v[:, 1]), np.array([p[0]]), np.array([p[1]])
    )
    return int(w[0])


def separates(loop: LoopPath, p1, p2) -> bool:
    """True iff exactly one of the points is inside (non-zero winding number)."""
    return (winding_number(loop, p1) != 0) != (winding_number(loop, p2) != 0)


@dataclass
class CircuitResult:
    """Innermost open circuit search.

    ``circuit`` lists the circuit sites in counterclockwise order (None when
    there is no circuit), ``interior`` the sites strictly inside, ``loop`` the
    interface running along the inner side of the circuit, and ``explored``
    every site whose state was read, in exploration order.
    """

    circuit: np.ndarray | None
    interior: np.ndarray
    explored: np.ndarray
    loop: LoopPath | None = None

    @property
    def found(self):
        return self.circuit is not None


def innermost_open_circuit(config: Configuration, ann: AnnulusSpec, randomize=False, seed=0) -> CircuitResult:
    """Innermost open circuit of annulus sites surrounding the center.

    Let Z be the set of closed annulus sites joined to the hole by closed
    paths (hole sites act as seeds).  If Z reaches the exterior side there
    is no circuit.  Otherwise every open circuit surrounds Z, and the outer
    site boundary of Z is the circuit with the smallest interior.  Only the
    states of Z and of its neighbours are read, all of which lie on or inside
    the circuit.

    The exploration starts from the lexicographically first hole site;
    ``randomize`` permutes the seeds, which changes the exploration order
    but never the result.
    """
    reg = config.region
    sets = annulus_sets(reg, ann)
    hole = sets["hole"]
    if not hole.any():
        raise GeometryError("inner radius must contain at least one whole hexagon")
    S = sets["S"]
    seeds = np.flatnonzero(hole)
    if randomize:
        from . import rng

        seeds = seeds[np.argsort(rng.uniforms(seed, 0, seeds.size))]
    from .clusters import Explorer

    ex = Explorer(reg)
    z_open = np.ascontiguousarray((~config.open & S) | hole)
    ex.stamp += 1
    q0, r0 = reg.origin
    k = kernels.active()
    empty = np.zeros(0, dtype=np.int64)
    n, _, _, _ = k.bfs(z_open, False, np.uint64(0), np.uint64(0), ex.blocked, reg.grid, reg.q, reg.r, q0, r0,
                       seeds, 0.0, 0.0, 0.0, empty, False, ex.visit, ex.stamp, ex.out)
    Z = ex.out[:n].copy()
    zmask = np.zeros(reg.n_sites, dtype=bool)
    zmask[Z] = True
    inspected = np.flatnonzero((ex.visit == -ex.stamp) & S)
    explored = np.concatenate([Z[~hole[Z]], inspected])
    if np.any(zmask & sets["outer_adj"]):
        return CircuitResult(None, np.zeros(0, dtype=np.int64), explored)

    # unbounded component of the complement of Z, grown from the exterior side
    ext_sites = np.flatnonzero((~S & ~hole) | sets["outer_adj"])
    ex.stamp += 1
    n, _, _, _ = k.bfs(np.ascontiguousarray(~zmask), False, np.uint64(0), np.uint64(0), np.zeros(0, np.bool_),
                       reg.grid, reg.q, reg.r, q0, r0, ext_sites, 0.0, 0.0, 0.0, empty, False,
                       ex.visit, ex.stamp, ex.out)
    umask = np.zeros(reg.n_sites, dtype=bool)
    umask[ex.out[:n]] = True
    boundary = np.zeros(reg.n_sites, dtype=bool)
    boundary[inspected] = True
    circuit_mask = boundary & umask
    interior = np.flatnonzero(~umask)

    # order the circuit along the interface between the filled interior and the circuit
    inside = ~umask
    tr = trace_edges(Configuration.from_bits(reg, ~inside))
    j = int(np.flatnonzero(tr.closed)[0])
    sl = tr.segment(j)
    seq = tr.sites[sl][::-1]  # interface runs clockwise around the interior
    keep = np.ones(seq.size, dtype=bool)
    keep[1:] = seq[1:] != seq[:-1]
    seq = seq[keep]
    if seq.size > 1 and seq[0] == seq[-1]:
        seq = seq[:-1]
    assert np.all(circuit_mask[seq]) and set(seq.tolist()) == set(np.flatnonzero(circuit_mask).tolist())
    loop = LoopPath(tr.heads[sl], "cw", "closed", tr.sites[sl], tr.dirs[sl])
    return CircuitResult(seq, interior, explored, loop)


def check_invariants(config: Configuration, ens: LoopEnsemble | None = None) -> dict:
    """Count violations of the structural laws of traced interfaces.

    ``closure``: each edge ends where the next one starts and the last
    returns to the first.  ``color``: every edge has an open site on its
    left and a closed site on its right, and the loop is counterclockwise
    exactly when the open side is enclosed.  ``nesting``: a loop and its
    parent have opposite orientations and both sites of the child's first
    edge lie inside the parent.  ``edges``: edges on loops and arcs minus
    open/closed neighbour pairs (must be 0).
    """
    if ens is None:
        ens = trace_interfaces(config)
    reg = config.region
    a = reg.spacing
    o = config.open
    wn = kernels.active().winding_numbers
    bad = {"closure": 0, "color": 0, "nesting": 0, "edges": 0, "loops": len(ens.loops)}
    side = a * CIRCUMRADIUS
    inner_pt = []
    for lp in ens.loops:
        s, k = lp.sites, lp.dirs
        t = reg.index(reg.q[s] + DQ[k], reg.r[s] + DR[k])
        heads = edge_heads(reg, s, k)
        tails = edge_heads(reg, s, (k - 1) % 6)
        if not np.allclose(np.roll(heads, 1, axis=0), tails, atol=1e-9 * max(1.0, a)) or \
                not np.allclose(np.hypot(*(heads - tails).T), side):
            bad["closure"] += 1
        ccw = signed_area(lp.vertices) > 0
        if np.any(t < 0) or not np.all(o[s]) or np.any(o[t]) or (lp.orientation == "ccw") != ccw \
                or (lp.enclosed == "open") != ccw:
            bad["color"] += 1
            inner_pt.append(None)
            continue
        vx = np.ascontiguousarray(lp.vertices[:, 0])
        vy = np.ascontiguousarray(lp.vertices[:, 1])
        ps = reg.positions[[s[0], t[0]]]
        w = wn(vx, vy, np.ascontiguousarray(ps[:, 0]), np.ascontiguousarray(ps[:, 1]))
        # the open site is inside a ccw loop, the closed one inside a cw loop
        if (w[0] != 0) != ccw or (w[1] != 0) == ccw:
            bad["color"] += 1
        inner_pt.append(ps)
    for i, p in enumerate(ens.parents):
        if p < 0 or inner_pt[i] is None:
            continue
        par = ens.loops[p]
        if par.orientation == ens.loops[i].orientation:
            bad["nesting"] += 1
            continue
        ps = inner_pt[i]
        w = wn(np.ascontiguousarray(par.vertices[:, 0]), np.ascontiguousarray(par.vertices[:, 1]),
               np.ascontiguousarray(ps[:, 0]), np.ascontiguousarray(ps[:, 1]))
        if np.any(w == 0):
            bad["nesting"] += 1
    bad["edges"] = ens.n_edges - interface_pair_count(config)
    return bad


# metrics ------------------------------------------------------------------

def _sphere(p):
    p = np.asarray(p, dtype=np.float64)
    x, y = p[..., 0], p[..., 1]
    n2 = x * x + y * y
    return np.stack([2 * x, 2 * y, n2 - 1.0], axis=-1) / (1.0 + n2)[..., None]


def sphere_distance(u, v):
    """Geodesic distance for the density ``|dx| / (1 + |x|^2)``.

    Inverse stereographic projection maps ``2|dx| / (1 + |x|^2)`` to the unit
    sphere, so the distance is half the great-circle angle between the images.
    Broadcasts over leading dimensions.
    """
    P = _sphere(u)
    Q = _sphere(v)
    cr = np.cross(P, Q)
    ang = np.arctan2(np.linalg.norm(cr, axis=-1), np.sum(P * Q, axis=-1))
    out = 0.5 * ang
    return float(out) if np.ndim(out) == 0 else out


def resample(vertices, n=256):
    """``n`` points equally spaced in arc length along the closed polygon."""
    v = np.asarray(vertices, dtype=np.float64)
    closed = np.vstack([v, v[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.arange(n) * (cum[-1] / n)
    x = np.interp(t, cum, closed[:, 0])
    y = np.interp(t, cum, closed[:, 1])
    return np.stack([x, y], axis=1)


def loop_distance(g1, g2, n=256):
    """Discrete Frechet distance under the sphere metric, minimized over cyclic shifts.

    Both loops are resampled to ``n`` points of equal arc length.  The result
    bounds the continuum infimum over parametrizations from above.
    """
    v1 = g1.vertices if isinstance(g1, LoopPath) else np.asarray(g1)
    v2 = g2.vertices if isinstance(g2, LoopPath) else np.asarray(g2)
    if len(v1) == 0 or len(v2) == 0:
        raise ValueError("empty loop")
    a = resample(v1, n)
    b = resample(v2, n)
    D = sphere_distance(a[:, None, :], b[None, :, :])
    return float(kernels.active().frechet_cyclic(np.ascontiguousarray(D)))


def ensemble_distance(e1, e2, n=256):
    """Hausdorff distance between loop ensembles under ``loop_distance``.

    Two empty ensembles are at distance 0; an empty and a non-empty one at infinity.
    """
    l1 = e1.loops if isinstance(e1, LoopEnsemble) else list(e1)
    l2 = e2.loops if isinstance(e2, LoopEnsemble) else list(e2)
    if not l1 and not l2:
        return 0.0
    if not l1 or not l2:
        return math.inf
    D = np.array([[loop_distance(a, b, n) for b in l2] for a in l1])
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))
