"""Exact probabilities on enumerable regions.

Two independent routes are provided.  The loop route enumerates
configurations and calls the event detectors.  The bitset route encodes
every configuration as an integer and evaluates connectivity by
bit-parallel flooding over all ``2^N`` codes at once, without touching the
cluster or event code; it serves as the oracle for the detectors.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from .. import events
from ..lattice import GeometryError, LatticeRegion, embed
from ..sampling import MAX_ENUM_SITES, Configuration, enumerate_all, free_sites
from .specs import EventSpec


class GuardError(ValueError):
    """Enumeration requested on a region with too many free sites."""


def check_guard(region: LatticeRegion, limit=MAX_ENUM_SITES):
    n = region.n_free
    if n > limit:
        raise GuardError(f"enumeration over {n} free sites exceeds the guard of {limit}")
    return n


def brute_force_probability(region: LatticeRegion, spec: EventSpec, method="bitset") -> Fraction:
    """Exact probability of ``spec`` as favourable count over ``2^N``."""
    n = check_guard(region)
    spec.check(region)
    if method == "loop":
        fav = sum(1 for c in enumerate_all(region) if spec.evaluate(c))
    elif method == "bitset":
        fav = int(BitsetEnumerator(region).indicator(spec).sum())
    else:
        raise ValueError(f"unknown method {method!r}")
    return Fraction(fav, 2 ** n)


class BitsetEnumerator:
    """All configurations of a small region as integer codes.

    Code bit ``j`` is the state of the ``j``-th free site; forced-closed
    sites are always 0.  Masks over sites use the same bit positions.
    """

    def __init__(self, region: LatticeRegion):
        self.region = region
        self.N = check_guard(region)
        self.free = free_sites(region)
        self.bit_of = np.full(region.n_sites, -1, dtype=np.int64)
        self.bit_of[self.free] = np.arange(self.free.size)
        self.codes = np.arange(2 ** self.N, dtype=np.int64)
        nb = region.neighbor_table()
        self.nbr_mask = np.zeros(self.N, dtype=np.int64)
        for j, s in enumerate(self.free):
            for t in nb[s]:
                if t >= 0 and self.bit_of[t] >= 0:
                    self.nbr_mask[j] |= 1 << int(self.bit_of[t])

    def mask(self, site_mask) -> int:
        """Integer mask of the free sites selected by a boolean site array or index list."""
        sm = np.asarray(site_mask)
        idx = np.flatnonzero(sm) if sm.dtype == bool else sm
        out = 0
        for s in np.atleast_1d(idx):
            b = self.bit_of[int(s)]
            if b >= 0:
                out |= 1 << int(b)
        return out

    def bit(self, site) -> int:
        return self.mask([self.region.index_of(site)])

    def flood(self, seeds, allowed):
        """Sites reachable from ``seeds`` through ``allowed`` (both per-code int arrays)."""
        R = seeds & allowed
        while True:
            grow = np.zeros_like(R)
            for j in range(self.N):
                grow |= np.where((R >> j) & 1, self.nbr_mask[j], 0)
            nxt = (R | grow) & allowed
            if np.array_equal(nxt, R):
                return R
            R = nxt

    def clusters_touching(self, allowed, seed_mask):
        """Per-code list of cluster masks meeting ``seed_mask``, grown seed by seed."""
        covered = np.zeros_like(self.codes)
        out = []
        for j in range(self.N):
            if not (seed_mask >> j) & 1:
                continue
            start = np.where(((allowed >> j) & 1).astype(bool) & ~((covered >> j) & 1).astype(bool), 1 << j, 0)
            C = self.flood(start, allowed)
            covered |= C
            out.append(C)
        return out

    # events --------------------------------------------------------------

    def indicator(self, spec: EventSpec) -> np.ndarray:
        k = spec.kind
        p = spec.params
        reg = self.region
        C = self.codes
        if k == "always":
            return np.ones(C.size, dtype=bool)
        if k == "never":
            return np.zeros(C.size, dtype=bool)
        if k == "site_open":
            return (C & self.bit(p["x"])) != 0
        if k in ("connection", "partition", "correlation"):
            bits = [self.bit(s) for s in p["points"]]
            reach = [self.flood(np.full(C.size, b), C) for b in bits]
            is_open = np.all([(C & b) != 0 for b in bits], axis=0)
            same = [[(reach[i] & bits[j]) != 0 for j in range(len(bits))] for i in range(len(bits))]
            if k == "connection":
                return is_open & np.all([same[0][j] for j in range(len(bits))], axis=0)
            if k == "correlation":
                ok = is_open.copy()
                for i in range(len(bits)):
                    cnt = np.sum([same[i][j] for j in range(len(bits))], axis=0)
                    ok &= cnt % 2 == 0
                return ok
            blocks = p["blocks"]
            ok = is_open.copy()
            for bi, b in enumerate(blocks):
                for j in b:
                    ok &= same[b[0]][j]
                for b2 in blocks[bi + 1:]:
                    ok &= ~same[b[0]][b2[0]]
            return ok
        if k == "one_arm":
            c = embed(p["x"], reg)
            reg.require_disk(c, float(p["r"]), "one_arm")
            reach_d = events.reach_distance(reg, c, np.arange(reg.n_sites), p.get("convention", "hexagon"))
            target = self.mask(reach_d >= float(p["r"]) - 1e-9 * max(1.0, float(p["r"])))
            R = self.flood(np.full(C.size, self.bit(p["x"])), C)
            return (R & target) != 0
        if k in ("annulus_crossing", "open_circuit", "closed_crossing", "four_arm", "four_arm_closed"):
            from .specs import _ann

            ann = _ann(p)
            sets = events.annulus_sets(reg, ann)
            if k == "annulus_crossing":
                tol = 1e-9
                inner = self.mask(sets["near"] <= ann.r + tol * max(1, ann.r))
                outer = self.mask(sets["far"] >= ann.R - tol * max(1, ann.R))
                R = self.flood(C & inner, C)
                return (R & outer) != 0
            S = self.mask(sets["S"])
            if k in ("open_circuit", "closed_crossing"):
                if not sets["hole"].any():
                    raise GeometryError("inner radius must contain at least one whole hexagon")
                full = (1 << self.N) - 1
                closed = (~C) & full & S
                R = self.flood(closed & self.mask(sets["inner_adj"]), closed)
                cross = (R & self.mask(sets["outer_adj"])) != 0
                return ~cross if k == "open_circuit" else cross
            full = (1 << self.N) - 1
            allowed = (C if k == "four_arm" else (~C) & full) & S
            inner, outer = self.mask(sets["inner"]), self.mask(sets["outer"])
            count = np.zeros(C.size, dtype=np.int64)
            for cl in self.clusters_touching(allowed, inner):
                count += (cl & outer) != 0
            return count >= 2
        if k == "disjoint_connections":
            hs, inside, touch = events._hole_masks(reg, p["holes"])
            hole_mask = 0
            for m in inside:
                hole_mask |= self.mask(m)
            full = (1 << self.N) - 1
            allowed = C & (full & ~hole_mask)
            tmask = [self.mask(t) for t in touch]

            def hole_of(pt):
                for i, h in enumerate(hs):
                    if abs(h.center[0] - pt[0]) < 1e-9 and abs(h.center[1] - pt[1]) < 1e-9:
                        return i
                raise ValueError("pair endpoint is not a hole center")

            (p1, p2), (p3, p4) = p["pairs"]
            i1, i2, i3, i4 = (hole_of(x) for x in (p1, p2, p3, p4))
            seeds = tmask[i1] | tmask[i2] | tmask[i3] | tmask[i4]
            nA = np.zeros(C.size, dtype=np.int64)
            nB = np.zeros(C.size, dtype=np.int64)
            nAB = np.zeros(C.size, dtype=np.int64)
            for cl in self.clusters_touching(allowed, seeds):
                a = ((cl & tmask[i1]) != 0) & ((cl & tmask[i2]) != 0)
                b = ((cl & tmask[i3]) != 0) & ((cl & tmask[i4]) != 0)
                nA += a
                nB += b
                nAB += a & b
            return (nA >= 1) & (nB >= 1) & ~((nA == 1) & (nB == 1) & (nAB == 1))
        raise ValueError(f"no bitset route for {k!r}")


# n-point decomposition ------------------------------------------------------

def set_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def even_partitions(n):
    return [p for p in set_partitions(range(n)) if all(len(b) % 2 == 0 for b in p)]


def sign_averaged_correlation(region: LatticeRegion, points) -> Fraction:
    """Exact spin correlation: average of the spin product over every configuration and every sign choice."""
    from ..clusters import label
    from ..colorfield import SignAssignment, correlation_direct

    n = check_guard(region)
    total = Fraction(0)
    for c in enumerate_all(region):
        lab = label(c)
        ids = lab.ids.astype(np.int64)
        if ids.size == 0:
            continue
        # only clusters holding marked points influence the product
        marked = sorted({int(lab.labels[region.index_of(p)]) for p in points} - {-1})
        acc = 0
        for choice in itertools.product((1, -1), repeat=len(marked)):
            signs = np.ones(ids.size, dtype=np.int8)
            for cid, sgn in zip(marked, choice):
                signs[np.searchsorted(ids, cid)] = sgn
            acc += correlation_direct(lab, SignAssignment(ids, signs, 0, 0), points)
        total += Fraction(acc, 2 ** len(marked))
    return total / 2 ** n


def npoint_decomposition(region: LatticeRegion, points):
    """``(lhs, rhs, terms)``: exact spin correlation against the sum over even partitions."""
    lhs = sign_averaged_correlation(region, points)
    en = BitsetEnumerator(region)
    terms = {}
    for part in even_partitions(len(points)):
        spec = EventSpec("partition", {"points": [tuple(p) for p in points], "blocks": [tuple(b) for b in part]})
        terms[tuple(tuple(b) for b in part)] = Fraction(int(en.indicator(spec).sum()), 2 ** en.N)
    return lhs, sum(terms.values(), Fraction(0)), terms


# surrounding cycles and the innermost circuit ------------------------------

def surrounding_cycles(region: LatticeRegion, site_mask, center=(0.0, 0.0)):
    """Every simple cycle of the induced subgraph on ``site_mask`` that winds once around ``center``.

    Returned as ``(sites, interior)`` index arrays, sorted by interior size.
    Exponential; meant for micro-annuli of about twenty sites.
    """
    idx = np.flatnonzero(site_mask)
    allowed = set(idx.tolist())
    nb = region.neighbor_table()
    adj = {int(s): [int(t) for t in nb[s] if t >= 0 and int(t) in allowed] for s in idx}
    pos = region.positions - np.asarray(center, dtype=np.float64)
    ang = np.arctan2(pos[:, 1], pos[:, 0])

    def dth(a, b):
        return (ang[b] - ang[a] + math.pi) % (2 * math.pi) - math.pi

    found = set()
    out = []
    for start in sorted(allowed):
        # cycles whose minimum vertex is ``start``
        stack = [(start, [start], 0.0)]
        while stack:
            v, path, wind = stack.pop()
            for w in adj[v]:
                if w == start and len(path) >= 3:
                    total = wind + dth(v, w)
                    if abs(abs(total) - 2 * math.pi) < 1e-6:
                        key = frozenset(path)
                        if key not in found:
                            found.add(key)
                            out.append(list(path))
                elif w > start and w not in path:
                    stack.append((w, path + [w], wind + dth(v, w)))
    res = []
    for cyc in out:
        poly = pos[cyc]
        inside = _winding(poly, pos) != 0
        inside[cyc] = False
        res.append((np.array(cyc, dtype=np.int64), np.flatnonzero(inside)))
    res.sort(key=lambda t: (t[1].size, t[0].size, sorted(t[0].tolist())))
    return res


def _winding(poly, pts):
    ax, ay = poly[:, 0], poly[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    cr = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
    up = (ay <= y) & (by > y) & (cr > 0)
    down = (ay > y) & (by <= y) & (cr < 0)
    return up.sum(axis=1) - down.sum(axis=1)


def innermost_cycle_index(en: BitsetEnumerator, cycles):
    """Per code, index into ``cycles`` of the open cycle with the smallest interior, or -1."""
    out = np.full(en.codes.size, -1, dtype=np.int64)
    for ci in range(len(cycles) - 1, -1, -1):
        m = en.mask(cycles[ci][0])
        out[(en.codes & m) == m] = ci
    return out


def stopping_set_identity(region: LatticeRegion, ann, target_mask, conditioning="point", reference="connected"):
    """Exact check that the law outside the innermost open circuit factorizes.

    For every innermost open circuit ``g`` of ``ann`` (found by exhaustive
    cycle search) and every admissible interior configuration ``w``, compare
    the conditional law of the configuration outside ``g`` given
    ``(w, g open, E)`` with its law given ``g <-> T``.  ``E`` is ``0 <-> T``
    (``conditioning="point"``) or a crossing from the inner circle to ``T``
    (``conditioning="annulus"``); ``T`` is ``target_mask``.
    ``reference="open"`` compares against the law given only ``g open``,
    which must fail; it exists as a negative control.

    Equality of the two laws of the outside configuration covers every event
    that depends only on sites outside ``g``.  Returns a list of
    ``(circuit_sites, n_groups, all_equal)``.
    """
    en = BitsetEnumerator(region)
    sets = events.annulus_sets(region, ann)
    cycles = surrounding_cycles(region, sets["S"], ann.center)
    which = innermost_cycle_index(en, cycles)
    C = en.codes
    T = en.mask(target_mask)
    full = (1 << en.N) - 1
    if conditioning == "point":
        src = np.full(C.size, en.bit((0, 0)))
    else:
        src = C & en.mask(sets["inner"])
    E = (en.flood(src, C) & T) != 0
    report = []
    for ci, (cyc, interior) in enumerate(cycles):
        sel = which == ci
        if not sel.any():
            continue
        g = en.mask(cyc)
        inner_m = en.mask(interior)
        outside = full & ~g & ~inner_m
        g_open = np.flatnonzero((C & g) == g)
        g_conn = np.zeros(C.size, dtype=bool)
        if reference == "open":
            g_conn[g_open] = True
        else:
            g_conn[g_open] = (en.flood(np.full(g_open.size, g), C[g_open]) & T) != 0
        # law of the outside configuration given g <-> T
        ref = np.bincount((C[g_conn] & outside), minlength=0)
        ref_tot = int(g_conn.sum())
        groups = 0
        ok = True
        m = sel & E
        for w in np.unique(C[m] & inner_m):
            grp = m & ((C & inner_m) == w)
            cnt = np.bincount(C[grp] & outside, minlength=ref.size)
            tot = int(grp.sum())
            groups += 1
            cnt = np.pad(cnt, (0, max(0, ref.size - cnt.size)))
            r = np.pad(ref, (0, max(0, cnt.size - ref.size)))
            if not np.array_equal(cnt.astype(object) * ref_tot, r.astype(object) * tot):
                ok = False
        report.append((cyc, groups, ok))
    return report
