"""Numba kernels.

Geometry inside kernels is in lattice units relative to site (0, 0).
"""

import math

import numpy as np
from numba import njit

from ..rng import GOLDEN, M1, M2, S27, S30, S31

NAME = "numba"

DQ = np.array([1, 0, -1, -1, 0, 1], dtype=np.int64)
DR = np.array([0, 1, 1, 0, -1, -1], dtype=np.int64)
H3 = math.sqrt(3.0) / 2.0
RHO = 1.0 / math.sqrt(3.0)
VX = np.array([RHO * math.cos(math.radians(30 + 60 * k)) for k in range(6)])
VY = np.array([RHO * math.sin(math.radians(30 + 60 * k)) for k in range(6)])
ONE = np.uint64(1)
SIX = np.uint64(6)
SH63 = np.uint64(63)


@njit(cache=True, inline="always")
def mix64_nb(z):
    z = (z ^ (z >> S30)) * M1
    z = (z ^ (z >> S27)) * M2
    return z ^ (z >> S31)


@njit(cache=True, inline="always")
def hash_word_nb(k0, k1, c):
    return mix64_nb(mix64_nb((c * GOLDEN) ^ k1) + k0)


@njit(cache=True, inline="always")
def site_bit_nb(k0, k1, i):
    w = hash_word_nb(k0, k1, np.uint64(i) >> SIX)
    return ((w >> (np.uint64(i) & SH63)) & ONE) == ONE


@njit(cache=True)
def hash_words(k0, k1, start, n):
    out = np.empty(n, dtype=np.uint64)
    for j in range(n):
        out[j] = hash_word_nb(k0, k1, np.uint64(start + j))
    return out


@njit(cache=True, inline="always")
def _nbr(grid, q, r, q0, r0, s, k):
    gq = q[s] + DQ[k] - q0
    gr = r[s] + DR[k] - r0
    if gq < 0 or gr < 0 or gr >= grid.shape[0] or gq >= grid.shape[1]:
        return -1
    return grid[gr, gq]


@njit(cache=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit(cache=True)
def label_clusters(open_mask, grid, q, r, q0, r0):
    """Union-find labels; each cluster is labeled by its minimum site index, closed sites -1."""
    n = open_mask.size
    parent = np.arange(n, dtype=np.int64)
    size = np.ones(n, dtype=np.int64)
    for s in range(n):
        if not open_mask[s]:
            continue
        for k in range(3):
            t = _nbr(grid, q, r, q0, r0, s, k)
            if t < 0 or not open_mask[t]:
                continue
            a = _find(parent, s)
            b = _find(parent, t)
            if a == b:
                continue
            if size[a] < size[b]:
                a, b = b, a
            parent[b] = a
            size[a] += size[b]
    lab = np.full(n, -1, dtype=np.int64)
    rootmin = np.full(n, -1, dtype=np.int64)
    for s in range(n):
        if open_mask[s]:
            root = _find(parent, s)
            if rootmin[root] < 0:
                rootmin[root] = s  # first visit in increasing order is the minimum
            lab[s] = rootmin[root]
    return lab


@njit(cache=True, inline="always")
def _far(px, py, cx, cy):
    best = 0.0
    for k in range(6):
        dx = px + VX[k] - cx
        dy = py + VY[k] - cy
        d = dx * dx + dy * dy
        if d > best:
            best = d
    return math.sqrt(best)


@njit(cache=True)
def bfs(open_mask, use_hash, k0, k1, blocked, grid, q, r, q0, r0, starts,
        cx, cy, stop_far, targets, stop_on_targets, visit, stamp, out):
    """Explore the open clusters of ``starts``.

    Site states come from ``open_mask`` or, with ``use_hash``, from the hashed
    stream ``(k0, k1)``; ``blocked`` sites are closed either way.  Cluster
    sites are appended to ``out`` and marked ``visit == stamp``; inspected
    closed sites get ``-stamp``.  Returns ``(n, max_far, found, stopped)``.
    After an early stop only the stop condition itself is meaningful.
    """
    nb = blocked.size
    n = 0
    max_far = -1.0
    found = np.zeros(targets.size, dtype=np.bool_)
    nfound = 0
    stopped = False
    for j in range(starts.size):
        s = starts[j]
        if visit[s] == stamp or visit[s] == -stamp:
            continue
        if nb > 0 and blocked[s]:
            visit[s] = -stamp
            continue
        is_open = site_bit_nb(k0, k1, s) if use_hash else open_mask[s]
        if not is_open:
            visit[s] = -stamp
            continue
        visit[s] = stamp
        out[n] = s
        n += 1
    head = 0
    while head < n:
        s = out[head]
        head += 1
        px = q[s] + 0.5 * r[s]
        py = H3 * r[s]
        f = _far(px, py, cx, cy)
        if f > max_far:
            max_far = f
        for j in range(targets.size):
            if targets[j] == s and not found[j]:
                found[j] = True
                nfound += 1
        if stop_far > 0 and max_far >= stop_far:
            stopped = True
            break
        if stop_on_targets and targets.size > 0 and nfound == targets.size:
            stopped = True
            break
        for k in range(6):
            t = _nbr(grid, q, r, q0, r0, s, k)
            if t < 0:
                continue
            v = visit[t]
            if v == stamp or v == -stamp:
                continue
            if nb > 0 and blocked[t]:
                visit[t] = -stamp
                continue
            is_open = site_bit_nb(k0, k1, t) if use_hash else open_mask[t]
            if is_open:
                visit[t] = stamp
                out[n] = t
                n += 1
            else:
                visit[t] = -stamp
    return n, max_far, found, stopped


@njit(cache=True)
def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


@njit(cache=True)
def _hull(xs, ys):
    """Monotone chain convex hull; returns vertex indices in ccw order."""
    m = xs.size
    order = np.argsort(ys, kind="mergesort")
    order = order[np.argsort(xs[order], kind="mergesort")]
    h = np.empty(2 * m + 1, dtype=np.int64)
    k = 0
    for ii in range(m):
        i = order[ii]
        while k >= 2 and _cross(xs[h[k - 2]], ys[h[k - 2]], xs[h[k - 1]], ys[h[k - 1]], xs[i], ys[i]) <= 0:
            k -= 1
        h[k] = i
        k += 1
    lower = k + 1
    for ii in range(m - 2, -1, -1):
        i = order[ii]
        while k >= lower and _cross(xs[h[k - 2]], ys[h[k - 2]], xs[h[k - 1]], ys[h[k - 1]], xs[i], ys[i]) <= 0:
            k -= 1
        h[k] = i
        k += 1
    return h[: k - 1]


@njit(cache=True)
def _calipers(xs, ys, h):
    """Squared diameter of a convex polygon by rotating calipers."""
    m = h.size
    if m == 1:
        return 0.0
    if m == 2:
        dx = xs[h[0]] - xs[h[1]]
        dy = ys[h[0]] - ys[h[1]]
        return dx * dx + dy * dy
    best = 0.0
    j = 1
    for i in range(m):
        i2 = (i + 1) % m
        ax, ay = xs[h[i]], ys[h[i]]
        bx, by = xs[h[i2]], ys[h[i2]]
        while True:
            j2 = (j + 1) % m
            cur = abs(_cross(ax, ay, bx, by, xs[h[j]], ys[h[j]]))
            nxt = abs(_cross(ax, ay, bx, by, xs[h[j2]], ys[h[j2]]))
            if nxt > cur:
                j = j2
            else:
                break
        for p in (h[i], h[i2]):
            dx = xs[p] - xs[h[j]]
            dy = ys[p] - ys[h[j]]
            d = dx * dx + dy * dy
            if d > best:
                best = d
    return best


@njit(cache=True)
def _diam2(xs, ys, brute_limit):
    m = xs.size
    if m <= brute_limit:
        best = 0.0
        for i in range(m):
            for j in range(i + 1, m):
                dx = xs[i] - xs[j]
                dy = ys[i] - ys[j]
                d = dx * dx + dy * dy
                if d > best:
                    best = d
        return best
    return _calipers(xs, ys, _hull(xs, ys))


@njit(cache=True)
def cluster_diameters(order, starts, x, y, brute_limit):
    """Diameters of clusters; sites of cluster c are ``order[starts[c]:starts[c+1]]``."""
    nc = starts.size - 1
    out = np.zeros(nc, dtype=np.float64)
    for c in range(nc):
        idx = order[starts[c]:starts[c + 1]]
        out[c] = math.sqrt(_diam2(x[idx], y[idx], brute_limit))
    return out


@njit(cache=True)
def convex_diameter(x, y):
    return math.sqrt(_calipers(x, y, _hull(x, y)))


@njit(cache=True)
def trace_edges(open_mask, grid, q, r, q0, r0):
    """Decompose all open/closed dual edges into interfaces.

    Edge ``(s, k)`` joins open ``s`` to closed ``s + e_k`` with ``s`` on the left.
    Returns ``(sites, dirs, offsets, closed)``: interface ``i`` is
    ``sites[offsets[i]:offsets[i+1]]`` and ``closed[i]`` tells loops from arcs
    cut by the region boundary.
    """
    n = open_mask.size
    seen = np.zeros((n, 6), dtype=np.bool_)
    is_edge = np.zeros((n, 6), dtype=np.bool_)
    n_edges = 0
    for s in range(n):
        if not open_mask[s]:
            continue
        for k in range(6):
            t = _nbr(grid, q, r, q0, r0, s, k)
            if t >= 0 and not open_mask[t]:
                is_edge[s, k] = True
                n_edges += 1
    sites = np.empty(n_edges, dtype=np.int64)
    dirs = np.empty(n_edges, dtype=np.int64)
    offsets = np.empty(n_edges + 1, dtype=np.int64)
    closed = np.empty(n_edges, dtype=np.bool_)
    m = 0
    nl = 0
    offsets[0] = 0
    # arcs first: edges whose tail vertex touches a missing hexagon
    for phase in range(2):
        for s0 in range(n):
            if not open_mask[s0]:
                continue
            for k0 in range(6):
                if not is_edge[s0, k0] or seen[s0, k0]:
                    continue
                if phase == 0:
                    w = _nbr(grid, q, r, q0, r0, s0, (k0 + 5) % 6)
                    if w >= 0:
                        continue
                s = s0
                k = k0
                is_closed = False
                while True:
                    seen[s, k] = True
                    sites[m] = s
                    dirs[m] = k
                    m += 1
                    kk = (k + 1) % 6
                    u = _nbr(grid, q, r, q0, r0, s, kk)
                    if u < 0:
                        break
                    if open_mask[u]:
                        s = u
                        k = (k + 5) % 6
                    else:
                        k = kk
                    if s == s0 and k == k0:
                        is_closed = True
                        break
                closed[nl] = is_closed
                nl += 1
                offsets[nl] = m
    return sites, dirs, offsets[: nl + 1].copy(), closed[:nl].copy()


@njit(cache=True)
def winding_numbers(vx, vy, px, py):
    """Winding number of the closed polygon (vx, vy) around each point."""
    m = vx.size
    out = np.zeros(px.size, dtype=np.int64)
    for j in range(px.size):
        x = px[j]
        y = py[j]
        w = 0
        for i in range(m):
            ax = vx[i]
            ay = vy[i]
            bx = vx[(i + 1) % m]
            by = vy[(i + 1) % m]
            if ay <= y:
                if by > y and _cross(ax, ay, bx, by, x, y) > 0:
                    w += 1
            elif by <= y and _cross(ax, ay, bx, by, x, y) < 0:
                w -= 1
        out[j] = w
    return out


@njit(cache=True)
def frechet_cyclic(D):
    """min over cyclic shifts s of the discrete Frechet cost of D[i, (j + s) % m] on closed sequences."""
    n, m = D.shape
    best = np.inf
    c = np.empty((n + 1, m + 1))
    for s in range(m):
        pruned = False
        for i in range(n + 1):
            ii = i % n
            rowmin = np.inf
            for j in range(m + 1):
                d = D[ii, (j + s) % m]
                if i == 0 and j == 0:
                    v = d
                elif i == 0:
                    v = max(d, c[i, j - 1])
                elif j == 0:
                    v = max(d, c[i - 1, j])
                else:
                    v = max(d, min(c[i - 1, j], c[i, j - 1], c[i - 1, j - 1]))
                c[i, j] = v
                if v < rowmin:
                    rowmin = v
            # every coupling crosses row i, so its cost is at least the row minimum
            if rowmin >= best:
                pruned = True
                break
        if not pruned and c[n, m] < best:
            best = c[n, m]
    return best
