"""Vectorized numpy kernels with the same signatures as the numba ones.

Used when numba is disabled or unavailable.  Loops over sites are replaced by
array operations: connected-component labeling on the axial grid, frontier
BFS, and list ranking by pointer jumping for interface tracing.
"""

import math

import numpy as np

from .. import rng

NAME = "numpy"

DQ = np.array([1, 0, -1, -1, 0, 1], dtype=np.int64)
DR = np.array([0, 1, 1, 0, -1, -1], dtype=np.int64)
H3 = math.sqrt(3.0) / 2.0
RHO = 1.0 / math.sqrt(3.0)
VX = np.array([RHO * math.cos(math.radians(30 + 60 * k)) for k in range(6)])
VY = np.array([RHO * math.sin(math.radians(30 + 60 * k)) for k in range(6)])


def hash_words(k0, k1, start, n):
    return rng.hash_words(k0, k1, np.arange(start, start + n, dtype=np.uint64))


def neighbor_table(grid, q, r, q0, r0, sites=None):
    """(n, 6) neighbor indices, -1 where the neighbor is outside the region."""
    if sites is None:
        qs, rs = q, r
    else:
        qs, rs = q[sites], r[sites]
    gq = qs[:, None] + DQ[None, :] - q0
    gr = rs[:, None] + DR[None, :] - r0
    nr, nq = grid.shape
    ok = (gq >= 0) & (gr >= 0) & (gq < nq) & (gr < nr)
    out = np.full(gq.shape, -1, dtype=np.int64)
    out[ok] = grid[gr[ok], gq[ok]]
    return out


# axial (dq, dr) neighbours as a 3x3 structuring element on the (r, q) grid
HEX_STRUCTURE = np.array([[0, 1, 1], [1, 1, 1], [1, 1, 0]], dtype=bool)


def label_clusters(open_mask, grid, q, r, q0, r0):
    """Connected components via ``scipy.ndimage.label`` on the axial grid."""
    from scipy import ndimage

    n = open_mask.size
    img = np.zeros(grid.shape, dtype=bool)
    inside = grid >= 0
    img[inside] = open_mask[grid[inside]].astype(bool)
    comp, nc = ndimage.label(img, structure=HEX_STRUCTURE)
    comp_site = np.zeros(n, dtype=np.int64)
    comp_site[grid[inside]] = comp[inside]
    # canonical label: minimum site index of the component
    first = np.full(nc + 1, n, dtype=np.int64)
    np.minimum.at(first, comp_site, np.arange(n, dtype=np.int64))
    return np.where(comp_site > 0, first[comp_site], -1)


def _state(idx, open_mask, use_hash, k0, k1, blocked):
    if use_hash:
        st = rng.site_bits(k0, k1, idx)
    else:
        st = open_mask[idx].astype(bool)
    if blocked.size > 0:
        st &= ~blocked[idx].astype(bool)
    return st


def _far(sites, q, r, cx, cy):
    px = q[sites] + 0.5 * r[sites]
    py = H3 * r[sites]
    dx = px[:, None] + VX[None, :] - cx
    dy = py[:, None] + VY[None, :] - cy
    return np.sqrt((dx * dx + dy * dy).max(axis=1))


def bfs(open_mask, use_hash, k0, k1, blocked, grid, q, r, q0, r0, starts,
        cx, cy, stop_far, targets, stop_on_targets, visit, stamp, out):
    starts = np.unique(np.asarray(starts, dtype=np.int64))
    starts = starts[(visit[starts] != stamp) & (visit[starts] != -stamp)]
    st = _state(starts, open_mask, use_hash, k0, k1, blocked)
    visit[starts[st]] = stamp
    visit[starts[~st]] = -stamp
    frontier = starts[st]
    n = 0
    max_far = -1.0
    found = np.zeros(targets.size, dtype=bool)
    stopped = False
    while frontier.size:
        out[n:n + frontier.size] = frontier
        n += frontier.size
        max_far = max(max_far, float(_far(frontier, q, r, cx, cy).max()))
        if targets.size:
            found |= np.isin(targets, frontier)
        if stop_far > 0 and max_far >= stop_far:
            stopped = True
            break
        if stop_on_targets and targets.size and found.all():
            stopped = True
            break
        nb = neighbor_table(grid, q, r, q0, r0, frontier).ravel()
        nb = np.unique(nb[nb >= 0])
        nb = nb[(visit[nb] != stamp) & (visit[nb] != -stamp)]
        st = _state(nb, open_mask, use_hash, k0, k1, blocked)
        visit[nb[st]] = stamp
        visit[nb[~st]] = -stamp
        frontier = nb[st]
    return n, max_far, found, stopped


def _diam_brute(x, y):
    dx = x[:, None] - x[None, :]
    dy = y[:, None] - y[None, :]
    return math.sqrt(float((dx * dx + dy * dy).max()))


def convex_diameter(x, y):
    from scipy.spatial import ConvexHull, QhullError

    if x.size <= 3:
        return _diam_brute(x, y)
    try:
        h = ConvexHull(np.stack([x, y], axis=1)).vertices
    except QhullError:  # collinear support
        h = np.array([np.argmin(x + 1e-3 * y), np.argmax(x + 1e-3 * y), np.argmin(y), np.argmax(y)])
    return _diam_brute(x[h], y[h])


def cluster_diameters(order, starts, x, y, brute_limit):
    nc = starts.size - 1
    out = np.zeros(nc)
    sizes = np.diff(starts)
    for c in np.flatnonzero(sizes > 1):
        idx = order[starts[c]:starts[c + 1]]
        out[c] = _diam_brute(x[idx], y[idx]) if idx.size <= brute_limit else convex_diameter(x[idx], y[idx])
    return out


def _jump_min(P, ids, steps):
    m = ids.copy()
    for _ in range(steps):
        m = np.minimum(m, m[P])
        P = P[P]
    return P, m


def trace_edges(open_mask, grid, q, r, q0, r0):
    open_mask = open_mask.astype(bool)
    nbr = neighbor_table(grid, q, r, q0, r0)
    nbr_open = np.where(nbr >= 0, open_mask[np.where(nbr >= 0, nbr, 0)], False)
    is_edge = open_mask[:, None] & (nbr >= 0) & ~nbr_open
    s_e, k_e = np.nonzero(is_edge)
    E = s_e.size
    if E == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z.copy(), np.zeros(1, dtype=np.int64), np.zeros(0, dtype=bool)
    eid = s_e * 6 + k_e  # sorted ascending

    def lookup(s, k):
        return np.searchsorted(eid, s * 6 + k)

    ids = np.arange(E, dtype=np.int64)
    # predecessor of (s, k) through the tail vertex shared with w = s + e_{k-1}
    km = (k_e + 5) % 6
    w = nbr[s_e, km]
    w_open = (w >= 0) & open_mask[np.where(w >= 0, w, 0)]
    pred = np.where(w < 0, -1, np.where(w_open, lookup(np.where(w >= 0, w, 0), (k_e + 1) % 6), lookup(s_e, km)))

    steps = max(1, int(math.ceil(math.log2(E))) + 1)
    head = pred < 0
    P = np.where(head, ids, pred)
    P_end, cyc_min = _jump_min(P, ids, steps)
    on_arc = head[P_end]
    root = np.where(on_arc, P_end, cyc_min)
    # break every cycle at its minimum edge, then rank by distance to the root
    P2 = np.where(head | (ids == cyc_min) & ~on_arc, ids, pred)
    d = (P2 != ids).astype(np.int64)
    P = P2
    for _ in range(steps):
        d = d + d[P]
        P = P[P]
    order = np.lexsort((d, root, ~on_arc))
    sites = s_e[order]
    dirs = k_e[order]
    r_sorted = root[order]
    bounds = np.flatnonzero(np.diff(r_sorted)) + 1
    offsets = np.concatenate([[0], bounds, [E]]).astype(np.int64)
    closed = ~on_arc[order][offsets[:-1]]
    return sites.astype(np.int64), dirs.astype(np.int64), offsets, closed


def winding_numbers(vx, vy, px, py):
    ax, ay = vx, vy
    bx, by = np.roll(vx, -1), np.roll(vy, -1)
    out = np.zeros(px.size, dtype=np.int64)
    chunk = max(1, 2_000_000 // max(1, vx.size))
    for j0 in range(0, px.size, chunk):
        x = px[j0:j0 + chunk, None]
        y = py[j0:j0 + chunk, None]
        cr = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
        up = (ay <= y) & (by > y) & (cr > 0)
        down = (ay > y) & (by <= y) & (cr < 0)
        out[j0:j0 + chunk] = up.sum(axis=1) - down.sum(axis=1)
    return out


def _frechet(C):
    n1, m1 = C.shape
    c = np.full((n1, m1), np.inf)
    c[0, 0] = C[0, 0]
    c[0, :] = np.maximum.accumulate(C[0, :])
    c[:, 0] = np.maximum.accumulate(C[:, 0])
    # sweep anti-diagonals; cells on one diagonal are independent
    for k in range(2, n1 + m1 - 1):
        i = np.arange(max(1, k - m1 + 1), min(n1 - 1, k - 1) + 1)
        j = k - i
        prev = np.minimum(np.minimum(c[i - 1, j], c[i, j - 1]), c[i - 1, j - 1])
        c[i, j] = np.maximum(C[i, j], prev)
    return c[-1, -1]


def frechet_cyclic(D):
    n, m = D.shape
    ii = np.arange(n + 1) % n
    best = np.inf
    for s in range(m):
        jj = (np.arange(m + 1) + s) % m
        best = min(best, _frechet(D[np.ix_(ii, jj)]))
    return best
