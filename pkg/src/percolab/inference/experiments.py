"""Monte Carlo estimators, scaling drivers and statistical tests.

Every driver is a pure function of its parameters, the seed and the
replica range: workers regenerate configurations from ``(seed, replica)``
and return mergeable summaries (see ``runner``).  Sub-ensembles get their
own seeds through ``rng.derive_seed`` so they never share samples.
"""

from __future__ import annotations

import json
import math
from functools import lru_cache

import numpy as np

from .. import events, loops, rng
from ..clusters import Explorer, label, same_cluster
from ..colorfield import (
    BoxProjector,
    Eigenbasis,
    assign_signs,
    box_moment_weights,
    correlation_direct,
    correlation_partition,
    field_sample,
)
from ..events import AnnulusSpec
from ..lattice import GEOM_TOL, GeometryError, LatticeRegion, lattice_xy, nearest_site
from ..sampling import sample
from .estimates import Estimate, Tally, ratio_R, two_proportion_z
from .fit import fit_linear, fit_power_law, stabilized_fit
from .runner import DEFAULT_BLOCK, run_replicas
from .specs import EventSpec

FOUR_POINT_EXPONENT = 25.0 / 24.0


def _tol(x):
    return GEOM_TOL * max(1.0, x)


# per-process caches keyed by the JSON form of a region ---------------------

def region_key(region: LatticeRegion) -> str:
    return json.dumps(region.to_dict(), sort_keys=True)


@lru_cache(maxsize=64)
def _region(key) -> LatticeRegion:
    return LatticeRegion.from_dict(json.loads(key))


@lru_cache(maxsize=64)
def _explorer(key, blocked_key=None) -> Explorer:
    reg = _region(key)
    blocked = None
    if blocked_key is not None:
        kind, args = blocked_key
        if kind == "outside_annulus":
            sets = events.annulus_sets(reg, AnnulusSpec((0.0, 0.0), *args))
            blocked = ~sets["S"]
    return Explorer(reg, blocked)


# generic event frequencies --------------------------------------------------

def _event_worker(p, lo, hi):
    reg = _region(p["region"])
    spec = EventSpec.from_dict(p["event"])
    memo = {} if p.get("memo") else None
    k = 0
    for rep in range(lo, hi):
        c = sample(reg, p["seed"], rep)
        if memo is None:
            v = spec.evaluate(c)
        else:
            key = c.words.tobytes()
            v = memo.get(key)
            if v is None:
                v = memo[key] = bool(spec.evaluate(c))
        k += bool(v)
    return {"k": k, "n": hi - lo}


def estimate_event(spec, region: LatticeRegion, n_samples, seed, threads=None, memo=False, start=0,
                   block=DEFAULT_BLOCK) -> Estimate:
    """Frequency of an event over replicas ``[start, start + n_samples)`` with binomial error."""
    spec = spec if isinstance(spec, EventSpec) else EventSpec.from_dict(spec)
    spec.check(region)
    p = {"region": region_key(region), "event": spec.to_dict(), "seed": int(seed), "memo": bool(memo)}
    s, _ = run_replicas(_event_worker, p, n_samples, threads, block, start)
    return Estimate.binomial(s["k"], s["n"])


# one-arm probabilities -----------------------------------------------------

def _pi_worker(p, lo, hi):
    reg = _region(p["region"])
    ex = _explorer(p["region"])
    radii = np.asarray(p["radii"], dtype=np.float64)
    thr = radii - np.array([_tol(r) for r in radii])
    o = reg.index_of((0, 0))
    counts = np.zeros(radii.size, dtype=np.int64)
    stop = float(radii.max())
    for rep in range(lo, hi):
        e = ex.explore([o], seed=p["seed"], replica=rep, stop_radius=stop)
        counts += e.max_far >= thr
    return {"counts": counts, "n": hi - lo}


def pi_curve(radii, region: LatticeRegion, n_samples, seed, threads=None, block=DEFAULT_BLOCK):
    """One-arm frequencies at every radius from one exploration per sample.

    The events are nested, so the estimates are monotone sample by sample.
    Returns ``(estimates, ranges)``.
    """
    radii = [float(r) for r in radii]
    if not radii or min(radii) <= 0:
        raise ValueError("radii must be positive")
    o = region.embed_xy(0, 0)
    region.require_disk(o, max(radii), "one_arm")
    p = {"region": region_key(region), "radii": radii, "seed": int(seed)}
    s, ranges = run_replicas(_pi_worker, p, n_samples, threads, block)
    return [Estimate.binomial(int(c), s["n"]) for c in s["counts"]], ranges


def estimate_pi(r, region: LatticeRegion, n_samples, seed, threads=None) -> Estimate:
    """``P(origin <-> circle of radius r)`` by lazy exploration."""
    return pi_curve([r], region, n_samples, seed, threads)[0][0]


# rhombus crossings ----------------------------------------------------------------

def _crosses(lab, a, b):
    la, lb = lab[a], lab[b]
    return bool(np.intersect1d(la[la >= 0], lb[lb >= 0]).size)


def _rhombus_worker(p, lo, hi):
    from ..clusters import label_array

    reg = _region(p["region"])
    L = int(reg.extent)
    left, right = np.flatnonzero(reg.q == 0), np.flatnonzero(reg.q == L - 1)
    bottom, top = np.flatnonzero(reg.r == 0), np.flatnonzero(reg.r == L - 1)
    k = bad = 0
    for rep in range(lo, hi):
        c = sample(reg, p["seed"], rep)
        lr = _crosses(label_array(reg, c.open), left, right)
        tb = _crosses(label_array(reg, ~c.open), bottom, top)
        k += lr
        bad += lr == tb
    return {"k": k, "n": hi - lo, "duality_violations": bad}


def rhombus_crossing(L, n_samples, seed, threads=None, block=DEFAULT_BLOCK):
    """Left-right open crossing of the ``L x L`` rhombus.

    Also counts samples violating "open left-right xor closed top-bottom",
    which holds for every configuration.  Returns ``(estimate, violations, ranges)``.
    """
    region = LatticeRegion.rhombus(int(L))
    p = {"region": region_key(region), "seed": int(seed)}
    s, ranges = run_replicas(_rhombus_worker, p, n_samples, threads, block)
    return Estimate.binomial(s["k"], s["n"]), int(s["duality_violations"]), ranges


# triangles: P2, P3 and the ratio R -------------------------------------------

def triangle(d, base=(0, 0)):
    """Sites nearest to an equilateral triangle of side ``d`` with a corner at site ``base``.

    Returns ``(sites, snap_error)`` in lattice units.  For integer ``d`` the
    sites ``base``, ``base + d e0``, ``base + d e1`` form an exact triangle.
    """
    if not d >= 1:
        raise ValueError("degenerate triangle: side below one lattice step")
    x0, y0 = lattice_xy(*base)
    ideal = [(x0, y0), (x0 + d, y0), (x0 + 0.5 * d, y0 + 0.5 * math.sqrt(3.0) * d)]
    sites = [tuple(int(v) for v in nearest_site(*p)) for p in ideal]
    if len(set(sites)) < 3:
        raise ValueError("degenerate triangle")
    err = max(math.hypot(*(np.subtract(lattice_xy(*s), p))) for s, p in zip(sites, ideal))
    return sites, float(err)


def triangle_region(d, base=(0, 0), margin=3.0):
    """Disk about the triangle's centroid covering it with ``margin * d`` to spare."""
    sites, _ = triangle(d, base)
    xy = np.array([lattice_xy(*s) for s in sites])
    c = xy.mean(axis=0)
    rad = float(np.max(np.hypot(*(xy - c).T))) + margin * d + 2.0
    return LatticeRegion("disk", rad, offset=(float(c[0]), float(c[1])))


def _triangle_worker(p, lo, hi):
    reg = _region(p["region"])
    ex = _explorer(p["region"])
    i1, i2, i3 = (reg.index_of(s) for s in p["sites"])
    seed = p["seed"]
    X = np.zeros((hi - lo, 4), dtype=np.int64)
    for row, rep in enumerate(range(lo, hi)):
        e = ex.explore([i1], seed=seed, replica=rep, targets=[i2, i3], stop_on_targets=True)
        f12, f13 = bool(e.found[0]), bool(e.found[1])
        if f12 and f13:
            X[row] = 1
            continue
        x23 = False
        if not (f12 or f13):
            e2 = ex.explore([i2], seed=seed, replica=rep, targets=[i3], stop_on_targets=True, fresh=False)
            x23 = bool(e2.found[0])
        X[row] = (0, f12, f13, x23)
    t = Tally(4)
    t.add_batch(X)
    return t


def triangle_tally(d, n_samples, seed, base=(0, 0), region=None, threads=None, block=DEFAULT_BLOCK, start=0):
    """Joint indicators ``(X123, X12, X13, X23)`` for the triangle of side ``d``.

    Replicas ``[start, start + n_samples)``; disjoint ranges of one seed merge
    into a single longer run.
    """
    sites, err = triangle(d, base)
    if region is None:
        region = triangle_region(d, base)
    for s in sites:
        region.require_disk(region.embed_xy(*s), 3.0 * d, "triangle margin")
    p = {"region": region_key(region), "sites": sites, "seed": int(seed)}
    t, ranges = run_replicas(_triangle_worker, p, n_samples, threads, block, start)
    return t, {"sites": sites, "snap_error": err, "ranges": ranges}


def p2_from_tally(t: Tally) -> Estimate:
    """Average of the three pair frequencies (equal in law by symmetry)."""
    g = np.array([0.0, 1 / 3, 1 / 3, 1 / 3])
    return t.delta(lambda m: float(g @ m), lambda m: g)


def estimate_ratio_R(d, region=None, n_samples=10_000, seed=0, base=(0, 0), threads=None) -> Estimate:
    """``P3 / sqrt(P12 P13 P23)`` with a delta-method error from the same samples."""
    t, _ = triangle_tally(d, n_samples, seed, base, region, threads)
    return ratio_R(t)


# four-arm ------------------------------------------------------------------

def _four_arm_worker(p, lo, hi):
    r = p["r"]
    Rs = p["Rs"]
    seed = p["seed"]
    reg = _region(p["region"])
    counts = np.zeros(len(Rs), dtype=np.int64)
    plans = []
    for R in Rs:
        ex = _explorer(p["region"], ("outside_annulus", (r, R)))
        sets = events.annulus_sets(reg, AnnulusSpec((0.0, 0.0), r, R))
        plans.append((ex, np.flatnonzero(sets["inner"]), R - _tol(R)))
    for rep in range(lo, hi):
        for j, (ex, starts, thr) in enumerate(plans):
            crossing = 0
            fresh = True
            for s in starts:
                if abs(ex.visit[s]) == ex.stamp and not fresh:
                    continue
                e = ex.explore([s], seed=seed, replica=rep, fresh=fresh)
                fresh = False
                if e.max_far >= thr:
                    crossing += 1
                    if crossing == 2:
                        counts[j] += 1
                        break
    return {"counts": counts, "n": hi - lo}


def four_arm_curve(r, aspects, n_samples, seed, threads=None, block=DEFAULT_BLOCK):
    """Frequencies of two disjoint open crossings of ``A(r, aspect * r)`` about the origin."""
    Rs = [float(r) * float(k) for k in aspects]
    region = LatticeRegion.disk(max(Rs) + 3.0)
    for R in Rs:
        AnnulusSpec((0.0, 0.0), float(r), R).check(region)
    p = {"region": region_key(region), "r": float(r), "Rs": Rs, "seed": int(seed)}
    s, ranges = run_replicas(_four_arm_worker, p, n_samples, threads, block)
    return [Estimate.binomial(int(c), s["n"]) for c in s["counts"]], ranges


# field two-point identity ------------------------------------------------------

def _field_worker(p, lo, hi):
    reg = _region(p["region"])
    pairs = [tuple(map(tuple, pr)) for pr in p["pairs"]]
    sseed = rng.derive_seed(p["seed"], "signs")
    X = np.zeros((hi - lo, 3 * len(pairs)), dtype=np.int64)
    mismatch = 0
    for row, rep in enumerate(range(lo, hi)):
        lab = label(sample(reg, p["seed"], rep))
        sg = assign_signs(lab, sseed, rep)
        for j, (x1, x2) in enumerate(pairs):
            part = correlation_partition(lab, [x1, x2])
            same = int(same_cluster(lab, x1, x2))
            mismatch += part != same
            X[row, 3 * j:3 * j + 3] = (part, same, correlation_direct(lab, sg, [x1, x2]))
    t = Tally(3 * len(pairs))
    t.add_batch(X)
    return {"tally": t, "mismatch": mismatch}


def field_two_point(pairs, region: LatticeRegion, n_samples, seed, threads=None, block=DEFAULT_BLOCK):
    """Partition, connection and direct-sign estimators of ``<S1 S2>`` on shared samples."""
    pairs = [[tuple(x1), tuple(x2)] for x1, x2 in pairs]
    for x1, x2 in pairs:
        region.index_of(x1)
        region.index_of(x2)
    p = {"region": region_key(region), "pairs": pairs, "seed": int(seed)}
    s, ranges = run_replicas(_field_worker, p, n_samples, threads, block)
    t = s["tally"]
    rows = []
    for j in range(len(pairs)):
        a, b, c = 3 * j, 3 * j + 1, 3 * j + 2
        g = np.zeros(t.dim)
        g[c], g[b] = 1.0, -1.0
        diff = t.delta(lambda m: float(g @ m), lambda m: g)
        rows.append({
            "pair": pairs[j],
            "partition": t.binomial(a),
            "connection": t.binomial(b),
            "direct": t.mean_estimate(c),
            "direct_minus_connection": diff,
        })
    return rows, int(s["mismatch"]), ranges


# box variance -------------------------------------------------------------------

def _box_worker(p, lo, hi):
    reg = _region(p["region"])
    Ls = p["Ls"]
    V = np.zeros((hi - lo, len(Ls)), dtype=np.float64)
    for row, rep in enumerate(range(lo, hi)):
        lab = label(sample(reg, p["seed"], rep))
        for j, L in enumerate(Ls):
            w = box_moment_weights(lab, L).astype(np.int64)
            V[row, j] = float(np.dot(w, w))
    t = Tally(len(Ls), np.float64)
    t.add_batch(V)
    return t


def box_variance(Ls, region: LatticeRegion, n_samples, seed, pi_norm=1.0, threads=None, block=DEFAULT_BLOCK):
    """``Var(Phi(1_box))`` for boxes ``[-L, L]^2``.

    The signs are averaged exactly: ``E[Phi^2] = (a^2 / pi)^2 E[sum_C |C ∩ box|^2]``.
    """
    for L in Ls:
        if not region.covers_rect(-L, -L, L, L):
            raise GeometryError(f"box of half-width {L} exceeds the region")
    p = {"region": region_key(region), "Ls": [float(L) for L in Ls], "seed": int(seed)}
    t, ranges = run_replicas(_box_worker, p, n_samples, threads, block)
    c = (region.spacing ** 2 / pi_norm) ** 2
    out = []
    for j in range(len(Ls)):
        e = t.mean_estimate(j)
        out.append(Estimate(c * e.mean, c * e.std_error, e.n_samples, "normal"))
    return out, ranges


# cutoff error ------------------------------------------------------------------

@lru_cache(maxsize=8)
def _projector(key, n, K):
    return BoxProjector(_region(key), Eigenbasis(n, K))


def _cutoff_worker(p, lo, hi):
    reg = _region(p["region"])
    n, K = p["n"], p["K"]
    P = _projector(p["region"], n, K)
    eps = np.asarray(p["eps"], dtype=np.float64)
    lam = P.basis.eigenvalues
    wK = lam ** -2.0
    half = K // 2
    c = (reg.spacing ** 2 / p["pi_norm"]) ** 2
    draws = p["draws"]
    X = np.zeros((hi - lo, eps.size + 2), dtype=np.float64)
    for row, rep in enumerate(range(lo, hi)):
        lab = label(sample(reg, p["seed"], rep))
        diam = lab.site_values(lab.diameters)
        small = [(diam <= e) & (lab.labels >= 0) for e in eps]
        acc = np.zeros(eps.size + 2)
        for j in range(draws):
            S = field_sample(lab, assign_signs(lab, rng.derive_seed(p["seed"], "signs", j), rep)).astype(np.float64)
            W = np.stack([S * m for m in small] + [S])
            A = P.project(W)
            nrm = np.einsum("kij,ij->k", A * A, wK) * c
            full = A[-1]
            acc[:eps.size] += nrm[:eps.size]
            acc[eps.size] += nrm[-1]
            acc[eps.size + 1] += c * float(np.sum(full[:half, :half] ** 2 * wK[:half, :half]))
        X[row] = acc / draws
    t = Tally(eps.size + 2, np.float64)
    t.add_batch(X)
    return t


def cutoff_error(n, eps_list, n_samples, seed, K=64, draws=4, pi_norm=1.0, threads=None, block=64):
    """``<|Phi_n - Phi_{n,eps}|^2_{H^-1}>`` per ``eps`` and ``<|Phi_n|^2_{H^-1}>`` at ``K`` and ``K/2``.

    ``Phi_n - Phi_{n,eps}`` is the field of the clusters of diameter at most
    ``eps``.  The region extends ``max(eps) + 4`` beyond the box so every
    such cluster meeting the box is complete.
    """
    eps_list = [float(e) for e in eps_list]
    if min(eps_list) <= 0:
        raise ValueError("eps must be positive")
    region = LatticeRegion.box(float(n) + max(eps_list) + 4.0)
    p = {"region": region_key(region), "n": float(n), "K": int(K), "eps": eps_list, "draws": int(draws),
         "pi_norm": float(pi_norm), "seed": int(seed)}
    t, ranges = run_replicas(_cutoff_worker, p, n_samples, threads, block)
    est = [t.mean_estimate(j) for j in range(t.dim)]
    return est[:len(eps_list)], est[len(eps_list)], est[len(eps_list) + 1], ranges


# stopping-set coupling test ---------------------------------------------------

def _outside_only(spec: EventSpec, radius):
    k, p = spec.kind, spec.params
    if k in ("always", "never"):
        return
    if k in ("annulus_crossing", "four_arm", "four_arm_closed", "open_circuit", "closed_crossing"):
        c = p.get("center", (0.0, 0.0))
        if math.hypot(*c) < 1e-12 and float(p["r"]) >= radius:
            return
    raise ValueError("outside event must be an annulus event about the origin beyond the circuit annulus")


def _coupling_worker(p, lo, hi):
    reg = _region(p["region"])
    eta, delta, eps = p["eta"], p["delta"], p["eps"]
    circ = AnnulusSpec((0.0, 0.0), eta, delta)
    reach = AnnulusSpec((0.0, 0.0), eta, eps)
    A = EventSpec.from_dict(p["event"])
    recs = []
    for rep in range(lo, hi):
        c = sample(reg, p["seed"], rep)
        lab = label(c)
        if p["conditioning"] == "point":
            ok = events.one_arm(lab, (0, 0), eps)
        else:
            ok = events.annulus_crossing(lab, reach)
        if not ok:
            continue
        res = loops.innermost_open_circuit(c, circ)
        cls = int(res.interior.size) if res.found else -1
        recs.append((rep, cls, bool(A.evaluate(c))))
    return {"tried": hi - lo, "recs": recs}


def conditioned_ensemble(conditioning, eta, delta, eps, event: EventSpec, n_accept, seed, threads=None,
                         block=512, min_rate=1e-4):
    """First ``n_accept`` replicas (in replica order) satisfying the conditioning.

    ``conditioning`` is ``"point"`` (origin connected to the circle of radius
    ``eps``) or ``"annulus"`` (a crossing from radius ``eta`` to ``eps``).
    Each record is ``(replica, circuit_class, A)`` where the class is the
    number of sites inside the innermost open circuit of ``A(eta, delta)``
    (-1 if none).
    """
    from .runner import default_threads

    threads = default_threads() if threads is None else threads
    region = LatticeRegion.disk(max(eps, float(event.params.get("R", eps))) + 3.0)
    event.check(region)
    AnnulusSpec((0.0, 0.0), eta, delta).check(region)
    p = {"region": region_key(region), "eta": float(eta), "delta": float(delta), "eps": float(eps),
         "event": event.to_dict(), "conditioning": conditioning, "seed": int(seed)}
    recs, tried, start = [], 0, 0
    while len(recs) < n_accept:
        batch = block * max(1, threads)
        s, _ = run_replicas(_coupling_worker, p, batch, threads, block, start)
        recs += s["recs"]
        tried += s["tried"]
        start += batch
        if len(recs) < tried * min_rate:
            raise RuntimeError(f"acceptance rate {len(recs) / tried:.2e} below {min_rate:g}")
    recs = recs[:n_accept]
    last = recs[-1][0] + 1 if recs else start
    return recs, {"tried": last, "accepted": len(recs), "ranges": [[0, last]]}


def circuit_strata(eta, delta, n_bins=4, spacing=1.0):
    """Map a circuit's interior site count to one of ``n_bins`` bins of equivalent radius in ``[eta, delta]``.

    Exact interior sizes are too fine to be shared between two finite
    ensembles; equal-width bins of ``sqrt(area / pi)`` keep every sample.
    """
    edges = np.linspace(eta, delta, n_bins + 1)[1:-1]
    area = 0.5 * math.sqrt(3.0) * spacing ** 2

    def stratum(n_interior):
        if n_interior < 0:
            return -1
        return int(np.searchsorted(edges, math.sqrt(n_interior * area / math.pi)))

    return stratum


def stratified_z(recs1, recs2, stratum=None):
    """Mantel-Haenszel z statistic for equal frequencies within circuit classes.

    Only samples with a circuit (class >= 0) enter; classes seen in one
    ensemble only carry no information and are skipped.  ``stratum`` maps
    the recorded class to a coarser one.
    """
    stratum = stratum or (lambda c: c)

    def table(recs):
        d = {}
        for _, c, a in recs:
            c = stratum(c)
            if c < 0:
                continue
            n, k = d.get(c, (0, 0))
            d[c] = (n + 1, k + int(a))
        return d

    t1, t2 = table(recs1), table(recs2)
    num, var, used = 0.0, 0.0, 0
    for c in sorted(set(t1) & set(t2)):
        n1, a1 = t1[c]
        n2, a2 = t2[c]
        N, m = n1 + n2, a1 + a2
        if N < 2:
            continue
        num += a1 - n1 * m / N
        var += n1 * n2 * m * (N - m) / (N * N * (N - 1))
        used += n1 + n2
    if var == 0:
        return 0.0, 1.0, used
    z = num / math.sqrt(var)
    return z, math.erfc(abs(z) / math.sqrt(2.0)), used


@lru_cache(maxsize=4)
def micro_stopping_identity(conditioning="point"):
    """Exact identity on disk(2) with circuits in ``A(0.6, 1.9)`` and target sites beyond 2.45."""
    from .oracle import stopping_set_identity

    reg = LatticeRegion.disk(2)
    ann = AnnulusSpec((0.0, 0.0), 0.6, 1.9)
    T = reg.near_far((0.0, 0.0))[1] >= 2.45
    rep = stopping_set_identity(reg, ann, T, conditioning)
    return bool(all(ok for _, _, ok in rep)), len(rep)


def coupling_stopping_set_test(eta, delta, eps, event, n_samples, seed, threads=None, alpha=0.01,
                               exact=True, n_bins=4) -> dict:
    """Two-part check that the innermost open circuit acts as a stopping set.

    (i) the exact identity on the micro instance (both conditionings);
    (ii) two independently seeded ensembles conditioned on ``0 <-> dB_eps``
    and on the crossing of ``A(eta, eps)``, restricted to samples with an
    innermost open circuit in ``A(eta, delta)``, compared class by class
    for the outside event ``A``.
    """
    if not (0 < eta < delta < eps):
        raise ValueError("need 0 < eta < delta < eps")
    event = event if isinstance(event, EventSpec) else EventSpec.from_dict(event)
    _outside_only(event, delta)
    report = {"eta": eta, "delta": delta, "eps": eps, "event": event.to_dict()}
    if exact:
        ok_p, n_p = micro_stopping_identity("point")
        ok_a, n_a = micro_stopping_identity("annulus")
        report["exact"] = {"point": ok_p, "annulus": ok_a, "circuits": n_p, "holds": ok_p and ok_a}
    r1, m1 = conditioned_ensemble("point", eta, delta, eps, event, n_samples,
                                  rng.derive_seed(seed, "coupling", "point"), threads)
    r2, m2 = conditioned_ensemble("annulus", eta, delta, eps, event, n_samples,
                                  rng.derive_seed(seed, "coupling", "annulus"), threads)
    f1 = [a for _, c, a in r1 if c >= 0]
    f2 = [a for _, c, a in r2 if c >= 0]
    z, pval, used = stratified_z(r1, r2, circuit_strata(eta, delta, n_bins))
    zu, pu = two_proportion_z(sum(f1), max(len(f1), 1), sum(f2), max(len(f2), 1))
    report.update({
        "point": {**m1, "with_circuit": len(f1), "freq_A": sum(f1) / max(len(f1), 1)},
        "annulus": {**m2, "with_circuit": len(f2), "freq_A": sum(f2) / max(len(f2), 1)},
        "z": z, "p_value": pval, "stratified_samples": used, "strata": n_bins,
        "pooled_z": zu, "pooled_p_value": pu,
    })
    # an empty comparison carries no evidence either way
    report["passed"] = bool(report.get("exact", {"holds": True})["holds"] and used > 0 and pval > alpha)
    return report


# four-point residual ------------------------------------------------------------

def four_point_geometry(separations, L):
    """``x3, x4`` on the vertical axis near ``(0, +-L)`` and pairs ``x1, x2`` on the horizontal axis."""
    m = max(1, int(round(L / math.sqrt(3.0))))
    x3, x4 = (-m, 2 * m), (m, -2 * m)
    pairs = []
    for s in separations:
        s = int(s)
        if s < 1:
            raise ValueError("separations must be positive integers")
        pairs.append(((-(s // 2), 0), (s - s // 2, 0)))
    return x3, x4, pairs, m * math.sqrt(3.0)


def four_point_hierarchy(separations, L, ratio=0.5):
    """Diagnostics for ``|x1 - x2| << |x3|, |x4|``: empty when every separation is at most ``ratio * L``."""
    out = []
    for s in separations:
        if s > ratio * L:
            out.append(f"separation {s} exceeds {ratio:g} x distance {L:g} to x3, x4")
    return out


@lru_cache(maxsize=4)
def _four_point_index(key, x3, x4, pairs, L):
    """Site indices of every point of the geometry translated over the interior of the box."""
    reg = _region(key)
    W = reg.extent
    pos = reg.positions
    inner = np.flatnonzero((np.abs(pos[:, 0]) <= W - 2 * L) & (np.abs(pos[:, 1]) <= W - 2 * L))
    q, r = reg.q[inner], reg.r[inner]

    def shifted(s):
        idx = reg.index(q + s[0], r + s[1])
        if np.any(idx < 0):
            raise GeometryError("translated four-point geometry leaves the region")
        return idx

    return shifted(x3), shifted(x4), [(shifted(a), shifted(b)) for a, b in pairs]


def _cluster_signs(seed, rep, labels):
    """Fair sign per cluster label from the sign stream (label = smallest member index)."""
    idx = np.where(labels >= 0, labels, 0)
    k0, k1 = rng.stream_key(seed, rep, rng.TAG_SIGNS)
    return np.where(labels >= 0, 1 - 2 * rng.site_bits(k0, k1, idx).astype(np.int64), 0)


def _four_point_worker(p, lo, hi):
    from ..clusters import label_array

    reg = _region(p["region"])
    x3, x4 = tuple(p["x3"]), tuple(p["x4"])
    pairs = tuple((tuple(a), tuple(b)) for a, b in p["pairs"])
    i3, i4, ip = _four_point_index(p["region"], x3, x4, pairs, p["L"])
    m = len(pairs)
    seeds = (rng.derive_seed(p["seed"], "a"), rng.derive_seed(p["seed"], "b"))
    sseed = rng.derive_seed(p["seed"], "signs")
    X = np.zeros((hi - lo, 1 + 4 * m), dtype=np.float64)
    for row, rep in enumerate(range(lo, hi)):
        labs = [label_array(reg, sample(reg, sd, rep).open) for sd in seeds]
        per = []
        for h, lab in enumerate(labs):
            c, d = lab[i3], lab[i4]
            sg = _cluster_signs(sseed, 2 * rep + h, lab)
            per.append((lab, c, d, (c >= 0) & (c == d), sg[i3] * sg[i4], sg))
        X[row, 0] = 0.5 * (per[0][3].mean() + per[1][3].mean())
        for j, (i1, i2) in enumerate(ip):
            for h in (0, 1):
                lab, c, d, x34, s34, sg = per[h]
                a, b = lab[i1], lab[i2]
                x12 = (a >= 0) & (a == b)
                y4 = (a >= 0) & (b >= 0) & (c >= 0) & (d >= 0) & (((a == b) & (c == d)) | ((a == c) & (b == d)) | ((a == d) & (b == c)))
                other34 = per[1 - h][3]
                X[row, 1 + j] += 0.5 * x12.mean()
                X[row, 1 + m + j] += 0.5 * y4.mean()
                X[row, 1 + 2 * m + j] += 0.5 * (x12 & other34).mean()
                X[row, 1 + 3 * m + j] += 0.5 * (sg[i1] * sg[i2] * s34).mean()
    t = Tally(1 + 4 * m, np.float64)
    t.add_batch(X)
    return t


def four_point_tally(separations, L, n_samples, seed, domain_factor=5.0, threads=None, block=16):
    """Translation-averaged four-point indicators.

    Each sample is a pair of independent configurations of the box of
    half-width ``domain_factor * L``; the geometry is translated over every
    site at distance at least ``2 L`` from the box edge.  Per sample the
    columns are position averages of ``[X34, X12(s)..., C4(s)...,
    X12(s) X34', C4 direct(s)...]`` where ``X34'`` is read from the other
    configuration, so ``C4 - X12 X34'`` is unbiased for
    ``C4 - P12 P34`` at every position even though the box is not
    translation invariant.
    """
    if domain_factor < 3.0:
        raise GeometryError("domain_factor must be at least 3")
    x3, x4, pairs, Lr = four_point_geometry(separations, L)
    region = LatticeRegion.box(domain_factor * Lr)
    p = {"region": region_key(region), "x3": x3, "x4": x4, "pairs": [list(map(list, pr)) for pr in pairs],
         "L": float(Lr), "seed": int(seed)}
    t, ranges = run_replicas(_four_point_worker, p, n_samples, threads, block)
    return t, {"x3": x3, "x4": x4, "pairs": pairs, "distance": Lr, "region": region.to_dict(), "ranges": ranges}


def residual_estimates(t: Tally, m):
    """``C4(s) - P12(s) P34`` and the partition-minus-direct difference for each separation."""
    res, diff = [], []
    for j in range(m):
        g = np.zeros(t.dim)
        g[1 + m + j], g[1 + 2 * m + j] = 1.0, -1.0
        res.append(t.delta(lambda mu, g=g: float(g @ mu), lambda mu, g=g: g))
        gd = np.zeros(t.dim)
        gd[1 + m + j], gd[1 + 3 * m + j] = 1.0, -1.0
        diff.append(t.delta(lambda mu, gd=gd: float(gd @ mu), lambda mu, gd=gd: gd))
    return res, diff


def synthetic_four_point(separations, amplitude=0.05, L=64.0, c2=0.6, c34=0.15):
    """Noiseless ``(s, C4, P12, P34)`` following ``C4 = P12 P34 + A P12 (s/L)^(5/4)``.

    Used to check that the residual pipeline recovers ``25/24`` exactly.
    """
    s = np.asarray(separations, dtype=np.float64)
    p12 = c2 * s ** (-5.0 / 24.0)
    c4 = p12 * c34 + amplitude * p12 * (s / L) ** 1.25
    return s, c4, p12, np.full_like(s, c34)


def four_point_residual_experiment(separations, L, n_samples, seed, threads=None, domain_factor=5.0):
    """Fit the power of the four-point residual in ``|x1 - x2|``.

    Returns ``(fit or None, residual estimates, info)``; ``info`` includes
    the cross-estimator differences and whether the residual increases
    strictly along the grid.
    """
    msgs = four_point_hierarchy(separations, L)
    if msgs:
        raise ValueError("; ".join(msgs))
    t, info = four_point_tally(separations, L, n_samples, seed, domain_factor, threads)
    res, diff = residual_estimates(t, len(separations))
    means = [e.mean for e in res]
    info["monotone"] = bool(all(b > a for a, b in zip(means, means[1:])))
    info["cross_estimator"] = diff
    info["p34"] = t.mean_estimate(0)
    info["p12"] = [t.mean_estimate(1 + j) for j in range(len(separations))]
    fit = None
    if all(m > 0 for m in means):
        fit = fit_power_law(list(zip(separations, res)))
    return fit, res, info


# exports -------------------------------------------------------------------------

__all__ = [
    "FOUR_POINT_EXPONENT",
    "box_variance",
    "conditioned_ensemble",
    "coupling_stopping_set_test",
    "cutoff_error",
    "estimate_event",
    "estimate_pi",
    "estimate_ratio_R",
    "field_two_point",
    "fit_linear",
    "four_arm_curve",
    "four_point_residual_experiment",
    "p2_from_tally",
    "pi_curve",
    "rhombus_crossing",
    "stabilized_fit",
    "stratified_z",
    "synthetic_four_point",
    "triangle",
    "triangle_tally",
]
