"""Experiment kinds: parameter defaults, validation and execution.

Each kind maps ``(params, n_samples, seed, threads)`` to a ``Result`` with
estimates, fits, CSV tables and pass/fail checks.  ``validate_params``
returns diagnostics instead of raising.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .. import loops
from ..events import AnnulusSpec
from ..lattice import GeometryError, LatticeRegion, lattice_xy
from ..sampling import sample
from . import experiments as X
from .estimates import Estimate
from .fit import PowerLawFit, fit_linear, fit_power_law, stabilized_fit
from .oracle import MAX_ENUM_SITES, brute_force_probability, npoint_decomposition
from .specs import EventSpec

KINDS = (
    "rhombus_crossing",
    "pi_scaling",
    "p2_scaling",
    "p3_ratio",
    "four_arm_scaling",
    "field_moments",
    "cutoff_scaling",
    "box_variance_scaling",
    "coupling_test",
    "four_point_residual",
    "oracle_suite",
    "loop_export",
)

DEFAULTS = {
    "rhombus_crossing": {"sides": [32, 64, 128]},
    "pi_scaling": {"radii": [8, 16, 32, 64, 128, 256], "half_width": 768},
    "p2_scaling": {"sides": [8, 16, 32, 64, 128, 256], "margin": 3.0},
    "p3_ratio": {"sides": [8, 16, 32, 64, 128, 256], "ratio_sides": [32, 64, 128], "margin": 3.0,
                 "ratio_samples": None},
    "four_arm_scaling": {"r": 8, "aspects": [4, 8, 16, 32]},
    "field_moments": {"radius": 48, "pairs": [[[0, 0], [16, 0]]]},
    "cutoff_scaling": {"n": 256, "eps": [8, 16, 32, 64], "K": 64, "draws": 4},
    "box_variance_scaling": {"Ls": [8, 16, 32, 64], "half_width": 1024},
    "coupling_test": {"eta": 4, "delta": 8, "eps": 32, "event": None, "strata": 4},
    "four_point_residual": {"separations": [4, 8, 16, 32], "L": 128, "domain_factor": 5.0},
    "oracle_suite": {"seeds": 100, "checks": None, "exact": True},
    "loop_export": {"width": 128, "height": 128, "export": 1},
}


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def __str__(self):
        return f"{self.code}: {self.message}"


@dataclass
class Result:
    estimates: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    ranges: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)


def with_defaults(kind, params):
    out = dict(DEFAULTS[kind])
    out.update(params or {})
    return out


def _fit_dict(f: PowerLawFit | None):
    return None if f is None else f.to_dict()


def _est_rows(scales, ests):
    return [[s, e.mean, e.std_error, e.n_samples] for s, e in zip(scales, ests)]


def _fit_table(f: PowerLawFit):
    return (["slope", "slope_stderr", "intercept", "r2"], [[f.slope, f.slope_std_error, f.intercept, f.r2]])


def _scaling_fits(res: Result, scales, ests, name):
    raw, stab, dropped = stabilized_fit(list(zip(scales, ests)))
    res.fits[f"{name}_raw"] = raw.to_dict()
    res.fits[f"{name}_stabilized"] = {**stab.to_dict(), "dropped": dropped}
    res.tables[f"fit_{name}_raw"] = _fit_table(raw)
    res.tables[f"fit_{name}_stabilized"] = _fit_table(stab)
    return raw, stab


# validation ------------------------------------------------------------------

def _positive_list(p, key, diags, integer=False):
    v = p.get(key)
    if not isinstance(v, (list, tuple)) or not v:
        diags.append(Diagnostic("param", f"{key} must be a non-empty list"))
        return []
    try:
        vals = [float(x) for x in v]
    except (TypeError, ValueError):
        diags.append(Diagnostic("param", f"{key} must be numbers"))
        return []
    if min(vals) <= 0:
        diags.append(Diagnostic("param", f"{key} must be positive"))
    if integer and any(x != int(x) for x in vals):
        diags.append(Diagnostic("param", f"{key} must be integers"))
    return vals


def _region_guard(reg_d, diags, what):
    try:
        reg = LatticeRegion.from_dict(reg_d)
    except (KeyError, TypeError, ValueError) as e:
        diags.append(Diagnostic("param", f"{what}: bad region ({e})"))
        return None
    if reg.n_free > MAX_ENUM_SITES:
        diags.append(Diagnostic("guard", f"{what}: {reg.n_free} sites exceed the enumeration limit {MAX_ENUM_SITES}"))
        return None
    return reg


def validate_params(kind, p) -> list:
    d = []
    if kind not in KINDS:
        return [Diagnostic("kind", f"unknown experiment kind {kind!r}")]
    p = with_defaults(kind, p)
    try:
        if kind == "rhombus_crossing":
            sides = _positive_list(p, "sides", d, integer=True)
            if sides and min(sides) < 2:
                d.append(Diagnostic("param", "rhombus side must be at least 2"))
        elif kind == "pi_scaling":
            radii = _positive_list(p, "radii", d)
            if radii and not LatticeRegion.box(float(p["half_width"])).covers_disk((0.0, 0.0), max(radii)):
                d.append(Diagnostic("margin", f"radius {max(radii)} exceeds the box of half-width {p['half_width']}"))
        elif kind in ("p2_scaling", "p3_ratio"):
            sides = _positive_list(p, "sides", d)
            if sides and (min(sides) < 1):
                d.append(Diagnostic("param", "sides must be at least one lattice step"))
            if float(p["margin"]) < 3.0:
                d.append(Diagnostic("margin", "triangle margin must be at least 3 sides"))
            if kind == "p3_ratio":
                rs = _positive_list(p, "ratio_sides", d)
                if p.get("ratio_samples") is not None and int(p["ratio_samples"]) < 1:
                    d.append(Diagnostic("param", "ratio_samples must be positive"))
                if len(rs) < 2:
                    d.append(Diagnostic("param", "ratio_sides needs at least 2 sides to extrapolate"))
                if len(sides) < 3:
                    d.append(Diagnostic("param", "a power-law fit needs at least 3 sides"))
            elif len(sides) < 3:
                d.append(Diagnostic("param", "a power-law fit needs at least 3 sides"))
        elif kind == "four_arm_scaling":
            a = _positive_list(p, "aspects", d)
            if a and min(a) <= 1:
                d.append(Diagnostic("param", "aspects must exceed 1"))
            if not float(p["r"]) > 0:
                d.append(Diagnostic("param", "r must be positive"))
        elif kind == "field_moments":
            reg = LatticeRegion.disk(float(p["radius"]))
            for pr in p["pairs"]:
                for x in pr:
                    if not reg.contains(tuple(x)):
                        d.append(Diagnostic("margin", f"site {tuple(x)} outside the disk of radius {p['radius']}"))
        elif kind == "cutoff_scaling":
            eps = _positive_list(p, "eps", d)
            if eps and max(eps) >= float(p["n"]):
                d.append(Diagnostic("margin", "eps must be smaller than the box half-width n"))
            if int(p["K"]) < 2:
                d.append(Diagnostic("param", "K must be at least 2"))
        elif kind == "box_variance_scaling":
            Ls = _positive_list(p, "Ls", d)
            if Ls and max(Ls) > float(p["half_width"]):
                d.append(Diagnostic("margin", f"box half-width {max(Ls)} exceeds the region half-width"))
        elif kind == "coupling_test":
            eta, delta, eps = float(p["eta"]), float(p["delta"]), float(p["eps"])
            if not (0 < eta < delta < eps):
                d.append(Diagnostic("param", "need 0 < eta < delta < eps"))
            ev = default_outside_event(p)
            try:
                X._outside_only(EventSpec.from_dict(ev), delta)
            except (ValueError, KeyError) as e:
                d.append(Diagnostic("param", str(e)))
        elif kind == "four_point_residual":
            seps = _positive_list(p, "separations", d, integer=True)
            if len(seps) < 3:
                d.append(Diagnostic("param", "a power-law fit needs at least 3 separations"))
            for m in X.four_point_hierarchy(seps, float(p["L"])):
                d.append(Diagnostic("hierarchy", m))
        elif kind == "oracle_suite":
            for c in p.get("checks") or default_oracle_checks():
                reg = _region_guard(c["region"], d, c.get("name", c["event"]["kind"]))
                if reg is None:
                    continue
                try:
                    EventSpec.from_dict(c["event"]).check(reg)
                except (GeometryError, ValueError, KeyError) as e:
                    code = "margin" if isinstance(e, GeometryError) else "param"
                    d.append(Diagnostic(code, f"{c.get('name', '')}: {e}"))
        elif kind == "loop_export":
            if int(p["width"]) < 2 or int(p["height"]) < 2:
                d.append(Diagnostic("param", "loop_export needs width, height >= 2"))
    except (KeyError, TypeError, ValueError) as e:
        d.append(Diagnostic("param", f"{type(e).__name__}: {e}"))
    return d


# kinds ---------------------------------------------------------------------------

def run_rhombus_crossing(p, n, seed, threads):
    sides = [int(L) for L in p["sides"]]
    res = Result()
    ests, bad = [], 0
    for L in sides:
        e, v, ranges = X.rhombus_crossing(L, n, X.rng.derive_seed(seed, "rhombus", L), threads)
        ests.append(e)
        bad += v
        res.ranges[str(L)] = ranges
    res.estimates = [{"scale": L, **e.to_dict()} for L, e in zip(sides, ests)]
    res.tables["rhombus_crossing"] = (["scale", "mean", "stderr", "n"], _est_rows(sides, ests))
    res.checks = {"max_abs_z_half": max(abs(e.zscore(0.5)) for e in ests), "duality_violations": bad}
    return res


def run_pi_scaling(p, n, seed, threads):
    radii = [float(r) for r in p["radii"]]
    reg = LatticeRegion.box(float(p["half_width"]))
    ests, ranges = X.pi_curve(radii, reg, n, seed, threads)
    res = Result(estimates=[{"scale": r, **e.to_dict()} for r, e in zip(radii, ests)], ranges={"main": ranges})
    res.tables["pi_scaling"] = (["scale", "mean", "stderr", "n"], _est_rows(radii, ests))
    if len(radii) >= 3 and all(e.mean > 0 for e in ests):
        _scaling_fits(res, radii, ests, "pi")
    res.checks["monotone"] = bool(all(b.mean <= a.mean for a, b in zip(ests, ests[1:])))
    return res


def _triangles(p, n, seed, threads):
    out = {}
    for d in p["sides"]:
        d = float(d)
        reg = X.triangle_region(d, margin=float(p["margin"]))
        t, info = X.triangle_tally(d, n, X.rng.derive_seed(seed, "triangle", d), region=reg, threads=threads)
        out[d] = (t, info)
    return out


def run_p2_scaling(p, n, seed, threads, tri=None):
    tri = _triangles(p, n, seed, threads) if tri is None else tri
    sides = sorted(tri)
    p2 = [X.p2_from_tally(tri[d][0]) for d in sides]
    res = Result(ranges={str(d): tri[d][1]["ranges"] for d in sides})
    res.estimates = [{"scale": d, "snap_error": tri[d][1]["snap_error"], **e.to_dict()} for d, e in zip(sides, p2)]
    res.tables["p2_scaling"] = (["scale", "mean", "stderr", "n"], _est_rows(sides, p2))
    if len(sides) >= 3:
        _scaling_fits(res, sides, p2, "p2")
    return res


def run_p3_ratio(p, n, seed, threads):
    tri = _triangles(p, n, seed, threads)
    res = run_p2_scaling(p, n, seed, threads, tri)
    sides = sorted(tri)
    p3 = [tri[d][0].binomial(0) for d in sides]
    Rs = [X.ratio_R(tri[d][0]) for d in sides]
    rsides = [float(d) for d in p["ratio_sides"]]
    n_ratio = int(p.get("ratio_samples") or n)
    ratio_tally = {}
    for d in rsides:
        t, info = tri[d] if d in tri else (None, {"ranges": []})
        have = t.n if t is not None else 0
        if n_ratio > have:
            more, inf2 = X.triangle_tally(d, n_ratio - have, X.rng.derive_seed(seed, "triangle", d),
                                          region=X.triangle_region(d, margin=float(p["margin"])),
                                          threads=threads, start=have)
            t = more if t is None else t.merge(more)
            res.ranges[f"ratio_{d:g}"] = inf2["ranges"]
        ratio_tally[d] = t
    # product of the three pair distances: the coefficient per pair is the slope
    prod = [float(d) ** 3 for d in sides]
    f3 = fit_power_law(list(zip(prod, p3)))
    res.fits["p3_per_pair"] = f3.to_dict()
    res.tables["fit_p3_per_pair"] = _fit_table(f3)
    res.tables["p3"] = (["scale", "mean", "stderr", "n"], _est_rows(sides, p3))
    res.tables["ratio_R"] = (["scale", "mean", "stderr", "n"], _est_rows(sides, Rs))
    sel = [X.ratio_R(ratio_tally[d]) for d in rsides]
    res.tables["ratio_R_extended"] = (["scale", "mean", "stderr", "n"], _est_rows(rsides, sel))
    lf = fit_linear([1.0 / d for d in rsides], [e.mean for e in sel], [e.std_error for e in sel])
    res.fits["R_extrapolation"] = {"R_inf": lf.intercept, "R_inf_stderr": lf.intercept_std_error,
                                   "slope_in_inverse_side": lf.slope, "sides": rsides}
    res.tables["R_extrapolation"] = (["R_inf", "stderr", "slope", "points"],
                                     [[lf.intercept, lf.intercept_std_error, lf.slope, lf.points_used]])
    res.extra["R"] = [{"scale": d, **e.to_dict()} for d, e in zip(sides, Rs)]
    res.extra["p3"] = [{"scale": d, **e.to_dict()} for d, e in zip(sides, p3)]
    return res


def run_four_arm_scaling(p, n, seed, threads):
    aspects = [float(a) for a in p["aspects"]]
    ests, ranges = X.four_arm_curve(float(p["r"]), aspects, n, seed, threads)
    res = Result(estimates=[{"scale": a, **e.to_dict()} for a, e in zip(aspects, ests)], ranges={"main": ranges})
    res.tables["four_arm_scaling"] = (["scale", "mean", "stderr", "n"], _est_rows(aspects, ests))
    if len(aspects) >= 3 and all(e.mean > 0 for e in ests):
        _scaling_fits(res, aspects, ests, "four_arm")
    return res


def run_field_moments(p, n, seed, threads):
    reg = LatticeRegion.disk(float(p["radius"]))
    rows, mismatch, ranges = X.field_two_point(p["pairs"], reg, n, seed, threads)
    res = Result(ranges={"main": ranges})
    table = []
    ok = mismatch == 0
    for r in rows:
        diff = r["direct_minus_connection"]
        z = diff.zscore(0.0)
        ok = ok and abs(z) <= 3.0
        res.estimates.append({k: (v.to_dict() if isinstance(v, Estimate) else v) for k, v in r.items()})
        table.append([*r["pair"][0], *r["pair"][1], r["partition"].mean, r["connection"].mean, r["direct"].mean,
                      r["direct"].std_error, z])
    res.tables["field_moments"] = (["q1", "r1", "q2", "r2", "partition", "connection", "direct", "direct_stderr",
                                    "z_direct"], table)
    res.checks = {"per_sample_mismatches": mismatch, "passed": bool(ok)}
    return res


def run_box_variance_scaling(p, n, seed, threads):
    Ls = [float(L) for L in p["Ls"]]
    reg = LatticeRegion.box(float(p["half_width"]))
    ests, ranges = X.box_variance(Ls, reg, n, seed, float(p.get("pi_norm", 1.0)), threads)
    res = Result(estimates=[{"scale": L, **e.to_dict()} for L, e in zip(Ls, ests)], ranges={"main": ranges})
    res.tables["box_variance_scaling"] = (["scale", "mean", "stderr", "n"], _est_rows(Ls, ests))
    if len(Ls) >= 3:
        _scaling_fits(res, Ls, ests, "box_variance")
    return res


def run_cutoff_scaling(p, n, seed, threads):
    eps = [float(e) for e in p["eps"]]
    K = int(p["K"])
    ests, full, half, ranges = X.cutoff_error(float(p["n"]), eps, n, seed, K, int(p["draws"]),
                                               float(p.get("pi_norm", 1.0)), threads)
    res = Result(estimates=[{"scale": e, **x.to_dict()} for e, x in zip(eps, ests)], ranges={"main": ranges})
    res.tables["cutoff_scaling"] = (["scale", "mean", "stderr", "n"], _est_rows(eps, ests))
    if len(eps) >= 3:
        _scaling_fits(res, eps, ests, "cutoff")
    tail = (full.mean - half.mean) / full.mean if full.mean > 0 else float("nan")
    res.extra["norm"] = {"K": K, "mean": full.mean, "stderr": full.std_error,
                         "K_half": K // 2, "mean_half": half.mean, "tail_fraction": tail}
    res.tables["field_norm"] = (["K", "mean", "stderr", "K_half", "mean_half", "tail_fraction"],
                                [[K, full.mean, full.std_error, K // 2, half.mean, tail]])
    res.checks["tail_below_1pct"] = bool(math.isfinite(full.mean) and tail < 0.01)
    return res


def default_outside_event(p):
    """Four arms across ``A(2 delta, 2 eps)``: balanced under both conditionings.

    Radial crossings of thin annuli are almost sure for either color and
    would carry no power.
    """
    if p.get("event"):
        return p["event"]
    return {"kind": "four_arm", "r": 2 * float(p["delta"]), "R": 2 * float(p["eps"])}


def run_coupling_test(p, n, seed, threads):
    eps = float(p["eps"])
    ev = default_outside_event(p)
    rep = X.coupling_stopping_set_test(float(p["eta"]), float(p["delta"]), eps, ev, n, seed, threads,
                                       n_bins=int(p["strata"]))
    res = Result(ranges={"point": rep["point"]["ranges"], "annulus": rep["annulus"]["ranges"]})
    res.extra["report"] = rep
    res.checks = {"passed": rep["passed"], "p_value": rep["p_value"], "exact": rep.get("exact")}
    res.tables["coupling_test"] = (
        ["ensemble", "accepted", "tried", "with_circuit", "freq_A"],
        [[k, rep[k]["accepted"], rep[k]["tried"], rep[k]["with_circuit"], rep[k]["freq_A"]]
         for k in ("point", "annulus")],
    )
    res.tables["coupling_z"] = (["z", "p_value", "pooled_z", "pooled_p_value", "stratified_samples"],
                                [[rep["z"], rep["p_value"], rep["pooled_z"], rep["pooled_p_value"],
                                  rep["stratified_samples"]]])
    return res


def run_four_point_residual(p, n, seed, threads):
    seps = [int(s) for s in p["separations"]]
    fit, res_e, info = X.four_point_residual_experiment(seps, float(p["L"]), n, seed, threads,
                                                        float(p["domain_factor"]))
    res = Result(ranges={"main": info["ranges"]})
    res.estimates = [{"scale": s, **e.to_dict()} for s, e in zip(seps, res_e)]
    res.tables["four_point_residual"] = (["scale", "mean", "stderr", "n"], _est_rows(seps, res_e))
    if fit is not None:
        _scaling_fits(res, seps, res_e, "residual")
    cross = info["cross_estimator"]
    res.tables["four_point_cross_estimator"] = (["scale", "partition_minus_direct", "stderr"],
                                                [[s, c.mean, c.std_error] for s, c in zip(seps, cross)])
    res.checks = {
        "monotone": info["monotone"],
        "cross_estimator_max_abs_z": max(abs(c.zscore(0.0)) for c in cross),
        "scale_hierarchy": [],
    }
    res.extra = {"geometry": {"x3": info["x3"], "x4": info["x4"], "pairs": info["pairs"],
                              "distance": info["distance"], "region": info["region"]},
                 "p34": info["p34"].to_dict(), "p12": [e.to_dict() for e in info["p12"]]}
    return res


# oracle suite --------------------------------------------------------------------

def default_oracle_checks():
    """Every detector on regions small enough to enumerate."""
    rect = LatticeRegion.rect(4, 3).to_dict()
    flower = LatticeRegion.from_sites([(0, 0), (1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]).to_dict()
    disk = LatticeRegion.disk(2).to_dict()
    r54 = LatticeRegion.rect(5, 4).to_dict()
    ann = {"center": [0.0, 0.0], "r": 0.6, "R": 1.9}
    pts3 = [[0, -1], [2, 0], [0, 1]]
    pts4 = [[0, -1], [3, -1], [-1, 1], [2, 1]]
    c = [list(lattice_xy(*x)) for x in [(-1, -1), (3, -1), (-3, 2), (1, 2)]]
    holes = [[list(x), 0.3] for x in c]
    return [
        {"name": "connection", "region": rect, "event": {"kind": "connection", "points": pts3}},
        {"name": "partition", "region": rect, "event": {"kind": "partition", "points": pts4, "blocks": [[0, 2], [1, 3]]}},
        {"name": "correlation", "region": rect, "event": {"kind": "correlation", "points": pts4}},
        {"name": "one_arm", "region": flower, "event": {"kind": "one_arm", "x": [0, 0], "r": 1.0}},
        {"name": "annulus_crossing", "region": disk, "event": {"kind": "annulus_crossing", **ann}},
        {"name": "open_circuit", "region": disk, "event": {"kind": "open_circuit", **ann}},
        {"name": "closed_crossing", "region": disk, "event": {"kind": "closed_crossing", **ann}},
        {"name": "four_arm", "region": disk, "event": {"kind": "four_arm", **ann}},
        {"name": "four_arm_closed", "region": disk, "event": {"kind": "four_arm_closed", **ann}},
        {"name": "disjoint_connections", "region": r54,
         "event": {"kind": "disjoint_connections", "pairs": [[c[0], c[2]], [c[1], c[3]]], "holes": holes}},
    ]


def open_circuit_by_cycles(region: LatticeRegion, ann: AnnulusSpec):
    """Exact probability of an open circuit from an explicit search over site cycles."""
    from fractions import Fraction

    from ..events import annulus_sets
    from .oracle import BitsetEnumerator, innermost_cycle_index, surrounding_cycles

    en = BitsetEnumerator(region)
    cycles = surrounding_cycles(region, annulus_sets(region, ann)["S"], ann.center)
    which = innermost_cycle_index(en, cycles)
    return Fraction(int(np.sum(which >= 0)), 1 << en.N)


def run_oracle_suite(p, n, seed, threads):
    checks = p.get("checks") or default_oracle_checks()
    seeds = int(p["seeds"])
    res = Result()
    rows = []
    all_ok = True
    for c in checks:
        reg = LatticeRegion.from_dict(c["region"])
        spec = EventSpec.from_dict(c["event"])
        exact = brute_force_probability(reg, spec, "bitset")
        pe = float(exact)
        sigma = math.sqrt(pe * (1 - pe) / n)
        ok_seeds = 0
        worst = 0.0
        for i in range(seeds):
            est = X.estimate_event(spec, reg, n, X.rng.derive_seed(seed, "oracle", c["name"], i), threads, memo=True)
            dev = abs(est.mean - pe)
            good = dev <= 4 * sigma if sigma > 0 else dev == 0
            ok_seeds += good
            worst = max(worst, dev / sigma if sigma > 0 else (0.0 if dev == 0 else math.inf))
        frac = ok_seeds / seeds
        ok = frac >= 0.99
        all_ok &= ok
        rows.append([c["name"], str(exact), pe, seeds, n, ok_seeds, worst, ok])
        res.checks[c["name"]] = {"exact": str(exact), "fraction_within_4sigma": frac, "passed": bool(ok)}
    res.tables["oracle_suite"] = (["check", "exact", "exact_float", "seeds", "samples_per_seed", "seeds_within_4sigma",
                                   "max_abs_z", "passed"], rows)
    if p.get("exact", True):
        reg = LatticeRegion.rect(4, 3)
        lhs, rhs, _ = npoint_decomposition(reg, [(0, -1), (3, -1), (-1, 1), (2, 1)])
        dec_ok = lhs == rhs
        ann = AnnulusSpec((0.0, 0.0), 0.6, 1.9)
        disk = LatticeRegion.disk(2)
        primal = open_circuit_by_cycles(disk, ann)
        dual = 1 - brute_force_probability(disk, EventSpec("closed_crossing", ann.to_dict()))
        ok_p, ncirc = X.micro_stopping_identity("point")
        ok_a, _ = X.micro_stopping_identity("annulus")
        res.checks["npoint_decomposition"] = {"lhs": str(lhs), "rhs": str(rhs), "passed": bool(dec_ok)}
        res.checks["circuit_duality"] = {"cycles": str(primal), "no_closed_crossing": str(dual),
                                         "passed": bool(primal == dual)}
        res.checks["stopping_set_identity"] = {"point": ok_p, "annulus": ok_a, "circuits": ncirc,
                                               "passed": bool(ok_p and ok_a)}
        all_ok &= dec_ok and primal == dual and ok_p and ok_a
        res.tables["oracle_exact"] = (["check", "value_a", "value_b", "passed"], [
            ["npoint_decomposition", str(lhs), str(rhs), dec_ok],
            ["circuit_duality", str(primal), str(dual), primal == dual],
            ["stopping_set_identity", ok_p, ok_a, ok_p and ok_a],
        ])
    res.checks["passed"] = bool(all_ok)
    res.ranges = {"per_seed": [[0, n]], "seeds": seeds}
    return res


# loops ---------------------------------------------------------------------------

def run_loop_export(p, n, seed, threads):
    reg = LatticeRegion.rect(int(p["width"]), int(p["height"]))
    totals = {"closure": 0, "color": 0, "nesting": 0, "edges": 0, "loops": 0}
    buf = io.StringIO()
    n_export = int(p["export"])
    for rep in range(n):
        c = sample(reg, seed, rep)
        ens = loops.trace_interfaces(c)
        bad = loops.check_invariants(c, ens)
        for k in ("closure", "color", "nesting", "loops"):
            totals[k] += bad[k]
        totals["edges"] += abs(bad["edges"])
        if rep < n_export:
            for lp, par in zip(ens.loops, ens.parents):
                buf.write(f'{{"replica": {rep}, "parent": {int(par)}, "loop": {lp.to_json()}}}\n')
    res = Result(ranges={"main": [[0, n]]})
    res.checks = {**totals, "passed": totals["closure"] == totals["color"] == totals["nesting"] == totals["edges"] == 0}
    res.tables["loop_invariants"] = (["configs", "loops", "closure", "color", "nesting", "edge_balance"],
                                     [[n, totals["loops"], totals["closure"], totals["color"], totals["nesting"],
                                       totals["edges"]]])
    res.files["loops.jsonl"] = buf.getvalue()
    return res


RUNNERS = {
    "rhombus_crossing": run_rhombus_crossing,
    "pi_scaling": run_pi_scaling,
    "p2_scaling": run_p2_scaling,
    "p3_ratio": run_p3_ratio,
    "four_arm_scaling": run_four_arm_scaling,
    "field_moments": run_field_moments,
    "cutoff_scaling": run_cutoff_scaling,
    "box_variance_scaling": run_box_variance_scaling,
    "coupling_test": run_coupling_test,
    "four_point_residual": run_four_point_residual,
    "oracle_suite": run_oracle_suite,
    "loop_export": run_loop_export,
}


def run_kind(kind, params, n_samples, seed, threads=None) -> Result:
    return RUNNERS[kind](with_defaults(kind, params), int(n_samples), int(seed), threads)
