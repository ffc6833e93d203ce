import io
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from geodesic_oracle import geodesic_length
from percolab.events import AnnulusSpec, annulus_sets, open_circuit_in_annulus
from percolab.inference import BitsetEnumerator
from percolab.inference.oracle import innermost_cycle_index, surrounding_cycles
from percolab.lattice import CIRCUMRADIUS, GeometryError, LatticeRegion
from percolab.loops import (
    LoopPath,
    check_invariants,
    ensemble_distance,
    innermost_open_circuit,
    interface_pair_count,
    loop_distance,
    resample,
    separates,
    sphere_distance,
    trace_interfaces,
    winding_number,
)
from percolab.sampling import Configuration, sample

pts = st.tuples(st.floats(-20, 20), st.floats(-20, 20))


def cfg(region, bits):
    return Configuration.from_bits(region, np.asarray(bits, dtype=bool))


def hexagon(radius, center=(0.0, 0.0), rot=30.0):
    ang = np.radians(rot + 60 * np.arange(6))
    return LoopPath.from_vertices(np.stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)], 1))


def open_pairs_oracle(config):
    """Count unordered open/closed neighbour pairs with both sites in the region."""
    reg = config.region
    index = {s: i for i, s in enumerate(reg.sites())}
    n = 0
    for i, (q, r) in enumerate(reg.sites()):
        if not config.open[i]:
            continue
        for dq, dr in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)):
            j = index.get((q + dq, r + dr))
            if j is not None and not config.open[j]:
                n += 1
    return n


# --- tracing ---------------------------------------------------------------------------

def test_single_open_site_gives_one_ccw_hexagon(backend):
    reg = LatticeRegion.box(4)
    bits = np.zeros(reg.n_sites, dtype=bool)
    bits[reg.index_of((0, 0))] = True
    ens = trace_interfaces(cfg(reg, bits))
    assert len(ens) == 1
    lp = ens.loops[0]
    assert len(lp) == 6 and lp.orientation == "ccw" and lp.enclosed == "open"
    assert np.allclose(np.hypot(*lp.vertices.T), CIRCUMRADIUS)
    assert winding_number(lp, (0.0, 0.0)) == 1


def test_all_closed_has_no_loops(backend):
    reg = LatticeRegion.box(4)
    ens = trace_interfaces(cfg(reg, np.zeros(reg.n_sites)))
    assert len(ens) == 0 and ens.n_edges == 0


def test_closed_site_in_open_sea_is_cw(backend):
    reg = LatticeRegion.box(4)
    bits = np.ones(reg.n_sites, dtype=bool)
    bits[reg.index_of((0, 0))] = False
    ens = trace_interfaces(cfg(reg, bits))
    assert [(l.orientation, len(l)) for l in ens.loops] == [("cw", 6)]
    assert winding_number(ens.loops[0], (0.0, 0.0)) == -1


@pytest.mark.parametrize("shape", ["box", "rect"])
def test_edge_count_matches_adjacency_oracle(backend, shape):
    reg = LatticeRegion.box(12) if shape == "box" else LatticeRegion.rect(20, 14)
    for rep in range(10):
        c = sample(reg, 4, rep)
        ens = trace_interfaces(c)
        n = open_pairs_oracle(c)
        assert interface_pair_count(c) == n
        assert ens.n_edges == n


@given(st.integers(0, 2 ** 32))
def test_invariants_on_random_configurations(seed):
    c = sample(LatticeRegion.rect(24, 24), seed, 0)
    bad = check_invariants(c)
    assert bad["closure"] == bad["color"] == bad["nesting"] == bad["edges"] == 0


def test_nesting_alternates_and_is_nontrivial():
    reg = LatticeRegion.box(9)
    pos = reg.positions
    d = np.hypot(*pos.T)
    # open disk, closed ring, open core: three nested loops
    bits = (d < 6) & ~((d > 2.5) & (d < 4))
    ens = trace_interfaces(cfg(reg, bits))
    depth = ens.depth()
    assert depth.max() == 2
    for i, p in enumerate(ens.parents):
        if p >= 0:
            assert ens.loops[i].orientation != ens.loops[p].orientation


def _corrupt(ens, i):
    lp = ens.loops[i]
    bad = LoopPath(lp.vertices[::-1].copy(), lp.orientation, lp.enclosed, lp.sites, lp.dirs)
    ens.loops[i] = bad
    return ens


def test_invariant_checker_catches_negative_controls():
    reg = LatticeRegion.box(9)
    c = sample(reg, 3, 0)
    ens = trace_interfaces(c)
    assert check_invariants(c, ens)["color"] == 0
    assert check_invariants(c, _corrupt(ens, 0))["color"] == 1
    ens = trace_interfaces(c)
    ens.arcs.append(ens.arcs[0] if ens.arcs else (ens.loops[0].sites, ens.loops[0].dirs))
    assert check_invariants(c, ens)["edges"] > 0
    d = np.hypot(*reg.positions.T)
    nested = cfg(reg, (d < 6) & ~((d > 2.5) & (d < 4)))
    ens = trace_interfaces(nested)
    assert check_invariants(nested, ens)["nesting"] == 0
    child = int(np.flatnonzero(ens.parents >= 0)[0])
    ens.parents[child] = child
    assert check_invariants(nested, ens)["nesting"] == 1


def test_loop_export_json_lines():
    reg = LatticeRegion.box(4)
    bits = np.zeros(reg.n_sites, dtype=bool)
    bits[reg.index_of((0, 0))] = True
    buf = io.StringIO()
    trace_interfaces(cfg(reg, bits)).export(buf)
    rec = json.loads(buf.getvalue().strip())
    assert rec["orientation"] == "ccw" and len(rec["vertices"]) == 6


def test_backends_trace_identically():
    from percolab import kernels
    from percolab.loops import trace_edges

    c = sample(LatticeRegion.rect(40, 40), 6, 1)
    prev = kernels.use("numba")
    a = trace_edges(c)
    kernels.use("numpy")
    b = trace_edges(c)
    kernels.use(prev)
    for f in ("sites", "dirs", "offsets", "closed"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


# --- winding and separation -------------------------------------------------------------

def test_winding_examples():
    h = hexagon(1.0)
    assert winding_number(h, (0.0, 0.0)) == 1
    assert winding_number(h, (50.0, -3.0)) == 0
    assert winding_number(h.reversed(), (0.0, 0.0)) == -1
    with pytest.raises(ValueError):
        winding_number(h, tuple(h.vertices[2]))


@given(pts)
def test_reversal_negates_winding(p):
    h = hexagon(3.0, (1.0, -2.0))
    try:
        w = winding_number(h, p)
    except ValueError:
        return
    assert winding_number(h.reversed(), p) == -w


def test_separates_examples():
    h = hexagon(2.0)
    assert separates(h, (0.1, 0.2), (1e6, 1e6))
    assert not separates(h, (10.0, 0.0), (-10.0, 3.0))
    assert not separates(h, (0.1, 0.2), (-0.5, 0.3))


# --- innermost open circuit --------------------------------------------------------------

def test_innermost_circuit_trivial():
    reg = LatticeRegion.box(6)
    ann = AnnulusSpec((0.0, 0.0), 0.9, 4.0)
    res = innermost_open_circuit(cfg(reg, np.ones(reg.n_sites)), ann)
    ring = np.flatnonzero(annulus_sets(reg, ann)["inner_adj"])
    assert res.found and set(res.circuit.tolist()) == set(ring.tolist())
    assert not innermost_open_circuit(cfg(reg, np.zeros(reg.n_sites)), ann).found
    with pytest.raises(GeometryError):
        innermost_open_circuit(cfg(reg, np.ones(reg.n_sites)), AnnulusSpec((0.0, 0.0), 0.3, 4.0))


def _code_config(en, code):
    bits = np.zeros(en.region.n_sites, dtype=bool)
    for j, s in enumerate(en.free):
        if (code >> j) & 1:
            bits[s] = True
    return cfg(en.region, bits)


def test_innermost_circuit_matches_cycle_search():
    reg = LatticeRegion.disk(2)
    ann = AnnulusSpec((0.0, 0.0), 0.6, 1.9)
    en = BitsetEnumerator(reg)
    cycles = surrounding_cycles(reg, annulus_sets(reg, ann)["S"], ann.center)
    which = innermost_cycle_index(en, cycles)
    for code in range(0, 1 << en.N, 29):
        res = innermost_open_circuit(_code_config(en, code), ann)
        if which[code] < 0:
            assert not res.found
        else:
            assert res.found
            assert set(res.circuit.tolist()) == set(cycles[which[code]][0].tolist())


@given(st.integers(0, 2 ** 32), st.booleans())
def test_exploration_is_a_stopping_set(seed, randomize):
    reg = LatticeRegion.box(10)
    ann = AnnulusSpec((0.0, 0.0), 1.5, 7.0)
    c = sample(reg, seed, 3)
    res = innermost_open_circuit(c, ann, randomize=randomize, seed=seed)
    assert res.found == open_circuit_in_annulus(c, ann)
    if not res.found:
        return
    assert np.all(c.open[res.circuit])
    allowed = set(res.circuit.tolist()) | set(res.interior.tolist())
    assert set(res.explored.tolist()) <= allowed
    # every explored site is inside or on the circuit: winding number about its centre is nonzero
    for i in res.explored[:50]:
        p = reg.positions[i]
        if i in set(res.circuit.tolist()):
            continue
        assert winding_number(res.loop, p) != 0


def test_randomized_start_gives_same_circuit():
    reg = LatticeRegion.box(10)
    ann = AnnulusSpec((0.0, 0.0), 1.5, 7.0)
    for rep in range(20):
        c = sample(reg, 2, rep)
        a = innermost_open_circuit(c, ann)
        b = innermost_open_circuit(c, ann, randomize=True, seed=rep)
        assert a.found == b.found
        if a.found:
            assert np.array_equal(np.sort(a.circuit), np.sort(b.circuit))


# --- metrics -----------------------------------------------------------------------------

def test_sphere_distance_examples():
    assert sphere_distance((0.3, -1.2), (0.3, -1.2)) == 0.0
    radial, _ = quad(lambda t: 1.0 / (1.0 + t * t), 0.0, 1.0)
    assert sphere_distance((0.0, 0.0), (1.0, 0.0)) == pytest.approx(math.pi / 4, abs=1e-15)
    assert radial == pytest.approx(math.pi / 4, abs=1e-14)
    assert geodesic_length((0.0, 0.0), (1.0, 0.0)) == pytest.approx(math.pi / 4, abs=1e-12)


def test_sphere_distance_matches_geodesic_quadrature():
    rng = np.random.default_rng(5)
    for _ in range(200):
        u, v = rng.uniform(-4, 4, (2, 2))
        assert sphere_distance(u, v) == pytest.approx(geodesic_length(u, v), abs=1e-9)


@given(pts, pts)
def test_sphere_distance_below_euclidean(u, v):
    assert sphere_distance(u, v) <= math.hypot(u[0] - v[0], u[1] - v[1]) + 1e-12


@given(pts, pts, pts)
def test_sphere_distance_metric_axioms(u, v, w):
    duv, dvu = sphere_distance(u, v), sphere_distance(v, u)
    assert duv == pytest.approx(dvu, abs=1e-12)
    assert duv >= 0 and duv <= math.pi / 2 + 1e-12
    assert duv <= sphere_distance(u, w) + sphere_distance(w, v) + 1e-9


def test_sphere_distance_broadcasts():
    u = np.zeros((3, 2))
    v = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    assert np.allclose(sphere_distance(u, v), [math.pi / 4, math.pi / 4, 0.0])


def test_resample_is_equal_arc_length():
    r = resample(hexagon(1.0).vertices, 60)
    steps = np.hypot(*np.diff(np.vstack([r, r[:1]]), axis=0).T)
    assert np.allclose(steps, 0.1, atol=1e-12)


def test_loop_distance_identity_and_symmetry():
    g1, g2 = hexagon(1.0), hexagon(2.0, (0.5, 0.0))
    assert loop_distance(g1, g1) == pytest.approx(0.0, abs=1e-12)
    assert loop_distance(g1, g2) == pytest.approx(loop_distance(g2, g1), abs=1e-12)
    with pytest.raises(ValueError):
        loop_distance(g1, np.zeros((0, 2)))


def test_concentric_hexagons_distance():
    g1, g2 = hexagon(1.0), hexagon(2.0)
    d = loop_distance(g1, g2)
    matched = sphere_distance(g1.vertices, g2.vertices)
    assert np.allclose(matched, math.atan(2.0) - math.atan(1.0))
    assert abs(d / matched.max() - 1.0) <= 0.05
    # brute-force alignment over every cyclic shift at fine resampling bounds the Frechet value from above
    n = 512
    a, b = resample(g1.vertices, n), resample(g2.vertices, n)
    brute = min(float(sphere_distance(a, np.roll(b, k, axis=0)).max()) for k in range(n))
    assert d <= brute + 1e-12
    # and any coupling is at least the Hausdorff distance of the point sets
    D = sphere_distance(a[:, None, :], b[None, :, :])
    assert d >= max(D.min(0).max(), D.min(1).max()) - 1e-12


def test_ensemble_distance_properties():
    e1 = [hexagon(1.0), hexagon(3.0, (5.0, 0.0))]
    assert ensemble_distance(e1, e1) == pytest.approx(0.0, abs=1e-12)
    assert ensemble_distance([], []) == 0.0
    assert ensemble_distance(e1, []) == math.inf
    tiny = hexagon(0.01, (-6.0, 4.0))
    extra = e1 + [tiny]
    bound = min(loop_distance(tiny, g) for g in e1)
    assert ensemble_distance(e1, extra) == pytest.approx(bound, abs=1e-12)


def test_ensemble_triangle_inequality():
    rng = np.random.default_rng(11)

    def ens():
        return [hexagon(rng.uniform(0.3, 3), tuple(rng.uniform(-3, 3, 2)), rng.uniform(0, 60))
                for _ in range(rng.integers(1, 3))]

    for _ in range(8):
        a, b, c = ens(), ens(), ens()
        n = 64
        assert ensemble_distance(a, c, n) <= ensemble_distance(a, b, n) + ensemble_distance(b, c, n) + 1e-9
