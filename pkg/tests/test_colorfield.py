import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import dblquad

from percolab.clusters import label, label_closed, same_cluster
from percolab.colorfield import (
    BoxProjector,
    Eigenbasis,
    FieldCoefficients,
    assign_signs,
    box_indicator,
    correlation_direct,
    correlation_partition,
    correlation_two_color,
    field_functional,
    field_sample,
    hexagon_indicator,
    hminus_norm,
    smoothed_coefficients,
    spin_value,
    zero_function,
)
from percolab.inference import EventSpec, brute_force_probability
from percolab.inference.oracle import even_partitions, npoint_decomposition
from percolab.lattice import GeometryError, LatticeRegion
from percolab.sampling import Configuration, enumeration_matrix, sample


def cfg(region, bits):
    return Configuration.from_bits(region, np.asarray(bits, dtype=bool))


# --- signs -------------------------------------------------------------------------------

def test_empty_configuration_has_no_signs():
    reg = LatticeRegion.box(3)
    lab = label(cfg(reg, np.zeros(reg.n_sites)))
    assert len(assign_signs(lab, 1, 1)) == 0 and assign_signs(lab, 1, 1).as_dict() == {}


def test_signs_are_deterministic():
    reg = LatticeRegion.box(8)
    lab = label(sample(reg, 2, 2))
    a, b = assign_signs(lab, 5, 7), assign_signs(lab, 5, 7)
    assert np.array_equal(a.signs, b.signs) and np.array_equal(a.ids, lab.ids)


def test_signs_are_fair_and_independent():
    reg = LatticeRegion.rect(3, 1)
    lab = label(cfg(reg, [1, 0, 1]))
    n = 10_000
    s = np.array([assign_signs(lab, 42, rep).signs for rep in range(n)], dtype=float)
    assert s.shape == (n, 2)
    p = (s[:, 0] > 0).mean()
    assert abs(p - 0.5) <= 3 * 0.5 / math.sqrt(n)
    corr = np.corrcoef(s[:, 0], s[:, 1])[0, 1]
    assert abs(corr) < 4 / math.sqrt(n)


def test_spin_values():
    reg = LatticeRegion.rect(3, 1)
    c = cfg(reg, [1, 1, 0])
    lab = label(c)
    sg = assign_signs(lab, 1, 0)
    a, b, z = (spin_value(lab, sg, s) for s in reg.sites())
    assert z == 0 and a == b and a in (-1, 1)
    fl = sg.flipped(lab.ids[0])
    assert spin_value(lab, fl, reg.site(0)) == -a and spin_value(lab, fl, reg.site(1)) == -b
    S = field_sample(lab, sg)
    assert S.tolist() == [a, a, 0]


# --- correlations ----------------------------------------------------------------------

def test_correlation_partition_examples():
    reg = LatticeRegion.rect(4, 1)
    s0, s1, s2, s3 = reg.sites()
    paired = label(cfg(reg, [1, 1, 0, 0]))
    # open pair and a closed pair: closed points give 0
    assert correlation_partition(paired, [s0, s1]) == 1
    assert correlation_partition(paired, [s0, s1, s2, s3]) == 0
    two_pairs = LatticeRegion.rect(5, 1)
    t = two_pairs.sites()
    lab = label(cfg(two_pairs, [1, 1, 0, 1, 1]))
    assert correlation_partition(lab, [t[0], t[1], t[3], t[4]]) == 1
    lab = label(cfg(two_pairs, [1, 0, 1, 1, 1]))
    assert correlation_partition(lab, [t[0], t[2], t[3], t[4]]) == 0
    with pytest.raises(ValueError):
        correlation_partition(lab, [t[0], t[0]])


@given(st.integers(0, 2 ** 32))
def test_two_point_is_same_cluster_and_odd_vanishes(seed):
    reg = LatticeRegion.box(6)
    lab = label(sample(reg, seed, 0))
    x, y, z = (0, 0), (3, -1), (-2, 4)
    assert correlation_partition(lab, [x, y]) == int(same_cluster(lab, x, y))
    assert correlation_partition(lab, [x, y, z]) == 0


def test_even_correlation_is_sum_over_even_partitions():
    reg = LatticeRegion.rect(4, 3)
    pts = [[0, -1], [3, -1], [-1, 1], [2, 1]]
    parts = list(even_partitions(4))
    assert len(parts) == 4  # one block of four plus three pairings
    total = sum(brute_force_probability(reg, EventSpec("partition", {"points": pts, "blocks": b})) for b in parts)
    corr = brute_force_probability(reg, EventSpec("correlation", {"points": pts}))
    assert corr == total
    # the conditional sign average over every configuration and sign pattern gives the same number
    lhs, rhs, terms = npoint_decomposition(reg, pts)
    assert lhs == rhs == corr and len(terms) == 4


def test_direct_and_partition_estimators_agree():
    reg = LatticeRegion.box(5)
    pts = [(0, 0), (2, 0)]
    n = 20_000
    part = np.empty(n)
    direct = np.empty(n)
    for rep in range(n):
        lab = label(sample(reg, 8, rep))
        part[rep] = correlation_partition(lab, pts)
        direct[rep] = correlation_direct(lab, assign_signs(lab, 8, rep), pts)
    se = math.sqrt(part.var() / n + direct.var() / n)
    assert abs(part.mean() - direct.mean()) <= 3 * se
    assert part.var() <= direct.var()


def test_direct_examples():
    reg = LatticeRegion.rect(3, 1)
    lab = label(cfg(reg, [1, 1, 1]))
    sg = assign_signs(lab, 0, 0)
    s = reg.sites()
    assert correlation_direct(lab, sg, [s[0], s[2]]) == 1
    closed = label(cfg(reg, [1, 0, 1]))
    assert correlation_direct(closed, assign_signs(closed, 0, 0), [s[0], s[1]]) == 0


def test_two_color_two_point_is_twice_p2():
    reg = LatticeRegion.box(5)
    pts = [(0, 0), (2, 0)]
    n = 10_000
    tc = np.empty(n)
    p2 = np.empty(n)
    for rep in range(n):
        c = sample(reg, 9, rep)
        lab, cl = label(c), label_closed(c)
        sg = assign_signs(lab, 9, rep, cl)
        tc[rep] = correlation_two_color(lab, cl, sg, pts)
        # conditional expectation of the two-color product: same cluster of either color
        p2[rep] = same_cluster(lab, *pts) + same_cluster(cl, *pts)
    opn = np.array([same_cluster(label(sample(reg, 9, r)), *pts) for r in range(n)], dtype=float)
    se = math.sqrt(tc.var() / n + 4 * opn.var() / n)
    assert abs(tc.mean() - 2 * opn.mean()) <= 3 * se
    assert abs(tc.mean() - p2.mean()) <= 3 * math.sqrt(tc.var() / n)


# --- field functionals -----------------------------------------------------------------

def test_field_functional_examples():
    reg = LatticeRegion.box(6, spacing=0.5)
    c = sample(reg, 1, 1)
    lab = label(c)
    sg = assign_signs(lab, 1, 1)
    assert field_functional(lab, sg, zero_function(), 0.3) == 0.0
    bits = np.zeros(reg.n_sites, dtype=bool)
    bits[reg.index_of((0, 0))] = True
    one = label(cfg(reg, bits))
    s1 = assign_signs(one, 0, 0)
    if s1.signs[0] < 0:
        s1 = s1.flipped(one.ids[0])
    val = field_functional(one, s1, hexagon_indicator(reg, (0, 0)), 0.3)
    assert val == pytest.approx(0.25 / 0.3, rel=1e-12)


@given(st.integers(0, 2 ** 32), st.floats(0.5, 2.5))
def test_field_routes_agree(seed, L):
    reg = LatticeRegion.box(6, spacing=0.5)
    lab = label(sample(reg, seed, 0))
    sg = assign_signs(lab, seed, 0)
    f = box_indicator(L)
    g = f.__class__(lambda x, y: np.cos(x) * np.exp(-y * y), (-2.5, -2.5, 2.5, 2.5))
    for h in (f, g):
        a = field_functional(lab, sg, h, 0.7, route="sites")
        b = field_functional(lab, sg, h, 0.7, route="clusters")
        assert a == pytest.approx(b, rel=1e-10, abs=1e-10)


def test_field_support_must_fit():
    reg = LatticeRegion.box(4)
    lab = label(sample(reg, 0, 0))
    with pytest.raises(GeometryError):
        field_functional(lab, assign_signs(lab, 0, 0), box_indicator(10.0), 1.0)


# --- eigenbasis and coefficients -------------------------------------------------------

@pytest.mark.parametrize("i,j", [(1, 1), (2, 3), (5, 1)])
def test_eigenfunctions_are_normalized(i, j):
    b = Eigenbasis(1.5, K=8)
    val, _ = dblquad(lambda y, x: b.u(i, j, x, y) ** 2, -1.5, 1.5, -1.5, 1.5, epsabs=1e-10)
    assert val == pytest.approx(1.0, abs=1e-6)
    other, _ = dblquad(lambda y, x: b.u(i, j, x, y) * b.u(i + 1, j, x, y), -1.5, 1.5, -1.5, 1.5, epsabs=1e-10)
    assert abs(other) < 1e-6


def test_eigenvalues_increase_with_mode_norm():
    b = Eigenbasis(2.0, K=6)
    lam = b.eigenvalues
    i = b.modes
    k2 = (i[:, None] ** 2 + i[None, :] ** 2).ravel()
    order = np.argsort(k2, kind="stable")
    assert np.all(np.diff(lam.ravel()[order]) >= 0)
    assert lam[0, 0] == pytest.approx(np.pi ** 2 / 8)
    with pytest.raises(ValueError):
        Eigenbasis(0.0)


def test_hminus_norm_examples():
    b = Eigenbasis(1.0, K=4)
    a = np.zeros((4, 4))
    a[0, 0] = 1.0
    assert hminus_norm(a, b, 1.0) == pytest.approx(4 / np.pi ** 4, rel=1e-12)
    # the quoted decimal 0.041066 is a rounding of 4 / pi^4 = 0.0410639...
    assert 4 / np.pi ** 4 == pytest.approx(0.041066, abs=5e-6)
    assert hminus_norm(np.zeros((4, 4)), b) == 0.0
    with pytest.raises(ValueError):
        hminus_norm(a, b, 0.0)


@given(st.lists(st.floats(-3, 3), min_size=9, max_size=9), st.floats(0.2, 2.0), st.floats(0.0, 1.0))
def test_hminus_decreasing_in_alpha(vals, alpha, extra):
    b = Eigenbasis(2.0, K=3)  # every eigenvalue is at least pi^2 / 8 > 1
    a = np.array(vals).reshape(3, 3)
    assert hminus_norm(a, b, alpha + extra) <= hminus_norm(a, b, alpha) + 1e-15


def test_projector_matches_direct_sum():
    reg = LatticeRegion.box(10, spacing=0.5)
    basis = Eigenbasis(4.0, K=6)
    P = BoxProjector(reg, basis)
    w = np.random.default_rng(0).normal(size=reg.n_sites)
    pos = reg.positions
    inside = (np.abs(pos[:, 0]) <= 4.0 + 1e-9) & (np.abs(pos[:, 1]) <= 4.0 + 1e-9)
    direct = np.array([[np.sum(w[inside] * basis.u(i, j, pos[inside, 0], pos[inside, 1]))
                        for j in basis.modes] for i in basis.modes])
    assert np.allclose(P.project(w), direct, rtol=1e-12, atol=1e-10)
    batch = P.project(np.stack([w, 2 * w]))
    assert np.allclose(batch[1], 2 * direct, rtol=1e-12, atol=1e-10)


def test_smoothed_coefficients_cutoffs():
    reg = LatticeRegion.box(10, spacing=0.5)
    basis = Eigenbasis(4.0, K=8)
    c = sample(reg, 6, 6)
    lab = label(c)
    sg = assign_signs(lab, 6, 6)
    full = smoothed_coefficients(lab, sg, basis, 0.5)
    assert np.array_equal(smoothed_coefficients(lab, sg, basis, 0.5, cutoff=0.0).a, full.a)
    huge = lab.diameters.max() + 1.0
    assert np.all(smoothed_coefficients(lab, sg, basis, 0.5, cutoff=huge).a == 0)
    empty = label(cfg(reg, np.zeros(reg.n_sites)))
    assert np.all(smoothed_coefficients(empty, assign_signs(empty, 0, 0), basis, 0.5).a == 0)
    # a cutoff equal to a diameter drops that cluster (strict inequality)
    d = np.sort(np.unique(lab.diameters))[-1]
    at = smoothed_coefficients(lab, sg, basis, 0.5, cutoff=float(d)).a
    assert np.all(at == 0)
    with pytest.raises(ValueError):
        smoothed_coefficients(lab, sg, basis, 0.5, cutoff=-1.0)


def test_smoothed_coefficients_match_direct_definition():
    reg = LatticeRegion.box(8, spacing=0.5)
    basis = Eigenbasis(3.0, K=5)
    lab = label(sample(reg, 4, 0))
    sg = assign_signs(lab, 4, 0)
    coef = smoothed_coefficients(lab, sg, basis, 0.4).a
    S = field_sample(lab, sg).astype(float)
    pos = reg.positions
    for i in (1, 3):
        for j in (2, 5):
            f = box_indicator(3.0)
            g = f.__class__(lambda x, y, i=i, j=j: f(x, y) * basis.u(i, j, x, y), f.support)
            assert coef[i - 1, j - 1] == pytest.approx(field_functional(lab, sg, g, 0.4), rel=1e-10, abs=1e-12)
    assert np.isfinite(coef).all() and coef.shape == (5, 5)
    assert np.any(S != 0) and pos.shape[0] == reg.n_sites


def test_coefficients_export_csv():
    b = Eigenbasis(1.0, K=2)
    buf = io.StringIO()
    FieldCoefficients(np.array([[1.0, 2.0], [3.0, 4.0]])).to_csv(buf, b)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "i,j,lambda,a_ij" and len(lines) == 5
    assert lines[2].split(",")[:2] == ["1", "2"] and float(lines[2].split(",")[3]) == 2.0


def test_projector_requires_box_inside_region():
    with pytest.raises(GeometryError):
        BoxProjector(LatticeRegion.box(3), Eigenbasis(5.0, K=2))
