import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from percolab.lattice import (
    CIRCUMRADIUS,
    Domain,
    GeometryError,
    LatticeRegion,
    embed,
    hexagon_area,
    hex_near_far,
    lattice_xy,
    nearest_site,
    neighbors,
    sites_intersecting_circle,
)

coords = st.integers(-10_000, 10_000)


def test_neighbors_of_origin():
    assert set(neighbors((0, 0))) == {(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)}


@given(coords, coords)
def test_neighbors_are_six_distinct_and_symmetric(q, r):
    nb = neighbors((q, r))
    assert len(nb) == 6 and len(set(nb)) == 6
    for t in nb:
        assert (q, r) in neighbors(t)


@given(coords, coords)
def test_neighbors_are_one_step_away(q, r):
    x0, y0 = lattice_xy(q, r)
    for t in neighbors((q, r)):
        x, y = lattice_xy(*t)
        assert math.hypot(x - x0, y - y0) == pytest.approx(1.0)


def test_embed_basis_vectors():
    reg = LatticeRegion.box(3)
    assert embed((1, 0), reg) == pytest.approx([1.0, 0.0])
    assert embed((0, 1), reg) == pytest.approx([0.5, 0.8660254037844386])
    half = LatticeRegion.box(3, spacing=0.5)
    assert embed((1, 1), half) == pytest.approx([0.75, 0.4330127018922193])


@given(coords, coords, st.floats(0.1, 5.0))
def test_embed_is_linear_in_spacing(q, r, a):
    p1 = embed((q, r), LatticeRegion.box(2))
    pa = embed((q, r), LatticeRegion.box(2, spacing=a))
    assert pa == pytest.approx(a * p1, rel=1e-12, abs=1e-9)


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_nearest_site_contains_point(x, y):
    s = nearest_site(x, y)
    sx, sy = lattice_xy(*s)
    near, _ = hex_near_far(x - sx, y - sy)
    assert near == 0.0
    # no other neighbour is strictly closer
    d0 = math.hypot(x - sx, y - sy)
    for t in neighbors(s):
        tx, ty = lattice_xy(*t)
        assert math.hypot(x - tx, y - ty) >= d0 - 1e-12


def test_hexagon_near_far_values():
    near, far = hex_near_far(np.array([0.0, 2.0]), np.array([0.0, 0.0]))
    assert near[0] == 0.0 and far[0] == pytest.approx(CIRCUMRADIUS)
    # (2, 0) faces a flat side at distance 1/2 and the far corner is the one at 150 degrees
    assert near[1] == pytest.approx(1.5)
    assert far[1] == pytest.approx(math.hypot(2 + CIRCUMRADIUS * math.cos(math.radians(30)), 0.5 * CIRCUMRADIUS))


def _circle_oracle(region, center, radius):
    """Per-site test against densely sampled hexagon boundaries."""
    t = np.linspace(0.0, 1.0, 400, endpoint=False)
    ang = np.radians(30 + 60 * np.arange(7))
    vx, vy = CIRCUMRADIUS * np.cos(ang), CIRCUMRADIUS * np.sin(ang)
    bx = np.concatenate([vx[k] + t * (vx[k + 1] - vx[k]) for k in range(6)])
    by = np.concatenate([vy[k] + t * (vy[k + 1] - vy[k]) for k in range(6)])
    out = set()
    for s in region.sites():
        x, y = lattice_xy(*s)
        d = np.hypot(x + bx - center[0], y + by - center[1])
        # the circle meets the closed hexagon iff the boundary straddles it or the hexagon holds the circle
        if d.min() <= radius + 1e-3 and d.max() >= radius - 1e-3:
            out.add(s)
    return out


def test_circle_ring_matches_geometric_oracle():
    reg = LatticeRegion.box(13)
    ring = sites_intersecting_circle(reg, (0.0, 0.0), 10.0)
    oracle = _circle_oracle(reg, (0.0, 0.0), 10.0)
    # the sampled oracle can only under-detect tangencies by < 1e-3
    assert oracle <= ring
    near, far = reg.near_far((0.0, 0.0))
    borderline = {reg.site(i) for i in np.flatnonzero((np.abs(near - 10) < 2e-3) | (np.abs(far - 10) < 2e-3))}
    assert ring - oracle <= borderline
    for s in ring:
        x, y = lattice_xy(*s)
        assert abs(math.hypot(x, y) - 10.0) <= CIRCUMRADIUS + 1e-9


def test_small_circle_meets_origin_hexagon_only():
    reg = LatticeRegion.box(3)
    assert sites_intersecting_circle(reg, (0.0, 0.0), 0.3) == {(0, 0)}


@given(st.integers(-20, 20), st.integers(-20, 20), st.floats(0.5, 6.0))
def test_circle_translation_invariance(dq, dr, radius):
    base = LatticeRegion.box(9)
    shift = lattice_xy(dq, dr)
    moved = LatticeRegion("box", 9, offset=(float(shift[0]), float(shift[1])))
    a = sites_intersecting_circle(base, (0.1, 0.2), radius)
    b = sites_intersecting_circle(moved, (0.1 + float(shift[0]), 0.2 + float(shift[1])), radius)
    assert {(q + dq, r + dr) for q, r in a} == b


def test_region_shapes_and_counts():
    assert LatticeRegion.rect(3, 3).n_sites == 9
    assert LatticeRegion.rect(128, 128).n_sites == 128 * 128
    assert LatticeRegion.rhombus(5).n_sites == 25
    assert LatticeRegion.disk(1).n_sites == 7
    box = LatticeRegion.box(4)
    pos = box.positions
    assert np.all(np.abs(pos) <= 4 + 1e-9)


@pytest.mark.parametrize("W", [8, 16, 32, 64])
def test_box_area_matches_hexagon_sum(W):
    reg = LatticeRegion.box(W)
    rel = abs(reg.n_sites * hexagon_area(1.0) / (2 * W) ** 2 - 1.0)
    assert rel <= 2.0 / W


def test_region_validation():
    with pytest.raises(ValueError):
        LatticeRegion.box(0.5)
    with pytest.raises(ValueError):
        LatticeRegion.box(4, spacing=0.0)
    with pytest.raises(ValueError):
        LatticeRegion("triangle", 3)


@pytest.mark.parametrize("reg", [
    LatticeRegion.box(5, spacing=0.5, center=(1.0, -2.0)),
    LatticeRegion.disk(4, offset=(0.5, 0.25)),
    LatticeRegion.rect(4, 3),
    LatticeRegion.rhombus(6),
    LatticeRegion.from_sites([(0, 0), (1, 0), (0, 1)]),
    LatticeRegion.box(6).with_domain(Domain("disk", 3.0)),
])
def test_region_round_trip(reg):
    back = LatticeRegion.from_dict(reg.to_dict())
    assert back == reg
    assert np.array_equal(back.q, reg.q) and np.array_equal(back.r, reg.r)


def test_domain_forces_outside_sites_closed():
    reg = LatticeRegion.box(6).with_domain(Domain("disk", 3.0))
    d = np.hypot(*reg.positions.T)
    assert np.array_equal(reg.forced_closed, d > 3.0 + 1e-9)
    assert reg.n_free == int(np.sum(d <= 3.0 + 1e-9))


def test_index_lookup():
    reg = LatticeRegion.box(5)
    for i in (0, 7, reg.n_sites - 1):
        assert reg.index_of(reg.site(i)) == i
    assert reg.index(np.array([100]), np.array([0]))[0] == -1
    with pytest.raises((KeyError, GeometryError, ValueError)):
        reg.index_of((100, 0))


def test_require_disk():
    reg = LatticeRegion.box(10)
    reg.require_disk((0.0, 0.0), 8.0)
    with pytest.raises(GeometryError):
        reg.require_disk((0.0, 0.0), 10.0)
