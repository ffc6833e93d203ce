import itertools
from collections import deque

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from percolab.clusters import (
    Explorer,
    cluster_measure,
    label,
    label_array,
    label_closed,
    same_cluster,
)
from percolab.lattice import LatticeRegion, neighbors
from percolab.sampling import Configuration, enumeration_matrix, sample


def bfs_labels(region, open_mask):
    """Reference labeler: plain BFS over coordinates, min-index canonical labels."""
    index = {s: i for i, s in enumerate(region.sites())}
    out = np.full(region.n_sites, -1, dtype=np.int64)
    for i0, s0 in enumerate(region.sites()):
        if not open_mask[i0] or out[i0] >= 0:
            continue
        seen, queue = [i0], deque([s0])
        out[i0] = i0
        while queue:
            s = queue.popleft()
            for t in neighbors(s):
                j = index.get(t)
                if j is not None and open_mask[j] and out[j] < 0:
                    out[j] = i0
                    seen.append(j)
                    queue.append(t)
        out[seen] = min(seen)
    return out


def config(region, bits):
    return Configuration.from_bits(region, np.asarray(bits, dtype=bool))


def test_all_open_box_is_one_cluster(backend):
    reg = LatticeRegion.rect(3, 3)
    lab = label(config(reg, np.ones(9)))
    assert lab.count == 1 and lab.sizes.tolist() == [9]


def test_all_closed_has_no_cluster(backend):
    reg = LatticeRegion.box(4)
    lab = label(config(reg, np.zeros(reg.n_sites)))
    assert lab.count == 0 and np.all(lab.labels == -1)


def test_isolated_sites_are_singletons(backend):
    reg = LatticeRegion.rect(4, 1)
    lab = label(config(reg, [1, 0, 1, 0]))
    assert lab.count == 2 and lab.sizes.tolist() == [1, 1]
    assert lab.diameters.tolist() == [0.0, 0.0]


@pytest.mark.parametrize("w,h", [(3, 3), (4, 4), (5, 3)])
def test_labels_match_bfs_on_full_enumeration(backend, w, h):
    reg = LatticeRegion.rect(w, h)
    for bits in enumeration_matrix(reg):
        assert np.array_equal(label_array(reg, bits), bfs_labels(reg, bits))


@given(st.integers(0, 2 ** 32), st.integers(0, 1000))
def test_labels_match_bfs_on_random_boxes(seed, rep):
    reg = LatticeRegion.box(7)
    c = sample(reg, seed, rep)
    lab = label(c)
    assert np.array_equal(lab.labels, bfs_labels(reg, c.open))
    assert lab.sizes.sum() == c.open.sum()


def test_backends_agree_on_large_sample():
    from percolab import kernels

    reg = LatticeRegion.box(40)
    c = sample(reg, 5, 0)
    prev = kernels.use("numba")
    a = label(c).labels
    kernels.use("numpy")
    b = label(c).labels
    kernels.use(prev)
    assert np.array_equal(a, b)


def test_closed_labels_are_complement_labels(backend):
    reg = LatticeRegion.box(8)
    c = sample(reg, 3, 3)
    assert np.array_equal(label_closed(c).labels, bfs_labels(reg, ~c.open))


@given(st.integers(0, 2 ** 32), st.data())
def test_adding_open_site_only_merges(seed, data):
    reg = LatticeRegion.box(6)
    bits = sample(reg, seed, 0).open.copy()
    closed = np.flatnonzero(~bits)
    if closed.size == 0:
        return
    i = data.draw(st.sampled_from(closed.tolist()))
    before = label_array(reg, bits)
    bits[i] = True
    after = label_array(reg, bits)
    # sites sharing a label before still share one after
    for lab in np.unique(before[before >= 0]):
        members = np.flatnonzero(before == lab)
        assert np.unique(after[members]).size == 1
    assert np.unique(after[after >= 0]).size <= np.unique(before[before >= 0]).size + 1


def test_same_cluster_examples():
    reg = LatticeRegion.rect(2, 1)
    both = label(config(reg, [1, 1]))
    assert same_cluster(both, (0, 0), (1, 0))
    first_closed = label(config(reg, [0, 1]))
    assert not same_cluster(first_closed, (0, 0), (1, 0))
    assert not same_cluster(first_closed, (0, 0), (0, 0))
    hits = sum(same_cluster(label(config(reg, b)), (0, 0), (1, 0)) for b in itertools.product([0, 1], repeat=2))
    assert hits / 4 == 0.25


def _brute_diameter(pts):
    d = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((d ** 2).sum(-1)).max())


@pytest.mark.parametrize("spacing", [1.0, 0.25])
def test_diameters_match_pairwise(backend, spacing):
    reg = LatticeRegion.box(30, spacing=spacing)
    for rep in range(3):
        lab = label(sample(reg, 8, rep))
        for j, cid in enumerate(lab.ids):
            pts = reg.positions[lab.members(cid)]
            assert lab.diameters[j] == pytest.approx(_brute_diameter(pts), rel=1e-12, abs=1e-12)


def test_bboxes_contain_members():
    reg = LatticeRegion.box(12)
    lab = label(sample(reg, 4, 4))
    for j, cid in enumerate(lab.ids):
        pts = reg.positions[lab.members(cid)]
        assert np.allclose(lab.bboxes[j], [*pts.min(0), *pts.max(0)])


def test_measure_of_singleton():
    reg = LatticeRegion.from_sites([(0, 0)])
    lab = label(config(reg, [1]))
    mu = cluster_measure(lab, lab.ids[0], 1.0)
    assert len(mu.points) == 1 and mu.mass == 1.0


def test_measure_mass_with_spacing():
    reg = LatticeRegion.rect(3, 3, spacing=0.5)
    lab = label(config(reg, np.ones(9)))
    mu = cluster_measure(lab, lab.ids[0], 0.2)
    assert mu.mass == pytest.approx(11.25, rel=1e-12)
    assert mu.integrate(lambda x, y: 1.0) == pytest.approx(11.25, rel=1e-12)
    assert np.allclose(np.sort(mu.points, axis=0), np.sort(reg.positions, axis=0))


def test_measure_rejects_bad_input():
    reg = LatticeRegion.rect(2, 1)
    lab = label(config(reg, [1, 0]))
    with pytest.raises(ValueError):
        cluster_measure(lab, lab.ids[0], 0.0)
    with pytest.raises(KeyError):
        cluster_measure(lab, 12345, 1.0)


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 100))
def test_measure_is_linear(c, shift, rep):
    reg = LatticeRegion.box(8, spacing=0.5)
    lab = label(sample(reg, 1, rep))
    if lab.count == 0:
        return
    mu = cluster_measure(lab, lab.ids[int(np.argmax(lab.sizes))], 0.3)
    f = lambda x, y: np.sin(x) + y ** 2  # noqa: E731
    g = lambda x, y: np.cos(y + shift)  # noqa: E731
    fg = mu.integrate(lambda x, y: f(x, y) + g(x, y))
    assert fg == pytest.approx(mu.integrate(f) + mu.integrate(g), rel=1e-12, abs=1e-12)
    assert mu.integrate(lambda x, y: c * f(x, y)) == pytest.approx(c * mu.integrate(f), rel=1e-12, abs=1e-12)


def test_explorer_matches_labels(backend):
    reg = LatticeRegion.box(20)
    c = sample(reg, 2, 9)
    lab = label(c)
    ex = Explorer(reg)
    origin = reg.index_of((0, 0))
    for rep_cfg, kwargs in ((c, {"config": c}), (c, {"seed": 2, "replica": 9})):
        e = ex.explore([origin], **kwargs)
        if lab.labels[origin] < 0:
            assert e.sites.size == 0
        else:
            assert np.array_equal(np.sort(e.sites), lab.members(lab.labels[origin]))


def test_explorer_stops_at_radius(backend):
    reg = LatticeRegion.box(30)
    c = Configuration.from_bits(reg, np.ones(reg.n_sites, dtype=bool))
    e = Explorer(reg).explore([reg.index_of((0, 0))], config=c, stop_radius=10.0)
    assert e.stopped and e.max_far >= 10.0
