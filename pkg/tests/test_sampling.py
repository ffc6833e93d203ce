from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from percolab.inference import EventSpec, brute_force_probability
from percolab.inference.experiments import estimate_event
from percolab.lattice import Domain, LatticeRegion
from percolab.sampling import Configuration, enumerate_all, enumeration_matrix, sample, site_states


def test_sample_is_deterministic(backend):
    reg = LatticeRegion.box(10)
    a, b = sample(reg, 11, 4), sample(reg, 11, 4)
    assert a == b and np.array_equal(a.open, b.open)
    assert a != sample(reg, 11, 5)


def test_bit_array_length_matches_region():
    reg = LatticeRegion.disk(7.5)
    c = sample(reg, 1, 1)
    assert c.open.size == reg.n_sites


def test_single_site_is_a_fair_coin():
    reg = LatticeRegion.from_sites([(0, 0)])
    n = 10_000
    k = sum(int(sample(reg, 3, i).open[0]) for i in range(n))
    assert abs(k / n - 0.5) <= 3 * 0.5 / np.sqrt(n)


def test_density_of_32_box():
    reg = LatticeRegion.rect(32, 32)
    n = 10_000
    tot = sum(int(sample(reg, 9, i).open.sum()) for i in range(n))
    sigma = 0.5 / np.sqrt(1024 * n)
    assert abs(tot / (1024 * n) - 0.5) <= 3 * sigma


@given(st.integers(0, 2 ** 63), st.integers(0, 10 ** 6))
def test_lazy_states_match_bulk(seed, replica):
    reg = LatticeRegion.box(6)
    c = sample(reg, seed, replica)
    idx = np.arange(reg.n_sites)
    assert np.array_equal(site_states(reg, seed, replica, idx), c.open)


def test_domain_sites_are_closed():
    reg = LatticeRegion.box(8).with_domain(Domain("disk", 4.0))
    for rep in range(20):
        assert not np.any(sample(reg, 2, rep).open & reg.forced_closed)


def test_enumeration_counts():
    one = LatticeRegion.from_sites([(0, 0)])
    assert [c.open.tolist() for c in enumerate_all(one)] == [[False], [True]]
    two = LatticeRegion.from_sites([(0, 0), (1, 0)])
    assert len(list(enumerate_all(two))) == 4
    m = enumeration_matrix(LatticeRegion.rect(3, 3))
    assert m.shape == (512, 9) and len({r.tobytes() for r in m}) == 512


def test_enumeration_guard():
    with pytest.raises(ValueError):
        enumeration_matrix(LatticeRegion.rect(6, 5))


def test_three_corners_of_3x3_match_enumeration():
    reg = LatticeRegion.rect(3, 3)
    s = reg.sites()
    spec = EventSpec("connection", {"points": [list(s[0]), list(s[2]), list(s[8])]})
    exact = brute_force_probability(reg, spec)
    est = estimate_event(spec, reg, 100_000, 5, threads=1, memo=True)
    assert isinstance(exact, Fraction)
    assert abs(est.mean - float(exact)) <= 3 * np.sqrt(float(exact) * (1 - float(exact)) / est.n_samples)


def test_configuration_round_trip(tmp_path):
    reg = LatticeRegion.disk(5, spacing=0.25)
    c = sample(reg, 8, 9)
    assert Configuration.loads(c.dumps()) == c
    c.save(tmp_path / "c.bin")
    assert Configuration.load(tmp_path / "c.bin") == c


def test_flip_keeps_domain_closed():
    reg = LatticeRegion.box(5).with_domain(Domain("box", 3.0))
    c = sample(reg, 1, 1).flipped()
    assert not np.any(c.open & reg.forced_closed)
    assert np.array_equal(c.open | reg.forced_closed, ~sample(reg, 1, 1).open | reg.forced_closed)
