import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from siim.netsim import (
    ChannelInstance,
    Topology,
    channel_from_seed,
    make_topology,
    sample_channel,
    sample_seed,
    sinr,
    sinr_all,
    sum_rate,
)


def loop_sum_rate(g, p, sigma2):
    # independent scalar-loop evaluation
    total = 0.0
    n = len(p)
    for i in range(n):
        interf = sigma2
        for j in range(n):
            if j != i:
                interf += g[i][j] ** 2 * p[j]
        total += math.log(1.0 + g[i][i] ** 2 * p[i] / interf)
    return total


def test_make_topology_ranges():
    topo = make_topology(10, np.random.default_rng(42), id="A")
    d = topo.dist
    assert d.shape == (10, 10)
    diag = np.diag(d)
    off = d[~np.eye(10, dtype=bool)]
    assert np.all((diag >= 10) & (diag <= 15))
    assert np.all((off >= 10) & (off <= 20))


def test_make_topology_single_link():
    topo = make_topology(1, np.random.default_rng(7))
    assert topo.dist.shape == (1, 1)
    assert 10 <= topo.dist[0, 0] <= 15


def test_make_topology_deterministic():
    a = make_topology(6, np.random.default_rng(3))
    b = make_topology(6, np.random.default_rng(3))
    np.testing.assert_array_equal(a.dist, b.dist)


def test_make_topology_rejects_zero():
    with pytest.raises(ValueError):
        make_topology(0, np.random.default_rng(0))


def test_topology_rejects_nonpositive():
    with pytest.raises(ValueError):
        Topology(dist=np.array([[1.0, 0.0], [1.0, 1.0]]))


def test_channel_formula_at_unit_fading():
    # |h| = sqrt(10^-3.76) * 1
    topo = Topology(dist=np.array([[10.0]]))
    assert math.isclose(math.sqrt(topo.pathloss()[0, 0]), 10 ** -1.88, rel_tol=1e-12)
    assert math.isclose(10 ** -1.88, 0.013182567386, rel_tol=1e-10)


def test_channel_mean_square_matches_pathloss():
    topo = Topology(dist=np.array([[12.0, 17.0], [15.0, 11.0]]))
    rng = np.random.default_rng(123)
    draws = np.stack([sample_channel(topo, rng).gains for _ in range(100_000)])
    emp = np.mean(draws**2, axis=0)
    np.testing.assert_allclose(emp, topo.pathloss(), rtol=0.02)


def test_channel_deterministic():
    topo = make_topology(4, np.random.default_rng(1))
    a = channel_from_seed(topo, sample_seed(9, 0, 5))
    b = channel_from_seed(topo, sample_seed(9, 0, 5))
    np.testing.assert_array_equal(a.gains, b.gains)
    assert a.seed == b.seed


def test_sample_seed_depends_on_all_parts():
    seeds = {sample_seed(1, 0, 0), sample_seed(1, 0, 1), sample_seed(1, 1, 0), sample_seed(2, 0, 0)}
    assert len(seeds) == 4


def test_channel_instance_rejects_negative():
    with pytest.raises(ValueError):
        ChannelInstance("A", np.array([[-1.0]]))


def test_sinr_examples():
    assert sinr(np.array([[1.0]]), np.array([1.0]), 0, 1.0) == 1.0
    assert sinr(np.ones((2, 2)), np.ones(2), 0, 1.0) == 0.5
    assert sinr(np.ones((2, 2)), np.array([0.0, 1.0]), 0, 1.0) == 0.0


def test_sinr_index_error():
    with pytest.raises(IndexError):
        sinr(np.ones((2, 2)), np.ones(2), 2)


def test_sum_rate_examples():
    assert math.isclose(sum_rate(np.eye(2), np.ones(2), 1.0), 2 * math.log(2), rel_tol=1e-15)
    assert sum_rate(np.ones((3, 3)), np.zeros(3), 1.0) == 0.0


def test_sum_rate_base2():
    assert math.isclose(sum_rate(np.eye(2), np.ones(2), 1.0, log_base=2), 2.0, rel_tol=1e-14)


def test_sum_rate_matches_scalar_loop():
    rng = np.random.default_rng(5)
    for _ in range(20):
        g = rng.uniform(0, 2, size=(3, 3))
        p = rng.uniform(0, 1, size=3)
        assert math.isclose(sum_rate(g, p, 0.3), loop_sum_rate(g, p, 0.3), rel_tol=1e-12, abs_tol=1e-12)


def test_sum_rate_batch_consistent():
    rng = np.random.default_rng(6)
    g = rng.uniform(size=(5, 4, 4))
    p = rng.uniform(size=(5, 4))
    batch = sum_rate(g, p, 0.5)
    single = [sum_rate(g[i], p[i], 0.5) for i in range(5)]
    np.testing.assert_allclose(batch, single, rtol=1e-14)


gains_st = arrays(np.float64, (3, 3), elements=st.floats(0.01, 3.0))
power_st = arrays(np.float64, 3, elements=st.floats(0.0, 1.0))


@given(gains_st, power_st)
def test_sum_rate_nonnegative_zero_iff_zero_power(g, p):
    r = sum_rate(g, p, 1.0)
    assert r >= 0
    if np.all(p == 0):
        assert r == 0
    else:
        assert r > 0 or np.all(np.diag(g) ** 2 * p < 1e-300)


@settings(max_examples=50)
@given(gains_st, power_st, st.integers(0, 2), st.floats(0.01, 0.5))
def test_sinr_monotone(g, p, n, bump):
    base = sinr_all(g, p, 1.0)
    up_own = p.copy()
    up_own[n] = min(1.0, p[n] + bump)
    assert sinr_all(g, up_own, 1.0)[n] >= base[n]
    other = (n + 1) % 3
    up_other = p.copy()
    up_other[other] = min(1.0, p[other] + bump)
    assert sinr_all(g, up_other, 1.0)[n] <= base[n]
