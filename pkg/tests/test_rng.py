import numpy as np
from hypothesis import given, strategies as st

from apcrw.rng import (derive_key, make_generator, new_stream, next_exponential, next_poisson, next_uniform,
                       replica_key, sub_key, uniform_at, uniform_block)

keys = st.integers(0, 2**64 - 1)
sites = st.integers(-10**6, 10**6)


@given(keys, sites, st.integers(0, 10**6))
def test_uniform_field_is_a_pure_function_in_unit_interval(k, x, n):
    u = uniform_at(np.uint64(k), x, n)
    assert 0.0 <= u < 1.0
    assert u == uniform_at(np.uint64(k), x, n)


def test_uniform_field_distinguishes_points_and_keys():
    k = np.uint64(derive_key(3, "field"))
    vals = {uniform_at(k, x, n) for x in range(-20, 21) for n in range(20)}
    assert len(vals) == 41 * 20
    assert uniform_at(k, 1, 0) != uniform_at(k, 0, 1)
    assert uniform_at(k, -1, 0) != uniform_at(k, 1, 0)
    assert uniform_at(np.uint64(1), 0, 0) != uniform_at(np.uint64(2), 0, 0)


def test_uniform_field_moments():
    k = np.uint64(derive_key(11, "moments"))
    xs = np.arange(200_000) - 100_000
    u = uniform_block(k, xs, xs % 97)
    assert abs(u.mean() - 0.5) < 3 * np.sqrt(1 / 12 / u.size)
    assert abs(u.var() - 1 / 12) < 0.002
    assert abs(np.corrcoef(u[:-1], u[1:])[0, 1]) < 4 / np.sqrt(u.size)


@given(st.integers(0, 2**63), st.text(max_size=30), st.integers(0, 10**9))
def test_derive_key_is_deterministic_and_label_sensitive(seed, label, r):
    assert derive_key(seed, label, r) == derive_key(seed, label, r)
    assert derive_key(seed, label, r) != derive_key(seed, label, r + 1)
    assert 0 <= derive_key(seed, label) < 2**64


def test_labels_longer_than_one_word_are_distinguished():
    assert derive_key(1, "deviation-1024") != derive_key(1, "deviation-4096")


def test_replica_and_sub_keys_do_not_collide():
    base = np.uint64(derive_key(5, "x"))
    ks = {int(replica_key(base, r)) for r in range(10_000)}
    assert len(ks) == 10_000
    rk = replica_key(base, 0)
    assert sub_key(rk, 1) != sub_key(rk, 2)


def test_streams_are_reproducible_and_distributed():
    s1, s2 = new_stream(np.uint64(9)), new_stream(np.uint64(9))
    a = [next_uniform(s1) for _ in range(100)]
    b = [next_uniform(s2) for _ in range(100)]
    assert a == b
    s = new_stream(np.uint64(derive_key(2, "poisson")))
    m = 100_000
    pois = np.array([next_poisson(s, 1.5) for _ in range(m)])
    assert abs(pois.mean() - 1.5) < 4 * np.sqrt(1.5 / m)
    assert abs(pois.var() / pois.mean() - 1) < 0.03
    ex = np.array([next_exponential(s) for _ in range(m)])
    assert abs(ex.mean() - 1) < 4 / np.sqrt(m)


def test_generators_are_keyed():
    a = make_generator(1, "a").random(5)
    assert np.array_equal(a, make_generator(1, "a").random(5))
    assert not np.array_equal(a, make_generator(1, "b").random(5))
