import numpy as np
from hypothesis import given, strategies as st

from critmax import rng

u64 = st.integers(0, (1 << 64) - 1)


@given(u64)
def test_mix64_stays_in_64_bits(z):
    assert 0 <= rng.mix64(z) < 1 << 64


@given(u64, st.integers(0, 1000))
def test_draws_are_in_open_unit_interval(key, j):
    u = rng.draw(key, j)
    assert 0.0 < u < 1.0


@given(u64, st.integers(0, 50), st.integers(0, 50))
def test_child_keys_are_distinct(key, i, j):
    if i != j:
        assert rng.child_key(key, i) != rng.child_key(key, j)


@given(st.integers(0, 2**32), st.integers(0, 2**20))
def test_numba_and_python_streams_agree(seed, index):
    k = rng.replica_key(seed, index)
    assert int(rng.nb_replica_key(np.uint64(seed), np.uint64(index))) == k
    assert int(rng.nb_child_key(np.uint64(k), np.uint64(3))) == rng.child_key(k, 3)
    assert rng.nb_draw(np.uint64(k), np.uint64(2)) == rng.draw(k, 2)


def test_generator_is_reproducible_and_label_sensitive():
    a = rng.generator(5, 1).random(4)
    assert np.array_equal(a, rng.generator(5, 1).random(4))
    assert not np.array_equal(a, rng.generator(5, 2).random(4))
