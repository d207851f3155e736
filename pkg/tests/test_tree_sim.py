import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from critmax import rng
from critmax import tree_sim as T
from critmax.verify import BATTERY
from oracles import tree_sum_two_point


def brute_force_tree(model, key, depth):
    """All (depth, log L, path max of log L before the vertex) by full recursion."""
    kl = T.KernelLaw.from_model(model)
    out = []

    def rec(k, d, lw, prev_max):
        log_b, log_a = T.py_vertex_draws(kl, k)
        out.append((d, lw, log_b, prev_max))
        if d < depth:
            for i, x in enumerate(log_a):
                rec(rng.child_key(k, i), d + 1, lw + x, max(prev_max, lw) if d > 0 else -math.inf)

    rec(key, 0, 0.0, -math.inf)
    return out


@given(st.integers(0, 10**6), st.integers(1, 9))
def test_max_kernel_matches_full_enumeration(lognormal, stream, depth):
    key = rng.replica_key(3, stream)
    nodes = brute_force_tree(lognormal, key, depth)
    expected = max(lw + lb for _, lw, lb, _ in nodes)
    got = T.simulate_R(lognormal, T.SimConfig(max_depth=depth), key)
    assert math.log(got.value) == pytest.approx(expected, abs=1e-12)
    assert got.explored == len(nodes)


@given(st.integers(0, 10**6), st.integers(1, 12), st.floats(-6, -1))
def test_kernel_matches_python_reference(lognormal, stream, depth, prune):
    cfg = T.SimConfig(max_depth=depth, prune_log_weight=prune)
    a = T.simulate_R(lognormal, cfg, stream)
    b = T.simulate_R_reference(lognormal, cfg, stream)
    assert a.value == pytest.approx(b.value, rel=1e-13)
    assert a.explored == b.explored


@given(st.integers(0, 10**6))
def test_truncated_max_is_monotone_in_depth(lognormal, stream):
    vals = [T.simulate_R(lognormal, T.SimConfig(max_depth=d, prune_log_weight=-4), stream).value
            for d in (2, 5, 10, 20)]
    assert vals[0] >= 1.0
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_batch_replicas_use_replica_keys(lognormal):
    cfg = T.SimConfig(max_depth=8, replicas=50, seed=11)
    s = T.simulate_R_batch(lognormal, cfg)
    for i in (0, 17, 49):
        assert s.values[i] == T.simulate_R(lognormal, cfg, rng.replica_key(11, i)).value
    assert s.shallow_depth == 3


def test_batch_is_independent_of_workers_and_chunking(lognormal):
    cfg = T.SimConfig(max_depth=10, prune_log_weight=-4, replicas=300, seed=5)
    a = T.simulate_R_batch(lognormal, cfg, chunk=64)
    b = T.simulate_R_batch(lognormal, T.SimConfig(**{**cfg.__dict__, "workers": 2}), chunk=128)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.explored, b.explored)


@given(st.integers(0, 10**6))
def test_first_passage_matches_enumeration(lognormal, stream):
    key = rng.replica_key(9, stream)
    depth, ts = 8, np.array([1.5, 3.0, 6.0])
    nodes = brute_force_tree(lognormal, key, depth)
    expected = [sum(1 for d, lw, _, m in nodes if d > 0 and lw > math.log(t) and m <= math.log(t)) for t in ts]
    cfg = T.SimConfig(max_depth=depth)
    got = [T.first_passage_count(lognormal, t, cfg, key).n_t for t in ts]
    assert got == expected


@pytest.mark.parametrize("name", sorted(BATTERY))
@pytest.mark.parametrize("n", [1, 2, 3])
def test_exact_tree_functional_against_brute_force(two_point, name, n):
    f = BATTERY[name]
    got = T.exact_tree_functional(two_point, n, f)
    assert got == pytest.approx(tree_sum_two_point(two_point.params["p"], n, f), rel=1e-13, abs=1e-14)


def test_config_validation():
    with pytest.raises(ValueError):
        T.SimConfig(max_depth=0)
    with pytest.raises(ValueError):
        T.SimConfig(max_depth=5, replicas=0)
