import numpy as np
import pytest
from hypothesis import given, strategies as st

from critmax import tilted_walk as W
from critmax.verify import BATTERY
from oracles import simple_walk_W, tree_sum_two_point


@pytest.fixture(scope="module")
def ln_sampler(lognormal):
    return W.tilted_sampler(lognormal)


@pytest.fixture(scope="module")
def tp_sampler(two_point):
    return W.tilted_sampler(two_point)


def test_closed_form_tilted_laws(ln_sampler, tp_sampler):
    assert ln_sampler.mean() == pytest.approx(0.0, abs=1e-12)
    assert ln_sampler.variance() == pytest.approx(1.0)
    # the critical two-point walk is the simple symmetric walk
    assert tp_sampler.vals.tolist() == [-1.0, 1.0]
    assert np.allclose(tp_sampler.probs, 0.5, atol=1e-12)
    assert tp_sampler.mass == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("which", ["ln_sampler", "tp_sampler"])
def test_tilt_identities(request, which):
    s = request.getfixturevalue(which)
    t = W.tilt_identities(s, seed=1, n=200_000)
    assert abs(t.mean_Y.value) <= 3 * t.mean_Y.se
    assert abs(t.exp_alpha_Y.value - t.expected_exp_alpha_Y) <= 3 * t.exp_alpha_Y.se


def test_resampled_sampler_matches_closed_form(lognormal):
    s = W.tilted_sampler(lognormal, seed=3, force_resampling=True)
    assert s.mean() == pytest.approx(0.0, abs=0.03)
    assert s.variance() == pytest.approx(1.0, abs=0.05)
    assert s.mass == pytest.approx(1.0, abs=0.03)


@given(st.integers(0, 2**32), st.integers(1, 50))
def test_sample_many_is_prefix_stable(tp_sampler, seed, n):
    long = W.sample_many(tp_sampler, seed, n + 10)
    assert np.array_equal(W.sample_many(tp_sampler, seed, n), long[:n])
    assert set(np.unique(long)) <= {-1.0, 1.0}


@pytest.mark.parametrize("name", sorted(BATTERY))
def test_walk_functional_exact(two_point, tp_sampler, name):
    f = BATTERY[name]
    a = two_point.alpha
    for n in (1, 2, 3):
        got, se = W.walk_functional(tp_sampler, n, f, exact=True)
        assert se == 0
        # tree side: the identity says the tilted walk reproduces the tree sum
        assert got == pytest.approx(tree_sum_two_point(two_point.params["p"], n, f), rel=1e-12, abs=1e-13)


def test_simple_walk_ladder(tp_sampler):
    lad = W.ladder_epochs(tp_sampler, budget=20_000, seed=4)
    assert lad.mean_S_L == -1.0 and lad.se_S_L == 0.0
    assert abs(lad.mean_S_T1 - 0.5) <= 3 * lad.se_S_T1


def test_gaussian_ladder_product(ln_sampler):
    # E[S_T1] E[S_L] = -Var(Y) / 2 for a centred walk with one weak and one strict epoch
    lad = W.ladder_epochs(ln_sampler, budget=20_000, seed=4)
    assert abs(lad.product + 0.5) <= 3 * lad.product_se


def test_W_against_green_function(tp_sampler):
    # the simple walk is null recurrent: paths cut at max_steps lose a share of
    # order (x + 1) / sqrt(max_steps), so the cap has to be generous here
    xs = np.array([0.0, 1.0, 3.0])
    est = W.estimate_W(xs, 0.1, tp_sampler, budget=5_000, seed=2, max_steps=2_000_000)
    exact = np.array([simple_walk_W(int(x), 0.1) for x in xs])
    assert np.all(np.abs(est.values - exact) <= 4 * est.se)
    assert np.all(est.values >= np.exp(-0.1 * xs))


def test_W_doubling_is_stable(ln_sampler):
    chk = W.w_doubling_check(np.linspace(0, 10, 11), 0.1, ln_sampler, budget=5_000, seed=1)
    assert chk.stable and chk.lower_bound_ok


def test_W_rejects_bad_input(ln_sampler):
    with pytest.raises(ValueError):
        W.estimate_W([-1.0], 0.1, ln_sampler, budget=10)
    with pytest.raises(ValueError):
        W.estimate_W([1.0], 0.0, ln_sampler, budget=10)
