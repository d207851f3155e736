import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from critmax import grid as G
from oracles import box_smoothed

values = arrays(float, st.integers(5, 60), elements=st.floats(-5.0, 5.0))


def padded(v, step=0.25):
    # zero at both ends so the zero tails are consistent
    return G.GridFunction(-3.0, step, np.concatenate([[0.0], v, [0.0]]))


@given(values)
def test_smoothing_preserves_bounds(v):
    f = padded(v)
    fb = G.smooth(f)
    lo, hi = min(0.0, v.min()), max(0.0, v.max())
    assert fb.values.min() >= lo - 1e-12
    assert fb.values.max() <= hi + 1e-12


@given(values)
def test_smoothing_preserves_integral(v):
    f = padded(v)
    assert G.smooth(f).integral()[0] == pytest.approx(f.integral()[0], abs=1e-9)


@given(values, values, st.floats(-3, 3), st.floats(-3, 3))
def test_smoothing_is_linear(v, w, a, b):
    n = min(v.size, w.size)
    f, g = padded(v[:n]), padded(w[:n])
    lhs = G.smooth(f.with_values(a * f.values + b * g.values)).values
    rhs = a * G.smooth(f).values + b * G.smooth(g).values
    assert np.allclose(lhs, rhs, atol=1e-10)


@given(values)
def test_bar_identity(v):
    f = padded(v)
    total = f.integral()[0]
    # subtract a hat function carrying the mass so that int f = 0
    hat = np.zeros(f.n)
    hat[f.n // 2] = total / f.step
    f = f.with_values(f.values - hat)
    fbar = G.bar(f)
    assert fbar.integral()[0] == pytest.approx(-G.smooth(f).integral(1)[0], abs=1e-8)


def test_bar_routes_agree_on_fine_grid():
    # the trapezoid second route is only O(h^2), so this needs a fine grid
    f = G.GridFunction.from_callable(lambda x: x * np.exp(-x * x), -10.0, 10.0, 1e-3)
    fbar = G.bar(f)
    assert fbar.meta["routes_agree"]
    # int f-bar = -int x f-breve = -int x f (smoothing adds int f = 0 to the first moment)
    assert fbar.integral()[0] == pytest.approx(-math.sqrt(math.pi) / 2, abs=1e-6)


def test_box_closed_form():
    def box(x):
        v = ((x > 0) & (x < 1)).astype(float)
        v[np.isclose(x, 0.0) | np.isclose(x, 1.0)] = 0.5
        return v

    fb = G.smooth(G.GridFunction.from_callable(box, -5.0, 5.0, 1e-3))
    x = np.linspace(-1, 9, 777)
    x = x[np.minimum(np.abs(x), np.abs(x - 1)) > 0.01]
    assert np.max(np.abs(fb(x) - box_smoothed(x))) < 1e-6


def test_smoothing_uses_left_tail():
    # f = e^{-|x|}: f-breve(x) = e^x / 2 for x <= 0
    f = G.GridFunction.from_callable(lambda x: np.exp(-np.abs(x)), -4.0, 30.0, 1e-3, left=G.Tail(1.0),
                                     right=G.Tail(1.0))
    fb = G.smooth(f)
    x = np.array([-6.0, -3.0, -1.0, 0.0])
    assert np.allclose(fb(x), np.exp(x) / 2, atol=1e-7)


def test_integrals_with_tails():
    f = G.GridFunction.from_callable(lambda x: np.exp(-np.abs(x)), -2.0, 2.0, 1e-3, left=G.Tail(1.0),
                                     right=G.Tail(1.0))
    assert f.integral()[0] == pytest.approx(2.0, abs=1e-6)
    g = G.GridFunction.from_callable(lambda x: x * np.exp(-x * x), -10.0, 10.0, 1e-3)
    assert g.integral(1)[0] == pytest.approx(math.sqrt(math.pi) / 2, abs=1e-6)


@given(arrays(float, st.tuples(st.integers(2, 20), st.integers(1, 5)), elements=st.floats(-10, 10)))
def test_jackknife_se_formula(reps):
    j = reps.shape[0]
    expected = np.sqrt((j - 1) / j * ((reps - reps.mean(axis=0)) ** 2).sum(axis=0))
    assert np.allclose(G.jackknife_se(reps), expected)


def test_fitted_tails():
    x = np.linspace(0, 10, 101)
    left, right = G.fitted_tails(x, np.exp(-0.7 * x))
    assert left.zero and right.rate == pytest.approx(0.7)


def test_validation():
    with pytest.raises(ValueError):
        G.GridFunction(0.0, 0.0, np.zeros(3))
    with pytest.raises(ValueError):
        G.GridFunction(0.0, 1.0, np.array([0.0, np.nan]))
    with pytest.raises(ValueError):
        G.GridFunction(0.0, 1.0, np.array([1.0, 1.0]), right=G.Tail(1.0, 2.0))
