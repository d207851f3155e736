import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from critmax import tail as T


def pareto(alpha, n, seed, scale=1.0):
    u = np.random.default_rng(seed).random(n)
    return scale * u ** (-1.0 / alpha)


@given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=50), st.floats(0.0, 100.0))
def test_survival_matches_direct_count(values, t):
    tail = T.EmpiricalTail.from_values(values)
    assert T.empirical_survival(tail, t) == sum(v > t for v in values) / len(values)


@given(st.floats(1.0, 10.0), st.floats(10.0, 1e4))
def test_geometric_grid(lo, span):
    g = T.geometric_grid(lo, lo * span)
    assert g[0] == lo and g[-1] <= lo * span * (1 + 1e-12)
    assert np.allclose(g[1:] / g[:-1], T.GRID_RATIO)


def test_alpha_recovers_pareto_exponent():
    tail = T.EmpiricalTail.from_values(pareto(1.3, 200_000, 0))
    est = T.alpha_estimate(tail, (2.0, 100.0))
    assert abs(est.regression - 1.3) <= 3 * est.se_regression
    assert abs(est.hill - 1.3) <= 3 * est.se_hill


def test_plateau_of_exact_power_law():
    # P[R > t] = 0.4 t^-1.2 for t >= 1 (mixture with an atom at 1/2)
    rng = np.random.default_rng(1)
    n = 200_000
    v = np.where(rng.random(n) < 0.4, pareto(1.2, n, 2), 0.5)
    p = T.plateau_constant(T.EmpiricalTail.from_values(v), 1.2)
    assert abs(p.c_hat - 0.4) <= 3 * p.c_hat_se
    flat, _ = p.best_decade(1.0)
    assert flat < 1.25


def test_window_override_and_empty_window():
    tail = T.EmpiricalTail.from_values(pareto(1.0, 5000, 3))
    p = T.plateau_constant(tail, 1.0, window=(2.0, 20.0))
    assert p.window_t[0] >= 2.0 and p.window_t[1] <= 20.0 * (1 + 1e-9)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        empty = T.plateau_constant(tail, 1.0, window=(1e8, 1e9))
    assert math.isnan(empty.c_hat) and empty.warning


def test_too_few_samples():
    with pytest.raises(T.InsufficientDataError):
        T.plateau_constant(T.EmpiricalTail.from_values(np.ones(10)), 1.0)
    with pytest.raises(T.InsufficientDataError):
        T.EmpiricalTail.from_values([])


def test_minimum_view():
    v = pareto(2.0, 50_000, 4)
    tail = T.EmpiricalTail.from_values(v, b_is_one=True)
    m = T.brw_minimum_view(tail)
    assert T.lower_probability(m, 1.0) == pytest.approx(T.empirical_survival(tail, math.e))
    slope, se = T.minimum_decay_slope(m, 0.5, 2.5)
    assert abs(slope + 2.0) <= 3 * se
    with pytest.raises(ValueError):
        T.brw_minimum_view(T.EmpiricalTail.from_values(v))
