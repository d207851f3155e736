import numpy as np
import pytest

from critmax import verify as V
from critmax.tree_sim import SimConfig


def test_exact_battery_two_point(two_point):
    results = V.many_to_one_battery(two_point, (1, 2, 3, 4))
    assert len(results) == 24
    assert all(r.passed and r.extra["abs_diff"] <= 1e-12 for r in results)


def test_exact_mode_needs_atoms(lognormal):
    with pytest.raises(ValueError):
        V.many_to_one_check(lognormal, V.BATTERY["one"], 2, "exact")


@pytest.mark.parametrize("name", ["one", "end_negative", "path_min"])
def test_monte_carlo_mode_lognormal(lognormal, name):
    r = V.many_to_one_check(lognormal, V.BATTERY[name], 2, "mc", budget=4000, seed=3)
    assert abs(r.z) <= 3.5


def test_unknown_mode(two_point):
    with pytest.raises(ValueError):
        V.many_to_one_check(two_point, V.BATTERY["one"], 1, "bogus")


@pytest.mark.parametrize("which", ["lognormal", "two_point"])
def test_nt_sandwich(request, which):
    model = request.getfixturevalue(which)
    ts = np.exp(np.arange(1, 6)) if which == "two_point" else [3.0, 10.0, 30.0, 100.0, 300.0]
    # thresholds share trees, so the z-scores are correlated: keep replicas high
    cfg = SimConfig(max_depth=40, prune_log_weight=-4, replicas=100_000, seed=1)
    s = V.nt_sandwich_check(model, ts, cfg, walk_budget=200_000, seed=1)
    assert s.usable and s.upper_ok
    assert s.match_count >= 4


def test_second_moment(lognormal):
    cfg = SimConfig(max_depth=40, prune_log_weight=-4, replicas=10_000, seed=2)
    sm = V.second_moment_bound(lognormal, [3.0, 10.0], cfg)
    assert sm.passed
    assert all(p.extra["var_ok"] for p in sm.points)


def test_sandwich_requires_b_one(lognormal):
    from dataclasses import replace

    from critmax.model import ConstantB, critical_model

    law = replace(lognormal.law, b_law=ConstantB(2.0))
    m = critical_model(law, lognormal.alpha)
    with pytest.raises(ValueError):
        V.nt_sandwich_check(m, [3.0], SimConfig(max_depth=5))
