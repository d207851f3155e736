import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from critmax import grid as G
from critmax import poisson as P
from critmax.tilted_walk import LadderStats, tilted_sampler
from critmax.tree_sim import SimConfig, simulate_R_batch
from oracles import lattice_phi, lognormal_fixed_point_D

SMALL = P.PoissonConfig(x_lo=-4.0, x_hi=6.0, step=0.1, groups=10, draws=4096)


def ladders(t=1.0, l=-0.5):
    """Ladder means with zero se: E[S_T1] = t, E[S_L] = l."""
    return LadderStats(l, 0.0, t, 0.0, 1, 1)


@pytest.fixture(scope="module")
def ln_sample(lognormal):
    return simulate_R_batch(lognormal, SimConfig(max_depth=40, prune_log_weight=-5, replicas=4000, seed=3)).values


def lattice_table(p, depth, kmax, h=1e-3):
    """phi_depth(u) = P[log R > u] as a fine right-continuous table."""
    ph = lattice_phi(p, depth, kmax)
    u = np.arange(int(round(kmax / h)) + 1) * h
    vals = np.array([ph[min(int(math.floor(x + 1e-9)), kmax)] for x in u])
    return ph, G.GridFunction(0.0, h, vals, G.Tail(0.0, 1.0), G.ZERO, meta={"edge_jump": True})


@pytest.mark.parametrize("depth", [1, 4, 7])
def test_lattice_residual_is_one_recursion_step(two_point, depth):
    # with phi = phi_n, E[D(x+Y)] - D(x) - G(x) = D_{n+1}(x) - D_n(x) exactly
    p, a, kmax = two_point.params["p"], two_point.alpha, 12
    ph, phi = lattice_table(p, depth, kmax)
    nxt = lattice_phi(p, depth + 1, kmax)
    cfg = P.PoissonConfig(x_lo=-4.0, x_hi=8.0, step=1.0)
    g = P.G_estimate(two_point, phi, cfg, midpoint=False)
    assert g.exact
    ed, exact = P.expected_D_shift(two_point, phi, tilted_sampler(two_point), cfg)
    assert exact

    def D(table, k):
        return math.exp(a * k) * (1.0 if k < 0 else table[int(k)])

    x = cfg.x
    r = ed[0] - np.array([D(ph, k) for k in x]) - g.G.values
    step = np.array([D(nxt, k) - D(ph, k) for k in x])
    # the terms are of size e^{alpha x} and cancel: compare relative to that
    assert np.all(np.abs(r - step) <= 1e-12 * np.maximum(1.0, np.exp(a * x)))


def test_midpoint_only_changes_atoms_of_B(two_point):
    _, phi = lattice_table(two_point.params["p"], 3, 10)
    cfg = P.PoissonConfig(x_lo=-3.0, x_hi=5.0, step=1.0)
    a = P.G_estimate(two_point, phi, cfg, midpoint=False).G.values
    b = P.G_estimate(two_point, phi, cfg, midpoint=True).G.values
    diff = np.nonzero(np.abs(a - b) > 1e-14)[0]
    assert cfg.x[diff].tolist() == [0.0]


def test_phi_is_right_continuous_survival(ln_sample):
    phi = P.phi_from_sample(ln_sample, SMALL)
    logv = np.log(ln_sample)
    for u in np.quantile(logv, [0.1, 0.5, 0.9]):
        node = phi.x_lo + phi.step * round((u - phi.x_lo) / phi.step)
        assert phi(node) == pytest.approx(np.mean(logv > node), abs=1e-12)
    assert phi(phi.x_lo - 1.0) == 1.0 and phi(logv.max() + 1.0) == 0.0


def test_phi_replicates_leave_out_groups(ln_sample):
    cfg = P.PoissonConfig(groups=4, draws=64)
    phi = P.phi_from_sample(ln_sample, cfg)
    keep = np.arange(ln_sample.size) % 4 != 2
    sub = np.log(ln_sample[keep])
    x = phi.x[::500]
    idx = np.arange(0, phi.n, 500)
    assert np.allclose(phi.replicates[2, idx], [np.mean(sub > u) for u in x])


def test_D_is_exponential_below_zero(lognormal, ln_sample):
    D = P.D_from_sample(ln_sample, lognormal.alpha, SMALL, b_is_one=True)
    neg = D.x < -1e-9
    assert np.allclose(D.values[neg], np.exp(lognormal.alpha * D.x[neg]), rtol=1e-12)
    assert D(-20.0) == pytest.approx(math.exp(-20.0 * lognormal.alpha))


@given(st.integers(0, 1000))
def test_f1_is_nonnegative(lognormal, seed):
    rng = np.random.default_rng(seed)
    values = np.exp(rng.exponential(1.5, size=400))
    phi = P.phi_from_sample(values, SMALL)
    g = P.G_estimate(lognormal, phi, P.PoissonConfig(x_lo=-4.0, x_hi=6.0, step=0.1, groups=10, draws=512,
                                                     seed=seed))
    assert g.f1.values.min() >= 0
    assert g.f2.values.min() >= 0


def test_residual_small_on_simulated_sample(lognormal, ln_sample):
    an = P.analyse(lognormal, ln_sample, tilted_sampler(lognormal), SMALL)
    assert an.residual.max_z(-2.0, 6.0) < 5.0
    assert an.G.beyond_support >= 0


def test_renewal_refuses_lattice_and_degenerate():
    g = G.GridFunction.from_callable(lambda x: x * np.exp(-x * x), -8.0, 8.0, 0.01)
    with pytest.raises(P.RenewalError, match="lattice"):
        P.renewal_constant(g, ladders(), lattice=True)
    with pytest.raises(P.RenewalError, match="degenerate"):
        P.renewal_constant(g.with_values(np.zeros(g.n)), ladders())


def test_renewal_on_synthetic_G():
    # G = x e^{-x^2}: int G-breve = 0 and int x G-breve = int x G + int G = sqrt(pi) / 2
    g = G.GridFunction.from_callable(lambda x: x * np.exp(-x * x), -8.0, 8.0, 1e-3)
    res = P.renewal_constant(g, ladders(1.0, -0.5))
    assert abs(res.integral_G) < 1e-9
    assert res.integral_xG == pytest.approx(math.sqrt(math.pi) / 2, abs=1e-6)
    assert res.c_renewal == pytest.approx(-math.sqrt(math.pi), abs=1e-5)


def test_renewal_gate_refuses_nonzero_integral():
    x = np.arange(-8.0, 8.0 + 1e-9, 0.01)
    base = np.exp(-x * x)
    reps = base[None, :] * (1 + 0.01 * np.linspace(-1, 1, 10)[:, None])
    g = G.GridFunction(-8.0, 0.01, base, replicates=reps)
    with pytest.raises(P.RenewalError) as e:
        P.renewal_constant(g, ladders())
    assert e.value.result is not None and e.value.result.integral_G > 0


def test_decay_weighted_mass():
    g = G.GridFunction.from_callable(lambda x: np.exp(-np.abs(x)), -5.0, 5.0, 1e-3, left=G.Tail(1.0),
                                     right=G.Tail(1.0))
    # int e^{-|x|} e^{eps |x|} = 2 / (1 - eps)
    assert P.decay_weighted_mass(g, 0.25) == pytest.approx(2 / 0.75, rel=1e-3)
    assert P.decay_weighted_mass(g, 1.0) == math.inf


def test_config_validation():
    with pytest.raises(ValueError):
        P.PoissonConfig(x_lo=1.0, x_hi=0.0)
    with pytest.raises(ValueError):
        P.PoissonConfig(groups=1)
    with pytest.raises(ValueError):
        P.PoissonConfig(groups=20, draws=10)


@pytest.mark.slow
def test_renewal_constant_of_the_true_fixed_point(lognormal):
    """On the exact law (numerical fixed point) the zero-integral gate passes
    and the renewal route recovers the limit of D."""
    a = lognormal.alpha
    u, D = lognormal_fixed_point_D()
    C = float(np.interp(20.0, u, D))
    sel = u >= -1e-9
    phi = G.GridFunction(0.0, u[1] - u[0], D[sel] * np.exp(-a * u[sel]), G.Tail(0.0, 1.0), G.ZERO,
                         meta={"edge_jump": True})
    g = P.G_estimate(lognormal, phi, P.PoissonConfig(draws=2**17))
    # Gaussian ladder epochs: E[S_T1] E[S_L] = -1/2
    res = P.renewal_constant(g.G, ladders(1.0, -0.5))
    assert abs(res.integral_G) <= 3 * res.integral_G_se
    assert res.c_renewal == pytest.approx(C, rel=0.02)
