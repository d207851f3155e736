"""Independent reference values: closed forms and brute-force enumerations
that share no code with the package."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.signal import fftconvolve
from scipy.stats import norm

# critical lognormal step, b = 2, sigma = 1: m(s) = 2 exp(mu s + s^2 / 2)
LOGNORMAL_ALPHA = math.sqrt(2 * math.log(2))
LOGNORMAL_MU = -math.sqrt(2 * math.log(2))

# two-point step +-1, b = 2: 2(p e^a + q e^-a) = 1 and p e^a = q e^-a
TWO_POINT_ALPHA = math.log(2 + math.sqrt(3))
TWO_POINT_P = (2 - math.sqrt(3)) / 4


def tree_sum_two_point(p: float, n: int, f, b: int = 2) -> float:
    """E[sum over the b^n vertices at depth n of f(positions)] by brute force.

    Each vertex path carries iid steps X in {+1, -1}; positions are the
    partial sums of -X (so that e^{-alpha * position} = L).
    """
    total = 0.0
    for xs in itertools.product((1.0, -1.0), repeat=n):
        w = math.prod(p if x > 0 else 1 - p for x in xs)
        pos = tuple(-s for s in itertools.accumulate(xs))
        total += w * f(pos)
    return b**n * total


def lattice_phi(p: float, depth: int, kmax: int, b: int = 2) -> dict[int, float]:
    """phi_n(k) = P[log R_n > k] for the two-point model with B = 1, by the
    recursion 1 - phi_{n+1}(k) = 1(k >= 0) E[prod_i (1 - phi_n(k - X_i))]."""
    phi = {k: 0.0 for k in range(kmax + 1)}
    probs = {1.0: p, -1.0: 1 - p}

    def f(ph, k):
        return 1.0 if k < 0 else ph.get(k, 0.0)

    for _ in range(depth):
        new = {}
        for k in range(kmax + 1):
            e = 0.0
            for xs in itertools.product(probs, repeat=b):
                w = math.prod(probs[x] for x in xs)
                e += w * math.prod(1 - f(phi, int(k - x)) for x in xs)
            new[k] = 1 - e
        phi = new
    return phi


def box_smoothed(x):
    """Smoothing of 1[0, 1]: 1 - e^{-x} on [0, 1], (e - 1) e^{-x} beyond."""
    x = np.asarray(x, dtype=float)
    return np.where(x < 0, 0.0, np.where(x < 1, 1 - np.exp(-x), (math.e - 1) * np.exp(-x)))


def lognormal_fixed_point_D(h: float = 0.02, lo: float = -20.0, hi: float = 60.0, iterations: int = 60_000):
    """D(u) = e^{alpha u} P[R > e^u] for the critical lognormal model (b = 2,
    sigma = 1, B = 1) by iterating D <- E[D(u + Y)] - e^{-alpha u} E[D(u + Y)]^2 / 4,
    Y ~ N(0, 1), with D = e^{alpha u} fixed on u < 0.

    Grid has an exact node at 0; the jump there enters the convolution at its
    midpoint value.  Returns (u, D).
    """
    a = LOGNORMAL_ALPHA
    n0 = int(round(-lo / h))
    u = (np.arange(int(round((hi - lo) / h))) - n0) * h
    k = np.arange(-8.0, 8.0 + h / 2, h)
    w = norm.pdf(k) * h
    w /= w.sum()
    pad = len(k) // 2
    D = np.where(u < 0, np.exp(a * u), 0.0)
    neg = u < 0
    for _ in range(iterations):
        Dm = D.copy()
        Dm[n0] = 0.5 * (1.0 + D[n0])
        E = fftconvolve(np.concatenate([np.zeros(pad), Dm, np.full(pad, D[-1])]), w[::-1], mode="valid")
        D = E - np.exp(-a * u) * E**2 / 4
        D[neg] = np.exp(a * u[neg])
    return u, D


def simple_walk_W(x: int, delta: float, terms: int = 20_000) -> float:
    """W(x) for the symmetric +-1 walk: the expected number of visits to y >= 0
    before first entering -1 is 2 min(x + 1, y + 1) (gambler's ruin Green
    function), so W(x) = sum_y 2 min(x + 1, y + 1) e^{-delta y}."""
    y = np.arange(terms, dtype=float)
    return float(np.sum(2 * np.minimum(x + 1, y + 1) * np.exp(-delta * y)))
