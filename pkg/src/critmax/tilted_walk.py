"""The tilted step Y and the random walk S_n = Y_1 + ... + Y_n.

Y is the size-biased step: E[f(Y)] = E[sum_i f(-log A_i) A_i^alpha].  At
criticality it is a probability law with mean zero.  Walk paths are driven
by hashed keys like the tree: path r of a run with seed s has key
replica_key(s ^ salt, r), and its n-th step uses draws 2n and 2n + 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Callable

import numba as nb
import numpy as np

from . import rng as rng_mod
from .model import AtomStep, CriticalModel, NormalStep

RESAMPLE_BATCH = 4096
DEFAULT_MAX_STEPS = 1_000_000
MAX_EXACT_PATHS = 1 << 20

# salts keep the different walk experiments on disjoint streams
SALT_Y = 0x1
SALT_LADDER_L = 0x2
SALT_LADDER_T = 0x3
SALT_W = 0x4
SALT_OVERSHOOT = 0x5
SALT_DUAL_L = 0x6
SALT_DUAL_T = 0x7
SALT_MC = 0x8


def log_level(t: float) -> float:
    """log t rounded to 12 decimals, so that t = e^k gives exactly k.

    Lattice walks take integer values; without the rounding, log(e^k) can
    land one ulp below k and change which side of the level a path is on.
    """
    return round(math.log(t), 12)


@dataclass(frozen=True)
class TiltedStepSampler:
    """Sampler for Y.  kind 0: Normal(vals[0], vals[1]); kind 1: atoms vals with cdf."""

    model: CriticalModel
    closed_form: str | None
    kind: int
    vals: np.ndarray
    cdf: np.ndarray
    probs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mass: float = 1.0

    @property
    def alpha(self) -> float:
        return self.model.alpha

    @property
    def atoms(self) -> list[tuple[float, float]]:
        if self.kind != 1:
            raise ValueError("sampler is not discrete")
        return list(zip(self.vals.tolist(), self.probs.tolist()))

    def mean(self) -> float:
        if self.kind == 0:
            return float(self.vals[0])
        return float(np.dot(self.vals, self.probs))

    def variance(self) -> float:
        if self.kind == 0:
            return float(self.vals[1] ** 2)
        m = self.mean()
        return float(np.dot((self.vals - m) ** 2, self.probs))


def tilted_sampler(model: CriticalModel, seed: int = 0, batches: int = 64,
                   force_resampling: bool = False) -> TiltedStepSampler:
    """Closed form for Normal and finite-atom steps, weighted resampling otherwise."""
    law, a = model.law, model.alpha
    if law.closed_form and not force_resampling:
        if isinstance(law.step, NormalStep):
            mu, sig = law.step.mu, law.step.sigma
            mass = law.num_children.mean * law.step.moment(a)
            return TiltedStepSampler(model, "LognormalCritical", 0, np.array([-(mu + a * sig**2), sig]),
                                     np.zeros(0), mass=mass)
        if isinstance(law.step, AtomStep):
            en = law.num_children.mean
            vals = np.array([-v for v in law.step.values])
            w = np.array([en * p * math.exp(a * v) for v, p in zip(law.step.values, law.step.probs)])
            mass = math.fsum(w.tolist())
            probs = w / mass
            order = np.argsort(vals)
            vals, probs = vals[order], probs[order]
            cdf = np.cumsum(probs)
            cdf[-1] = 1.0
            return TiltedStepSampler(model, "TwoPointCritical", 1, vals, cdf, probs, mass)
    # size-biased selection: every child of every reproduction draw is a
    # candidate with weight A^alpha; the mean total weight estimates m(alpha)
    gen = rng_mod.generator(seed, SALT_Y)
    vals, weights = [], []
    for _ in range(batches):
        smp = law.sample(gen, RESAMPLE_BATCH)
        x = smp.log_a[~np.isnan(smp.log_a)]
        vals.append(-x)
        weights.append(np.exp(a * x))
    vals = np.concatenate(vals)
    weights = np.concatenate(weights)
    total = weights.sum()
    if not (np.isfinite(total) and total > 0):
        raise ValueError("tilted weights cannot be normalised")
    mass = float(total / (batches * RESAMPLE_BATCH))
    order = np.argsort(vals)
    vals, probs = vals[order], weights[order] / total
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return TiltedStepSampler(model, None, 1, vals, cdf, probs, mass)


# ---------------------------------------------------------------------------
# numba step draws


@nb.njit(cache=True)
def _nb_step(key, n, kind, vals, cdf):
    if kind == 0:
        u1 = rng_mod.nb_draw(key, 2 * n)
        u2 = rng_mod.nb_draw(key, 2 * n + 1)
        return vals[0] + vals[1] * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
    u = rng_mod.nb_draw(key, 2 * n)
    lo = 0
    hi = cdf.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if u > cdf[mid]:
            lo = mid + 1
        else:
            hi = mid
    return vals[lo]


def _py_step(sampler: TiltedStepSampler, key: int, n: int) -> float:
    if sampler.kind == 0:
        u1, u2 = rng_mod.draw(key, 2 * n), rng_mod.draw(key, 2 * n + 1)
        return float(sampler.vals[0] + sampler.vals[1] * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2))
    u = rng_mod.draw(key, 2 * n)
    idx = int(np.searchsorted(sampler.cdf, u, side="left"))
    return float(sampler.vals[min(idx, len(sampler.vals) - 1)])


def _path_key(seed: int, salt: int, r: int) -> int:
    return rng_mod.replica_key((seed ^ (salt * rng_mod.CHILD_MUL)) & rng_mod.MASK, r)


def _salted(seed: int, salt: int) -> np.uint64:
    return np.uint64((seed ^ (salt * rng_mod.CHILD_MUL)) & rng_mod.MASK)


def sample_Y(sampler: TiltedStepSampler, stream: int) -> float:
    """One draw of Y from the root key `stream`."""
    return _py_step(sampler, stream, 0)


@nb.njit(cache=True)
def _nb_sample_many(seed, n, kind, vals, cdf):
    out = np.empty(n)
    for r in range(n):
        out[r] = _nb_step(rng_mod.nb_replica_key(seed, np.uint64(r)), 0, kind, vals, cdf)
    return out


def sample_many(sampler: TiltedStepSampler, seed: int, n: int) -> np.ndarray:
    """n independent draws of Y; draw r equals sample_Y with key _path_key(seed, SALT_Y, r)."""
    return _nb_sample_many(_salted(seed, SALT_Y), n, sampler.kind, sampler.vals, sampler.cdf)


@dataclass(frozen=True)
class MeanEstimate:
    value: float
    se: float

    def z(self, target: float) -> float:
        if self.se == 0:
            return 0.0 if self.value == target else math.inf
        return (self.value - target) / self.se


def _mean(x: np.ndarray) -> MeanEstimate:
    return MeanEstimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x))))


@dataclass(frozen=True)
class TiltIdentities:
    mean_Y: MeanEstimate
    exp_alpha_Y: MeanEstimate
    expected_exp_alpha_Y: float
    exp_delta_pm: tuple[float, float]


def tilt_identities(sampler: TiltedStepSampler, seed: int, n: int = 1_000_000) -> TiltIdentities:
    """E[Y] (should be 0) and E[e^{alpha Y}] (should be E[N]) from n draws."""
    y = sample_many(sampler, seed, n)
    d = sampler.model.law.delta
    return TiltIdentities(_mean(y), _mean(np.exp(sampler.alpha * y)), sampler.model.law.num_children.mean,
                          (float(np.exp(d * y).mean()), float(np.exp(-d * y).mean())))


# ---------------------------------------------------------------------------
# many-to-one, walk side


def walk_functional(sampler: TiltedStepSampler, n: int, f: Callable[[tuple[float, ...]], float],
                    budget: int = 100_000, seed: int = 0, exact: bool | None = None) -> tuple[float, float]:
    """(estimate, std_error) of E[e^{alpha S_n} f(S_1, ..., S_n)].

    Discrete samplers with at most 2^20 paths are summed exactly (standard
    error 0); otherwise Monte Carlo with `budget` paths.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    a = sampler.alpha
    if exact is None:
        exact = sampler.kind == 1 and len(sampler.vals) ** n <= MAX_EXACT_PATHS
    if exact:
        if sampler.kind != 1 or len(sampler.vals) ** n > MAX_EXACT_PATHS:
            raise OverflowError("exact summation needs a discrete step with at most 2^20 paths")
        # unnormalised tilt weights: sum_paths prod(b p_k e^{alpha x_k}) e^{alpha S_n} f
        atoms = [(y, q * sampler.mass) for y, q in zip(sampler.vals.tolist(), sampler.probs.tolist())]
        total = Fraction(0)
        for combo in product(atoms, repeat=n):
            prob = Fraction(1)
            for _, q in combo:
                prob *= Fraction(q)
            pos = tuple(np.cumsum([y for y, _ in combo]).tolist())
            val = f(pos)
            if val != 0:
                total += prob * Fraction(math.exp(a * pos[-1]) * float(val))
        return float(total), 0.0
    if budget < 2:
        raise ValueError("budget must be >= 2")
    paths = np.cumsum(_nb_paths(_salted(seed, SALT_MC), budget, n, sampler.kind, sampler.vals, sampler.cdf), axis=1)
    vals = np.array([math.exp(a * row[-1]) * f(tuple(row.tolist())) for row in paths])
    est = _mean(vals)
    return est.value, est.se


@nb.njit(cache=True)
def _nb_paths(seed, m, n, kind, vals, cdf):
    out = np.empty((m, n))
    for r in range(m):
        key = rng_mod.nb_replica_key(seed, np.uint64(r))
        for j in range(n):
            out[r, j] = _nb_step(key, j, kind, vals, cdf)
    return out


# ---------------------------------------------------------------------------
# ladder epochs


@nb.njit(cache=True)
def _nb_first_below(seed, m, kind, vals, cdf, max_steps):
    """S_L with L = inf{n >= 1: S_n < 0}; nan when capped."""
    out = np.empty(m)
    for r in range(m):
        key = rng_mod.nb_replica_key(seed, np.uint64(r))
        s = 0.0
        out[r] = np.nan
        for n in range(max_steps):
            s += _nb_step(key, n, kind, vals, cdf)
            if s < 0.0:
                out[r] = s
                break
    return out


@nb.njit(cache=True)
def _nb_first_weak_above(seed, m, kind, vals, cdf, max_steps):
    """S_T with T = inf{n >= 1: S_n >= 0}; nan when capped."""
    out = np.empty(m)
    for r in range(m):
        key = rng_mod.nb_replica_key(seed, np.uint64(r))
        s = 0.0
        out[r] = np.nan
        for n in range(max_steps):
            s += _nb_step(key, n, kind, vals, cdf)
            if s >= 0.0:
                out[r] = s
                break
    return out


@dataclass(frozen=True)
class LadderStats:
    mean_S_L: float
    se_S_L: float
    mean_S_T1: float
    se_S_T1: float
    path_budget: int
    max_steps_per_path: int
    capped_L: int = 0
    capped_T1: int = 0
    warning: str = ""

    @property
    def product(self) -> float:
        return self.mean_S_T1 * self.mean_S_L

    @property
    def product_se(self) -> float:
        return math.hypot(self.mean_S_T1 * self.se_S_L, self.mean_S_L * self.se_S_T1)


def ladder_epochs(sampler: TiltedStepSampler, budget: int = 100_000, seed: int = 0,
                  max_steps: int = DEFAULT_MAX_STEPS) -> LadderStats:
    """E[S_L] and E[S_T1] from separate path sets; capped paths are excluded and counted."""
    sl = _nb_first_below(_salted(seed, SALT_LADDER_L), budget, sampler.kind, sampler.vals, sampler.cdf, max_steps)
    st = _nb_first_weak_above(_salted(seed, SALT_LADDER_T), budget, sampler.kind, sampler.vals, sampler.cdf,
                              max_steps)
    cl, ct = int(np.isnan(sl).sum()), int(np.isnan(st).sum())
    sl, st = sl[~np.isnan(sl)], st[~np.isnan(st)]
    msg = ""
    if cl > 0.01 * budget or ct > 0.01 * budget:
        msg = f"more than 1% of ladder paths hit the {max_steps}-step cap (L: {cl}, T1: {ct})"
        warnings.warn(msg, stacklevel=2)
    el, et = _mean(sl), _mean(st)
    return LadderStats(el.value, el.se, et.value, et.se, budget, max_steps, cl, ct, msg)


# ---------------------------------------------------------------------------
# the function W


@dataclass(frozen=True)
class WEstimate:
    x: np.ndarray
    values: np.ndarray
    se: np.ndarray
    budget: int
    capped_fraction: float
    tail_bound: np.ndarray


def estimate_W(x, delta: float, sampler: TiltedStepSampler, budget: int = 100_000, seed: int = 0,
               max_steps: int = 100_000, first: int = 0) -> WEstimate:
    """W(x) = E[sum_i e^{-delta(x+S_i)} 1(S_j + x >= 0, j <= i)] on a grid of x >= 0.

    Paths first .. first+budget-1 are used, so runs with nested budgets share
    paths.  tail_bound reports, per x, the mean over capped paths of the last
    summand magnitude e^{-delta(x+S_cap)} times the capped fraction.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < 0):
        raise ValueError("W is evaluated for x >= 0")
    if not delta > 0:
        raise ValueError("delta must be positive")
    order = np.argsort(xs)
    xs_sorted = xs[order]
    seed_u = _salted(seed, SALT_W)
    partial, capped, last = _nb_w_paths_offset(seed_u, first, budget, sampler.kind, sampler.vals, sampler.cdf,
                                               xs_sorted, delta, max_steps)
    vals = partial * np.exp(-delta * xs_sorted)[None, :]
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    mean = vals.mean(axis=0)[inv]
    se = (vals.std(axis=0, ddof=1) / math.sqrt(budget))[inv]
    cf = float(capped.mean())
    if capped.any():
        tail = cf * np.exp(-delta * (xs[:, None] + last[capped][None, :])).mean(axis=1)
    else:
        tail = np.zeros_like(xs)
    return WEstimate(xs, mean, se, budget, cf, tail)


@nb.njit(cache=True)
def _nb_w_paths_offset(seed, first, m, kind, vals, cdf, xs, delta, max_steps):
    """partial[r, k] = sum_{i < tau(x_k)} e^{-delta S_i} for paths first .. first+m-1.

    tau(x) is the first i with S_i < -x; xs must be ascending.
    """
    nx = xs.shape[0]
    partial = np.zeros((m, nx))
    capped = np.zeros(m, dtype=np.bool_)
    last = np.zeros(m)
    for r in range(m):
        key = rng_mod.nb_replica_key(seed, np.uint64(first + r))
        s = 0.0
        acc = 0.0
        k = 0
        n = 0
        while True:
            while k < nx and s < -xs[k]:
                partial[r, k] = acc
                k += 1
            if k >= nx:
                break
            if n >= max_steps:
                capped[r] = True
                last[r] = s
                for q in range(k, nx):
                    partial[r, q] = acc
                break
            acc += math.exp(-delta * s)
            s += _nb_step(key, n, kind, vals, cdf)
            n += 1
    return partial, capped, last


@dataclass(frozen=True)
class WDoubling:
    small: WEstimate
    large: WEstimate
    change: np.ndarray
    stable: bool
    lower_bound_ok: bool


def w_doubling_check(x, delta: float, sampler: TiltedStepSampler, budget: int = 50_000, seed: int = 0,
                     max_steps: int = 100_000) -> WDoubling:
    """Compare W with budget B and 2B (the first B paths shared).

    Stable when |W_2B - W_B| < 2 se_B at every x; also checks W(x) >= e^{-delta x}.
    """
    small = estimate_W(x, delta, sampler, budget, seed, max_steps)
    extra = estimate_W(x, delta, sampler, budget, seed, max_steps, first=budget)
    large_vals = 0.5 * (small.values + extra.values)
    large_se = 0.5 * np.sqrt(small.se**2 + extra.se**2)
    large = WEstimate(small.x, large_vals, large_se, 2 * budget,
                      0.5 * (small.capped_fraction + extra.capped_fraction), 0.5 * (small.tail_bound + extra.tail_bound))
    change = np.abs(large.values - small.values)
    stable = bool(np.all(change < 2.0 * small.se))
    lower = bool(np.all(large.values >= np.exp(-delta * large.x)))
    return WDoubling(small, large, change, stable, lower)


# ---------------------------------------------------------------------------
# first-passage undershoot


@nb.njit(cache=True)
def _nb_overshoot(seed, m, kind, vals, cdf, levels, kill, max_steps):
    """For each level l (ascending): L = -l - S_tau, tau = inf{n: S_n < -l}.

    A path is killed (nan for the remaining levels) once S_n > kill or after
    max_steps steps; status 0 reached, 1 killed, 2 capped.
    """
    nl = levels.shape[0]
    out = np.full((m, nl), np.nan)
    status = np.zeros((m, nl), dtype=np.int8)
    for r in range(m):
        key = rng_mod.nb_replica_key(seed, np.uint64(r))
        s = 0.0
        k = 0
        n = 0
        while k < nl:
            if n >= max_steps:
                for q in range(k, nl):
                    status[r, q] = 2
                break
            s += _nb_step(key, n, kind, vals, cdf)
            n += 1
            while k < nl and s < -levels[k]:
                out[r, k] = -levels[k] - s
                k += 1
            if k < nl and s > kill:
                for q in range(k, nl):
                    status[r, q] = 1
                break
    return out, status


@dataclass(frozen=True)
class OvershootSample:
    s: float
    values: np.ndarray
    exp_moment: MeanEstimate
    capped: int
    killed: int = 0


@dataclass(frozen=True)
class OvershootGrid:
    """Undershoots at several levels from shared paths.

    values[r, j] is L for path r at level log s_j, nan when the path was
    killed or capped first.
    """

    s: np.ndarray
    log_levels: np.ndarray
    values: np.ndarray
    status: np.ndarray
    max_steps: int
    kill: float
    alpha: float

    def exp_moment(self, j: int, truncated: bool = False) -> MeanEstimate:
        """E[e^{-alpha L}] over completed paths, or E[e^{-alpha L} 1(completed)] if truncated."""
        col = self.values[:, j]
        w = np.exp(-self.alpha * col)
        if truncated:
            return _mean(np.where(np.isnan(col), 0.0, w))
        return _mean(w[~np.isnan(col)])

    def sample(self, j: int) -> OvershootSample:
        col = self.values[:, j]
        st = self.status[:, j]
        return OvershootSample(float(self.s[j]), col[~np.isnan(col)], self.exp_moment(j),
                               int((st == 2).sum()), int((st == 1).sum()))


def overshoot_grid(sampler: TiltedStepSampler, s_grid, budget: int = 100_000, seed: int = 0,
                   max_steps: int = DEFAULT_MAX_STEPS, kill: float = math.inf) -> OvershootGrid:
    s_arr = np.sort(np.atleast_1d(np.asarray(s_grid, dtype=float)))
    if np.any(s_arr < 1):
        raise ValueError("s must be >= 1")
    levels = np.array([log_level(s) for s in s_arr])
    vals, status = _nb_overshoot(_salted(seed, SALT_OVERSHOOT), budget, sampler.kind, sampler.vals, sampler.cdf,
                                 levels, float(kill), max_steps)
    return OvershootGrid(s_arr, levels, vals, status, max_steps, float(kill), sampler.alpha)


def overshoot(sampler: TiltedStepSampler, s: float, budget: int = 100_000, seed: int = 0,
              max_steps: int = DEFAULT_MAX_STEPS) -> OvershootSample:
    """Samples of L_s = -log s - S_{tau_s} and E[e^{-alpha L_s}]."""
    return overshoot_grid(sampler, [s], budget, seed, max_steps).sample(0)


# ---------------------------------------------------------------------------
# duality spot-check


@nb.njit(cache=True)
def _nb_dual_lhs(seed, m, kind, vals, cdf, max_steps):
    """sum_{i < L} e^{-|S_i|}; partial sums are kept for capped paths."""
    out = np.empty(m)
    capped = np.zeros(m, dtype=np.bool_)
    for r in range(m):
        key = rng_mod.nb_replica_key(seed, np.uint64(r))
        s = 0.0
        acc = 0.0
        n = 0
        while True:
            acc += math.exp(-abs(s))
            if n >= max_steps:
                capped[r] = True
                break
            s += _nb_step(key, n, kind, vals, cdf)
            n += 1
            if s < 0.0:
                break
        out[r] = acc
    return out, capped


@nb.njit(cache=True)
def _nb_dual_rhs(seed, m, kind, vals, cdf, max_steps, cutoff):
    """sum_k e^{-|S_{T_k}|} over weak ascending ladder epochs, T_0 = 0.

    The walk is restarted from the current ladder height after every ladder
    epoch; a ladder excursion longer than max_steps is discarded and redrawn
    (conditioning on completed ladders).  Summation stops once the ladder
    height exceeds cutoff.
    """
    out = np.empty(m)
    redraws = np.zeros(m, dtype=np.int64)
    for r in range(m):
        key = rng_mod.nb_replica_key(seed, np.uint64(r))
        height = 0.0
        acc = 1.0
        sub = 0
        while height <= cutoff:
            ek = rng_mod.nb_mix64(key + np.uint64(sub) * np.uint64(0x9E3779B97F4A7C15))
            sub += 1
            s = 0.0
            done = False
            for n in range(max_steps):
                s += _nb_step(ek, n, kind, vals, cdf)
                if s >= 0.0:
                    done = True
                    break
            if not done:
                redraws[r] += 1
                continue
            height += s
            acc += math.exp(-height)
        out[r] = acc
    return out, redraws


@dataclass(frozen=True)
class DualityCheck:
    lhs: MeanEstimate
    rhs: MeanEstimate
    z: float
    passed: bool
    capped_lhs: int
    redraws_rhs: int


def duality_check(sampler: TiltedStepSampler, budget: int = 100_000, seed: int = 0,
                  max_steps: int = 100_000, cutoff: float = 40.0) -> DualityCheck:
    """E[sum_{i<L} g(S_i)] against E[sum_k g(S_{T_k})] for g(x) = e^{-|x|}."""
    lhs, capped = _nb_dual_lhs(_salted(seed, SALT_DUAL_L), budget, sampler.kind, sampler.vals, sampler.cdf,
                               max_steps)
    rhs, redraws = _nb_dual_rhs(_salted(seed, SALT_DUAL_T), budget, sampler.kind, sampler.vals, sampler.cdf,
                                max_steps, cutoff)
    a, b = _mean(lhs), _mean(rhs)
    z = (a.value - b.value) / math.hypot(a.se, b.se)
    return DualityCheck(a, b, z, abs(z) <= 3.0, int(capped.sum()), int(redraws.sum()))
