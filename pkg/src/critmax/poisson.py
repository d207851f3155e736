"""The Poisson equation for D(x) = e^{alpha x} P[R > e^x]:

    E[D(x + Y)] - D(x) = G(x),
    G(x) = e^{alpha x} E[sum phi(e^x / A_i) - 1 + 1(B <= e^x) prod (1 - phi(e^x / A_i))],

with phi(t) = P[R > t] frozen at the empirical law of a simulated sample.
Standard errors come from J leave-one-group-out jackknife replicates that
drop a group of replicas and a group of Monte Carlo draws together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from numba import njit

from . import rng as rng_mod
from .grid import ZERO, GridFunction, Tail, fitted_tails, smooth
from .model import AtomStep, ConstantB, CriticalModel
from .tilted_walk import LadderStats, TiltedStepSampler, sample_many

MAX_EXACT_DRAWS = 100_000
GATE_Z = 3.0
QUADRATURE_FLOOR = 1e-9  # relative to int |G-breve|, for G without sampling error
SALT_G = 0x47
SALT_ED = 0x45


class RenewalError(ValueError):
    """Raised when the renewal constant cannot be produced; .result holds the diagnostics."""

    def __init__(self, message: str, result: "RenewalResult | None" = None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class PoissonConfig:
    x_lo: float = -10.0
    x_hi: float = 12.0
    step: float = 0.05
    fine_step: float = 1e-3
    groups: int = 20
    draws: int = 2**16
    seed: int = 0

    def __post_init__(self):
        if not self.x_hi > self.x_lo or not self.step > 0 or not self.fine_step > 0:
            raise ValueError("bad grid")
        if self.groups < 2:
            raise ValueError("need at least two jackknife groups")
        if self.draws < self.groups:
            raise ValueError("need at least one draw per group")

    @property
    def x(self) -> np.ndarray:
        n = int(round((self.x_hi - self.x_lo) / self.step)) + 1
        return self.x_lo + self.step * np.arange(n)


# ---------------------------------------------------------------------------
# empirical phi and D


def _exceed_rows(logv: np.ndarray, groups: np.ndarray, j: int, x: np.ndarray, side: str) -> np.ndarray:
    """Row 0: fraction of log-values above x (side 'right') or at/above (side
    'left'); row r: the same without group r - 1."""
    n = logv.size
    srt = np.sort(logv)
    total = n - np.searchsorted(srt, x, side=side)
    rows = np.empty((j + 1, x.size))
    rows[0] = total / n
    for g in range(j):
        sub = np.sort(logv[groups == g])
        cnt = sub.size - np.searchsorted(sub, x, side=side)
        rows[g + 1] = (total - cnt) / (n - sub.size)
    return rows


def _groups(n: int, j: int) -> np.ndarray:
    return np.arange(n) % j


def phi_from_sample(values, cfg: PoissonConfig = PoissonConfig()) -> GridFunction:
    """u -> P^[R > e^u] on a fine grid, right-continuous, with jackknife rows.

    The grid starts at the sample minimum (rounded down to the grid), below
    which phi is exactly 1, and ends one node past the maximum, beyond which
    it is exactly 0.
    """
    logv = np.log(np.asarray(values, dtype=float))
    if logv.size < 2 * cfg.groups:
        raise ValueError("sample too small for the jackknife groups")
    h = cfg.fine_step
    lo = math.floor(logv.min() / h + 1e-9) * h
    n = int(math.ceil((logv.max() - lo) / h)) + 2
    x = lo + h * np.arange(n)
    rows = _exceed_rows(logv, _groups(logv.size, cfg.groups), cfg.groups, x, "right")
    return GridFunction(lo, h, rows[0], Tail(0.0, 1.0), ZERO, rows[1:],
                        meta={"edge_jump": True, "support_max": float(logv.max()), "n": int(logv.size)})


def D_from_sample(values, alpha: float, cfg: PoissonConfig = PoissonConfig(), b_is_one: bool = False,
                  step: float | None = None) -> GridFunction:
    """D(x) = e^{alpha x} P^[R > e^x] on the coarse grid.

    At atoms of R the node value is the midpoint of the two one-sided
    limits, which keeps integrals and smoothing second-order accurate
    across the jump.  With B = 1 the left tail is e^{alpha x} exactly.
    """
    logv = np.log(np.asarray(values, dtype=float))
    h = cfg.step if step is None else step
    n = int(round((cfg.x_hi - cfg.x_lo) / h)) + 1
    x = cfg.x_lo + h * np.arange(n)
    g = _groups(logv.size, cfg.groups)
    rows = 0.5 * (_exceed_rows(logv, g, cfg.groups, x, "right") + _exceed_rows(logv, g, cfg.groups, x, "left"))
    rows *= np.exp(alpha * x)
    if b_is_one and x[0] < 0:
        left = Tail(alpha)
    else:
        left, _ = fitted_tails(x, rows[0])
    right = Tail(0.0) if rows[0, -1] > 0 else ZERO
    return GridFunction(cfg.x_lo, h, rows[0], left, right, rows[1:], meta={"alpha": alpha})


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _phi_at(table, r, x_lo, inv_h, u):
    """Linear interpolation in row r; 1 left of the grid, 0 right of it."""
    if u < x_lo:
        return 1.0
    pos = (u - x_lo) * inv_h
    i = int(pos)
    n = table.shape[1]
    if i >= n - 1:
        return table[r, n - 1] if pos <= n - 1 else 0.0
    w = pos - i
    return table[r, i] * (1.0 - w) + table[r, i + 1] * w


@njit(cache=True)
def _nb_G(table, x_lo, inv_h, xs, alpha, log_a, counts, log_b, weights, groups, eq_w):
    rows = table.shape[0]
    nx, k_draws = xs.size, counts.size
    f1 = np.zeros((rows, nx))
    f2 = np.zeros((rows, nx))
    for r in range(rows):
        excl = r - 1 if r > 0 else -2
        wsum = 0.0
        for k in range(k_draws):
            if groups[k] != excl:
                wsum += weights[k]
        for ix in range(nx):
            x = xs[ix]
            s1 = 0.0
            s2 = 0.0
            for k in range(k_draws):
                if groups[k] == excl:
                    continue
                # g = sum phi - 1 + prod(1 - phi), accumulated in a form with
                # only non-negative terms
                g = 0.0
                s = 0.0
                prod = 1.0
                for i in range(counts[k]):
                    p = _phi_at(table, r, x_lo, inv_h, x - log_a[k, i])
                    g = g * (1.0 - p) + p * s
                    s += p
                    prod *= 1.0 - p
                s1 += weights[k] * g
                lb = log_b[k]
                if abs(lb - x) <= 1e-12:
                    s2 += weights[k] * prod * (1.0 - eq_w)
                elif lb > x:
                    s2 += weights[k] * prod
            e = math.exp(alpha * x) / wsum
            f1[r, ix] = e * s1
            f2[r, ix] = e * s2
    return f1, f2


@njit(cache=True)
def _nb_expect(table, x_lo, inv_h, left_amp, left_rate, premult, xs, ys, weights, groups):
    """E[h(x + Y)] per row, h(u) = e^{premult u} * table(u); left of the grid
    table(u) = left_amp[r] e^{left_rate (u - x_lo)}, right of it 0."""
    rows, n = table.shape
    nx, k_draws = xs.size, ys.size
    out = np.zeros((rows, nx))
    for r in range(rows):
        excl = r - 1 if r > 0 else -2
        wsum = 0.0
        for k in range(k_draws):
            if groups[k] != excl:
                wsum += weights[k]
        for ix in range(nx):
            acc = 0.0
            for k in range(k_draws):
                if groups[k] == excl:
                    continue
                u = xs[ix] + ys[k]
                if u < x_lo:
                    v = left_amp[r] * math.exp(left_rate * (u - x_lo))
                else:
                    pos = (u - x_lo) * inv_h
                    i = int(pos)
                    if i >= n - 1:
                        v = table[r, n - 1] if pos <= n - 1 else 0.0
                    else:
                        w = pos - i
                        v = table[r, i] * (1.0 - w) + table[r, i + 1] * w
                if premult != 0.0:
                    v *= math.exp(premult * u)
                acc += weights[k] * v
            out[r, ix] = acc / wsum
    return out


def _stack(f: GridFunction) -> np.ndarray:
    rows = f.values[None, :]
    return rows if f.replicates is None else np.vstack([rows, f.replicates])


def _split(rows: np.ndarray, has_reps: bool):
    return rows[0], (rows[1:] if has_reps else None)


# ---------------------------------------------------------------------------
# draws


@dataclass(frozen=True)
class Draws:
    log_a: np.ndarray
    counts: np.ndarray
    log_b: np.ndarray
    weights: np.ndarray
    groups: np.ndarray
    exact: bool


def reproduction_draws(model: CriticalModel, cfg: PoissonConfig) -> Draws:
    """Exact enumeration for finite-atom steps with constant N and B; otherwise
    cfg.draws Monte Carlo draws split into cfg.groups groups."""
    law = model.law
    nconst = law.num_children.constant
    if isinstance(law.step, AtomStep) and nconst is not None and isinstance(law.b_law, ConstantB) \
            and len(law.step.values) ** nconst <= MAX_EXACT_DRAWS:
        vals, probs = np.asarray(law.step.values), np.asarray(law.step.probs)
        combos = list(product(range(len(vals)), repeat=nconst))
        k = len(combos)
        log_a = np.array([[vals[i] for i in c] for c in combos]).reshape(k, max(nconst, 1))
        w = np.array([math.prod(probs[i] for i in c) for c in combos])
        log_b = np.full(k, math.log(law.b_law.cap))
        return Draws(log_a, np.full(k, nconst, dtype=np.int64), log_b, w, np.full(k, -1, dtype=np.int64), True)
    gen = rng_mod.generator(cfg.seed, SALT_G)
    s = law.sample(gen, cfg.draws)
    return Draws(np.nan_to_num(s.log_a, nan=0.0), s.counts.astype(np.int64), s.log_b, np.ones(cfg.draws),
                 _groups(cfg.draws, cfg.groups).astype(np.int64), False)


def y_draws(sampler: TiltedStepSampler, cfg: PoissonConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    if sampler.kind == 1:
        return (np.asarray(sampler.vals, dtype=float), np.asarray(sampler.probs, dtype=float),
                np.full(len(sampler.vals), -1, dtype=np.int64), True)
    ys = sample_many(sampler, cfg.seed ^ SALT_ED, cfg.draws)
    return ys, np.ones(cfg.draws), _groups(cfg.draws, cfg.groups).astype(np.int64), False


# ---------------------------------------------------------------------------
# G


@dataclass(frozen=True)
class GEstimate:
    G: GridFunction
    f1: GridFunction
    f2: GridFunction
    exact: bool
    beyond_support: float
    flags: dict = field(default_factory=dict)


def _replicate_rows(phi: GridFunction, nrows: int) -> np.ndarray:
    t = _stack(phi)
    if t.shape[0] == 1 and nrows > 1:
        t = np.repeat(t, nrows, axis=0)
    return t


def G_estimate(model: CriticalModel, phi: GridFunction, cfg: PoissonConfig = PoissonConfig(),
               draws: Draws | None = None, midpoint: bool = True) -> GEstimate:
    """G on the coarse grid as f1 - f2 with

        f1 = e^{alpha x} E[sum phi - 1 + prod (1 - phi)] >= 0,
        f2 = e^{alpha x} E[1(B > e^x) prod (1 - phi)].

    midpoint=True gives 1(B = e^x) weight 1/2 (node values at atoms of B are
    the average of the one-sided limits); midpoint=False is the pointwise
    right-continuous value.
    """
    d = draws or reproduction_draws(model, cfg)
    nrows = 1 + (phi.jackknife_size or (0 if d.exact else cfg.groups))
    table = _replicate_rows(phi, nrows)
    xs = cfg.x
    f1, f2 = _nb_G(table, phi.x_lo, 1.0 / phi.step, xs, model.alpha, d.log_a, d.counts, d.log_b,
                   d.weights, d.groups, 0.5 if midpoint else 1.0)
    has_reps = nrows > 1
    g = f1 - f2

    def grid(rows):
        v, reps = _split(rows, has_reps)
        left, right = fitted_tails(xs, v)
        return GridFunction(cfg.x_lo, cfg.step, v, left, right, reps, meta={"alpha": model.alpha})

    G = grid(g)
    sup = phi.meta.get("support_max", math.inf)
    beyond = float(np.mean(xs > sup))
    mass = np.abs(G.values).sum() * cfg.step
    tail_mass = abs(G.integral_rows(G.values[None, :])[0] - G.values.sum() * cfg.step) if mass > 0 else 0.0
    flags = {"tail_extrapolation": bool(mass > 0 and tail_mass > 0.1 * mass)}
    return GEstimate(G, grid(f1), grid(f2), d.exact, beyond, flags)


# ---------------------------------------------------------------------------
# residual


@dataclass(frozen=True)
class PoissonResidual:
    x: np.ndarray
    raw: GridFunction
    smoothed: GridFunction
    lhs: GridFunction  # E[D(x + Y)]

    def window(self, lo: float, hi: float) -> np.ndarray:
        return (self.x >= lo - 1e-12) & (self.x <= hi + 1e-12)

    def max_z(self, lo: float = -2.0, hi: float = 6.0, smoothed: bool = False) -> float:
        f = self.smoothed if smoothed else self.raw
        m = self.window(lo, hi)
        v, se = f(self.x[m]), f.se()[: f.n]
        se = np.interp(self.x[m], f.x, se)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, np.abs(v) / se, np.where(v == 0, 0.0, np.inf))
        return float(z.max())

    def rows(self) -> list[dict]:
        se_r, se_s = self.raw.se(), np.interp(self.x, self.smoothed.x, self.smoothed.se())
        s = self.smoothed(self.x)
        return [{"x": float(x), "residual": float(r), "se": float(e), "smoothed": float(sv), "smoothed_se": float(se2)}
                for x, r, e, sv, se2 in zip(self.x, self.raw.values, se_r, s, se_s)]


def expected_D_shift(model: CriticalModel, phi: GridFunction, sampler: TiltedStepSampler,
                     cfg: PoissonConfig = PoissonConfig(), nrows: int | None = None) -> tuple[np.ndarray, bool]:
    """Rows of E[D(x + Y)] on the coarse grid, D evaluated from phi exactly."""
    ys, w, groups, exact = y_draws(sampler, cfg)
    nrows = nrows or 1 + (phi.jackknife_size or (0 if exact else cfg.groups))
    table = _replicate_rows(phi, nrows)
    amp = np.ones(nrows)
    return _nb_expect(table, phi.x_lo, 1.0 / phi.step, amp, 0.0, model.alpha, cfg.x, ys, w, groups), exact


def poisson_residual(model: CriticalModel, phi: GridFunction, D: GridFunction, G: GEstimate,
                     sampler: TiltedStepSampler, cfg: PoissonConfig = PoissonConfig()) -> PoissonResidual:
    """r(x) = E[D(x + Y)] - D(x) - G(x), raw and smoothed (smoothing commutes
    with the shift, so the smoothed residual is the smoothing of r)."""
    nrows = 1 + G.G.jackknife_size
    ed, _ = expected_D_shift(model, phi, sampler, cfg, nrows)
    d_rows = _stack(D)
    if d_rows.shape[0] != nrows:
        d_rows = np.repeat(d_rows[:1], nrows, axis=0)
    r = ed - d_rows - _stack(G.G)
    has = nrows > 1
    v, reps = _split(r, has)
    raw = GridFunction(cfg.x_lo, cfg.step, v, ZERO, ZERO, reps)
    ev, ereps = _split(ed, has)
    lhs = GridFunction(cfg.x_lo, cfg.step, ev, ZERO, ZERO, ereps)
    return PoissonResidual(cfg.x, raw, smooth(raw), lhs)


def ratio_trend(D: GridFunction, x_from: float, x_to: float) -> np.ndarray:
    """Smoothed-D ratios D(x + 1) / D(x) for x in [x_from, x_to - 1] on the grid."""
    Ds = smooth(D)
    x = D.x[(D.x >= x_from) & (D.x <= x_to - 1)]
    return Ds(x + 1.0) / Ds(x)


# ---------------------------------------------------------------------------
# renewal constant


@dataclass(frozen=True)
class RenewalResult:
    integral_G: float
    integral_G_se: float
    integral_xG: float
    integral_xG_se: float
    mean_S_T1: float
    mean_S_L: float
    c_renewal: float
    c_renewal_se: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def renewal_constant(G: GridFunction, ladders: LadderStats, lattice: bool | None = False,
                     gate_z: float = GATE_Z) -> RenewalResult:
    """c = int x G-breve(x) dx / (E[S_T1] E[S_L]) with G-breve the smoothed G.

    Refuses (RenewalError) for a lattice step, a degenerate G, or when
    int G-breve = int G is not within gate_z se of zero (or, for an exact G,
    within QUADRATURE_FLOOR of its absolute mass).
    """
    if lattice:
        raise RenewalError("lattice step: the renewal limit does not exist (use the lattice levels)")
    if not np.any(G.values != 0):
        raise RenewalError("degenerate G (identically zero)")
    Gs = smooth(G)
    i0, i0_se = Gs.integral(0)
    i1, i1_se = Gs.integral(1)
    t, l = ladders.mean_S_T1, ladders.mean_S_L
    denom = t * l
    c = i1 / denom
    rel = math.sqrt((i1_se / i1) ** 2 + (ladders.se_S_T1 / t) ** 2 + (ladders.se_S_L / l) ** 2) if i1 else math.inf
    res = RenewalResult(i0, i0_se, i1, i1_se, t, l, c, abs(c) * rel)
    floor = QUADRATURE_FLOOR * Gs.integral_rows(np.abs(Gs.values))[0]
    if abs(i0) > max(gate_z * i0_se, floor):
        raise RenewalError(f"int G = {i0:.4g} is {abs(i0) / i0_se if i0_se else math.inf:.2f} se from zero", res)
    return res


def decay_weighted_mass(G: GridFunction, eps: float) -> float:
    """sum |G(x)| e^{eps |x|} h over the grid plus the declared tails; inf
    when a declared tail decays no faster than e^{-eps |x|}."""
    total = float(np.sum(np.abs(G.values) * np.exp(eps * np.abs(G.x))) * G.step)
    for tail, edge, end in ((G.left, G.x_lo, G.values[0]), (G.right, G.x_hi, G.values[-1])):
        if tail.zero:
            continue
        if tail.rate <= eps:
            return math.inf
        total += abs(end) * math.exp(eps * abs(edge)) / (tail.rate - eps)
    return total


def default_epsilon(model: CriticalModel) -> float:
    """Half of the upper bound min(alpha / 2, delta)."""
    return 0.5 * min(model.alpha / 2, model.law.delta)


@dataclass(frozen=True)
class PoissonAnalysis:
    phi: GridFunction
    D: GridFunction
    G: GEstimate
    residual: PoissonResidual

    @property
    def G_breve(self) -> GridFunction:
        return smooth(self.G.G)


def analyse(model: CriticalModel, values, sampler: TiltedStepSampler,
            cfg: PoissonConfig = PoissonConfig()) -> PoissonAnalysis:
    """phi, D, G and the residual from one sample of R."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty sample")
    phi = phi_from_sample(values, cfg)
    D = D_from_sample(values, model.alpha, cfg, b_is_one=model.b_is_one)
    G = G_estimate(model, phi, cfg)
    return PoissonAnalysis(phi, D, G, poisson_residual(model, phi, D, G, sampler, cfg))
