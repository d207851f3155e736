"""Depth-first simulation of the weighted branching tree.

The tree is generated lazily from counter-based keys (see rng): vertex v
with key k draws N from draw(k, 0), B from draw(k, 1) and its children's
weights from draws 2, 3, ... (see _nb_children).  Child i has key
child_key(k, i).
All computations are done on log-weights.

Pruning.  A child u with log L(u) < prune_log_weight is discarded when,
in addition, log L(u) + log cap(B) <= log B(root).  The second condition
only depends on the realization, so the explored vertex set, and hence
R_n, is monotone in the depth limit.  Pruning is a truncation heuristic:
descendants of a pruned vertex can in principle still exceed the maximum.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Callable, Sequence

import numba as nb
import numpy as np

from . import rng as rng_mod
from .model import CriticalModel, AtomStep

DEFAULT_MAX_NODES = 10_000_000
DIAG_OFFSET = 5


@dataclass(frozen=True)
class SimConfig:
    max_depth: int
    max_nodes: int = DEFAULT_MAX_NODES
    prune_log_weight: float | None = None
    replicas: int = 1
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.max_nodes < self.max_depth:
            raise ValueError("max_nodes must be >= max_depth")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class KernelLaw:
    """Flat arrays describing a law for the numba kernels."""

    n_cdf: np.ndarray
    step_kind: int
    step_vals: np.ndarray
    step_cdf: np.ndarray
    b_kind: int
    b_par: np.ndarray
    log_b_cap: float

    @classmethod
    def from_model(cls, model: CriticalModel) -> "KernelLaw":
        law = model.law
        vals, cdf = law.step.kernel_arrays()
        cap = law.b_law.cap
        return cls(law.num_children.cdf().astype(np.float64), law.step.kind, vals.astype(np.float64),
                   cdf.astype(np.float64), law.b_law.kind, law.b_law.kernel_params().astype(np.float64),
                   math.log(cap) if cap > 0 else -math.inf)

    def args(self):
        return (self.n_cdf, self.step_kind, self.step_vals, self.step_cdf, self.b_kind, self.b_par)


# ---------------------------------------------------------------------------
# vertex draws: numba versions and their Python twins


@nb.njit(cache=True)
def _nb_num_children(key, n_cdf):
    u = rng_mod.nb_draw(key, 0)
    k = 0
    while k < n_cdf.shape[0] - 1 and u > n_cdf[k]:
        k += 1
    return k


@nb.njit(cache=True)
def _nb_log_b(key, b_kind, b_par):
    u = rng_mod.nb_draw(key, 1)
    if b_kind == 0:
        if b_par[0] <= 0.0:
            return -np.inf
        return b_par[2] * math.log(b_par[0])
    if b_kind == 1:
        x = b_par[0] + (b_par[1] - b_par[0]) * u
        if x <= 0.0:
            return -np.inf
        return b_par[2] * math.log(x)
    a = b_par[0]
    cap_term = 0.0 if math.isinf(b_par[1]) else b_par[1] ** (-a)
    return -b_par[2] / a * math.log(1.0 - u * (1.0 - cap_term))


@nb.njit(cache=True)
def _nb_children(key, n, step_kind, step_vals, step_cdf, out):
    """Child log-weights into out[:n].

    Normal steps use Box-Muller pairs: children 2q and 2q+1 share draws
    2 + 2q and 3 + 2q (cosine and sine branch).  Other kinds use draw 2 + i.
    """
    if step_kind == 0:
        for q in range((n + 1) // 2):
            r = math.sqrt(-2.0 * math.log(rng_mod.nb_draw(key, 2 + 2 * q)))
            ang = 2.0 * math.pi * rng_mod.nb_draw(key, 3 + 2 * q)
            out[2 * q] = step_vals[0] + step_vals[1] * r * math.cos(ang)
            if 2 * q + 1 < n:
                out[2 * q + 1] = step_vals[0] + step_vals[1] * r * math.sin(ang)
        return
    for i in range(n):
        u = rng_mod.nb_draw(key, 2 + i)
        if step_kind == 1:
            k = 0
            while k < step_cdf.shape[0] - 1 and u > step_cdf[k]:
                k += 1
            out[i] = step_vals[k]
            continue
        size = step_vals.shape[0]
        pos = u * size - 0.5
        if pos <= 0.0:
            out[i] = step_vals[0]
        elif pos >= size - 1:
            out[i] = step_vals[size - 1]
        else:
            lo = int(math.floor(pos))
            out[i] = step_vals[lo] + (pos - lo) * (step_vals[lo + 1] - step_vals[lo])


def py_vertex_draws(kl: KernelLaw, key: int) -> tuple[float, list[float]]:
    """Python twin of the kernel draws: (log B, [log A_1, ..., log A_N])."""
    u = rng_mod.draw(key, 0)
    n = 0
    while n < len(kl.n_cdf) - 1 and u > kl.n_cdf[n]:
        n += 1
    u = rng_mod.draw(key, 1)
    p = kl.b_par
    if kl.b_kind == 0:
        log_b = -math.inf if p[0] <= 0 else p[2] * math.log(p[0])
    elif kl.b_kind == 1:
        x = p[0] + (p[1] - p[0]) * u
        log_b = -math.inf if x <= 0 else p[2] * math.log(x)
    else:
        cap_term = 0.0 if math.isinf(p[1]) else p[1] ** (-p[0])
        log_b = -p[2] / p[0] * math.log(1.0 - u * (1.0 - cap_term))
    log_a = []
    if kl.step_kind == 0:
        mu, sig = kl.step_vals
        for i in range(n):
            q = i // 2
            r = math.sqrt(-2.0 * math.log(rng_mod.draw(key, 2 + 2 * q)))
            ang = 2.0 * math.pi * rng_mod.draw(key, 3 + 2 * q)
            log_a.append(mu + sig * r * (math.cos(ang) if i % 2 == 0 else math.sin(ang)))
        return log_b, log_a
    for i in range(n):
        u = rng_mod.draw(key, 2 + i)
        if kl.step_kind == 1:
            k = 0
            while k < len(kl.step_cdf) - 1 and u > kl.step_cdf[k]:
                k += 1
            log_a.append(float(kl.step_vals[k]))
        else:
            size = len(kl.step_vals)
            pos = u * size - 0.5
            if pos <= 0:
                log_a.append(float(kl.step_vals[0]))
            elif pos >= size - 1:
                log_a.append(float(kl.step_vals[-1]))
            else:
                lo = int(math.floor(pos))
                log_a.append(float(kl.step_vals[lo] + (pos - lo) * (kl.step_vals[lo + 1] - kl.step_vals[lo])))
    return log_b, log_a


# ---------------------------------------------------------------------------
# max recursion kernel


@nb.njit(cache=True)
def _nb_dfs_max(key, n_cdf, step_kind, step_vals, step_cdf, b_kind, b_par, log_b_cap,
                log_root, max_depth, max_nodes, prune, diag_depth):
    """Returns (log R_n, log R_{diag_depth}, explored, capped)."""
    nmax = n_cdf.shape[0] - 1
    size = max_depth * max(nmax, 1) + 2
    st_key = np.empty(size, dtype=np.uint64)
    st_lw = np.empty(size, dtype=np.float64)
    st_d = np.empty(size, dtype=np.int64)
    child = np.empty(max(nmax, 1))
    n_fixed = n_cdf.shape[0] >= 2 and n_cdf[n_cdf.shape[0] - 2] == 0.0
    b_fixed = b_kind == 0
    root_lb = _nb_log_b(key, b_kind, b_par)
    guard = log_root + root_lb
    st_key[0] = key
    st_lw[0] = log_root
    st_d[0] = 0
    top = 1
    best = -np.inf
    best_diag = -np.inf
    explored = 0
    capped = False
    while top > 0:
        if explored >= max_nodes:
            for q in range(top):
                if st_lw[q] >= prune:
                    capped = True
                    break
            break
        top -= 1
        k = st_key[top]
        lw = st_lw[top]
        d = st_d[top]
        explored += 1
        val = lw + (root_lb if b_fixed else _nb_log_b(k, b_kind, b_par))
        if val > best:
            best = val
        if d <= diag_depth and val > best_diag:
            best_diag = val
        if d >= max_depth:
            continue
        n = nmax if n_fixed else _nb_num_children(k, n_cdf)
        _nb_children(k, n, step_kind, step_vals, step_cdf, child)
        for i in range(n):
            clw = lw + child[i]
            if clw < prune and clw + log_b_cap <= guard:
                continue
            st_key[top] = rng_mod.nb_child_key(k, i)
            st_lw[top] = clw
            st_d[top] = d + 1
            top += 1
    return best, best_diag, explored, capped


@nb.njit(cache=True)
def _nb_batch_max(seed, start, stop, n_cdf, step_kind, step_vals, step_cdf, b_kind, b_par, log_b_cap,
                  log_root, max_depth, max_nodes, prune, diag_depth):
    m = stop - start
    out = np.empty(m)
    out_diag = np.empty(m)
    explored = np.empty(m, dtype=np.int64)
    capped = np.empty(m, dtype=np.bool_)
    for r in range(m):
        key = rng_mod.nb_replica_key(np.uint64(seed), np.uint64(start + r))
        a, b, e, c = _nb_dfs_max(key, n_cdf, step_kind, step_vals, step_cdf, b_kind, b_par, log_b_cap,
                                 log_root, max_depth, max_nodes, prune, diag_depth)
        out[r] = a
        out_diag[r] = b
        explored[r] = e
        capped[r] = c
    return out, out_diag, explored, capped


def _prune_level(model: CriticalModel, cfg: SimConfig) -> float:
    if cfg.prune_log_weight is None:
        return -math.inf
    if not math.isfinite(model.law.b_law.cap):
        warnings.warn("B is unbounded: pruning disabled", stacklevel=3)
        return -math.inf
    return float(cfg.prune_log_weight)


@dataclass(frozen=True)
class SimOutcome:
    value: float
    explored: int
    capped: bool

    def __float__(self) -> float:
        return self.value


def simulate_R(model: CriticalModel, cfg: SimConfig, stream: int, log_root: float = 0.0) -> SimOutcome:
    """Truncated maximum R_n for one tree; stream is the root key."""
    kl = KernelLaw.from_model(model)
    best, _, explored, capped = _nb_dfs_max(
        np.uint64(stream), *kl.args(), kl.log_b_cap, float(log_root), cfg.max_depth, cfg.max_nodes,
        _prune_level(model, cfg), cfg.max_depth)
    return SimOutcome(math.exp(best), int(explored), bool(capped))


def simulate_R_reference(model: CriticalModel, cfg: SimConfig, stream: int = 0,
                         draws: Callable[[tuple[int, ...]], tuple[float, Sequence[float]]] | None = None,
                         log_root: float = 0.0) -> SimOutcome:
    """Plain-Python DFS.

    draws(path) returns (log B, list of child log-weights) for the vertex
    with the given path of child indices; by default the hashed streams of
    the numba kernel are used, so both implementations see the same tree.
    """
    kl = KernelLaw.from_model(model)
    prune = _prune_level(model, cfg)
    keys: dict[tuple[int, ...], int] = {(): stream}

    def default_draws(path):
        return py_vertex_draws(kl, keys[path])

    get = draws or default_draws
    root_lb, _ = get(())
    guard = log_root + root_lb
    stack = [((), log_root)]
    best, explored = -math.inf, 0
    while stack:
        if explored >= cfg.max_nodes:
            return SimOutcome(math.exp(best), explored, any(lw >= prune for _, lw in stack))
        path, lw = stack.pop()
        explored += 1
        log_b, log_a = get(path)
        best = max(best, lw + log_b)
        if len(path) >= cfg.max_depth:
            continue
        for i, x in enumerate(log_a):
            clw = lw + x
            if clw < prune and clw + kl.log_b_cap <= guard:
                continue
            child = path + (i,)
            if draws is None:
                keys[child] = rng_mod.child_key(keys[path], i)
            stack.append((child, clw))
    return SimOutcome(math.exp(best), explored, False)


@dataclass(frozen=True)
class RTailSample:
    values: np.ndarray
    truncated_fraction: float
    depth_used: int
    explored: np.ndarray
    capped: np.ndarray
    values_shallow: np.ndarray
    shallow_depth: int
    seed: int
    prune_log_weight: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def replicas(self) -> int:
        return len(self.values)


def _chunks(n: int, parts: int) -> list[tuple[int, int]]:
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run_max_chunk(args):
    kl, seed, start, stop, log_root, max_depth, max_nodes, prune, diag = args
    return start, _nb_batch_max(seed, start, stop, *kl.args(), kl.log_b_cap, log_root, max_depth,
                                max_nodes, prune, diag)


def _fan_out(fn, tasks, workers: int):
    if workers == 1 or len(tasks) == 1:
        results = [fn(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, tasks))
    return sorted(results, key=lambda r: r[0])


def simulate_R_batch(model: CriticalModel, cfg: SimConfig, log_root: float = 0.0,
                     chunk: int = 4096) -> RTailSample:
    """cfg.replicas independent truncated maxima, replica i rooted at replica_key(seed, i)."""
    kl = KernelLaw.from_model(model)
    prune = _prune_level(model, cfg)
    diag = max(cfg.max_depth - DIAG_OFFSET, 0)
    parts = max(cfg.workers, -(-cfg.replicas // chunk))
    tasks = [(kl, cfg.seed & rng_mod.MASK, a, b, float(log_root), cfg.max_depth, cfg.max_nodes, prune, diag)
             for a, b in _chunks(cfg.replicas, parts)]
    results = _fan_out(_run_max_chunk, tasks, cfg.workers)
    logs = np.concatenate([r[1][0] for r in results])
    logs_diag = np.concatenate([r[1][1] for r in results])
    explored = np.concatenate([r[1][2] for r in results])
    capped = np.concatenate([r[1][3] for r in results])
    return RTailSample(np.exp(logs), float(capped.mean()), cfg.max_depth, explored, capped,
                       np.exp(logs_diag), diag, cfg.seed, cfg.prune_log_weight)


@dataclass(frozen=True)
class DepthDiagnostic:
    depth: int
    shallow_depth: int
    mean_deep: float
    mean_shallow: float
    se_combined: float
    z: float
    passed: bool


def depth_diagnostic(sample: RTailSample) -> DepthDiagnostic:
    """Compare mean R at depth d and d - 5 (same trees) against combined standard errors."""
    a, b = sample.values, sample.values_shallow
    n = len(a)
    se = math.sqrt(a.var(ddof=1) / n + b.var(ddof=1) / n) if n > 1 else math.inf
    diff = float(a.mean() - b.mean())
    z = diff / se if se > 0 else (0.0 if diff == 0 else math.inf)
    return DepthDiagnostic(sample.depth_used, sample.shallow_depth, float(a.mean()), float(b.mean()),
                           se, z, abs(z) < 3.0)


# ---------------------------------------------------------------------------
# first-passage counts N_t


@nb.njit(cache=True)
def _nb_first_passage(key, n_cdf, step_kind, step_vals, step_cdf, log_x, log_ts, max_depth, max_nodes,
                      floor, counts):
    """Adds to counts[j] the number of v with L(v) > t_j and L(v_k) <= t_j for k < |v|."""
    nmax = n_cdf.shape[0] - 1
    size = max_depth * max(nmax, 1) + 2
    st_key = np.empty(size, dtype=np.uint64)
    st_lw = np.empty(size, dtype=np.float64)
    st_m = np.empty(size, dtype=np.float64)
    st_d = np.empty(size, dtype=np.int64)
    log_tmax = log_ts[log_ts.shape[0] - 1]
    nt = log_ts.shape[0]
    child = np.empty(max(nmax, 1))
    st_key[0] = key
    st_lw[0] = log_x
    st_m[0] = -np.inf
    st_d[0] = 0
    top = 1
    explored = 0
    capped = False
    while top > 0:
        if explored >= max_nodes:
            capped = True
            break
        top -= 1
        k = st_key[top]
        lw = st_lw[top]
        m = st_m[top]
        d = st_d[top]
        explored += 1
        if d > 0:
            if lw > m:
                for j in range(nt):
                    if m <= log_ts[j] < lw:
                        counts[j] += 1
                m = lw
            if m > log_tmax:
                continue
        if d >= max_depth:
            continue
        n = _nb_num_children(k, n_cdf)
        _nb_children(k, n, step_kind, step_vals, step_cdf, child)
        for i in range(n):
            clw = lw + child[i]
            if clw < floor:
                continue
            st_key[top] = rng_mod.nb_child_key(k, i)
            st_lw[top] = clw
            st_m[top] = m
            st_d[top] = d + 1
            top += 1
    return explored, capped


@nb.njit(cache=True)
def _nb_batch_first_passage(seed, start, stop, n_cdf, step_kind, step_vals, step_cdf, log_x, log_ts,
                            max_depth, max_nodes, floor):
    m = stop - start
    counts = np.zeros((m, log_ts.shape[0]), dtype=np.int64)
    explored = np.empty(m, dtype=np.int64)
    capped = np.empty(m, dtype=np.bool_)
    for r in range(m):
        key = rng_mod.nb_replica_key(np.uint64(seed), np.uint64(start + r))
        e, c = _nb_first_passage(key, n_cdf, step_kind, step_vals, step_cdf, log_x, log_ts, max_depth,
                                 max_nodes, floor, counts[r])
        explored[r] = e
        capped[r] = c
    return counts, explored, capped


@dataclass(frozen=True)
class FirstPassageResult:
    n_t: int
    explored: int
    capped: bool


@dataclass(frozen=True)
class FirstPassageBatch:
    """counts[r, j] = N_{t_j} for replica r (truncated at max_depth and floor)."""

    t: np.ndarray
    counts: np.ndarray
    explored: np.ndarray
    capped: np.ndarray
    max_depth: int
    floor: float
    log_x: float

    @property
    def capped_fraction(self) -> float:
        return float(self.capped.mean())


def _check_first_passage(model: CriticalModel, t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t <= 1):
        raise ValueError("thresholds must exceed 1")
    if not model.b_is_one:
        warnings.warn("first-passage counts assume B = 1", stacklevel=3)
    return np.sort(t)


def first_passage_count(model: CriticalModel, t: float, cfg: SimConfig, stream: int,
                        x: float = 1.0) -> FirstPassageResult:
    """N_t for one tree rooted at weight x; pruning floor from cfg.prune_log_weight."""
    ts = _check_first_passage(model, t)
    kl = KernelLaw.from_model(model)
    counts = np.zeros(1, dtype=np.int64)
    floor = -math.inf if cfg.prune_log_weight is None else float(cfg.prune_log_weight)
    explored, capped = _nb_first_passage(np.uint64(stream), kl.n_cdf, kl.step_kind, kl.step_vals, kl.step_cdf,
                                         math.log(x), np.log(ts), cfg.max_depth, cfg.max_nodes, floor, counts)
    return FirstPassageResult(int(counts[0]), int(explored), bool(capped))


def _run_fp_chunk(args):
    kl, seed, start, stop, log_x, log_ts, max_depth, max_nodes, floor = args
    return start, _nb_batch_first_passage(seed, start, stop, kl.n_cdf, kl.step_kind, kl.step_vals, kl.step_cdf,
                                          log_x, log_ts, max_depth, max_nodes, floor)


def first_passage_batch(model: CriticalModel, t_grid: Sequence[float], cfg: SimConfig, x: float = 1.0,
                        chunk: int = 8192) -> FirstPassageBatch:
    """N_t for every threshold of t_grid from one traversal per replica."""
    ts = _check_first_passage(model, t_grid)
    kl = KernelLaw.from_model(model)
    floor = -math.inf if cfg.prune_log_weight is None else float(cfg.prune_log_weight)
    parts = max(cfg.workers, -(-cfg.replicas // chunk))
    tasks = [(kl, cfg.seed & rng_mod.MASK, a, b, math.log(x), np.log(ts), cfg.max_depth, cfg.max_nodes, floor)
             for a, b in _chunks(cfg.replicas, parts)]
    results = _fan_out(_run_fp_chunk, tasks, cfg.workers)
    counts = np.concatenate([r[1][0] for r in results])
    explored = np.concatenate([r[1][1] for r in results])
    capped = np.concatenate([r[1][2] for r in results])
    return FirstPassageBatch(ts, counts, explored, capped, cfg.max_depth, floor, math.log(x))


# ---------------------------------------------------------------------------
# exact enumeration


MAX_ENUMERATION = 10_000_000


def exact_tree_functional(model: CriticalModel, n: int, f: Callable[[tuple[float, ...]], float]) -> float:
    """E[sum_{|v|=n} f(-log L(v_1), ..., -log L(v_n))] by full enumeration.

    The weights along one line of descent are independent draws from the
    atoms, so each of the b^n vertices contributes the same sum over atom
    sequences.  That sum is accumulated exactly (binary floats are
    rationals) and rounded once.
    """
    law = model.law
    b = law.num_children.constant
    if b is None or not isinstance(law.step, AtomStep):
        raise ValueError("exact enumeration needs constant N and a finite-atom step law")
    if n < 1:
        raise ValueError("n must be >= 1")
    atoms = [(v, p) for v, p in zip(law.step.values, law.step.probs) if p > 0]
    if b**n * len(atoms) ** n > MAX_ENUMERATION:
        raise OverflowError(f"enumeration of {b**n * len(atoms) ** n} terms exceeds {MAX_ENUMERATION}")
    total = Fraction(0)
    for combo in product(atoms, repeat=n):
        prob = Fraction(1)
        for _, p in combo:
            prob *= Fraction(p)
        pos = tuple(np.cumsum([-v for v, _ in combo]).tolist())
        total += prob * Fraction(float(f(pos)))
    # all b^n vertices share the same ancestral-line law
    return float(b**n * total)
