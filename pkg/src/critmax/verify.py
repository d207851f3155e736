"""Tree side against walk side: the many-to-one formula, the N_t sandwich and
the second-moment lower bound."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng as rng_mod
from .model import CriticalModel
from .tilted_walk import TiltedStepSampler, overshoot_grid, tilted_sampler, walk_functional
from .tree_sim import KernelLaw, SimConfig, exact_tree_functional, first_passage_batch, py_vertex_draws

EXACT_TOL = 1e-12
Z_LIMIT = 3.0

PathFunctional = Callable[[tuple[float, ...]], float]

# indicators, exponentials and path minima
BATTERY: dict[str, PathFunctional] = {
    "one": lambda s: 1.0,
    "end_negative": lambda s: float(s[-1] < 0),
    "exp_half_end": lambda s: math.exp(-0.5 * s[-1]),
    "path_min": lambda s: min(s),
    "min_above_minus_one": lambda s: float(min(s) >= -1),
    "end_square_damped": lambda s: s[-1] ** 2 * math.exp(-abs(s[0])),
}


@dataclass(frozen=True)
class CheckResult:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    z: float
    passed: bool
    label: str = ""
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"label": self.label, "lhs": self.lhs, "lhs_se": self.lhs_se, "rhs": self.rhs, "rhs_se": self.rhs_se,
                "z": self.z, "pass": self.passed, **self.extra}


def _z(a: float, sa: float, b: float, sb: float) -> float:
    se = math.hypot(sa, sb)
    if se == 0:
        return 0.0 if a == b else math.inf
    return (a - b) / se


def _tree_mc_functional(model: CriticalModel, n: int, f: PathFunctional, budget: int, seed: int):
    """Monte Carlo of E[sum_{|v|=n} f(positions)] with the hashed tree streams."""
    kl = KernelLaw.from_model(model)
    totals = np.empty(budget)
    for r in range(budget):
        stack = [(rng_mod.replica_key(seed, r), ())]
        acc = 0.0
        while stack:
            key, pos = stack.pop()
            if len(pos) == n:
                acc += f(pos)
                continue
            _, log_a = py_vertex_draws(kl, key)
            last = pos[-1] if pos else 0.0
            for i, x in enumerate(log_a):
                stack.append((rng_mod.child_key(key, i), pos + (last - x,)))
        totals[r] = acc
    return float(totals.mean()), float(totals.std(ddof=1) / math.sqrt(budget))


def many_to_one_check(model: CriticalModel, f: PathFunctional, n: int, mode: str = "exact",
                      budget: int = 20_000, seed: int = 0, sampler: TiltedStepSampler | None = None,
                      label: str = "") -> CheckResult:
    """Walk side E[e^{alpha S_n} f(S)] (lhs) against the tree side (rhs)."""
    sampler = sampler or tilted_sampler(model)
    if mode == "exact":
        rhs = exact_tree_functional(model, n, f)
        lhs, _ = walk_functional(sampler, n, f, exact=True)
        diff = abs(lhs - rhs)
        ok = diff <= EXACT_TOL * max(1.0, abs(rhs))
        return CheckResult(lhs, 0.0, rhs, 0.0, 0.0 if diff == 0 else math.copysign(math.inf, lhs - rhs),
                           ok, label, {"abs_diff": diff, "mode": mode, "n": n})
    if mode != "mc":
        raise ValueError("mode must be 'exact' or 'mc'")
    lhs, lse = walk_functional(sampler, n, f, budget, seed, exact=False)
    rhs, rse = _tree_mc_functional(model, n, f, budget, seed)
    z = _z(lhs, lse, rhs, rse)
    return CheckResult(lhs, lse, rhs, rse, z, abs(z) <= Z_LIMIT, label, {"mode": mode, "n": n})


def many_to_one_battery(model: CriticalModel, ns: Sequence[int] = (1, 2, 3, 4)) -> list[CheckResult]:
    sampler = tilted_sampler(model)
    return [many_to_one_check(model, f, n, "exact", sampler=sampler, label=f"{name}/n={n}")
            for n in ns for name, f in BATTERY.items()]


@dataclass(frozen=True)
class NtSandwich:
    points: list[CheckResult]
    usable: bool
    capped_fraction: float
    upper_ok: bool
    match_count: int
    lower_ok: bool
    c0: float

    @property
    def passed(self) -> bool:
        return self.usable and self.upper_ok and self.lower_ok and self.match_count >= len(self.points) - 1


def nt_sandwich_check(model: CriticalModel, t_grid: Sequence[float], cfg: SimConfig, walk_budget: int = 200_000,
                      seed: int = 0, c0: float = 0.05, untruncated_budget: int = 0,
                      untruncated_steps: int = 1_000_000) -> NtSandwich:
    """Tree-side E[N_t] against the walk side t^-alpha E[e^{-alpha L_t}].

    The tree is explored to cfg.max_depth with floor cfg.prune_log_weight, so
    the walk side is computed for the same truncated event: first passage
    within max_depth steps and before S exceeds -floor.  Under the
    many-to-one formula the two expectations are then equal.  With
    untruncated_budget > 0 the untruncated walk side is reported as well.
    """
    if not model.b_is_one:
        raise ValueError("the N_t sandwich assumes B = 1")
    if model.law.num_children.constant is None:
        raise ValueError("the N_t sandwich assumes constant N")
    a = model.alpha
    batch = first_passage_batch(model, t_grid, cfg)
    usable = not batch.capped.any()
    floor = -math.inf if cfg.prune_log_weight is None else float(cfg.prune_log_weight)
    sampler = tilted_sampler(model)
    walk = overshoot_grid(sampler, batch.t, walk_budget, seed ^ 0x5A5A, max_steps=cfg.max_depth, kill=-floor)
    full = (overshoot_grid(sampler, batch.t, untruncated_budget, seed ^ 0xA5A5, max_steps=untruncated_steps)
            if untruncated_budget else None)
    points = []
    counts = batch.counts.astype(float)
    for j, t in enumerate(batch.t):
        ta = t**a
        tree = counts[:, j].mean()
        tree_se = counts[:, j].std(ddof=1) / math.sqrt(len(counts))
        w = walk.exp_moment(j, truncated=True)
        rhs, rhs_se = w.value / ta, w.se / ta
        z = _z(tree, tree_se, rhs, rhs_se)
        extra = {"t": float(t), "t_alpha_EN": ta * tree, "t_alpha_EN_se": ta * tree_se,
                 "upper_ok": bool(ta * tree <= 1 + 3 * ta * tree_se), "lower_ok": bool(ta * tree >= c0)}
        if full is not None:
            u = full.exp_moment(j)
            extra.update(walk_untruncated=u.value / ta, walk_untruncated_se=u.se / ta)
        points.append(CheckResult(tree, tree_se, rhs, rhs_se, z, abs(z) <= Z_LIMIT, f"t={t:.6g}", extra))
    return NtSandwich(points, usable, batch.capped_fraction, all(p.extra["upper_ok"] for p in points),
                      sum(p.passed for p in points), all(p.extra["lower_ok"] for p in points), c0)


@dataclass(frozen=True)
class SecondMoment:
    points: list[CheckResult]
    floor_ok: bool
    c0: float

    @property
    def passed(self) -> bool:
        return self.floor_ok and all(p.passed for p in self.points)


def second_moment_bound(model: CriticalModel, t_grid: Sequence[float] | float, cfg: SimConfig,
                        c0: float = 0.05) -> SecondMoment:
    """(E N_t)^2 / E[N_t^2] <= P[N_t > 0] and t^alpha P[N_t > 0] >= c0 on the grid."""
    batch = first_passage_batch(model, np.atleast_1d(t_grid), cfg)
    counts = batch.counts.astype(float)
    n = len(counts)
    points = []
    for j, t in enumerate(batch.t):
        c = counts[:, j]
        m1, m2 = c.mean(), (c * c).mean()
        p = (c > 0).mean()
        p_se = math.sqrt(max(p * (1 - p), 1e-300) / n)
        ratio = m1 * m1 / m2 if m2 > 0 else 0.0
        ta = t**model.alpha
        points.append(CheckResult(ratio, 0.0, p, p_se, _z(ratio, 0.0, p, p_se), ratio <= p + 3 * p_se,
                                  f"t={t:.6g}", {"t": float(t), "E_N": m1, "E_N2": m2, "var_ok": bool(m2 >= m1 * m1),
                                                 "t_alpha_P": ta * p, "t_alpha_P_se": ta * p_se,
                                                 "capped": bool(batch.capped.any())}))
    floor_ok = all(c0 <= p.extra["t_alpha_P"] <= 1 + 3 * p.extra["t_alpha_P_se"] for p in points)
    return SecondMoment(points, floor_ok, c0)
