"""Empirical tail of R: survival function, tail-index estimates and the
plateau t^alpha P[R > t]."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

GRID_RATIO = 10 ** (1 / 8)
MIN_SAMPLES = 100
MIN_EXCEEDANCES = 30


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class EmpiricalTail:
    sorted_values: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_values(cls, values, **meta) -> "EmpiricalTail":
        v = np.sort(np.asarray(values, dtype=float))
        if v.size == 0:
            raise InsufficientDataError("empty sample")
        return cls(v, dict(meta))

    @classmethod
    def from_sample(cls, sample, b_is_one: bool) -> "EmpiricalTail":
        """From a tree_sim.RTailSample, keeping its truncation metadata."""
        return cls.from_values(sample.values, truncated_fraction=sample.truncated_fraction,
                               depth_used=sample.depth_used, b_is_one=b_is_one,
                               prune_log_weight=sample.prune_log_weight)

    @property
    def n(self) -> int:
        return int(self.sorted_values.size)

    def _check(self):
        if self.n < MIN_SAMPLES:
            raise InsufficientDataError(f"need at least {MIN_SAMPLES} samples, have {self.n}")


def exceedances(tail: EmpiricalTail, t) -> np.ndarray:
    """#(values > t) for scalar or array t."""
    return tail.n - np.searchsorted(tail.sorted_values, t, side="right")


def empirical_survival(tail: EmpiricalTail, t):
    """P^[R > t] by binary search."""
    out = exceedances(tail, t) / tail.n
    return float(out) if np.ndim(out) == 0 else out


def geometric_grid(t_min: float, t_max: float, ratio: float = GRID_RATIO) -> np.ndarray:
    k = int(math.floor(math.log(t_max / t_min) / math.log(ratio) + 1e-9))
    return t_min * ratio ** np.arange(k + 1)


@dataclass(frozen=True)
class AlphaEstimate:
    regression: float
    hill: float
    se_regression: float
    se_hill: float
    exceedances: int


def _wls_slope(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    X = np.column_stack([np.ones_like(x), x])
    W = np.diag(w)
    cov = np.linalg.inv(X.T @ W @ X)
    beta = cov @ X.T @ W @ y
    return float(beta[1]), float(math.sqrt(cov[1, 1]))


def alpha_estimate(tail: EmpiricalTail, t_range: tuple[float, float], ratio: float = GRID_RATIO) -> AlphaEstimate:
    """Log-log regression slope of the survival function and the Hill estimator.

    The regression uses the geometric grid over t_range with delta-method
    weights var(log p) = (1 - p) / (n p); the Hill estimator uses all
    exceedances of t_range[0].
    """
    tail._check()
    lo, hi = t_range
    k = int(exceedances(tail, lo))
    if k < MIN_EXCEEDANCES:
        raise InsufficientDataError(f"only {k} exceedances of {lo}")
    grid = geometric_grid(lo, hi, ratio)
    p = empirical_survival(tail, grid)
    keep = p > 0
    if keep.sum() < 2:
        raise InsufficientDataError("fewer than two grid points with positive survival")
    x, p = np.log(grid[keep]), p[keep]
    w = tail.n * p / np.maximum(1 - p, 1e-12)
    slope, se = _wls_slope(x, np.log(p), w)
    exc = tail.sorted_values[tail.n - k:]
    hill = k / np.sum(np.log(exc / lo))
    return AlphaEstimate(-slope, float(hill), se, float(hill / math.sqrt(k)), k)


def slope_drift(tail: EmpiricalTail, t_range: tuple[float, float]) -> float:
    """z-score of the difference between regression slopes on the two halves
    (in log t) of t_range; large values flag a non-power-law tail."""
    lo, hi = t_range
    mid = math.sqrt(lo * hi)
    a = alpha_estimate(tail, (lo, mid))
    b = alpha_estimate(tail, (mid, hi))
    return (a.regression - b.regression) / math.hypot(a.se_regression, b.se_regression)


@dataclass(frozen=True)
class PlateauEstimate:
    t_grid: np.ndarray
    survival: np.ndarray
    values: np.ndarray
    se: np.ndarray
    window: tuple[int, int]  # inclusive index range into t_grid
    c_hat: float
    c_hat_se: float
    flatness: float
    alpha: float
    warning: str = ""

    @property
    def window_t(self) -> tuple[float, float]:
        i, j = self.window
        if j < i:
            return (math.nan, math.nan)
        return (float(self.t_grid[i]), float(self.t_grid[j]))

    def rows(self) -> list[dict]:
        return [{"t": float(t), "survival": float(s), "t_alpha_survival": float(v), "se": float(e)}
                for t, s, v, e in zip(self.t_grid, self.survival, self.values, self.se)]

    def best_decade(self, decades: float = 1.0) -> tuple[float, tuple[float, float]]:
        """Smallest max/min ratio over windows spanning at least `decades` decades."""
        lt = np.log10(self.t_grid)
        best, where = math.inf, (math.nan, math.nan)
        for i in range(len(lt)):
            j = int(np.searchsorted(lt, lt[i] + decades - 1e-9))
            if j >= len(lt):
                break
            seg = self.values[i:j + 1]
            if np.all(seg > 0):
                f = float(seg.max() / seg.min())
                if f < best:
                    best, where = f, (float(self.t_grid[i]), float(self.t_grid[j]))
        return best, where

    def sandwich_constant(self) -> float:
        """Smallest C* with 1/C* <= t^alpha P[R > t] <= C* over the window."""
        i, j = self.window
        seg = self.values[i:j + 1]
        if j < i or np.any(seg <= 0):
            return math.inf
        return float(max(seg.max(), 1.0 / seg.min()))


def _auto_window(values: np.ndarray, se: np.ndarray) -> tuple[int, int]:
    """Widest run of consecutive points whose neighbours differ by < 2 combined se."""
    ok = (np.abs(np.diff(values)) < 2.0 * np.hypot(se[:-1], se[1:])) & (values[:-1] > 0) & (values[1:] > 0)
    best, start = (0, -1), None
    for i, good in enumerate(ok):
        if good and start is None:
            start = i
        if (not good or i == len(ok) - 1) and start is not None:
            end = i + 1 if good else i
            if end - start > best[1] - best[0]:
                best = (start, end)
            start = None
    return best


def plateau_constant(tail: EmpiricalTail, alpha: float, t_grid: Sequence[float] | None = None,
                     window: tuple[float, float] | None = None, min_exceedances: int = MIN_EXCEEDANCES
                     ) -> PlateauEstimate:
    """t^alpha P^[R > t] on a geometric grid, with c_hat over the plateau window.

    alpha should come from calibration.  The default grid runs from 1 in
    steps of 10^(1/8) while at least min_exceedances values exceed t.  The
    window is the widest run where consecutive values differ by < 2
    combined se, unless given as (t_lo, t_hi).
    """
    tail._check()
    if t_grid is None:
        top = tail.sorted_values[tail.n - min_exceedances] if tail.n > min_exceedances else tail.sorted_values[0]
        grid = geometric_grid(1.0, max(top, 1.0))
    else:
        grid = np.asarray(t_grid, dtype=float)
    p = empirical_survival(tail, grid)
    ta = grid**alpha
    vals = ta * p
    se = ta * np.sqrt(p * (1 - p) / tail.n)
    if window is None:
        i, j = _auto_window(vals, se) if len(grid) > 1 else (0, -1)
    else:
        idx = np.nonzero((grid >= window[0] * (1 - 1e-12)) & (grid <= window[1] * (1 + 1e-12)))[0]
        i, j = (int(idx[0]), int(idx[-1])) if idx.size else (0, -1)
    seg, seg_se = vals[i:j + 1], se[i:j + 1]
    if j <= i or np.any(seg <= 0):
        msg = "empty plateau window (survival vanishes or values never flatten)"
        warnings.warn(msg, stacklevel=2)
        return PlateauEstimate(grid, p, vals, se, (i, j), math.nan, math.nan, math.inf, alpha, msg)
    w = 1.0 / np.maximum(seg_se, 1e-300) ** 2
    c_hat = float(np.sum(w * seg) / np.sum(w))
    # neighbouring values share most exceedances, so report the largest
    # pointwise se rather than the (optimistic) independent-points formula
    c_se = float(seg_se.max())
    msg = ""
    if tail.meta.get("truncated_fraction", 0.0) > 0.01:
        msg = "more than 1% of replicas were truncated by the node cap: not a headline-grade run"
        warnings.warn(msg, stacklevel=2)
    return PlateauEstimate(grid, p, vals, se, (i, j), c_hat, c_se, float(seg.max() / seg.min()), alpha, msg)


def brw_minimum_view(tail: EmpiricalTail) -> EmpiricalTail:
    """Sample of M = -log R, the global minimum of the branching random walk.

    Only valid when B = 1.  P[M < -t] = P[R > e^t].
    """
    if not tail.meta.get("b_is_one", False):
        raise ValueError("the minimum view requires B = 1 (mark the tail with b_is_one=True)")
    with np.errstate(divide="ignore"):
        m = -np.log(tail.sorted_values[::-1])
    return EmpiricalTail(m, {**tail.meta, "view": "brw_minimum"})


def lower_probability(mview: EmpiricalTail, t):
    """P^[M < -t]."""
    out = np.searchsorted(mview.sorted_values, -np.asarray(t, dtype=float), side="left") / mview.n
    return float(out) if np.ndim(out) == 0 else out


def minimum_decay_slope(mview: EmpiricalTail, t_lo: float, t_hi: float, points: int = 13) -> tuple[float, float]:
    """Weighted regression slope of log P^[M < -t] on t over [t_lo, t_hi]."""
    t = np.linspace(t_lo, t_hi, points)
    p = lower_probability(mview, t)
    if np.any(p <= 0):
        raise InsufficientDataError("no minima below -t_hi")
    w = mview.n * p / np.maximum(1 - p, 1e-12)
    return _wls_slope(t, np.log(p), w)
