"""Tabulated functions on a uniform grid, with exponential tails and
jackknife replicates for standard errors of linear functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

TAIL_TOLERANCE = 0.10


@dataclass(frozen=True)
class Tail:
    """f(x) = amplitude * exp(-rate * |x - edge|) outside the grid.

    rate = inf encodes a zero tail, rate = 0 a constant one.  amplitude None
    means the endpoint value of the function (of each replicate).
    """

    rate: float = math.inf
    amplitude: float | None = None

    @property
    def zero(self) -> bool:
        return math.isinf(self.rate) or self.amplitude == 0.0


ZERO = Tail()


@dataclass(frozen=True)
class GridFunction:
    """Values at x_lo + i * step, linear in between.

    replicates, when present, holds J jackknife (leave-one-group-out)
    recomputations of the same function; every linear functional gets its
    standard error from them.  pointwise_se is used when there are none.
    """

    x_lo: float
    step: float
    values: np.ndarray
    left: Tail = ZERO
    right: Tail = ZERO
    replicates: np.ndarray | None = None
    pointwise_se: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("need at least two grid values")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        if self.replicates is not None and self.replicates.shape[1:] != v.shape:
            raise ValueError("replicates must have shape (J, n)")
        for tail, end in ((self.left, v[0]), (self.right, v[-1])):
            if tail.amplitude is not None and not tail.zero and not self.meta.get("edge_jump", False):
                if abs(tail.amplitude - end) > TAIL_TOLERANCE * max(abs(tail.amplitude), abs(end)):
                    raise ValueError("declared tail amplitude inconsistent with the endpoint value")

    # -- geometry ----------------------------------------------------------

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def x(self) -> np.ndarray:
        return self.x_lo + self.step * np.arange(self.n)

    @property
    def x_hi(self) -> float:
        return self.x_lo + self.step * (self.n - 1)

    @classmethod
    def from_callable(cls, f, x_lo: float, x_hi: float, step: float, **kw) -> "GridFunction":
        n = int(round((x_hi - x_lo) / step)) + 1
        x = x_lo + step * np.arange(n)
        return cls(x_lo, step, np.asarray(f(x), dtype=float), **kw)

    def with_values(self, values, replicates=None, **kw) -> "GridFunction":
        return replace(self, values=np.asarray(values, dtype=float), replicates=replicates,
                       pointwise_se=kw.pop("pointwise_se", None), **kw)

    # -- evaluation --------------------------------------------------------

    def _amp(self, tail: Tail, end: np.ndarray) -> np.ndarray:
        return end if tail.amplitude is None else np.full_like(end, tail.amplitude)

    def _eval_rows(self, rows: np.ndarray, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        pos = (x - self.x_lo) / self.step
        i = np.clip(np.floor(pos).astype(int), 0, self.n - 2)
        w = pos - i
        out = rows[..., i] * (1 - w) + rows[..., i + 1] * w
        lo, hi = pos < 0, pos > self.n - 1
        if np.any(lo):
            a = self._amp(self.left, rows[..., :1])
            tail = 0.0 if self.left.zero else a * np.exp(self.left.rate * (x[lo] - self.x_lo))
            out[..., lo] = tail
        if np.any(hi):
            a = self._amp(self.right, rows[..., -1:])
            tail = 0.0 if self.right.zero else a * np.exp(-self.right.rate * (x[hi] - self.x_hi))
            out[..., hi] = tail
        return out

    def __call__(self, x):
        out = self._eval_rows(self.values, np.atleast_1d(x))
        return float(out[0]) if np.ndim(x) == 0 else out

    # -- statistics --------------------------------------------------------

    @property
    def jackknife_size(self) -> int:
        return 0 if self.replicates is None else self.replicates.shape[0]

    def se(self) -> np.ndarray:
        if self.replicates is not None:
            return jackknife_se(self.replicates)
        if self.pointwise_se is not None:
            return np.asarray(self.pointwise_se)
        return np.zeros(self.n)

    def functional(self, fn) -> tuple[float, float]:
        """fn(rows) -> scalar per row; value from the main values, se by jackknife."""
        value = float(fn(self.values[None, :])[0])
        if self.replicates is None:
            return value, 0.0
        return value, float(jackknife_se(fn(self.replicates)))

    # -- integrals (exact for the piecewise-linear interpolant) ------------

    def _tail_integrals(self, rows: np.ndarray, moment: int) -> np.ndarray:
        total = np.zeros(rows.shape[0])
        for tail, edge, end, sign in ((self.left, self.x_lo, rows[:, 0], -1), (self.right, self.x_hi, rows[:, -1], 1)):
            if tail.zero:
                continue
            a = self._amp(tail, end)
            r = tail.rate
            if r <= 0:
                if np.any(a != 0):
                    raise ValueError("tail is not integrable")
                continue
            if moment == 0:
                total += a / r
            else:
                # int_edge^{+-inf} x a e^{-r|x-edge|} dx
                total += a * (edge / r + sign / r**2)
        return total

    def integral_rows(self, rows: np.ndarray, moment: int = 0) -> np.ndarray:
        rows = np.atleast_2d(rows)
        h, x = self.step, self.x
        if moment == 0:
            inner = h * (0.5 * rows[:, 0] + rows[:, 1:-1].sum(axis=1) + 0.5 * rows[:, -1])
        else:
            a, b = x[:-1], x[1:]
            inner = (h / 6.0) * (rows[:, :-1] * (2 * a + b) + rows[:, 1:] * (a + 2 * b)).sum(axis=1)
        return inner + self._tail_integrals(rows, moment)

    def integral(self, moment: int = 0) -> tuple[float, float]:
        """int x^moment f(x) dx (moment 0 or 1) with jackknife se."""
        return self.functional(lambda rows: self.integral_rows(rows, moment))


def jackknife_se(replicates: np.ndarray) -> np.ndarray:
    reps = np.asarray(replicates, dtype=float)
    j = reps.shape[0]
    if j < 2:
        return np.zeros(reps.shape[1:])
    return np.sqrt((j - 1) / j * ((reps - reps.mean(axis=0)) ** 2).sum(axis=0))


def fit_exponential_rate(x: np.ndarray, y: np.ndarray) -> float | None:
    """Least-squares slope of log y on x; None unless all y > 0."""
    if x.size < 2 or np.any(y <= 0):
        return None
    slope = np.polyfit(x, np.log(y), 1)[0]
    return float(slope)


def fitted_tails(x: np.ndarray, values: np.ndarray, fraction: float = 0.2) -> tuple[Tail, Tail]:
    """Exponential tails with rates fitted on the outer `fraction` of the grid.

    A side gets a zero tail when the fit fails or does not decay.
    """
    k = max(int(fraction * x.size), 2)
    left = fit_exponential_rate(x[:k], np.abs(values[:k])) if np.all(values[:k] != 0) else None
    right = fit_exponential_rate(x[-k:], np.abs(values[-k:])) if np.all(values[-k:] != 0) else None
    lt = Tail(left) if left is not None and left > 0 else ZERO
    rt = Tail(-right) if right is not None and right < 0 else ZERO
    return lt, rt


# ---------------------------------------------------------------------------
# smoothing operator and f-bar


SMOOTH_EXTENSION = 40.0


def _smooth_rows(rows: np.ndarray, h: float, start: np.ndarray) -> np.ndarray:
    """Exact smoothing of the piecewise-linear interpolant.

    y[i+1] = e^{-h} y[i] + c0 f[i] + c1 f[i+1] with c1 = (h - 1 + e^{-h}) / h
    and c0 = (1 - e^{-h}) - c1; y[0] = start.
    """
    q = math.exp(-h)
    c1 = (h + math.expm1(-h)) / h
    c0 = -math.expm1(-h) - c1
    y = lfilter([c1, c0], [1.0, -q], rows, axis=-1)
    decay = q ** np.arange(rows.shape[-1])
    return y + (start - c1 * rows[..., 0])[..., None] * decay


def _left_start(f: GridFunction, rows: np.ndarray) -> np.ndarray:
    """Smoothed value at x_lo from the left tail: a / (1 + r)."""
    if f.left.zero:
        return np.zeros(rows.shape[0])
    if f.left.rate <= -1:
        raise ValueError("left tail not integrable against e^u")
    return f._amp(f.left, rows[:, 0]) / (1.0 + f.left.rate)


def _extended(f: GridFunction, extension: float) -> GridFunction:
    """Append `extension` units on the right filled from the right tail model."""
    if extension <= 0:
        return f
    k = int(math.ceil(extension / f.step))
    x_new = f.x_hi + f.step * np.arange(1, k + 1)

    def ext(rows):
        return np.concatenate([rows, f._eval_rows(rows, x_new)], axis=-1)

    reps = None if f.replicates is None else ext(f.replicates)
    return replace(f, values=ext(f.values[None, :])[0], replicates=reps, pointwise_se=None)


def smooth(f: GridFunction, extension: float = SMOOTH_EXTENSION) -> GridFunction:
    """f-breve(x) = int_{-inf}^x e^{-(x-u)} f(u) du.

    The grid is first extended to the right by `extension` (default 40, so
    e^{-40} of the mass is left to the declared tail).  The left tail of the
    result keeps the rate of f's left tail; the right tail decays with rate
    min(1, r_right).
    """
    if not f.left.zero and f.left.rate <= -1:
        raise ValueError("declared left tail is not integrable against e^u")
    g = _extended(f, extension)
    rows = g.values[None, :]
    out = _smooth_rows(rows, g.step, _left_start(g, rows))[0]
    reps = None
    if g.replicates is not None:
        reps = _smooth_rows(g.replicates, g.step, _left_start(g, g.replicates))
    right_rate = min(1.0, f.right.rate) if not f.right.zero else 1.0
    left = ZERO if f.left.zero else Tail(f.left.rate)
    return GridFunction(g.x_lo, g.step, out, left, Tail(right_rate), reps, meta={**f.meta, "smoothed": True})


def _cumulative_rows(f: GridFunction, rows: np.ndarray) -> np.ndarray:
    """F(x) = int_{-inf}^x f, exact for the interpolant plus the left tail."""
    h = f.step
    inc = 0.5 * h * (rows[:, 1:] + rows[:, :-1])
    start = np.zeros(rows.shape[0])
    if not f.left.zero:
        if f.left.rate <= 0:
            raise ValueError("left tail not integrable")
        start = f._amp(f.left, rows[:, 0]) / f.left.rate
    return np.concatenate([start[:, None], start[:, None] + np.cumsum(inc, axis=1)], axis=1)


def bar(f: GridFunction, extension: float = SMOOTH_EXTENSION, check_tol: float = 1e-5) -> GridFunction:
    """f-bar(x) = int_{-inf}^x f-breve(s) ds, computed as F(x) - f-breve(x).

    The double-integration route (cumulative trapezoid of f-breve) is
    evaluated as an internal check; the largest discrepancy is stored in
    meta["route_gap"] and meta["routes_agree"].
    """
    fb = smooth(f, extension)
    g = _extended(f, extension)
    rows = g.values[None, :]
    F = _cumulative_rows(g, rows)[0]
    out = F - fb.values
    reps = None
    if g.replicates is not None:
        reps = _cumulative_rows(g, g.replicates) - fb.replicates
    # second route: integrate f-breve directly
    fb_rows = fb.values[None, :]
    direct = _cumulative_rows(fb, fb_rows)[0]
    gap = float(np.max(np.abs(direct - out)))
    scale = max(1.0, float(np.max(np.abs(out))))
    left = ZERO if f.left.zero else Tail(f.left.rate)
    # f-bar tends to int f; a (numerically) zero limit gets a zero tail
    limit = abs(out[-1])
    right = ZERO if limit <= 1e-9 * max(1.0, float(np.max(np.abs(out)))) else Tail(0.0)
    return GridFunction(g.x_lo, g.step, out, left, right, reps,
                        meta={**f.meta, "route_gap": gap, "routes_agree": gap <= check_tol * scale})
