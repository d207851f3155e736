"""Branching-law families, the moment function m(s), criticality calibration
and the assumption validator.

A reproduction law is the joint law of (N, B, A_1, A_2, ...).  All families
implemented here take N independent of the i.i.d. weights A_i, and B
independent of both.  Weights are parametrised by X = log A.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import optimize, special, stats

from . import rng as rng_mod

CLOSED_TOL = 1e-9
DEFAULT_DELTA = 0.1
DEFAULT_MC_BUDGET = 1 << 16
PPF_TABLE_SIZE = 1 << 14

FAMILY_LOGNORMAL = "LognormalFixedN"
FAMILY_TWO_POINT = "TwoPointFixedN"
FAMILY_GENERAL = "GeneralIID"


class OutOfBandError(ValueError):
    """m(s) or a moment is infinite (or numerically indistinguishable from it)."""


class CalibrationError(RuntimeError):
    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


def _finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise OutOfBandError(f"{what} is not finite")
    return value


# ---------------------------------------------------------------------------
# step laws (law of X = log A)


@dataclass(frozen=True)
class NormalStep:
    mu: float
    sigma: float

    closed_form = True
    kind = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def moment(self, s: float) -> float:
        """E[A^s]."""
        return _finite(math.exp(s * self.mu + 0.5 * s * s * self.sigma**2), f"E[A^{s}]")

    def moment_log(self, s: float) -> float:
        """E[A^s log A]."""
        return (self.mu + s * self.sigma**2) * self.moment(s)

    def moment_log2(self, s: float) -> float:
        drift = self.mu + s * self.sigma**2
        return (drift * drift + self.sigma**2) * self.moment(s)

    def ppf(self, u):
        return self.mu + self.sigma * special.ndtri(u)

    def scaled(self, c: float) -> "NormalStep":
        return NormalStep(c * self.mu, c * self.sigma)

    @property
    def lattice(self) -> bool | None:
        return False

    def kernel_arrays(self):
        return np.array([self.mu, self.sigma]), np.zeros(0)


@dataclass(frozen=True)
class AtomStep:
    """X takes value values[k] with probability probs[k]."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    closed_form = True
    kind = 1

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("values and probs must be non-empty and of equal length")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError("probs must be a probability vector")

    def _sum(self, s: float, power: int) -> float:
        terms = [p * v**power * math.exp(s * v) for v, p in zip(self.values, self.probs) if p > 0]
        return _finite(math.fsum(terms), f"E[A^{s} log^{power} A]")

    def moment(self, s: float) -> float:
        return self._sum(s, 0)

    def moment_log(self, s: float) -> float:
        return self._sum(s, 1)

    def moment_log2(self, s: float) -> float:
        return self._sum(s, 2)

    def ppf(self, u):
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, u, side="left")
        return np.asarray(self.values)[np.minimum(idx, len(self.values) - 1)]

    def scaled(self, c: float) -> "AtomStep":
        return AtomStep(tuple(c * v for v in self.values), self.probs)

    @property
    def lattice(self) -> bool | None:
        return lattice_test(self.values, self.probs)

    def kernel_arrays(self):
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        return np.asarray(self.values, dtype=float), cdf


@dataclass(frozen=True)
class ScipyStep:
    """X = scale * Z with Z a frozen scipy continuous distribution."""

    dist: object
    scale: float = 1.0

    closed_form = False
    kind = 2

    def ppf(self, u):
        return self.scale * self.dist.ppf(u)

    def scaled(self, c: float) -> "ScipyStep":
        return ScipyStep(self.dist, self.scale * c)

    @property
    def lattice(self) -> bool | None:
        return False

    def kernel_arrays(self):
        # inverse-CDF table on cell midpoints, linearly interpolated by the kernels
        u = (np.arange(PPF_TABLE_SIZE) + 0.5) / PPF_TABLE_SIZE
        return np.asarray(self.ppf(u), dtype=float), np.zeros(0)


def lattice_test(values: Sequence[float], probs: Sequence[float], max_den: int = 1000) -> bool | None:
    """Heuristic arithmeticity test for a finite support.

    One or two atoms are always lattice.  With three or more, the law is
    declared lattice when all differences are rational multiples of the
    first one (denominator at most max_den), otherwise the answer is None.
    """
    support = sorted({float(v) for v, p in zip(values, probs) if p > 0})
    if len(support) <= 2:
        return True
    diffs = [b - support[0] for b in support[1:]]
    base = diffs[0]
    for d in diffs[1:]:
        ratio = d / base
        frac = Fraction(ratio).limit_denominator(max_den)
        if abs(float(frac) - ratio) > 1e-9 * max(1.0, abs(ratio)):
            return None
    return True


# ---------------------------------------------------------------------------
# laws of B and N


@dataclass(frozen=True)
class ConstantB:
    c: float
    power: float = 1.0

    kind = 0

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("Constant B must be nonnegative")

    def prob_positive(self) -> float:
        return 1.0 if self.c > 0 else 0.0

    def moment(self, s: float) -> float:
        if self.c == 0:
            if s > 0:
                return 0.0
            raise OutOfBandError("E[B^s] with B = 0 and s <= 0")
        return _finite(self.c ** (self.power * s), "E[B^s]")

    @property
    def cap(self) -> float:
        return self.c**self.power

    @property
    def essinf(self) -> float:
        return self.c**self.power

    def powered(self, c: float) -> "ConstantB":
        return replace(self, power=self.power * c)

    def ppf(self, u):
        return np.full(np.shape(u), self.c**self.power)

    def kernel_params(self):
        return np.array([self.c, 0.0, self.power])


@dataclass(frozen=True)
class UniformB:
    lo: float
    hi: float
    power: float = 1.0

    kind = 1

    def __post_init__(self):
        if not 0 <= self.lo < self.hi:
            raise ValueError("Uniform B needs 0 <= lo < hi")

    def prob_positive(self) -> float:
        return 1.0

    def moment(self, s: float) -> float:
        q = self.power * s
        if self.lo == 0 and q <= -1:
            raise OutOfBandError("E[B^s] diverges for Uniform(0, hi)")
        if abs(q + 1) < 1e-14:
            return math.log(self.hi / self.lo) / (self.hi - self.lo)
        return _finite((self.hi ** (q + 1) - self.lo ** (q + 1)) / ((q + 1) * (self.hi - self.lo)), "E[B^s]")

    @property
    def cap(self) -> float:
        return self.hi**self.power

    @property
    def essinf(self) -> float:
        return self.lo**self.power

    def powered(self, c: float) -> "UniformB":
        return replace(self, power=self.power * c)

    def ppf(self, u):
        return (self.lo + (self.hi - self.lo) * np.asarray(u)) ** self.power

    def kernel_params(self):
        return np.array([self.lo, self.hi, self.power])


@dataclass(frozen=True)
class BoundedParetoB:
    """Density proportional to x^(-exponent-1) on [1, cap]; cap may be inf."""

    exponent: float
    cap_value: float = math.inf
    power: float = 1.0

    kind = 2

    def __post_init__(self):
        if not (self.exponent > 0 and self.cap_value > 1):
            raise ValueError("BoundedPareto needs exponent > 0 and cap > 1")

    def prob_positive(self) -> float:
        return 1.0

    def moment(self, s: float) -> float:
        a, q = self.exponent, self.power * s
        if math.isinf(self.cap_value):
            if q >= a:
                raise OutOfBandError("E[B^s] diverges for unbounded Pareto")
            return a / (a - q)
        norm = 1.0 - self.cap_value ** (-a)
        if abs(q - a) < 1e-14:
            return a * math.log(self.cap_value) / norm
        return _finite(a * (self.cap_value ** (q - a) - 1.0) / ((q - a) * norm), "E[B^s]")

    @property
    def cap(self) -> float:
        return self.cap_value**self.power

    @property
    def essinf(self) -> float:
        return 1.0

    def powered(self, c: float) -> "BoundedParetoB":
        return replace(self, power=self.power * c)

    def ppf(self, u):
        tail = 1.0 - np.asarray(u) * (1.0 - self.cap_value ** (-self.exponent))
        return tail ** (-self.power / self.exponent)

    def kernel_params(self):
        return np.array([self.exponent, self.cap_value, self.power])


@dataclass(frozen=True)
class ChildLaw:
    """pmf[k] = P[N = k]."""

    pmf: tuple[float, ...]

    def __post_init__(self):
        if any(p < 0 for p in self.pmf) or abs(sum(self.pmf) - 1.0) > 1e-12:
            raise ValueError("pmf must be a probability vector")

    @classmethod
    def fixed(cls, b: int) -> "ChildLaw":
        return cls(tuple(0.0 for _ in range(b)) + (1.0,))

    @property
    def constant(self) -> int | None:
        support = [k for k, p in enumerate(self.pmf) if p > 0]
        return support[0] if len(support) == 1 else None

    @property
    def max_children(self) -> int:
        return len(self.pmf) - 1

    def moment(self, q: float) -> float:
        return math.fsum(p * k**q for k, p in enumerate(self.pmf) if p > 0 and k > 0)

    @property
    def mean(self) -> float:
        return self.moment(1.0)

    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.pmf)
        c[-1] = 1.0
        return c


# ---------------------------------------------------------------------------
# the law


@dataclass(frozen=True)
class BranchingLaw:
    family: str
    num_children: ChildLaw
    step: NormalStep | AtomStep | ScipyStep
    b_law: ConstantB | UniformB | BoundedParetoB = ConstantB(1.0)
    delta: float = DEFAULT_DELTA
    band: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.num_children.mean > 1:
            warnings.warn("E[N] <= 1: assumption on the mean offspring number fails", stacklevel=3)

    @property
    def closed_form(self) -> bool:
        return self.family != FAMILY_GENERAL and self.step.closed_form

    def check_band(self, s: float) -> None:
        lo, hi = self.band
        if not lo <= s <= hi:
            raise OutOfBandError(f"s={s} outside the declared moment band [{lo}, {hi}]")

    def sample(self, gen: np.random.Generator, n: int) -> "ReproductionSample":
        """n reproduction draws by inverse CDF (fixed consumption of uniforms)."""
        nmax = self.num_children.max_children
        u_n = gen.random(n)
        u_a = gen.random((n, nmax))
        u_b = gen.random(n)
        counts = np.searchsorted(self.num_children.cdf(), u_n, side="left").astype(np.int64)
        log_a = np.asarray(self.step.ppf(u_a), dtype=float).reshape(n, nmax)
        log_a = np.where(np.arange(nmax)[None, :] < counts[:, None], log_a, np.nan)
        with np.errstate(divide="ignore"):
            log_b = np.log(self.b_law.ppf(u_b))
        return ReproductionSample(counts, log_a, log_b)


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float


@dataclass(frozen=True)
class ReproductionSample:
    counts: np.ndarray
    log_a: np.ndarray
    log_b: np.ndarray

    @property
    def n(self) -> int:
        return len(self.counts)

    def row_sums(self, s: float, log_power: int = 0) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            terms = np.exp(s * self.log_a)
            if log_power:
                terms = terms * self.log_a**log_power
        return np.nansum(terms, axis=1)

    def mean(self, s: float, log_power: int = 0, check: bool = True) -> Estimate:
        rows = self.row_sums(s, log_power)
        return checked_mean(rows) if check else Estimate(float(rows.mean()), float(rows.std(ddof=1) / math.sqrt(len(rows))))


def checked_mean(terms: np.ndarray, max_share: float = 0.05) -> Estimate:
    """Sample mean with a divergence guard.

    Declares divergence (OutOfBandError) when a term is infinite, when one
    term carries more than max_share of the absolute sum, or when the running
    mean at n/2 and n disagree by more than 5 standard errors.
    """
    terms = np.asarray(terms, dtype=float)
    n = len(terms)
    if n < 2:
        raise ValueError("need at least two terms")
    if not np.all(np.isfinite(terms)):
        raise OutOfBandError("non-finite Monte Carlo term")
    total = np.abs(terms).sum()
    if total > 0 and n >= 1000 and np.abs(terms).max() > max_share * total:
        raise OutOfBandError("one term dominates the Monte Carlo sum (heavy tail)")
    mean = float(terms.mean())
    se = float(terms.std(ddof=1) / math.sqrt(n))
    half = terms[: n // 2]
    se_half = float(half.std(ddof=1) / math.sqrt(len(half)))
    if abs(half.mean() - mean) > 5.0 * max(se_half, 1e-300) and se_half > 0:
        raise OutOfBandError("running mean fails the Cauchy criterion across doubling sizes")
    return Estimate(mean, se)


def m_estimate(law: BranchingLaw, s: float, gen: np.random.Generator | None = None,
               budget: int = DEFAULT_MC_BUDGET, log_power: int = 0) -> Estimate:
    """Monte Carlo estimate of E[sum A_i^s log^k A_i] with standard error."""
    law.check_band(s)
    if budget <= 1:
        raise ValueError("budget must exceed 1")
    if gen is None:
        raise ValueError("Monte Carlo evaluation needs an explicit random generator")
    return law.sample(gen, budget).mean(s, log_power)


def m_of_s(law: BranchingLaw, s: float, gen: np.random.Generator | None = None,
           budget: int = DEFAULT_MC_BUDGET) -> float:
    """m(s) = E[sum_{i<=N} A_i^s]."""
    law.check_band(s)
    if law.closed_form:
        return _finite(law.num_children.mean * law.step.moment(s), "m(s)")
    return m_estimate(law, s, gen, budget).value


def m_prime(law: BranchingLaw, s: float, gen: np.random.Generator | None = None,
            budget: int = DEFAULT_MC_BUDGET) -> float:
    """m'(s) = E[sum A_i^s log A_i]."""
    law.check_band(s)
    if law.closed_form:
        return _finite(law.num_children.mean * law.step.moment_log(s), "m'(s)")
    return m_estimate(law, s, gen, budget, log_power=1).value


def m_second(law: BranchingLaw, s: float) -> float:
    if not law.closed_form:
        raise ValueError("m'' is only available in closed form")
    return law.num_children.mean * law.step.moment_log2(s)


# ---------------------------------------------------------------------------
# families


def _b_law(params: Mapping) -> object:
    return params.get("b_law", ConstantB(1.0))


def lognormal_law(params: Mapping) -> BranchingLaw:
    return BranchingLaw(
        FAMILY_LOGNORMAL,
        ChildLaw.fixed(int(params.get("b", 2))),
        NormalStep(float(params["mu"]), float(params.get("sigma", 1.0))),
        _b_law(params),
        float(params.get("delta", DEFAULT_DELTA)),
    )


def two_point_law(params: Mapping) -> BranchingLaw:
    """A = e^{x1} with probability p, A = e^{x2} otherwise."""
    p = float(params["p"])
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    # make p + q == 1 hold exactly in floating point
    q = 1.0 - p
    p = 1.0 - q
    return BranchingLaw(
        FAMILY_TWO_POINT,
        ChildLaw.fixed(int(params.get("b", 2))),
        AtomStep((float(params.get("x1", 1.0)), float(params.get("x2", -1.0))), (p, q)),
        _b_law(params),
        float(params.get("delta", DEFAULT_DELTA)),
    )


def general_law(params: Mapping) -> BranchingLaw:
    """Step X = scale * Z, Z from a named scipy distribution.

    Keys: b or children_pmf; step (scipy name); step_<arg> for each
    distribution argument (shape names, loc, scale).
    """
    if "children_pmf" in params:
        children = ChildLaw(tuple(float(p) for p in params["children_pmf"]))
    else:
        children = ChildLaw.fixed(int(params.get("b", 2)))
    if "step_law" in params:
        step = params["step_law"]
    else:
        dist_cls = getattr(stats, str(params.get("step", "norm")))
        kwargs = {k[5:]: float(v) for k, v in params.items() if k.startswith("step_") and k != "step_law"}
        step = ScipyStep(dist_cls(**kwargs))
    band = tuple(params.get("band", (-math.inf, math.inf)))
    return BranchingLaw(FAMILY_GENERAL, children, step, _b_law(params),
                        float(params.get("delta", DEFAULT_DELTA)), band)


FAMILIES: dict[str, Callable[[Mapping], BranchingLaw]] = {
    FAMILY_LOGNORMAL: lognormal_law,
    FAMILY_TWO_POINT: two_point_law,
    FAMILY_GENERAL: general_law,
}

# default search brackets for the usual free parameter of each family
DEFAULT_BRACKETS = {
    (FAMILY_LOGNORMAL, "mu"): (-10.0, 0.0),
    (FAMILY_TWO_POINT, "p"): (1e-9, 0.5),
}


# ---------------------------------------------------------------------------
# critical model and assumption report


@dataclass(frozen=True)
class AssumptionEntry:
    id: str
    status: str  # pass / fail / unknown
    evidence: float
    note: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    entries: tuple[AssumptionEntry, ...]

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if sorted(ids) != [f"A{k}" for k in range(1, 7)]:
            raise ValueError("every assumption id must appear exactly once")

    def __getitem__(self, key: str) -> AssumptionEntry:
        return next(e for e in self.entries if e.id == key)

    def as_dict(self) -> dict:
        return {e.id: {"status": e.status, "evidence": e.evidence, "note": e.note} for e in self.entries}


@dataclass(frozen=True)
class CriticalModel:
    law: BranchingLaw
    alpha: float
    residuals: tuple[float, float]
    arithmetic_flag: bool
    validation: AssumptionReport | None = None
    residual_se: tuple[float, float] = (0.0, 0.0)
    params: Mapping = field(default_factory=dict)

    @property
    def tolerance(self) -> tuple[float, float]:
        if self.law.closed_form:
            return (CLOSED_TOL, CLOSED_TOL)
        return (3.0 * self.residual_se[0], 3.0 * self.residual_se[1])

    @property
    def b_is_one(self) -> bool:
        b = self.law.b_law
        return isinstance(b, ConstantB) and b.cap == 1.0


def _argmin_s(fprime: Callable[[float], float], start: float = 0.0) -> float:
    """Root of an increasing function by bracket expansion and brentq."""
    lo, hi = start - 1.0, start + 1.0
    for _ in range(60):
        try:
            flo, fhi = fprime(lo), fprime(hi)
        except OutOfBandError:
            break
        if flo < 0 < fhi:
            return optimize.brentq(fprime, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
        if flo >= 0:
            lo -= 2 * (hi - lo)
        if fhi <= 0:
            hi += 2 * (hi - lo)
    raise CalibrationError("no-solution", "m'(s) has no sign change: m has no interior minimum")


def critical_model(law: BranchingLaw, alpha: float | None = None, gen: np.random.Generator | None = None,
                   budget: int = DEFAULT_MC_BUDGET, params: Mapping | None = None) -> CriticalModel:
    """Wrap a law as a CriticalModel, computing residuals (and alpha if None)."""
    if law.closed_form:
        if alpha is None:
            alpha = _argmin_s(lambda s: m_prime(law, s), 1.0)
        res = (abs(m_of_s(law, alpha) - 1.0), abs(m_prime(law, alpha)))
        res_se = (0.0, 0.0)
    else:
        sample = law.sample(gen if gen is not None else rng_mod.generator(0, 7), budget)
        if alpha is None:
            alpha = _argmin_s(lambda s: sample.mean(s, 1, check=False).value, 1.0)
        m = sample.mean(alpha)
        mp = sample.mean(alpha, 1)
        res, res_se = (abs(m.value - 1.0), abs(mp.value)), (m.se, mp.se)
    model = CriticalModel(law, float(alpha), (float(res[0]), float(res[1])), law.step.lattice is True, None, res_se, dict(params or {}))
    return replace(model, validation=validate_assumptions(model))


def calibrate_critical(family: str, fixed_params: Mapping, free_params: Mapping | Sequence[str] = (),
                       *, tol: float = 1e-13, max_iter: int = 100, seed: int = 0,
                       budget: int = DEFAULT_MC_BUDGET) -> CriticalModel:
    """Solve m(alpha) = 1 and m'(alpha) = 0 for alpha and the free parameters.

    free_params maps each free name to a bracket (lo, hi), or is a sequence of
    names using DEFAULT_BRACKETS.  At most one free parameter is supported:
    together with alpha it matches the two equations.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    build = FAMILIES[family]
    if not isinstance(free_params, Mapping):
        free_params = {name: DEFAULT_BRACKETS.get((family, name), (-10.0, 10.0)) for name in free_params}
    if len(free_params) > 1:
        raise ValueError("at most one free parameter: two equations, alpha is the other unknown")

    if not free_params:
        law = build(fixed_params)
        model = critical_model(law, None, rng_mod.generator(seed, 1), budget, fixed_params)
        lim = (CLOSED_TOL, CLOSED_TOL) if law.closed_form else model.tolerance
        if model.residuals[0] > lim[0] or model.alpha <= 0:
            raise CalibrationError("no-solution", f"min_s m(s) = {1 + model.residuals[0]:.6g} != 1")
        return model

    (name, bracket), = free_params.items()
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ValueError("bracket must satisfy lo < hi")

    def law_at(theta: float) -> BranchingLaw:
        return build({**fixed_params, name: theta})

    probe = law_at(0.5 * (lo + hi))
    if probe.closed_form:
        theta, alpha = _newton_closed(law_at, lo, hi, tol, max_iter)
    else:
        theta, alpha = _nested_mc(law_at, lo, hi, seed, budget)
    theta, alpha = float(theta), float(alpha)
    params = {**fixed_params, name: theta}
    model = critical_model(law_at(theta), alpha, rng_mod.generator(seed, 2), budget, params)
    if model.alpha <= 0:
        raise CalibrationError("no-solution", "the critical exponent is not positive in the bracket")
    return model


def _newton_closed(law_at, lo: float, hi: float, tol: float, max_iter: int) -> tuple[float, float]:
    def F(theta: float, s: float) -> np.ndarray:
        law = law_at(theta)
        m = m_of_s(law, s)
        return np.array([math.log(m), m_prime(law, s) / m])

    def jac(theta: float, s: float) -> np.ndarray:
        law = law_at(theta)
        m, mp, mpp = m_of_s(law, s), m_prime(law, s), m_second(law, s)
        h = 1e-6 * max(1.0, abs(theta))
        h = min(h, 0.5 * (theta - lo), 0.5 * (hi - theta))
        dtheta = (F(theta + h, s) - F(theta - h, s)) / (2 * h)
        return np.array([[dtheta[0], mp / m], [dtheta[1], mpp / m - (mp / m) ** 2]])

    theta = 0.5 * (lo + hi)
    try:
        s = _argmin_s(lambda z: m_prime(law_at(theta), z), 1.0)
        for _ in range(max_iter):
            f = F(theta, s)
            if np.max(np.abs(f)) < tol:
                return theta, s
            step = np.linalg.solve(jac(theta, s), -f)
            lam = 1.0
            norm0 = np.linalg.norm(f)
            while lam > 1e-10:
                t_new = theta + lam * step[0]
                if lo < t_new < hi:
                    try:
                        if np.linalg.norm(F(t_new, s + lam * step[1])) < norm0:
                            break
                    except OutOfBandError:
                        pass
                lam *= 0.5
            else:
                break
            theta, s = theta + lam * step[0], s + lam * step[1]
        if np.max(np.abs(F(theta, s))) < 1e3 * tol:
            return theta, s
    except (np.linalg.LinAlgError, OutOfBandError, CalibrationError):
        pass
    # fallback: nested one-dimensional solve
    return _nested(lambda th: law_at(th), lambda law, z: m_of_s(law, z), lambda law, z: m_prime(law, z), lo, hi)


def _nested(law_at, m_fn, mp_fn, lo: float, hi: float) -> tuple[float, float]:
    def min_log_m(theta: float) -> float:
        law = law_at(theta)
        s = _argmin_s(lambda z: mp_fn(law, z), 1.0)
        return math.log(m_fn(law, s))

    try:
        glo, ghi = min_log_m(lo), min_log_m(hi)
    except (CalibrationError, OutOfBandError) as exc:
        raise CalibrationError("no-solution", f"bracket endpoints not admissible ({exc})") from exc
    if glo * ghi > 0:
        raise CalibrationError("no-solution", "min_s log m(s) does not change sign over the bracket")
    theta = optimize.brentq(min_log_m, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    law = law_at(theta)
    return theta, _argmin_s(lambda z: mp_fn(law, z), 1.0)


def _nested_mc(law_at, lo: float, hi: float, seed: int, budget: int) -> tuple[float, float]:
    # common random numbers: the same uniforms for every parameter value
    def sample_at(theta):
        return law_at(theta).sample(rng_mod.generator(seed, 3), budget)

    cache: dict[float, ReproductionSample] = {}

    def law_sample(theta):
        if theta not in cache:
            cache[theta] = sample_at(theta)
        return cache[theta]

    return _nested(
        lambda th: th,
        lambda th, z: law_sample(th).mean(z, check=False).value,
        lambda th, z: law_sample(th).mean(z, 1, check=False).value,
        lo, hi,
    )


def _moment_status(fn: Callable[[], float]) -> tuple[str, float, str]:
    try:
        value = fn()
    except OutOfBandError as exc:
        return "fail" if "declared" in str(exc) or "diverges" in str(exc) else "unknown", math.inf, str(exc)
    return ("pass" if math.isfinite(value) else "fail"), value, ""


def validate_assumptions(model: CriticalModel, gen: np.random.Generator | None = None,
                         budget: int = DEFAULT_MC_BUDGET) -> AssumptionReport:
    """Report on the six hypotheses of the tail theorem; never raises."""
    law, a, d = model.law, model.alpha, model.law.delta
    entries = []
    pb = law.b_law.prob_positive()
    entries.append(AssumptionEntry("A1", "pass" if pb > 0 else "fail", pb, "P[B > 0]"))
    tol = model.tolerance
    entries.append(AssumptionEntry("A2", "pass" if model.residuals[0] <= max(tol[0], 1e-300) else "fail",
                                   model.residuals[0], "|m(alpha) - 1|"))
    entries.append(AssumptionEntry("A3", "pass" if model.residuals[1] <= max(tol[1], 1e-300) else "fail",
                                   model.residuals[1], "|m'(alpha)|"))
    en = law.num_children.mean
    entries.append(AssumptionEntry("A4", "pass" if en > 1 else "fail", en, "E[N]"))
    lat = law.step.lattice
    a5 = {True: "fail", False: "pass", None: "unknown"}[lat]
    entries.append(AssumptionEntry("A5", a5, float(bool(lat)), "lattice test on log A (heuristic)"))

    if law.closed_form:
        def step_moments():
            return en * (law.step.moment(-d) + law.step.moment(a + d))
    else:
        g = gen if gen is not None else rng_mod.generator(0, 11)

        def step_moments():
            law.check_band(-d)
            law.check_band(a + d)
            smp = law.sample(g, budget)
            return smp.mean(-d).value + smp.mean(a + d).value

    checks = [
        _moment_status(lambda: law.b_law.moment(a + d)),
        _moment_status(lambda: law.num_children.moment(1 + d)),
        _moment_status(step_moments),
    ]
    statuses = [c[0] for c in checks]
    status = "fail" if "fail" in statuses else ("unknown" if "unknown" in statuses else "pass")
    note = "; ".join(c[2] for c in checks if c[2]) or "E[B^(a+d)], E[N^(1+d)], E[sum A^-d + A^(a+d)] finite"
    entries.append(AssumptionEntry("A6", status, max(c[1] for c in checks), note))
    return AssumptionReport(tuple(entries))


def power_transform(model: CriticalModel, alpha0: float) -> CriticalModel:
    """Replace (B, A_i) by (B^c, A_i^c) with c = alpha / alpha0.

    The transformed solution satisfies R' = R^c, so P[R > t] = P[R' > t^c],
    and its critical exponent is alpha0.  The moment margin becomes
    delta * alpha0 / alpha.
    """
    if not alpha0 > 0:
        raise ValueError("alpha0 must be positive")
    c = model.alpha / alpha0
    if c == 1.0:
        return model
    law = model.law
    new_law = replace(law, step=law.step.scaled(c), b_law=law.b_law.powered(c), delta=law.delta / c,
                      band=(law.band[0] / c, law.band[1] / c))
    return critical_model(new_law, alpha0, params=model.params)
