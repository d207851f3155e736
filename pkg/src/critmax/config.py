"""Experiment configuration: flat INI sections with a fixed key list.

Unknown sections or keys are rejected before anything runs, and the seed
has no default.

    [run]      seed (required), output, workers
    [model]    family, free, b, mu, sigma, p, x1, x2, delta, b_law,
               calibration_budget, step, step_<arg> (GeneralIID only)
    [sim]      max_depth, max_nodes, prune_log_weight, replicas
    [tail]     alpha_t_lo, alpha_t_hi, window, decades, t_max
    [poisson]  x_lo, x_hi, step, fine_step, groups, draws, epsilon
    [walk]     ladder_budget, ladder_max_steps, tilt_draws, w_budget,
               w_max_steps, w_x_max
    [verify]   m2o_n, m2o_mode, m2o_budget, nt_thresholds, nt_depth,
               nt_floor, nt_replicas, nt_walk_budget, c0
"""

from __future__ import annotations

import configparser
import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .model import FAMILIES, FAMILY_GENERAL, BoundedParetoB, ConstantB, UniformB


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunBlock:
    seed: int
    output: str = "out"
    workers: int = 1


@dataclass(frozen=True)
class ModelBlock:
    family: str = "LognormalFixedN"
    free: tuple[str, ...] = ("mu",)
    params: dict = field(default_factory=lambda: {"b": 2, "sigma": 1.0})
    b_law: str = "constant 1"
    calibration_budget: int = 1 << 16


@dataclass(frozen=True)
class SimBlock:
    max_depth: int = 300
    max_nodes: int = 10_000_000
    prune_log_weight: float | None = -9.0
    replicas: int = 200_000


@dataclass(frozen=True)
class TailBlock:
    alpha_t_lo: float = 3.0
    alpha_t_hi: float = 300.0
    window: tuple[float, float] | None = None
    decades: float = 1.0
    t_max: float | None = None


@dataclass(frozen=True)
class PoissonBlock:
    x_lo: float = -10.0
    x_hi: float = 12.0
    step: float = 0.05
    fine_step: float = 1e-3
    groups: int = 20
    draws: int = 1 << 16
    epsilon: float | None = None


@dataclass(frozen=True)
class WalkBlock:
    ladder_budget: int = 100_000
    ladder_max_steps: int = 1_000_000
    tilt_draws: int = 1_000_000
    w_budget: int = 50_000
    w_max_steps: int = 100_000
    w_x_max: float = 10.0


@dataclass(frozen=True)
class VerifyBlock:
    m2o_n: tuple[int, ...] = (1, 2, 3, 4)
    m2o_mode: str = "exact"
    m2o_budget: int = 20_000
    nt_thresholds: tuple[float, ...] = (3.0, 10.0, 30.0, 100.0, 300.0)
    nt_depth: int = 60
    nt_floor: float = -4.0
    nt_replicas: int = 100_000
    nt_walk_budget: int = 200_000
    c0: float = 0.05


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunBlock
    model: ModelBlock = ModelBlock()
    sim: SimBlock = SimBlock()
    tail: TailBlock = TailBlock()
    poisson: PoissonBlock = PoissonBlock()
    walk: WalkBlock = WalkBlock()
    verify: VerifyBlock = VerifyBlock()

    @property
    def output_dir(self) -> Path:
        return Path(self.run.output)

    def resolved(self) -> dict:
        """Plain-data view embedded in every artifact."""
        d = asdict(self)
        # the worker count never changes results, so it stays out of artifacts
        d["run"].pop("workers")
        d["model"]["params"] = dict(sorted(d["model"]["params"].items()))
        return d

    def resolved_json(self) -> str:
        return json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# parsing

MODEL_KEYS = {"family", "free", "b", "mu", "sigma", "p", "x1", "x2", "delta", "b_law", "calibration_budget", "step"}
STEP_ARG = re.compile(r"^step_[a-z][a-z0-9_]*$")

SECTIONS = {
    "run": {"seed", "output", "workers"},
    "model": MODEL_KEYS,
    "sim": {"max_depth", "max_nodes", "prune_log_weight", "replicas"},
    "tail": {"alpha_t_lo", "alpha_t_hi", "window", "decades", "t_max"},
    "poisson": {"x_lo", "x_hi", "step", "fine_step", "groups", "draws", "epsilon"},
    "walk": {"ladder_budget", "ladder_max_steps", "tilt_draws", "w_budget", "w_max_steps", "w_x_max"},
    "verify": {"m2o_n", "m2o_mode", "m2o_budget", "nt_thresholds", "nt_depth", "nt_floor", "nt_replicas",
               "nt_walk_budget", "c0"},
}


def _num(text: str, kind, key: str):
    try:
        if kind is int:
            v = float(text)
            if v != int(v):
                raise ValueError
            return int(v)
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {text!r}") from None


def _optional_float(text: str, key: str) -> float | None:
    return None if text.strip().lower() in ("none", "") else _num(text, float, key)


def _list(text: str, kind, key: str) -> tuple:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    return tuple(_num(p, kind, key) for p in parts)


def parse_b_law(spec: str):
    """'constant c', 'uniform lo hi' or 'pareto exponent [cap]'."""
    parts = spec.split()
    if not parts:
        raise ConfigError("b_law: empty")
    name, args = parts[0].lower(), [_num(a, float, "b_law") for a in parts[1:]]
    try:
        if name == "constant" and len(args) == 1:
            return ConstantB(args[0])
        if name == "uniform" and len(args) == 2:
            return UniformB(args[0], args[1])
        if name == "pareto" and len(args) in (1, 2):
            return BoundedParetoB(*args)
    except ValueError as e:
        raise ConfigError(f"b_law: {e}") from None
    raise ConfigError(f"b_law: cannot parse {spec!r}")


def _block(cls, raw: dict, conv: dict):
    kw = {}
    for k, v in raw.items():
        kw[k] = conv[k](v, k)
    try:
        return cls(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def _model_block(raw: dict) -> ModelBlock:
    family = raw.pop("family", "LognormalFixedN")
    if family not in FAMILIES:
        raise ConfigError(f"model.family: unknown family {family!r}")
    free_txt = raw.pop("free", None)
    free = tuple(p for p in re.split(r"[,\s]+", free_txt.strip()) if p) if free_txt is not None else \
        (("mu",) if family == "LognormalFixedN" else ("p",) if family == "TwoPointFixedN" else ())
    b_law = raw.pop("b_law", "constant 1")
    parse_b_law(b_law)
    budget = _num(raw.pop("calibration_budget", str(1 << 16)), int, "calibration_budget")
    params: dict = {}
    for k, v in raw.items():
        if STEP_ARG.match(k) or k == "step":
            if family != FAMILY_GENERAL:
                raise ConfigError(f"model.{k}: only valid for {FAMILY_GENERAL}")
            params[k] = v.strip() if k == "step" else _num(v, float, k)
        elif k == "b":
            params[k] = _num(v, int, k)
        else:
            params[k] = _num(v, float, k)
    if family != FAMILY_GENERAL:
        params.setdefault("b", 2)
    if family == "LognormalFixedN":
        params.setdefault("sigma", 1.0)
    return ModelBlock(family, free, params, b_law, budget)


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"unparseable config: {e}") from None
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            if key not in SECTIONS[sec] and not (sec == "model" and STEP_ARG.match(key)):
                raise ConfigError(f"unknown key {sec}.{key}")
    if not cp.has_section("run") or "seed" not in cp["run"]:
        raise ConfigError("run.seed is required")
    raw = {s: dict(cp[s]) for s in cp.sections()}

    i, f, of = (lambda v, k: _num(v, int, k)), (lambda v, k: _num(v, float, k)), _optional_float
    run = _block(RunBlock, raw["run"], {"seed": i, "output": lambda v, k: v.strip(), "workers": i})
    if run.seed < 0:
        raise ConfigError("run.seed must be non-negative")
    if run.workers < 1:
        raise ConfigError("run.workers must be at least 1")
    model = _model_block(dict(raw.get("model", {})))
    sim = _block(SimBlock, raw.get("sim", {}), {"max_depth": i, "max_nodes": i, "prune_log_weight": of,
                                               "replicas": i})
    if sim.replicas < 1 or sim.max_depth < 0 or sim.max_nodes < 1:
        raise ConfigError("sim: replicas and max_nodes must be >= 1 and max_depth >= 0")

    def window(v, k):
        if v.strip().lower() in ("auto", ""):
            return None
        w = _list(v, float, k)
        if len(w) != 2 or not 0 < w[0] < w[1]:
            raise ConfigError("tail.window: expected 'auto' or 'lo, hi' with 0 < lo < hi")
        return w

    tail = _block(TailBlock, raw.get("tail", {}), {"alpha_t_lo": f, "alpha_t_hi": f, "window": window,
                                                   "decades": f, "t_max": of})
    poisson = _block(PoissonBlock, raw.get("poisson", {}), {"x_lo": f, "x_hi": f, "step": f, "fine_step": f,
                                                            "groups": i, "draws": i, "epsilon": of})
    walk = _block(WalkBlock, raw.get("walk", {}), {"ladder_budget": i, "ladder_max_steps": i, "tilt_draws": i,
                                                   "w_budget": i, "w_max_steps": i, "w_x_max": f})

    def mode(v, k):
        if v.strip() not in ("exact", "mc"):
            raise ConfigError("verify.m2o_mode must be 'exact' or 'mc'")
        return v.strip()

    verify = _block(VerifyBlock, raw.get("verify", {}), {
        "m2o_n": lambda v, k: _list(v, int, k), "m2o_mode": mode, "m2o_budget": i,
        "nt_thresholds": lambda v, k: _list(v, float, k), "nt_depth": i, "nt_floor": f, "nt_replicas": i,
        "nt_walk_budget": i, "c0": f})
    cfg = ExperimentConfig(run, model, sim, tail, poisson, walk, verify)
    for name, val in (("poisson.step", poisson.step), ("poisson.fine_step", poisson.fine_step)):
        if not val > 0 or not math.isfinite(val):
            raise ConfigError(f"{name} must be positive")
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(text)
