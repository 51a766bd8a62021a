"""Experiment configuration: JSON documents, validation and named presets."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .manifold import DampingFilter
from .parareal import VARIANTS, PararealRun, Schedule, default_workers
from .propagators import (
    SCHEMES,
    BurgersProblem,
    ConfigurationError,
    ParabolicProblem,
    PropagatorSpec,
    WaveProblem,
    WaveState,
)
from .spectral import GroupPartition, SpectralField, init_power_law, init_ricker, init_sine

DIVIDE_RTOL = 1e-12
PROBLEM_KINDS = ("wave", "parabolic", "burgers")
INITIAL_KINDS = ("power_law", "ricker", "sine")
DAMPING_RULES = ("default", "two_group")


@dataclass(frozen=True)
class ProblemConfig:
    kind: str
    c: Optional[float] = None
    mu: Optional[float] = None
    nu: Optional[float] = None
    period: float = 2.0 * np.pi


@dataclass(frozen=True)
class InitialConfig:
    kind: str
    p: Optional[float] = None
    style: Optional[str] = None
    f_s: Optional[float] = None
    x_s: Optional[float] = None
    amplitude: float = 1.0


@dataclass(frozen=True)
class SpaceConfig:
    n: int
    n_coarse: Optional[int] = None


@dataclass(frozen=True)
class TimeConfig:
    t_final: float
    big_dt: float
    coarse_dt: float
    fine_dt: float


@dataclass(frozen=True)
class DampingConfig:
    rule: Optional[str] = "default"
    factors: Optional[tuple[float, ...]] = None


@dataclass(frozen=True)
class MethodConfig:
    variant: str = "plain"
    iterations: int = 0
    partition: Optional[tuple[int, ...]] = None
    damping: Optional[DampingConfig] = None
    scheme: str = "crank_nicolson"


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig
    initial: InitialConfig
    space: SpaceConfig
    time: TimeConfig
    method: MethodConfig = field(default_factory=MethodConfig)
    output_dir: Optional[str] = None
    workers: int = 1

    @property
    def n_windows(self) -> int:
        return int(round(self.time.t_final / self.time.big_dt))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        out = d.pop("output_dir")
        d["output"] = {"dir": out}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with whole sections or nested fields replaced, e.g. ``method={"variant": "projected"}``."""
        changes = {}
        for key, val in sections.items():
            cur = getattr(self, key)
            if isinstance(val, dict) and dataclasses.is_dataclass(cur):
                changes[key] = dataclasses.replace(cur, **val)
            else:
                changes[key] = val
        return dataclasses.replace(self, **changes)


# -- parsing --------------------------------------------------------------------

def _section(doc: dict, key: str, cls, required: bool = True):
    if key not in doc:
        if required:
            raise ConfigurationError(f"missing section {key!r}")
        return None
    sec = doc[key]
    if not isinstance(sec, dict):
        raise ConfigurationError(f"section {key!r} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(sec) - names
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {key!r}: {', '.join(sorted(unknown))}")
    try:
        return cls(**sec)
    except TypeError as exc:
        raise ConfigurationError(f"section {key!r}: {exc}") from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON configuration document, applying defaults."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed configuration document: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigurationError("configuration must be a JSON object")
    allowed = {"problem", "initial", "space", "time", "method", "output", "workers"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigurationError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    method_doc = dict(doc.get("method", {}))
    damping = method_doc.pop("damping", None)
    if damping is not None:
        damping = _section({"method.damping": damping}, "method.damping", DampingConfig)
        if damping.factors is not None:
            damping = dataclasses.replace(damping, factors=tuple(damping.factors), rule=None)
    if method_doc.get("partition") is not None:
        method_doc["partition"] = tuple(method_doc["partition"])
    method = _section({"method": method_doc}, "method", MethodConfig)
    method = dataclasses.replace(method, damping=damping)
    out = doc.get("output", {}) or {}
    if not isinstance(out, dict) or set(out) - {"dir"}:
        raise ConfigurationError("section 'output' accepts only the key 'dir'")
    cfg = ExperimentConfig(
        problem=_section(doc, "problem", ProblemConfig),
        initial=_section(doc, "initial", InitialConfig),
        space=_section(doc, "space", SpaceConfig),
        time=_section(doc, "time", TimeConfig),
        method=method,
        output_dir=out.get("dir"),
        workers=doc.get("workers", default_workers()),
    )
    validate(cfg)
    return cfg


def _divides(small: float, big: float) -> bool:
    r = big / small
    return round(r) >= 1 and abs(round(r) - r) <= DIVIDE_RTOL * r


def validate(cfg: ExperimentConfig) -> None:
    p, ic, sp, t, m = cfg.problem, cfg.initial, cfg.space, cfg.time, cfg.method
    if p.kind not in PROBLEM_KINDS:
        raise ConfigurationError(f"problem.kind {p.kind!r} not one of {PROBLEM_KINDS}")
    coef = {"wave": "c", "parabolic": "mu", "burgers": "nu"}[p.kind]
    val = getattr(p, coef)
    if val is None:
        raise ConfigurationError(f"problem.{coef} is required for kind {p.kind!r}")
    if val < 0 or (coef == "c" and val == 0):
        raise ConfigurationError(f"problem.{coef} must be {'positive' if coef == 'c' else 'non-negative'}")
    if not p.period > 0:
        raise ConfigurationError("problem.period must be positive")
    if ic.kind not in INITIAL_KINDS:
        raise ConfigurationError(f"initial.kind {ic.kind!r} not one of {INITIAL_KINDS}")
    if ic.kind == "power_law":
        if ic.p is None or not ic.p > 0:
            raise ConfigurationError("initial.p must be a positive number")
        if ic.style not in ("parabolic", "wave"):
            raise ConfigurationError("initial.style must be 'parabolic' or 'wave'")
    if ic.kind == "ricker":
        if p.kind != "wave":
            raise ConfigurationError("initial.kind 'ricker' requires problem.kind 'wave'")
        if ic.f_s is None or ic.x_s is None:
            raise ConfigurationError("initial.f_s and initial.x_s are required for a Ricker pulse")
        if not 0 <= ic.x_s < p.period:
            raise ConfigurationError("initial.x_s must lie in [0, period)")
    if not isinstance(sp.n, int) or sp.n < 1:
        raise ConfigurationError("space.n must be an integer >= 1")
    if sp.n_coarse is not None and not (isinstance(sp.n_coarse, int) and 1 <= sp.n_coarse <= sp.n):
        raise ConfigurationError("space.n_coarse must be an integer in [1, space.n]")
    for key in ("t_final", "big_dt", "coarse_dt", "fine_dt"):
        v = getattr(t, key)
        if not isinstance(v, (int, float)) or not v > 0:
            raise ConfigurationError(f"time.{key} must be positive")
    if not t.fine_dt <= t.coarse_dt:
        raise ConfigurationError("time.fine_dt must not exceed time.coarse_dt")
    if not t.coarse_dt <= t.big_dt:
        raise ConfigurationError("time.coarse_dt must not exceed time.big_dt")
    if not t.big_dt <= t.t_final:
        raise ConfigurationError("time.big_dt must not exceed time.t_final")
    if not _divides(t.fine_dt, t.coarse_dt):
        raise ConfigurationError("time.fine_dt must divide time.coarse_dt")
    if not _divides(t.coarse_dt, t.big_dt):
        raise ConfigurationError("time.coarse_dt must divide time.big_dt")
    if not _divides(t.big_dt, t.t_final):
        raise ConfigurationError("time.big_dt must divide time.t_final")
    if m.variant not in VARIANTS:
        raise ConfigurationError(f"method.variant {m.variant!r} is not valid; valid variants: {', '.join(VARIANTS)}")
    if not isinstance(m.iterations, int) or m.iterations < 0:
        raise ConfigurationError("method.iterations must be an integer >= 0")
    if m.scheme not in SCHEMES:
        raise ConfigurationError(f"method.scheme must be one of {SCHEMES}")
    if m.partition is not None:
        try:
            part = GroupPartition(m.partition)
        except ValueError as exc:
            raise ConfigurationError(f"method.partition: {exc}") from None
        if part.max_mode != sp.n:
            raise ConfigurationError(f"method.partition must end at space.n + 1 = {sp.n + 1}")
    if m.damping is not None:
        if m.variant != "projected_damped":
            raise ConfigurationError("method.damping is only valid for variant 'projected_damped'")
        if m.damping.factors is None and m.damping.rule not in DAMPING_RULES:
            raise ConfigurationError(f"method.damping.rule must be one of {DAMPING_RULES}")
    if not isinstance(cfg.workers, int) or cfg.workers < 1:
        raise ConfigurationError("workers must be an integer >= 1")


# -- construction ---------------------------------------------------------------

def problem_of(cfg: ExperimentConfig):
    p = cfg.problem
    if p.kind == "wave":
        return WaveProblem(p.c)
    if p.kind == "parabolic":
        return ParabolicProblem(p.mu)
    return BurgersProblem(p.nu)


def initial_state(cfg: ExperimentConfig):
    p, ic, n = cfg.problem, cfg.initial, cfg.space.n
    if ic.kind == "power_law":
        f = init_power_law(n, ic.p, ic.style, p.period)
    elif ic.kind == "ricker":
        f = init_ricker(n, ic.f_s, ic.x_s, p.c, p.period)
    else:
        f = init_sine(n, ic.amplitude, p.period)
    if p.kind != "wave":
        return f
    zero = SpectralField.zeros(n, p.period)
    # Ricker excites the velocity; power-law data is an initial displacement.
    return WaveState(zero, f) if ic.kind == "ricker" else WaveState(f, zero)


def fine_spec(cfg: ExperimentConfig, fine_dt: Optional[float] = None) -> PropagatorSpec:
    return PropagatorSpec(problem_of(cfg), fine_dt or cfg.time.fine_dt, None, cfg.method.scheme)


def coarse_spec(cfg: ExperimentConfig) -> PropagatorSpec:
    return PropagatorSpec(problem_of(cfg), cfg.time.coarse_dt, cfg.space.n_coarse, cfg.method.scheme)


def schedule_of(cfg: ExperimentConfig) -> Schedule:
    return Schedule(cfg.time.t_final, cfg.n_windows)


def build_run(cfg: ExperimentConfig) -> PararealRun:
    m = cfg.method
    partition = None
    if m.variant != "plain":
        partition = GroupPartition(m.partition) if m.partition else GroupPartition.trivial(cfg.space.n)
    damping = None
    if m.variant == "projected_damped":
        d = m.damping or DampingConfig()
        if d.factors is not None:
            damping = DampingFilter(partition, tuple(d.factors))
        else:
            damping = DampingFilter.from_rule(partition, d.rule)
    return PararealRun(schedule_of(cfg), coarse_spec(cfg), fine_spec(cfg), initial_state(cfg),
                       m.variant, m.iterations, partition, damping)


# -- presets ----------------------------------------------------------------------

PRESETS = ("parabolic_regularity", "wave_power", "wave_ricker", "burgers_case1", "burgers_case2", "burgers_case3")

WAVE_CUT = 20

# Keys changed by scale="desk"; everything else keeps the published parameters.
DESK_OVERRIDES = {
    "wave_power": {"time": {"t_final": 20.0, "fine_dt": 1e-4}},
    "wave_ricker": {"time": {"t_final": 20.0, "fine_dt": 1e-4}},
    "burgers_case2": {"time": {"fine_dt": 1e-3}},
    "burgers_case3": {"time": {"fine_dt": 1e-3}},
}


def _paper_preset(name: str) -> ExperimentConfig:
    if name == "parabolic_regularity":
        return ExperimentConfig(
            ProblemConfig("parabolic", mu=1e-10, period=2.0 * np.pi),
            InitialConfig("power_law", p=1.0, style="parabolic"),
            SpaceConfig(256),
            TimeConfig(2.0, 2e-2, 1e-2, 1e-4),
            MethodConfig("plain", 15),
        )
    if name in ("wave_power", "wave_ricker"):
        problem = ProblemConfig("wave", c=2000.0, period=5000.0)
        time = TimeConfig(100.0, 2e-1, 4e-3, 2e-6)
        if name == "wave_power":
            return ExperimentConfig(problem, InitialConfig("power_law", p=1.0, style="wave"),
                                    SpaceConfig(30), time, MethodConfig("plain", 15))
        return ExperimentConfig(problem, InitialConfig("ricker", f_s=2.5, x_s=2500.0), SpaceConfig(30), time,
                                MethodConfig("projected", 15, partition=(0, WAVE_CUT, 31)))
    # Burgers resolutions 2^8 / 2^9 count collocation points, i.e. max_mode 2^7 / 2^8.
    sine = InitialConfig("sine", amplitude=1.0)
    if name == "burgers_case1":
        return ExperimentConfig(ProblemConfig("burgers", nu=1e-2), sine, SpaceConfig(128),
                                TimeConfig(2.0, 2e-2, 1e-2, 1e-4), MethodConfig("plain", 5))
    if name == "burgers_case2":
        return ExperimentConfig(ProblemConfig("burgers", nu=1e-3), sine, SpaceConfig(256),
                                TimeConfig(2.0, 2e-2, 1e-2, 1e-5), MethodConfig("plain", 5))
    if name == "burgers_case3":
        return ExperimentConfig(ProblemConfig("burgers", nu=1e-3), sine, SpaceConfig(256, n_coarse=128),
                                TimeConfig(2.0, 2e-2, 1e-2, 1e-5), MethodConfig("plain", 15))
    raise ConfigurationError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")


def preset(name: str, scale: str = "desk") -> ExperimentConfig:
    if scale not in ("paper", "desk"):
        raise ConfigurationError(f"scale must be 'paper' or 'desk', got {scale!r}")
    cfg = _paper_preset(name)
    if scale == "desk":
        cfg = cfg.replace(**DESK_OVERRIDES.get(name, {}))
    validate(cfg)
    return cfg


def burgers_damped(cfg: ExperimentConfig, iterations: int = 15) -> ExperimentConfig:
    """Two-group projection with damping ``f(2) = 1/7`` on top of a Burgers preset."""
    n = cfg.space.n
    return cfg.replace(method=MethodConfig("projected_damped", iterations, partition=(0, (n + 1) // 2, n + 1),
                                           damping=DampingConfig("two_group")))
