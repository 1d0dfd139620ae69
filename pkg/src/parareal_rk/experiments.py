"""Experiment presets and the INI run-configuration format.

Presets
  ex1a    heat equation, Dirichlet, smooth u0, f = 0
  ex1b    heat equation, Dirichlet, u0 = indicator of (0, pi/2), f = cos(t) sin(x)
  ex2     Allen-Cahn, Neumann, u0 = cos(x)
  custom  any of the above problems with free parameters
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Callable

import numpy as np

from .engine import PararealConfig
from .errors import ConfigError
from .fem1d import Indicator, Mesh1D, fem_system, project
from .propagators import (LinearCoarse, LinearFine, LinearProblem, NewtonConfig, SemilinearCoarse,
                          SemilinearFine, SemilinearProblem)
from .schemes import builtin

PRESETS = ("ex1a", "ex1b", "ex2", "custom")
PROBLEMS = ("smooth", "step", "allen-cahn")
HALF_PI10 = (math.pi / 2) ** 10


def smooth_u0_verbatim(x):
    return x**5 * (1.0 - x) ** 5 / HALF_PI10


def smooth_u0_compatible(x):
    return x**5 * (math.pi - x) ** 5 / HALF_PI10


SMOOTH_DATA = {"verbatim": smooth_u0_verbatim, "compatible": smooth_u0_compatible}


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "ex1b"
    problem: str = "step"
    scheme: str = "lobatto3c-2"
    M: int = 1000
    dt_fine: float = 1.0 / 3000
    J: int = 2
    K_max: int = 25
    T: float = 1.0
    epsilon: float = 1.0
    initial_guess: str = "constant"
    smooth_data: str = "compatible"
    lumped: bool = False
    stop: str = "fixed"
    tol: float = 1e-12
    threads: int = 1
    output: str = "."

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"preset: unknown value {self.preset!r}; choose from {PRESETS}")
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem: unknown value {self.problem!r}; choose from {PROBLEMS}")
        if self.smooth_data not in SMOOTH_DATA:
            raise ConfigError(f"smooth_data: unknown value {self.smooth_data!r}")
        if self.epsilon <= 0:
            raise ConfigError("epsilon: must be positive")
        if self.M < 3:
            raise ConfigError("M: need at least 3 intervals")
        try:
            self.parareal()
        except ConfigError as exc:
            raise ConfigError(f"T/dt_fine/J: {exc}") from None

    def parareal(self) -> PararealConfig:
        return PararealConfig.for_horizon(
            self.T, self.dt_fine, self.J, K_max=self.K_max, stop=self.stop, tol=self.tol,
            initial_guess=self.initial_guess, threads=self.threads)

    @property
    def stem(self) -> str:
        return f"{self.preset}_{self.scheme}_J{self.J}"


def preset(name: str, **overrides) -> ExperimentConfig:
    base = {
        "ex1a": dict(problem="smooth", dt_fine=1.0 / 3000, J=10, K_max=10, T=1.0),
        "ex1b": dict(problem="step", dt_fine=1.0 / 3000, J=2, K_max=25, T=1.0),
        "ex2": dict(problem="allen-cahn", dt_fine=1.0 / 600, J=2, K_max=25, T=0.1, epsilon=1.0),
        "custom": dict(),
    }
    if name not in base:
        raise ConfigError(f"preset: unknown value {name!r}; choose from {PRESETS}")
    kw = dict(base[name], **overrides)
    return ExperimentConfig(preset=name, **kw)


# ------------------------------------------------------------------ setup


@dataclass(frozen=True)
class Setup:
    problem: LinearProblem | SemilinearProblem
    coarse: LinearCoarse | SemilinearCoarse
    fine: LinearFine | SemilinearFine
    u0: np.ndarray
    norm: Callable[[np.ndarray], float]
    parareal: PararealConfig


def build(cfg: ExperimentConfig, newton: NewtonConfig = NewtonConfig()) -> Setup:
    scheme = builtin(cfg.scheme)
    pcfg = cfg.parareal()
    if cfg.problem == "allen-cahn":
        mesh = Mesh1D(cfg.M, "neumann")
        fem = fem_system(mesh, cfg.lumped)
        u0 = project(mesh, np.cos)
        prob = SemilinearProblem(fem, cfg.epsilon, cfg.T, u0)
        coarse = SemilinearCoarse(prob, pcfg.dT)
        fine = SemilinearFine(prob, scheme, pcfg.dt, newton)
    else:
        mesh = Mesh1D(cfg.M, "dirichlet")
        fem = fem_system(mesh, cfg.lumped)
        if cfg.problem == "smooth":
            u0 = project(mesh, SMOOTH_DATA[cfg.smooth_data])
            forcing = None
        else:
            u0 = project(mesh, Indicator(0.0, math.pi / 2), fem.mass)
            forcing = lambda x, t: math.cos(t) * np.sin(x)
        prob = LinearProblem(fem, forcing, cfg.T, u0)
        coarse = LinearCoarse(prob, pcfg.dT)
        fine = LinearFine(prob, scheme, pcfg.dt)
    return Setup(prob, coarse, fine, u0, fem.norm, pcfg)


# ------------------------------------------------------------- INI format

_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_CANON = {k.lower(): k for k in _TYPES}


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    return cp


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            if "/" in raw:
                num, den = raw.split("/")
                return float(num) / float(den)
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return raw.strip()


def emit(configs: list[ExperimentConfig] | ExperimentConfig) -> str:
    if isinstance(configs, ExperimentConfig):
        configs = [configs]
    cp = _parser()
    for i, cfg in enumerate(configs):
        cp[f"run{i + 1}"] = {k: _fmt(v) for k, v in asdict(cfg).items()}
    from io import StringIO
    buf = StringIO()
    cp.write(buf)
    return buf.getvalue()


def parse(text: str, source: str = "<config>") -> list[ExperimentConfig]:
    """One config per section; unknown keys and bad values raise ConfigError.

    A section may start from a preset (``preset = ex1b``) and override any
    field; ``dt_fine`` also accepts fractions such as ``1/3000``.
    """
    cp = _parser()
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    out = []
    for name in cp.sections():
        sec = cp[name]
        unknown = sorted(k for k in sec if k.lower() not in _CANON)
        if unknown:
            raise ConfigError(f"{source} [{name}]: unknown keys {unknown}")
        kw = {}
        for k, v in sec.items():
            key = _CANON[k.lower()]
            if key in kw:
                raise ConfigError(f"{source} [{name}]: duplicate key {key!r}")
            kw[key] = _parse_value(key, v)
        pname = kw.pop("preset", "custom")
        try:
            out.append(preset(pname, **kw))
        except ConfigError as exc:
            raise ConfigError(f"{source} [{name}] {exc}") from None
    if not out:
        raise ConfigError(f"{source}: no run sections")
    return out


def load(path: str) -> list[ExperimentConfig]:
    with open(path) as fh:
        return parse(fh.read(), source=str(path))


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw) if kw else cfg
