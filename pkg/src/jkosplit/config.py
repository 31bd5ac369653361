"""Run configuration: YAML parsing, validation and initial data."""

from __future__ import annotations

import dataclasses
import difflib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .driver import DriverConfig, step_count
from .exceptions import ConfigError, InvalidArgumentError
from .grid import Grid, GridDensity, make_grid
from .model import ModelSpec
from .oracle import barenblatt_density
from .transport import JkoConfig

MODES = ("splitting", "jko-only", "fv-oracle")
INITIAL_KINDS = ("barenblatt", "bumps")


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a run; unset keys keep these defaults and are echoed."""

    gamma: float = 2.0
    chi: float = 1.0
    k_M: float = 0.0
    k_h: float = 1.0
    phi_family: str = "power"
    support_rtol: float = 1e-10
    L: float = 10.0
    n: int = 1024
    tau: float = 1e-3
    T: float = 0.5
    n_particles: int = 400
    grad_rtol: float = 1e-8
    max_iter: int = 500
    continue_on_stall: bool = False
    freeze_beta_zero: bool = False
    mode: str = "splitting"
    initial: str = "bumps"
    initial_time: float = 1.0
    mass: float = 1.0
    centers: tuple = (-1.0, 1.0)
    width: float = 0.8
    fv_n: int = 2048
    barenblatt_budget: float = 0.02
    oracle_budget: float = 0.05
    snapshot_stride: int = 1
    expected_failures: tuple = ()
    output_dir: str = "output"
    seed: int = 0

    def spec(self) -> ModelSpec:
        return ModelSpec(self.gamma, self.chi, self.k_M, self.k_h, self.phi_family, self.support_rtol)

    def grid(self) -> Grid:
        return make_grid(self.L, self.n)

    def driver_config(self) -> DriverConfig:
        jko = JkoConfig(n_particles=self.n_particles, grad_rtol=self.grad_rtol, max_iter=self.max_iter)
        return DriverConfig(jko=jko, continue_on_stall=self.continue_on_stall, freeze_beta_zero=self.freeze_beta_zero)

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("centers", "expected_failures"):
            d[k] = list(d[k])
        return d

    def replace(self, **kw) -> "RunConfig":
        return validate_config(dataclasses.replace(self, **kw))


FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _fail(key: str, rule: str):
    raise ConfigError(f"{key}: {rule}")


def validate_config(cfg: RunConfig) -> RunConfig:
    """Re-check every precondition of the modules the run will touch."""
    if not cfg.gamma > 1:
        _fail("gamma", f"must exceed 1 (diffusion growth condition), got {cfg.gamma}")
    try:
        cfg.spec()
    except InvalidArgumentError as exc:
        raise ConfigError(f"model: {exc}") from exc
    if not cfg.L > 0:
        _fail("L", "must be positive")
    if int(cfg.n) != cfg.n or cfg.n < 2:
        _fail("n", "must be an integer >= 2")
    if int(cfg.fv_n) != cfg.fv_n or cfg.fv_n < 2:
        _fail("fv_n", "must be an integer >= 2")
    if not cfg.tau > 0:
        _fail("tau", "must be positive")
    try:
        step_count(cfg.tau, cfg.T)
    except InvalidArgumentError as exc:
        raise ConfigError(f"T: {exc}") from exc
    if cfg.n_particles < 2:
        _fail("n_particles", "must be at least 2")
    if not cfg.grad_rtol > 0:
        _fail("grad_rtol", "must be positive")
    if cfg.max_iter < 1:
        _fail("max_iter", "must be positive")
    if cfg.mode not in MODES:
        _fail("mode", f"must be one of {', '.join(MODES)}")
    if cfg.initial not in INITIAL_KINDS:
        _fail("initial", f"must be one of {', '.join(INITIAL_KINDS)}")
    if not cfg.mass > 0:
        _fail("mass", "must be positive")
    if not cfg.width > 0:
        _fail("width", "must be positive")
    if not cfg.initial_time > 0:
        _fail("initial_time", "must be positive")
    if cfg.snapshot_stride < 1:
        _fail("snapshot_stride", "must be at least 1")
    return cfg


def _coerce(key: str, value):
    # YAML 1.1 reads exponents without a dot (1e-8) as strings
    kind = type(FIELDS[key].default)
    if kind is tuple:
        items = value if isinstance(value, (list, tuple)) else [value]
        return tuple(float(v) for v in items) if key == "centers" else tuple(str(v) for v in items)
    if kind is bool:
        if not isinstance(value, bool):
            _fail(key, f"must be true or false, got {value!r}")
        return value
    if kind is str:
        return str(value)
    try:
        num = float(value)
    except (TypeError, ValueError):
        _fail(key, f"must be a number, got {value!r}")
    if kind is int:
        if num != int(num):
            _fail(key, f"must be an integer, got {value!r}")
        return int(num)
    return num


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping of keys to values")
    kw = {}
    for key, value in data.items():
        if key not in FIELDS:
            close = difflib.get_close_matches(str(key), FIELDS, n=1)
            hint = f"; did you mean {close[0]!r}?" if close else ""
            raise ConfigError(f"{key}: unknown key{hint}")
        kw[key] = _coerce(key, value)
    try:
        cfg = RunConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return validate_config(cfg)


def parse_config(path) -> RunConfig:
    """Load and validate a YAML run configuration."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{path}: no such config file")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML ({exc})") from exc
    return config_from_dict(data or {})


def parse_value(key: str, text: str):
    """Convert a command-line string to the type of config field ``key``."""
    if key not in FIELDS:
        close = difflib.get_close_matches(key, FIELDS, n=1)
        raise ConfigError(f"{key}: unknown key" + (f"; did you mean {close[0]!r}?" if close else ""))
    return _coerce(key, yaml.safe_load(text))


def bumps_density(grid: Grid, centers, width: float, mass: float, samples: int = 64) -> GridDensity:
    """Sum of parabolic bumps ``(1 - ((x - c) / w)^2)_+`` scaled to ``mass``."""
    s = (np.arange(samples) + 0.5) / samples
    x = grid.edges[:-1, None] + s[None, :] * grid.dx
    v = sum(np.maximum(1.0 - ((x - c) / width) ** 2, 0.0) for c in centers).mean(axis=1)
    total = v.sum() * grid.dx
    if total <= 0:
        raise ConfigError("initial bumps do not intersect the domain")
    return GridDensity(grid, v * (mass / total))


def initial_density(cfg: RunConfig, grid: Grid | None = None) -> GridDensity:
    grid = cfg.grid() if grid is None else grid
    if cfg.initial == "barenblatt":
        return barenblatt_density(grid, cfg.initial_time, cfg.mass)
    return bumps_density(grid, cfg.centers, cfg.width, cfg.mass)
