"""Run configuration: one flat TOML file, every key optional, unknown keys rejected."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .env import Params
from .errors import ConfigError

# Keys that only steer execution; they never change results and stay out of the hash.
EXECUTION_KEYS = ("workers", "out_dir")
ESTIMATORS = ("speed", "exponent", "msd", "histogram", "range", "trap")
SWEEP_AXES = ("sweep_p", "sweep_lambda", "sweep_beta")


@dataclass
class RunConfig:
    # model
    d: int = 1
    p: float = 0.3
    lam: float = 1.0
    ell: list = field(default_factory=list)
    beta: float = 0.5
    cluster_cap: int = 10**6
    p_guard: float = 0.0
    # horizon
    max_steps: int = 0
    max_time: float = 1.0e5
    checkpoint_every: int = 1024
    # replicas
    replicas: int = 8
    seed: int = 12345
    workers: int = 1
    # time grid
    grid_t0: float = 10.0
    grid_ratio: float = 10.0**0.25
    grid_count: int = 17
    burn_in_decades: float = 1.0
    # coupled runs
    beta_list: list = field(default_factory=list)
    # estimators
    estimators: list = field(default_factory=lambda: ["speed", "exponent"])
    exponent_mode: str = "limit"
    trap_eps: float = 0.1
    # theory inputs for d >= 2
    xi: float = 0.0
    mgf: float = 0.0
    xi_samples: int = 100000
    # output
    out_dir: str = "results"
    write_trajectories: bool = False
    # sweeps (None: axis not swept)
    sweep_p: list | None = None
    sweep_lambda: list | None = None
    sweep_beta: list | None = None
    max_sweep_points: int = 64

    def __post_init__(self):
        self.validate()

    # -- validation ---------------------------------------------------------

    def validate(self):
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.ell and len(self.ell) != self.d:
            raise ConfigError(f"ell has {len(self.ell)} components for d={self.d}")
        if self.max_steps < 0 or self.max_time < 0:
            raise ConfigError("max_steps and max_time must be >= 0")
        if self.max_steps == 0 and self.max_time == 0:
            raise ConfigError("set max_steps or max_time")
        if self.replicas < 1 or self.workers < 1 or self.checkpoint_every < 1:
            raise ConfigError("replicas, workers and checkpoint_every must be >= 1")
        if self.grid_t0 <= 0 or self.grid_ratio <= 1 or self.grid_count < 1:
            raise ConfigError("grid needs grid_t0 > 0, grid_ratio > 1, grid_count >= 1")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ConfigError(f"unknown estimators {bad}; choose from {list(ESTIMATORS)}")
        if self.exponent_mode not in ("limit", "limsup"):
            raise ConfigError("exponent_mode must be 'limit' or 'limsup'")
        if any(b < 0 for b in self.beta_list):
            raise ConfigError("beta_list entries must be >= 0")
        try:
            self.params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- derived ------------------------------------------------------------

    @property
    def unit_ell(self) -> tuple:
        if self.ell:
            return tuple(float(v) for v in self.ell)
        return (1.0,) + (0.0,) * (self.d - 1)

    def params(self, **override) -> Params:
        kw = dict(d=self.d, p=self.p, lam=self.lam, ell=self.unit_ell, beta=self.beta,
                  cluster_cap=self.cluster_cap, seed=self.seed,
                  p_guard=self.p_guard if self.p_guard > 0 else None)
        kw.update(override)
        return Params(**kw)

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    def config_hash(self) -> str:
        payload = {k: v for k, v in self.as_dict().items() if k not in EXECUTION_KEYS}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_jsonable)
        return hashlib.sha256(text.encode()).hexdigest()

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    raise TypeError(type(v))


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_KEYMAP = {"lambda": "lam"}


def _coerce(key: str, value, default):
    kind = type(default) if default is not None else list
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if not isinstance(value, list):
        raise ConfigError(f"{key}: expected an array, got {value!r}")
    return list(value)


def from_mapping(data: dict) -> RunConfig:
    kwargs = {}
    for key, value in data.items():
        name = _KEYMAP.get(key, key)
        if name not in _FIELDS or name == "lam" and key == "lam":
            raise ConfigError(f"unknown key {key!r}")
        f = _FIELDS[name]
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        kwargs[name] = _coerce(key, value, default)
    for k in ("ell", "beta_list") + SWEEP_AXES:
        if kwargs.get(k) is not None:
            kwargs[k] = [float(v) for v in _numbers(k, kwargs[k])]
    if "estimators" in kwargs:
        kwargs["estimators"] = [str(v) for v in kwargs["estimators"]]
    return RunConfig(**kwargs)


def _numbers(key, values):
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{key}: expected numbers, got {v!r}")
    return values


def loads(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from exc
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat; found tables {nested}")
    return from_mapping(data)


def load(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        return loads(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
