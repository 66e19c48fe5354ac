"""Experiment configuration: YAML in, YAML out, with a fixed key order.

A config file is a mapping with the top-level keys listed in ``TOP_KEYS``;
every section is optional and falls back to its defaults.  ``dump`` always
writes every key in that order, so ``load_str(dump(cfg)) == cfg``.
"""
from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Tuple

import yaml

from ..devices import DeviceSpec
from ..errors import ConfigError
from ..objectives import LogisticObjective, QuadraticObjective
from ..trainers import ALGORITHMS, TrainerConfig

KINDS = ("zs_sweep", "zs_floor", "train_compare", "pulse_budget", "filter_check")
TOP_KEYS = ("kind", "seeds", "out", "decimate", "device", "tile", "sweep", "floor",
            "objective", "trainer", "algorithms", "budget", "filter")


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot (``1e-3``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


@dataclass(frozen=True)
class SweepSection:
    dw_grid: Tuple[float, ...] = (4e-3, 2e-3, 1e-3, 5e-4)
    N_grid: Tuple[int, ...] = tuple(250 * 2 ** i for i in range(9))
    target: float = 0.01
    method: str = "stochastic"


@dataclass(frozen=True)
class FloorSection:
    dw_grid: Tuple[float, ...] = (4e-3, 2e-3, 1e-3)
    steps_per_inverse_dw: float = 40.0
    trajectory_every: int = 10


@dataclass(frozen=True)
class ObjectiveSection:
    kind: str = "quadratic"
    D: int = 20
    mu: float = 0.5
    L: float = 2.0
    noise_sigma: float = 0.1
    n: int = 200
    reg: float = 0.1
    batch_size: int = 8
    seed: int = 0

    def build(self):
        if self.kind == "quadratic":
            return QuadraticObjective.default(D=self.D, mu=self.mu, L=self.L,
                                              noise_sigma=self.noise_sigma, seed=self.seed)
        if self.kind == "logistic":
            return LogisticObjective.synthetic(n=self.n, D=self.D, reg=self.reg,
                                               batch_size=self.batch_size, seed=self.seed)
        raise ConfigError(f"objective kind must be quadratic or logistic, got {self.kind!r}")


@dataclass(frozen=True)
class RunSpec:
    """One trainer variant: a display name, the algorithm, and TrainerConfig overrides."""

    name: str
    algorithm: str
    overrides: Tuple[Tuple[str, Any], ...] = ()

    def trainer(self, base: TrainerConfig) -> TrainerConfig:
        try:
            return _replace(base, dict(self.overrides))
        except TypeError as exc:
            raise ConfigError(f"bad override in {self.name!r}: {exc}") from exc


@dataclass(frozen=True)
class BudgetSection:
    dw_min: float = 2e-4
    target: float = 2e-3
    sp_tol: float = 2e-3
    N_grid: Tuple[int, ...] = tuple(250 * 2 ** i for i in range(11))
    bl: float = 5.0


@dataclass(frozen=True)
class FilterSection:
    etas: Tuple[float, ...] = (0.05, 0.3, 0.7, 1.0)
    n_freq: int = 128
    tol: float = 1e-9


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "train_compare"
    seeds: Tuple[int, ...] = (0,)
    out: str = "out"
    decimate: int = 1
    device: DeviceSpec = field(default_factory=DeviceSpec)
    tile: Tuple[int, int] = (64, 64)
    sweep: SweepSection = field(default_factory=SweepSection)
    floor: FloorSection = field(default_factory=FloorSection)
    objective: ObjectiveSection = field(default_factory=ObjectiveSection)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    algorithms: Tuple[RunSpec, ...] = (RunSpec("analog_sgd", "analog_sgd"),
                                       RunSpec("rider", "rider"))
    budget: BudgetSection = field(default_factory=BudgetSection)
    filter: FilterSection = field(default_factory=FilterSection)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"experiment kind must be one of {KINDS}, got {self.kind!r}")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.decimate < 1:
            raise ConfigError("decimate must be >= 1")
        if len(self.tile) != 2 or min(self.tile) < 1:
            raise ConfigError("tile must be [rows, cols] with positive entries")
        grids = {"zs_sweep": [self.sweep.dw_grid, self.sweep.N_grid],
                 "zs_floor": [self.floor.dw_grid],
                 "train_compare": [self.algorithms],
                 "pulse_budget": [self.algorithms, self.budget.N_grid],
                 "filter_check": [self.filter.etas]}[self.kind]
        if any(len(g) == 0 for g in grids):
            raise ConfigError(f"{self.kind}: a required grid is empty")
        if any(d <= 0 for d in self.sweep.dw_grid + self.floor.dw_grid):
            raise ConfigError("granularities must be positive")
        if self.sweep.method not in ("stochastic", "cyclic"):
            raise ConfigError("sweep.method must be stochastic or cyclic")
        for spec in self.algorithms:
            if spec.algorithm not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {spec.algorithm!r}")
            spec.trainer(self.trainer)
        if len({s.name for s in self.algorithms}) != len(self.algorithms):
            raise ConfigError("algorithm names must be distinct")


def _replace(obj, values: Dict[str, Any]):
    known = {f.name for f in fields(obj)}
    extra = set(values) - known
    if extra:
        raise ConfigError(f"unknown keys for {type(obj).__name__}: {sorted(extra)}")
    kw = {f.name: getattr(obj, f.name) for f in fields(obj)}
    kw.update(values)
    return type(obj)(**kw)


def _section(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    vals = {}
    for f in fields(cls):
        if f.name in raw:
            v = raw[f.name]
            vals[f.name] = tuple(v) if isinstance(v, list) else v
    extra = set(raw) - {f.name for f in fields(cls)}
    if extra:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(extra)}")
    try:
        return cls(**vals)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {name!r}: {exc}") from exc


def _run_spec(entry) -> RunSpec:
    if isinstance(entry, str):
        return RunSpec(entry, entry)
    if isinstance(entry, dict) and "algorithm" in entry:
        entry = dict(entry)
        alg = entry.pop("algorithm")
        name = entry.pop("name", alg)
        return RunSpec(str(name), str(alg), tuple(sorted(entry.items())))
    raise ConfigError(f"cannot read algorithm entry {entry!r}")


def from_dict(raw: Dict[str, Any]) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    extra = set(raw) - set(TOP_KEYS)
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    kw: Dict[str, Any] = {}
    for key in ("kind", "out", "decimate"):
        if key in raw:
            kw[key] = raw[key]
    if "seeds" in raw:
        kw["seeds"] = tuple(int(s) for s in raw["seeds"])
    if "tile" in raw:
        kw["tile"] = tuple(int(v) for v in raw["tile"])
    for key, cls in (("device", DeviceSpec), ("sweep", SweepSection), ("floor", FloorSection),
                     ("objective", ObjectiveSection), ("trainer", TrainerConfig),
                     ("budget", BudgetSection), ("filter", FilterSection)):
        if key in raw:
            kw[key] = _section(cls, raw[key], key)
    if "algorithms" in raw:
        kw["algorithms"] = tuple(_run_spec(e) for e in raw["algorithms"])
    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    def plain(v):
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        return v

    out: Dict[str, Any] = {}
    for key in TOP_KEYS:
        v = getattr(cfg, key)
        if key == "algorithms":
            out[key] = [dict(name=s.name, algorithm=s.algorithm, **dict(s.overrides))
                        for s in v]
        elif hasattr(v, "__dataclass_fields__"):
            out[key] = {k: plain(x) for k, x in asdict(v).items()}
        else:
            out[key] = plain(v)
    return out


def dump(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)


def load_str(text: str) -> ExperimentConfig:
    try:
        raw = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    return from_dict(raw or {})


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return load_str(text)


def with_overrides(cfg: ExperimentConfig, **values) -> ExperimentConfig:
    """Copy of ``cfg`` with top-level fields replaced (None values ignored)."""
    return _replace(cfg, {k: v for k, v in values.items() if v is not None})
