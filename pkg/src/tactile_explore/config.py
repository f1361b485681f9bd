"""Run configuration: one TOML document with a section per component."""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .cotrain import CotrainConfig
from .discriminator import DiscriminatorConfig
from .env import EnvConfig
from .errors import ConfigurationError
from .explorer import PPOConfig
from .geometry import Polygon, default_object_set_path, generate_object_set, load_object_set
from .icp import ICPConfig

METHODS = ("random_walk", "not_go_back", "info_gain", "edge_follower", "ppo", "all_in_one", "ppo_icp", "edge_icp")


@dataclass(frozen=True)
class ObjectsConfig:
    path: str = ""  # empty: the shipped object set
    count: int = 0  # use the first ``count`` objects; 0 keeps all
    generate_seed: int = 2024
    num_objects: int = 10
    max_edges: int = 8
    max_radius: float = 0.10

    def __post_init__(self):
        if self.count < 0 or self.num_objects < 1 or self.max_edges < 3 or self.max_radius <= 0:
            raise ConfigurationError("objects: count >= 0, num_objects >= 1, max_edges >= 3, max_radius > 0")

    def resolve_path(self) -> Path:
        return Path(self.path) if self.path else default_object_set_path()

    def load(self) -> list[Polygon]:
        p = self.resolve_path()
        try:
            objs = load_object_set(p)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigurationError(f"cannot load object set {p}: {exc}") from exc
        if self.count:
            if self.count > len(objs):
                raise ConfigurationError(f"objects.count={self.count} but {p} holds {len(objs)} objects")
            objs = objs[: self.count]
        return objs

    def generate(self, seed: int | None = None) -> list[Polygon]:
        return generate_object_set(self.generate_seed if seed is None else seed, self.num_objects,
                                   self.max_edges, self.max_radius)


@dataclass(frozen=True)
class EvaluateConfig:
    method: str = "edge_icp"
    n_trials: int = 1000
    workers: int = 1
    greedy: bool = False
    checkpoint: str = ""
    output_dir: str = "runs"
    noise_rates: tuple = (0.0, 0.006, 0.01, 0.015, 0.02, 0.025)
    thresholds: tuple = (0.7, 0.9, 0.98)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"evaluate.method must be one of {METHODS}, got {self.method!r}")
        if self.n_trials < 1 or self.workers < 1:
            raise ConfigurationError("evaluate.n_trials and evaluate.workers must be >= 1")
        object.__setattr__(self, "noise_rates", tuple(float(r) for r in self.noise_rates))
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if any(not 0.0 <= r <= 1.0 for r in self.noise_rates):
            raise ConfigurationError("evaluate.noise_rates must lie in [0, 1]")
        if any(not 0.0 < t <= 1.0 for t in self.thresholds):
            raise ConfigurationError("evaluate.thresholds must lie in (0, 1]")


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    objects: ObjectsConfig = field(default_factory=ObjectsConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    explorer: PPOConfig = field(default_factory=PPOConfig)
    cotrain: CotrainConfig = field(default_factory=CotrainConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)
    icp: ICPConfig = field(default_factory=ICPConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


SECTIONS = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_SECTION_CLASSES = {
    "env": EnvConfig, "objects": ObjectsConfig, "discriminator": DiscriminatorConfig, "explorer": PPOConfig,
    "cotrain": CotrainConfig, "evaluate": EvaluateConfig, "icp": ICPConfig,
}


def _build(cls, table: dict, section: str):
    if not isinstance(table, dict):
        raise ConfigurationError(f"[{section}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(table) - names)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    try:
        return cls(**table)
    except ConfigurationError as exc:
        raise ConfigurationError(f"[{section}] {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"[{section}] invalid value: {exc}") from exc


def from_dict(data: dict) -> RunConfig:
    unknown = sorted(set(data) - set(_SECTION_CLASSES))
    if unknown:
        raise ConfigurationError(f"unknown section(s): {', '.join(unknown)}")
    return RunConfig(**{name: _build(cls, data.get(name, {}), name) for name, cls in _SECTION_CLASSES.items()})


def _parse(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config is not valid TOML: {exc}") from exc


def loads(text: str) -> RunConfig:
    """Parse a TOML run config; every omitted key takes its value from the shipped defaults."""
    data = _parse(text)
    merged = _parse(default_config_text())
    for name, table in data.items():
        if isinstance(table, dict) and isinstance(merged.get(name), dict):
            merged[name] = {**merged[name], **table}
        else:
            merged[name] = table
    return from_dict(merged)


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def default_config_text() -> str:
    return resources.files("tactile_explore").joinpath("data/default.toml").read_text()


def load_default() -> RunConfig:
    return from_dict(_parse(default_config_text()))
