"""Run configuration: defaults, YAML loading and validation.

A config file is a YAML mapping. Top-level keys cover the map, the routes
and the experiment; the ``dqn``, ``tabular`` and ``layout`` sections hold
learner and synthetic-deployment settings. Every key is optional and
missing keys take the defaults below. Command-line flags override file
values.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .dqn import BACKENDS, TrainConfig
from .errors import ConfigurationError
from .mdp import DEFAULT_K, RewardWeights
from .radio_env import SyntheticLayout
from .tabular import TabularConfig

OUTPUT_DIR_ENV = "DRONEHO_OUTPUT_DIR"
SCHEMES = ("baseline", "tabular", "dqn", "dp")
DEFAULT_WEIGHTS = "0:1,1:9,5:5"

# keys of the dqn / tabular sections; k, discount, epsilon and seed are shared top-level keys
DQN_KEYS = ("episodes", "steps", "sync_every", "phase_threshold", "batch_size", "hidden", "learning_rate",
            "rms_decay", "rms_eps", "replay_capacity", "position_frequencies", "backend")
TABULAR_KEYS = ("episodes", "steps", "alpha")
LAYOUT_KEYS = tuple(f.name for f in dataclasses.fields(SyntheticLayout) if f.name not in ("extent_x", "extent_y"))


def parse_weight_list(text) -> list[RewardWeights]:
    """``"0:1,1:9,5:5"`` or a list of such pairs."""
    items = text.split(",") if isinstance(text, str) else list(text)
    if not items or any(not str(i).strip() for i in items):
        raise ConfigurationError("weights: expected a comma-separated list of w_ho:w_rsrp pairs")
    return [RewardWeights.parse(str(i).strip()) for i in items]


def _kind_ok(value, kind) -> bool:
    if kind is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, kind)


@dataclass
class RunConfig:
    # map source: a grid file, a samples CSV, or (default) the synthetic layout
    grid_file: str | None = None
    samples_file: str | None = None
    samples_per_cell: int = 10000
    extent_x: float = 5000.0
    extent_y: float = 6000.0
    bin_size: float = 50.0
    # routes and evaluation
    flights: int = 2000
    step_length: float = 50.0
    min_separation: float = 1000.0
    k: int = DEFAULT_K
    weights: str = DEFAULT_WEIGHTS
    schemes: str = "baseline,tabular,dqn"
    discount: float = 0.3
    epsilon: float = 0.2
    seed: int = 0
    workers: int = 1
    output_dir: str = "out"
    dqn: dict = field(default_factory=dict)
    tabular: dict = field(default_factory=dict)
    layout: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------ derived
    @property
    def weight_list(self) -> list[RewardWeights]:
        return parse_weight_list(self.weights)

    @property
    def scheme_list(self) -> list[str]:
        return [s.strip() for s in self.schemes.split(",") if s.strip()]

    @property
    def extents(self) -> tuple[float, float]:
        return self.extent_x, self.extent_y

    def train_config(self, seed: int = 0) -> TrainConfig:
        return TrainConfig(k=self.k, discount=self.discount, epsilon=self.epsilon, seed=seed, **self.dqn)

    def tabular_config(self, seed: int = 0) -> TabularConfig:
        return TabularConfig(discount=self.discount, epsilon=self.epsilon, seed=seed, **self.tabular)

    def synthetic_layout(self) -> SyntheticLayout:
        kw = dict(self.layout)
        if "sites" in kw:
            kw["sites"] = tuple(tuple(float(c) for c in s) for s in kw["sites"])
        if "sector_azimuths_deg" in kw:
            kw["sector_azimuths_deg"] = tuple(float(a) for a in kw["sector_azimuths_deg"])
        if "sites" not in kw:
            from .radio_env import hex_sites
            kw["sites"] = hex_sites((self.extent_x / 2, self.extent_y / 2), 1500.0)
        return SyntheticLayout(extent_x=self.extent_x, extent_y=self.extent_y, **kw)

    # --------------------------------------------------------- validation
    def validate(self) -> None:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            kind = _FIELD_KINDS[f.name]
            if value is None and f.name in ("grid_file", "samples_file"):
                continue
            if not _kind_ok(value, kind):
                raise ConfigurationError(f"{f.name}: expected {kind.__name__}, got {type(value).__name__}")
        if self.bin_size <= 0:
            raise ConfigurationError("bin_size must be positive")
        if self.extent_x <= 0 or self.extent_y <= 0:
            raise ConfigurationError("extent_x and extent_y must be positive")
        if self.step_length <= 0 or self.min_separation < 0:
            raise ConfigurationError("step_length must be positive and min_separation nonnegative")
        if self.flights < 0:
            raise ConfigurationError("flights must be nonnegative")
        if self.samples_per_cell < 1:
            raise ConfigurationError("samples_per_cell must be >= 1")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")
        bad = [s for s in self.scheme_list if s not in SCHEMES]
        if bad or not self.scheme_list:
            raise ConfigurationError(f"schemes: unknown {bad}, valid schemes are {', '.join(SCHEMES)}")
        self.weight_list  # parses
        _check_section("dqn", self.dqn, DQN_KEYS)
        _check_section("tabular", self.tabular, TABULAR_KEYS)
        _check_section("layout", self.layout, LAYOUT_KEYS)
        if self.dqn.get("backend", "compiled") not in BACKENDS:
            raise ConfigurationError(f"dqn.backend must be one of {BACKENDS}")
        try:
            self.train_config()
            self.tabular_config()
            if self.grid_file is None and self.samples_file is None:
                self.synthetic_layout().validate()
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(str(exc)) from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELD_KINDS = {
    "grid_file": str, "samples_file": str, "samples_per_cell": int, "extent_x": float, "extent_y": float,
    "bin_size": float, "flights": int, "step_length": float, "min_separation": float, "k": int,
    "weights": str, "schemes": str, "discount": float, "epsilon": float, "seed": int, "workers": int,
    "output_dir": str, "dqn": dict, "tabular": dict, "layout": dict,
}

_SECTION_KINDS = {
    "dqn": {"episodes": int, "steps": int, "sync_every": int, "phase_threshold": float, "batch_size": int,
            "hidden": list, "learning_rate": float, "rms_decay": float, "rms_eps": float,
            "replay_capacity": int, "position_frequencies": int, "backend": str},
    "tabular": {"episodes": int, "steps": int, "alpha": float},
}


def _check_section(name: str, section: dict, valid: tuple[str, ...]) -> None:
    unknown = sorted(set(section) - set(valid))
    if unknown:
        raise ConfigurationError(f"unknown key(s) {', '.join(f'{name}.{u}' for u in unknown)}; "
                                 f"valid {name} keys: {', '.join(valid)}")
    kinds = _SECTION_KINDS.get(name, {})
    for key, value in section.items():
        kind = kinds.get(key)
        if kind is None:
            # layout: numbers, or lists for sites / azimuths
            kind = list if key in ("sites", "sector_azimuths_deg") else float
        if kind is list and isinstance(value, tuple):
            continue
        if not _kind_ok(value, kind):
            raise ConfigurationError(f"{name}.{key}: expected {kind.__name__}, got {type(value).__name__}")


def _normalize_weights(value):
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return value


def from_mapping(data: dict[str, Any] | None) -> RunConfig:
    """RunConfig from a parsed mapping; unknown keys are rejected."""
    data = dict(data or {})
    valid = [f.name for f in dataclasses.fields(RunConfig)]
    unknown = sorted(set(data) - set(valid))
    if unknown:
        raise ConfigurationError(f"unknown key(s) {', '.join(unknown)}; valid keys: {', '.join(valid)}")
    if "weights" in data:
        data["weights"] = _normalize_weights(data["weights"])
    if "schemes" in data and isinstance(data["schemes"], list):
        data["schemes"] = ",".join(data["schemes"])
    for section in ("dqn", "tabular", "layout"):
        if data.get(section) is None and section in data:
            data[section] = {}
    return RunConfig(**data)


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None,
                environ=os.environ) -> RunConfig:
    """Resolve a RunConfig: defaults < file < output-dir env var < overrides.

    `overrides` holds command-line values; None entries are ignored.
    Nested sections may be overridden with dotted keys, e.g. ``dqn.episodes``.
    """
    data: dict[str, Any] = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: not valid YAML ({exc})") from None
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigurationError(f"{path}: expected a mapping of keys to values")
        data.update(loaded or {})
    if environ.get(OUTPUT_DIR_ENV):
        data["output_dir"] = environ[OUTPUT_DIR_ENV]
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in key:
            section, sub = key.split(".", 1)
            data[section] = dict(data.get(section) or {})
            data[section][sub] = value
        else:
            data[key] = value
    return from_mapping(data)
