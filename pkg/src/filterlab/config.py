"""Experiment configuration: JSON files, dotted overrides and run manifests."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import ConfigurationError
from .grid import TimeGrid, make_grid
from .models import battery, builtin_gwn, cell_model, small_cluster_model


@dataclass
class ModelConfig:
    kind: str = "gwn"
    name: str = "bounded"
    params: dict = field(default_factory=dict)


@dataclass
class GridConfig:
    T: float = 1.0
    M: int = 1024
    n_set: list = field(default_factory=lambda: [4, 8, 16, 32, 64])


@dataclass
class BudgetConfig:
    particle_steps: float = 2e9
    enumeration_bits: int = 20


@dataclass
class GalerkinConfig:
    basis: str = "nodal"
    lower: float = -6.0
    upper: float = 6.0
    nodes: int = 241
    degree: int = 6
    noise: str = "independent"


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    N: int = 10_000
    replicates: int = 1
    phis: list = field(default_factory=lambda: ["one", "x", "x2", "tanh"])
    checkpoints: list = field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0])
    seed: int = 0
    out: str = "results"
    threads: int = 1
    block_size: int = 16384
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    galerkin: GalerkinConfig = field(default_factory=GalerkinConfig)

    # -- construction ----------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        validate(raw)
        raw = copy.deepcopy(raw)
        sub = {
            "model": ModelConfig,
            "grid": GridConfig,
            "budget": BudgetConfig,
            "galerkin": GalerkinConfig,
        }
        kw = {k: (sub[k](**v) if k in sub else v) for k, v in raw.items()}
        cfg = cls(**kw)
        cfg.check()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def check(self):
        """Semantic checks beyond the schema."""
        g = self.grid
        if list(g.n_set) != sorted(g.n_set):
            raise ConfigurationError("n_set must be sorted ascending", "grid.n_set")
        self.make_grid()
        for t in self.checkpoints:
            if t > g.T:
                raise ConfigurationError(f"checkpoint {t} beyond the horizon", "checkpoints")
            k = t * g.M / g.T
            if abs(k - round(k)) > 1e-9:
                raise ConfigurationError(f"checkpoint {t} is not a fine-grid time", "checkpoints")
        if self.model.kind != "cluster":
            battery(self.phis)
        self.build_model()

    def make_grid(self) -> TimeGrid:
        g = self.grid
        grid = make_grid(g.T, g.M)
        for n in g.n_set:
            grid.coarse_stride_for(n)
        return grid

    def build_model(self):
        m = self.model
        try:
            if m.kind == "gwn":
                return builtin_gwn(m.name, **m.params)
            if m.kind == "spatial":
                if m.name != "cells":
                    raise ConfigurationError(f"unknown spatial model {m.name!r}", "model.name")
                return cell_model(**m.params)
            if m.name != "small":
                raise ConfigurationError(f"unknown cluster model {m.name!r}", "model.name")
            return small_cluster_model(**{"horizon": self.grid.T, **m.params})
        except TypeError as exc:
            raise ConfigurationError(str(exc), "model.params") from exc

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def schema() -> dict:
    text = resources.files("filterlab").joinpath("config_schema.json").read_text()
    return json.loads(text)


def validate(raw: dict):
    try:
        jsonschema.validate(raw, schema())
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "config"
        raise ConfigurationError(exc.message, where) from None


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(raw: dict, assignment: str) -> dict:
    """Apply ``dotted.key=value``; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigurationError(f"override {assignment!r} lacks '='", "--set")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"{key} does not name a nested field", key)
    node[parts[-1]] = _parse_value(value)
    return raw


def load_config(path=None, overrides=(), base: dict | None = None) -> ExperimentConfig:
    raw = copy.deepcopy(base) if base else {}
    if path is not None:
        try:
            raw.update(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid JSON: {exc}", "config") from None
        except OSError as exc:
            raise ConfigurationError(str(exc), "config") from None
    for item in overrides:
        apply_override(raw, item)
    return ExperimentConfig.from_dict(raw)


# -- manifests ------------------------------------------------------------------


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """Everything needed to reproduce a run.  Wall-clock times go to ``timings.json``."""

    command: str
    config_hash: str
    seed: int
    version: str = __version__
    config: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)  # file name -> sha256

    def record(self, path):
        path = Path(path)
        self.outputs[path.name] = file_digest(path)

    def write(self, out_dir, timings: dict | None = None):
        out_dir = Path(out_dir)
        text = json.dumps(asdict(self), indent=2, sort_keys=True, default=_jsonable)
        (out_dir / "manifest.json").write_text(text + "\n")
        if timings is not None:
            (out_dir / "timings.json").write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj))
