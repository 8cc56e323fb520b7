"""Experiment configuration: a JSON file describing one benchmark run."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


DEFAULT_CAPPED_METHODS = ("wachter", "tsevo")


@dataclass
class DatasetSpec:
    name: str
    format: str  # "univariate" | "multivariate"
    train: str | None = None
    test: str | None = None
    manifest: str | None = None
    normalize: bool = False


@dataclass
class ModelSpec:
    arch: str
    seed: int = 0
    epochs: int = 50
    batch: int = 16
    learning_rate: float = 1e-3

    @property
    def tag(self) -> str:
        return f"{self.arch}-s{self.seed}"


@dataclass
class MethodSpec:
    name: str
    config: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    datasets: list[DatasetSpec]
    models: list[ModelSpec]
    methods: list[MethodSpec]
    name: str = "experiment"
    global_seed: int = 0
    sample_cap: int = 160
    capped_methods: tuple[str, ...] = DEFAULT_CAPPED_METHODS
    timeout_s: float = 3600.0
    consecutive_timeout_abort: int = 10
    workers: int = 1
    metrics: dict = field(default_factory=dict)
    consistency_pairs: list[tuple[int, int]] = field(default_factory=list)
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        if self.sample_cap < 1:
            raise ConfigError(f"sample_cap must be >= 1, got {self.sample_cap}")
        if self.timeout_s <= 0:
            raise ConfigError(f"timeout_s must be > 0, got {self.timeout_s}")
        if self.consecutive_timeout_abort < 1:
            raise ConfigError("consecutive_timeout_abort must be >= 1")
        if not self.methods:
            raise ConfigError("at least one method is required")
        if not self.models:
            raise ConfigError("at least one model is required")
        if not self.datasets:
            raise ConfigError("at least one dataset is required")
        for a, b in self.consistency_pairs:
            if not (0 <= a < len(self.models) and 0 <= b < len(self.models)):
                raise ConfigError(f"consistency pair ({a}, {b}) out of model range")

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "global_seed": self.global_seed,
            "sample_cap": self.sample_cap,
            "capped_methods": list(self.capped_methods),
            "timeout_s": self.timeout_s,
            "consecutive_timeout_abort": self.consecutive_timeout_abort,
            "workers": self.workers,
            "metrics": self.metrics,
            "consistency_pairs": [list(p) for p in self.consistency_pairs],
            "datasets": [
                {k: v for k, v in vars(d).items() if v is not None} for d in self.datasets
            ],
            "models": [vars(m) for m in self.models],
            "methods": [{"name": m.name, "config": m.config} for m in self.methods],
        }


def config_from_dict(raw: dict, base_dir: str | Path = ".") -> ExperimentConfig:
    try:
        datasets = [DatasetSpec(**d) for d in raw["datasets"]]
        models = [ModelSpec(**m) for m in raw["models"]]
        methods = [MethodSpec(**m) for m in raw["methods"]]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad experiment config: {exc}") from None
    for d in datasets:
        if d.format not in ("univariate", "multivariate"):
            raise ConfigError(f"dataset {d.name}: unknown format {d.format!r}")
        if d.format == "univariate" and not d.train:
            raise ConfigError(f"dataset {d.name}: univariate needs a train path")
        if d.format == "multivariate" and not d.manifest:
            raise ConfigError(f"dataset {d.name}: multivariate needs a manifest path")
    kwargs = {
        k: raw[k]
        for k in (
            "name",
            "global_seed",
            "sample_cap",
            "timeout_s",
            "consecutive_timeout_abort",
            "workers",
            "metrics",
        )
        if k in raw
    }
    if "capped_methods" in raw:
        kwargs["capped_methods"] = tuple(raw["capped_methods"])
    if "consistency_pairs" in raw:
        kwargs["consistency_pairs"] = [tuple(p) for p in raw["consistency_pairs"]]
    return ExperimentConfig(
        datasets=datasets,
        models=models,
        methods=methods,
        base_dir=Path(base_dir),
        **kwargs,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw, base_dir=path.parent)
