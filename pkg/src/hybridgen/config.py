"""Experiment configuration: one YAML file describing every component."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .checkpoint import config_hash, dataclass_from_dict
from .diffusion import DiffusionHeadConfig
from .errors import ConfigurationError
from .generator_training import GeneratorTrainConfig
from .sampling import SamplerConfig
from .tokenizer import TokenizerConfig
from .tokenizer_training import TokenizerTrainConfig
from .transformer import GeneratorConfig


@dataclass
class DataConfig:
    root: str | None = None
    resolution: int = 32
    finetune_resolution: int | None = 64
    condition_mode: str = "class_label"
    num_classes: int = 9


@dataclass
class ExperimentConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    tokenizer_train: TokenizerTrainConfig = field(default_factory=TokenizerTrainConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    head: DiffusionHeadConfig = field(default_factory=DiffusionHeadConfig)
    generator_train: GeneratorTrainConfig = field(default_factory=GeneratorTrainConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def __post_init__(self):
        if self.generator.vocab != self.tokenizer.codebook_size:
            raise ConfigurationError(
                f"generator.vocab ({self.generator.vocab}) must equal"
                f" tokenizer.codebook_size ({self.tokenizer.codebook_size})"
            )
        if self.head.target_dim != self.tokenizer.latent_channels:
            raise ConfigurationError(
                f"head.target_dim ({self.head.target_dim}) must equal"
                f" tokenizer.latent_channels ({self.tokenizer.latent_channels})"
            )
        if (self.data.finetune_resolution is not None
                and self.data.finetune_resolution != 2 * self.data.resolution):
            raise ConfigurationError(
                "finetune_resolution must be exactly twice the pre-train resolution"
            )

    def to_dict(self) -> dict:
        return _to_plain(dataclasses.asdict(self))

    def hash(self) -> str:
        return config_hash(self.to_dict())


def _to_plain(obj):
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


_SECTIONS = {
    "data": DataConfig,
    "tokenizer": TokenizerConfig,
    "tokenizer_train": TokenizerTrainConfig,
    "generator": GeneratorConfig,
    "head": DiffusionHeadConfig,
    "generator_train": GeneratorTrainConfig,
    "sampler": SamplerConfig,
}


def experiment_from_dict(data: dict) -> ExperimentConfig:
    unknown = set(data) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    kwargs: dict = {"seed": data.get("seed", 0)}
    for name, cls in _SECTIONS.items():
        section = dict(data.get(name, {}))
        defaults = dataclasses.asdict(cls())
        bad = set(section) - set(defaults)
        if bad:
            raise ConfigurationError(f"unknown keys in [{name}]: {sorted(bad)}")
        merged = {**defaults, **section}
        try:
            kwargs[name] = dataclass_from_dict(cls, merged)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid [{name}] config: {exc}") from exc
    return ExperimentConfig(**kwargs)


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path} must contain a mapping")
    return experiment_from_dict(raw)


def save_experiment_config(path: str | Path, config: ExperimentConfig) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=True))
