"""Run configuration for the command-line pipeline (JSON on disk)."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

from .models.config import VARIANTS, ConfigError, ModelConfig

EXPERIMENT_MODELS = ("base", "mtl-w", "mtl-s", "mtl-s2w", "mix-w", "mix-ws")


@dataclass
class StemmerSettings:
    delta_s: Optional[int] = None
    delta_p: Optional[int] = None
    max_suffix_len: int = 6
    max_prefix_len: int = 4


@dataclass
class EvalSettings:
    include_unk: bool = True
    include_eos: bool = True
    slice_min_types: int = 10
    slice_min_tokens: int = 500


@dataclass
class RunConfig:
    train: Optional[str] = None
    dev: Optional[str] = None
    test: Optional[str] = None
    stem_map: Optional[str] = None
    out_dir: str = "runs"
    corpus_name: str = "corpus"
    variants: List[str] = field(default_factory=lambda: list(EXPERIMENT_MODELS))
    seeds: List[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    model: Dict[str, Any] = field(default_factory=dict)
    stemmer: StemmerSettings = field(default_factory=StemmerSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)
    control: bool = False
    shuffle_seed: int = 0
    workers: int = 1

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def model_config(self, variant: str, vocab_size: int, seed: int) -> ModelConfig:
        from .models.config import config_for_variant
        return config_for_variant(variant, vocab_size, **{**self.model, "seed": seed})

    def validate(self, require: tuple = ("train", "dev", "test")) -> "RunConfig":
        for name in require:
            value = getattr(self, name)
            if value is None:
                raise ConfigError(f"config field {name!r} is required")
            if not Path(value).is_file():
                raise ConfigError(f"{name} file not found: {value}")
        if self.stem_map is not None and not Path(self.stem_map).is_file():
            raise ConfigError(f"stem_map file not found: {self.stem_map}")
        for v in self.variants:
            if v not in EXPERIMENT_MODELS and v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ConfigError("seeds must be a non-empty list of distinct integers")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        bad = set(self.model) - {f.name for f in fields(ModelConfig)} | ({"vocab_size", "seed", "variant"} & set(self.model))
        if bad:
            raise ConfigError(f"model section has unsupported keys: {sorted(bad)}")
        # Build once with a dummy vocabulary to surface range errors early.
        ModelConfig(vocab_size=2, **self.model)
        return self


def _section(cls, data):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{cls.__name__} section must be an object")
    unknown = set(data) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**data)


def run_config_from_dict(data: Dict[str, Any], base_dir: Optional[Path] = None) -> RunConfig:
    data = dict(data)
    unknown = set(data) - {f.name for f in fields(RunConfig)}
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    data["stemmer"] = _section(StemmerSettings, data.get("stemmer"))
    data["eval"] = _section(EvalSettings, data.get("eval"))
    cfg = RunConfig(**data)
    if base_dir is not None:
        for name in ("train", "dev", "test", "stem_map", "out_dir"):
            value = getattr(cfg, name)
            if value is not None and not Path(value).is_absolute():
                setattr(cfg, name, str(base_dir / value))
    return cfg


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from None
    return run_config_from_dict(data, base_dir=path.parent)
