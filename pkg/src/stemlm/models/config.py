from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

VARIANTS = ("base", "mtl-w", "mtl-s", "mtl-s2w", "mix-w", "mix-stem")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 256
    hidden_dim: int = 512
    num_layers: int = 2
    K: int = 3
    dropout: float = 0.3
    arch: str = "base"              # base | mix
    heads: str = "word"             # word | word+aux
    primary_target: str = "word"    # word | stem (stem: the q model of Mix-WS)
    aux_target: str = "word"        # word | stem | s2w
    mtl_lambda: float = 0.5
    s2w_switch_epoch: int = 5
    epochs: int = 15
    batch_size: int = 20
    bptt: int = 35
    optimizer: str = "adam"
    learning_rate: float = 5e-5
    lr_decay: float = 0.8
    clip_norm: float = 5.0
    init_range: float = 0.1
    head_init_gain: float = 3.0
    dtype: str = "float32"
    eval_batch_size: int = 10
    seed: int = 0
    variant: Optional[str] = None

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ConfigError("vocab_size must be positive")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if not 0.0 <= self.mtl_lambda <= 1.0:
            raise ConfigError(f"mtl_lambda must lie in [0, 1], got {self.mtl_lambda}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.arch not in ("base", "mix"):
            raise ConfigError(f"unknown arch {self.arch!r}")
        if self.heads not in ("word", "word+aux"):
            raise ConfigError(f"unknown heads {self.heads!r}")
        if self.primary_target not in ("word", "stem") or self.aux_target not in ("word", "stem", "s2w"):
            raise ConfigError("targets must be word/stem (aux may also be s2w)")
        if self.heads == "word+aux" and self.aux_target == "s2w" and not 0 <= self.s2w_switch_epoch < self.epochs:
            raise ConfigError(
                f"s2w_switch_epoch {self.s2w_switch_epoch} must be below epochs {self.epochs}")
        if self.epochs < 1 or self.batch_size < 1 or self.bptt < 1:
            raise ConfigError("epochs, batch_size and bptt must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def needs_stems(self) -> bool:
        return self.primary_target == "stem" or (
            self.heads == "word+aux" and self.aux_target in ("stem", "s2w"))

    def aux_target_at(self, epoch: int) -> Optional[str]:
        """Target of the auxiliary head during 0-based ``epoch``."""
        if self.heads != "word+aux":
            return None
        if self.aux_target == "s2w":
            return "stem" if epoch < self.s2w_switch_epoch else "word"
        return self.aux_target

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**d)

    def with_(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


def config_for_variant(variant: str, vocab_size: int, **overrides) -> ModelConfig:
    """ModelConfig for one of the named training variants."""
    presets = {
        "base": dict(arch="base", heads="word"),
        "mtl-w": dict(arch="base", heads="word+aux", aux_target="word"),
        "mtl-s": dict(arch="base", heads="word+aux", aux_target="stem"),
        "mtl-s2w": dict(arch="base", heads="word+aux", aux_target="s2w"),
        "mix-w": dict(arch="mix", heads="word"),
        "mix-stem": dict(arch="mix", heads="word", primary_target="stem"),
    }
    if variant not in presets:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
    params = dict(presets[variant])
    params.update(overrides)
    params["variant"] = variant
    return ModelConfig(vocab_size=vocab_size, **params)
