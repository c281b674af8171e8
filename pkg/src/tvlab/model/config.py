"""Transformer hyperparameters and the derived tensor manifest."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any

from ..errors import ConfigError

Shape = tuple[int, ...]


@dataclass(frozen=True)
class ModelConfig:
    """Encoder + head dimensions.

    Desk defaults keep the test suite fast; the full-size setup (hidden 256,
    max_len 150) is reachable through configuration. ``embedding_size=0``
    means "same as hidden_size"; setting it lower enables the factorized
    embedding used together with ``share_layers`` (ALBERT mode).
    """

    vocab_size: int
    max_len: int = 32
    hidden_size: int = 64
    embedding_size: int = 0
    num_layers: int = 2
    num_heads: int = 2
    ff_size: int = 0
    dropout: float = 0.2
    share_layers: bool = False
    num_classes: int = 3

    def __post_init__(self) -> None:
        if self.embedding_size == 0:
            object.__setattr__(self, "embedding_size", self.hidden_size)
        if self.ff_size == 0:
            object.__setattr__(self, "ff_size", 4 * self.hidden_size)
        problems = []
        if self.vocab_size < 5:
            problems.append(f"vocab_size={self.vocab_size} must cover the 5 special tokens")
        if self.max_len < 2:
            problems.append(f"max_len={self.max_len} must be >= 2")
        if self.hidden_size % self.num_heads != 0:
            problems.append(
                f"hidden_size={self.hidden_size} not divisible by num_heads={self.num_heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            problems.append(f"dropout={self.dropout} must be in [0, 1)")
        for name in ("max_len", "hidden_size", "embedding_size", "num_layers",
                     "num_heads", "ff_size", "num_classes"):
            if getattr(self, name) <= 0:
                problems.append(f"{name}={getattr(self, name)} must be positive")
        if problems:
            raise ConfigError("; ".join(problems))

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)


def layer_prefixes(config: ModelConfig) -> list[str]:
    """Parameter-group prefix for each encoder layer; one shared group in
    ALBERT mode."""
    if config.share_layers:
        return ["encoder.shared"] * config.num_layers
    return [f"encoder.layer{i}" for i in range(config.num_layers)]


def manifest(config: ModelConfig) -> list[tuple[str, Shape]]:
    """Ordered (name, shape) list of every parameter tensor."""
    V, T = config.vocab_size, config.max_len
    H, E, F, C = (
        config.hidden_size,
        config.embedding_size,
        config.ff_size,
        config.num_classes,
    )
    entries: list[tuple[str, Shape]] = [
        ("embeddings.token", (V, E)),
        ("embeddings.position", (T, E)),
    ]
    if E != H:
        entries.append(("embeddings.projection", (E, H)))
    for prefix in dict.fromkeys(layer_prefixes(config)):
        entries += [
            (f"{prefix}.attn.norm.gain", (H,)),
            (f"{prefix}.attn.norm.bias", (H,)),
            (f"{prefix}.attn.wq", (H, H)),
            (f"{prefix}.attn.bq", (H,)),
            (f"{prefix}.attn.wk", (H, H)),
            (f"{prefix}.attn.bk", (H,)),
            (f"{prefix}.attn.wv", (H, H)),
            (f"{prefix}.attn.bv", (H,)),
            (f"{prefix}.attn.wo", (H, H)),
            (f"{prefix}.attn.bo", (H,)),
            (f"{prefix}.ff.norm.gain", (H,)),
            (f"{prefix}.ff.norm.bias", (H,)),
            (f"{prefix}.ff.w1", (H, F)),
            (f"{prefix}.ff.b1", (F,)),
            (f"{prefix}.ff.w2", (F, H)),
            (f"{prefix}.ff.b2", (H,)),
        ]
    entries += [
        ("encoder.final_norm.gain", (H,)),
        ("encoder.final_norm.bias", (H,)),
        ("mlm.transform.w", (H, E)),
        ("mlm.transform.b", (E,)),
        ("mlm.norm.gain", (E,)),
        ("mlm.norm.bias", (E,)),
        ("mlm.output_bias", (V,)),
        ("disc.transform.w", (H, H)),
        ("disc.transform.b", (H,)),
        ("disc.output.w", (H,)),
        ("disc.output.b", (1,)),
        ("cls.w", (H, C)),
        ("cls.b", (C,)),
    ]
    return entries
