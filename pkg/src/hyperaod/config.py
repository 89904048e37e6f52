"""Model and training hyperparameters.

Each config is a frozen dataclass that validates itself on construction and
round-trips through plain dicts, which is how checkpoints and run files store
them.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Any, Optional

from hyperaod.errors import ConfigError


def _from_dict(cls, data: dict[str, Any]):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        kwargs[k] = tuple(v) if isinstance(v, list) else v
    return cls(**kwargs)


@dataclass(frozen=True)
class ViTCGConfig:
    """Architecture of the channel-grouped ViT regressor.

    ``token_dim`` defaults to 384. With 768 and four standard blocks the
    encoder alone holds ~28 M weights, far above the compact size the model
    is meant to have; see README for the count at both widths.
    """

    channels: int = 291
    groups: int = 3
    spatial_size: int = 96
    patch_size: int = 8
    token_dim: int = 384
    encoder_depth: int = 4
    num_heads: int = 8
    mlp_ratio: float = 4.0
    decoder_channels: tuple[int, ...] = (256, 128, 64, 32)
    norm_style: str = "post"

    def __post_init__(self):
        object.__setattr__(self, "decoder_channels", tuple(int(c) for c in self.decoder_channels))
        for name in ("channels", "groups", "spatial_size", "patch_size", "token_dim",
                     "encoder_depth", "num_heads"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not self.mlp_ratio > 0:
            raise ConfigError(f"mlp_ratio must be positive, got {self.mlp_ratio}")
        if self.channels % self.groups:
            raise ConfigError(
                f"channels C={self.channels} is not divisible by groups G={self.groups}")
        if self.spatial_size % self.patch_size:
            raise ConfigError(
                f"spatial_size {self.spatial_size} is not divisible by patch_size {self.patch_size}")
        if self.token_dim % self.num_heads:
            raise ConfigError(
                f"token_dim {self.token_dim} is not divisible by num_heads {self.num_heads}")
        stages = math.log2(self.patch_size)
        if stages != int(stages):
            raise ConfigError(f"patch_size {self.patch_size} is not a power of two")
        if len(self.decoder_channels) != int(stages) + 1:
            raise ConfigError(
                f"decoder_channels needs log2(p)+1 = {int(stages) + 1} entries, "
                f"got {len(self.decoder_channels)}")
        if any(c < 1 for c in self.decoder_channels):
            raise ConfigError("decoder_channels must be positive")
        if any(a < b for a, b in zip(self.decoder_channels, self.decoder_channels[1:])):
            raise ConfigError(f"decoder_channels must be non-increasing: {self.decoder_channels}")
        if self.norm_style != "post":
            raise ConfigError(f"unsupported norm_style {self.norm_style!r}")

    @property
    def group_channels(self) -> int:
        return self.channels // self.groups

    @property
    def grid_size(self) -> int:
        return self.spatial_size // self.patch_size

    @property
    def num_tokens(self) -> int:
        return self.groups * self.grid_size ** 2

    @property
    def upsample_stages(self) -> int:
        return int(math.log2(self.patch_size))

    @property
    def mlp_hidden(self) -> int:
        return int(round(self.token_dim * self.mlp_ratio))

    def replace(self, **changes) -> "ViTCGConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["decoder_channels"] = list(self.decoder_channels)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ViTCGConfig":
        return _from_dict(cls, data)


@dataclass(frozen=True)
class PixelDNNConfig:
    input_bands: int = 291
    hidden_sizes: tuple[int, ...] = (256, 128, 64)
    band_indices: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.band_indices is not None:
            object.__setattr__(self, "band_indices", tuple(int(i) for i in self.band_indices))
        if self.input_bands < 1:
            raise ConfigError(f"input_bands must be positive, got {self.input_bands}")
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigError(f"hidden sizes must be positive: {self.hidden_sizes}")
        idx = self.band_indices
        if idx is not None:
            if len(idx) != self.input_bands:
                raise ConfigError(
                    f"band_indices has {len(idx)} entries but input_bands={self.input_bands}")
            if any(b <= a for a, b in zip(idx, idx[1:])) or (idx and idx[0] < 0):
                raise ConfigError(f"band_indices must be strictly increasing and >= 0: {idx}")

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        if self.band_indices is not None:
            d["band_indices"] = list(self.band_indices)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PixelDNNConfig":
        return _from_dict(cls, data)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    effective_batch: int = 256
    micro_batch: int = 8
    optimizer: str = "adamw"
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    patience: int = 50
    max_epochs: int = 1000
    seed: int = 0
    scheduler: str = "none"

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.micro_batch < 1 or self.effective_batch < 1:
            raise ConfigError("batch sizes must be positive")
        if self.effective_batch % self.micro_batch:
            raise ConfigError(
                f"effective_batch {self.effective_batch} is not a multiple of "
                f"micro_batch {self.micro_batch}")
        if self.optimizer != "adamw":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}")
        if self.scheduler not in ("none", "cosine"):
            raise ConfigError(f"unsupported scheduler {self.scheduler!r}")
        if self.patience < 1 or self.max_epochs < 1:
            raise ConfigError("patience and max_epochs must be positive")

    @property
    def accumulation_steps(self) -> int:
        return self.effective_batch // self.micro_batch

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        return _from_dict(cls, data)
