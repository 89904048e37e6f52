"""Run configuration: one YAML file, overridable from the command line."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from hyperaod.config import PixelDNNConfig, TrainConfig, ViTCGConfig
from hyperaod.errors import ConfigError

MODEL_KINDS = ("vitcg", "vitcg_nocg", "dnn8", "dnn291")
DATA_DIR_ENV = "HYPERAOD_DATA_DIR"


@dataclass
class SynthOptions:
    granules: int = 10
    height: int = 384
    width: int = 384
    channels: int = 8
    ratios: tuple = (0.6, 0.2, 0.2)
    texture_amplitude: float = 0.1
    sites_per_scene: int = 4


@dataclass
class PrepOptions:
    granules: list = field(default_factory=list)
    mapping: dict = field(default_factory=dict)
    ratios: tuple = (0.8, 0.1, 0.1)


@dataclass
class InferOptions:
    stride: int = 96
    format: str = "netcdf"
    scenes: list = field(default_factory=list)
    batch_size: int = 8


@dataclass
class AeronetOptions:
    window_minutes: float = 30.0
    sites: Optional[str] = None
    scenes: list = field(default_factory=list)


@dataclass
class RunConfig:
    data_dir: Path
    seed: int = 0
    model: str = "vitcg"
    vitcg: dict = field(default_factory=dict)
    dnn: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    synth: SynthOptions = field(default_factory=SynthOptions)
    prep: PrepOptions = field(default_factory=PrepOptions)
    infer: InferOptions = field(default_factory=InferOptions)
    aeronet: AeronetOptions = field(default_factory=AeronetOptions)

    def path(self, *parts) -> Path:
        return self.data_dir.joinpath(*parts)

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.data_dir / p

    def vitcg_config(self, channels: int) -> ViTCGConfig:
        opts = dict(self.vitcg)
        opts["channels"] = channels
        if self.model == "vitcg_nocg":
            opts["groups"] = 1
        return ViTCGConfig.from_dict(opts)

    def dnn_config(self, channels: int) -> PixelDNNConfig:
        from hyperaod.baselines import default_band_indices

        opts = dict(self.dnn)
        if self.model == "dnn8":
            opts.setdefault("band_indices", list(default_band_indices(channels, 8)))
            opts["input_bands"] = len(opts["band_indices"])
        else:
            opts.pop("band_indices", None)
            opts["input_bands"] = channels
        return PixelDNNConfig.from_dict(opts)

    def train_config(self) -> TrainConfig:
        opts = dict(self.train)
        opts.setdefault("seed", self.seed)
        return TrainConfig.from_dict(opts)


def _section(cls, data: Optional[dict], name: str):
    data = dict(data or {})
    try:
        obj = cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad [{name}] section: {exc}") from None
    return obj


def load_run_config(path: Optional[str], overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    raw: dict = {}
    base = Path.cwd()
    if path is not None:
        cfg_path = Path(path)
        if not cfg_path.exists():
            raise ConfigError(f"config file not found: {cfg_path}")
        try:
            raw = yaml.safe_load(cfg_path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {cfg_path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{cfg_path} must hold a mapping")
        base = cfg_path.parent
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    known = {"data_dir", "seed", "model", "vitcg", "dnn", "train", "synth", "prep", "infer", "aeronet"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    data_dir = raw.get("data_dir") or os.environ.get(DATA_DIR_ENV) or "hyperaod-data"
    data_dir = Path(data_dir)
    if not data_dir.is_absolute():
        data_dir = base / data_dir
    rc = RunConfig(
        data_dir=data_dir,
        seed=int(raw.get("seed", 0)),
        model=raw.get("model", "vitcg"),
        vitcg=dict(raw.get("vitcg") or {}),
        dnn=dict(raw.get("dnn") or {}),
        train=dict(raw.get("train") or {}),
        synth=_section(SynthOptions, raw.get("synth"), "synth"),
        prep=_section(PrepOptions, raw.get("prep"), "prep"),
        infer=_section(InferOptions, raw.get("infer"), "infer"),
        aeronet=_section(AeronetOptions, raw.get("aeronet"), "aeronet"),
    )
    if "seed" in overrides:
        rc.seed = int(overrides["seed"])
        rc.train["seed"] = rc.seed
    if "model" in overrides:
        rc.model = overrides["model"]
    if "stride" in overrides:
        rc.infer.stride = int(overrides["stride"])
    if rc.model not in MODEL_KINDS:
        raise ConfigError(f"model must be one of {MODEL_KINDS}, got {rc.model!r}")
    if rc.infer.format not in ("netcdf", "raw"):
        raise ConfigError(f"infer.format must be 'netcdf' or 'raw', got {rc.infer.format!r}")
    return rc
