"""Checkpoint archive shared by ViTCG and the pixel DNN baselines.

A checkpoint is one ``torch.save`` zip archive holding::

    format      "vitcg-ckpt-1"
    model_kind  "vitcg" | "pixel_dnn"
    variant     run label such as "vitcg_nocg" or "dnn8"
    config      the model config as a JSON string
    state_dict  parameter tensors keyed by their module path
    band_mean, band_std   float64 standardization statistics
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import torch
from torch import nn

from hyperaod.baselines import PixelDNN
from hyperaod.config import PixelDNNConfig, ViTCGConfig
from hyperaod.errors import CheckpointError
from hyperaod.model import ViTCG
from hyperaod.structures import BandStats

FORMAT_VERSION = "vitcg-ckpt-1"


@dataclass
class Checkpoint:
    model: nn.Module
    model_kind: str
    variant: str
    band_stats: Optional[BandStats]


def build_model(cfg: Union[ViTCGConfig, PixelDNNConfig]) -> nn.Module:
    if isinstance(cfg, ViTCGConfig):
        return ViTCG(cfg)
    if isinstance(cfg, PixelDNNConfig):
        return PixelDNN(cfg)
    raise CheckpointError(f"no model for config type {type(cfg).__name__}")


def save_checkpoint(path, model: nn.Module, band_stats: Optional[BandStats] = None,
                    variant: Optional[str] = None) -> None:
    kind = "vitcg" if isinstance(model, ViTCG) else "pixel_dnn"
    payload = {
        "format": FORMAT_VERSION,
        "model_kind": kind,
        "variant": variant or kind,
        "config": json.dumps(model.cfg.to_dict(), sort_keys=True),
        "state_dict": {k: v.detach().cpu().clone() for k, v in model.state_dict().items()},
    }
    if band_stats is not None:
        payload["band_mean"] = torch.from_numpy(band_stats.mean.copy())
        payload["band_std"] = torch.from_numpy(band_stats.std.copy())
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # torch raises several unrelated types here
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"{path} is not a {FORMAT_VERSION} checkpoint")
    kind = payload["model_kind"]
    cfg_dict = json.loads(payload["config"])
    if kind == "vitcg":
        cfg = ViTCGConfig.from_dict(cfg_dict)
    elif kind == "pixel_dnn":
        cfg = PixelDNNConfig.from_dict(cfg_dict)
    else:
        raise CheckpointError(f"unknown model kind {kind!r}")
    model = build_model(cfg)
    state = payload["state_dict"]
    dtype = next(iter(state.values())).dtype
    model.to(dtype)
    model.load_state_dict(state)
    model.eval()
    stats = None
    if "band_mean" in payload:
        stats = BandStats(payload["band_mean"].numpy(), payload["band_std"].numpy())
    return Checkpoint(model, kind, payload.get("variant", kind), stats)
