"""Pixel-wise 1-D DNN baselines (8-band and full-spectrum) and band subsetting."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from hyperaod.config import PixelDNNConfig
from hyperaod.errors import ConfigError, DataError
from hyperaod.structures import AODField, RadiancePatch


def default_band_indices(total: int, count: int = 8) -> tuple[int, ...]:
    """``count`` evenly spaced band indices over [0, total)."""
    if not 1 <= count <= total:
        raise ConfigError(f"cannot pick {count} bands out of {total}")
    idx = np.floor(np.arange(count) * total / count + total / (2 * count)).astype(int)
    return tuple(int(i) for i in idx)


def _check_indices(band_indices, channels: int) -> np.ndarray:
    idx = np.asarray(band_indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise DataError("band_indices must be a non-empty 1-D list")
    if idx.min() < 0 or idx.max() >= channels:
        raise DataError(f"band index out of range [0, {channels}): {idx.tolist()}")
    if np.any(np.diff(idx) == 0):
        raise DataError(f"duplicate band index in {idx.tolist()}")
    if np.any(np.diff(idx) < 0):
        raise DataError(f"band indices must be sorted: {idx.tolist()}")
    return idx


def select_bands(patch: RadiancePatch, band_indices) -> RadiancePatch:
    idx = _check_indices(band_indices, patch.channels)
    return RadiancePatch(patch.values[idx], patch.valid.copy(), patch.wavelengths[idx])


class PixelDNN(nn.Module):
    """The same MLP applied to the spectrum of every pixel.

    Accepts (B, C_full, H, W) input; if the config carries ``band_indices`` the
    subset is taken inside ``forward`` so callers can feed full cubes.
    """

    def __init__(self, cfg: PixelDNNConfig = PixelDNNConfig()):
        super().__init__()
        self.cfg = cfg
        layers = []
        width = cfg.input_bands
        for h in cfg.hidden_sizes:
            layers += [nn.Linear(width, h), nn.GELU()]
            width = h
        layers.append(nn.Linear(width, 1))
        self.mlp = nn.Sequential(*layers)
        if cfg.band_indices is not None:
            self.register_buffer("band_indices", torch.tensor(cfg.band_indices), persistent=False)
        else:
            self.band_indices = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.band_indices is not None:
            if x.shape[1] <= int(self.band_indices[-1]):
                raise DataError(f"input has {x.shape[1]} bands, selection needs more")
            x = x.index_select(1, self.band_indices)
        if x.shape[1] != self.cfg.input_bands:
            raise DataError(f"expected {self.cfg.input_bands} bands, got {x.shape[1]}")
        return self.mlp(x.permute(0, 2, 3, 1))[..., 0]


@torch.no_grad()
def pixel_dnn_forward(model: PixelDNN, patch: RadiancePatch) -> AODField:
    """Evaluate one patch whose bands are already the model's input bands."""
    if patch.channels != model.cfg.input_bands:
        raise DataError(f"patch has {patch.channels} bands, model expects {model.cfg.input_bands}")
    param = next(model.parameters())
    x = torch.as_tensor(patch.values, dtype=param.dtype)[None]
    out = model.mlp(x.permute(0, 2, 3, 1))[0, ..., 0]
    return AODField(out.numpy().astype(np.float32), patch.valid.copy())
