"""Sliding-window retrieval over scenes larger than the model window."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import torch
from torch import nn

from hyperaod.errors import DataError
from hyperaod.structures import BandStats, GranuleScene

WINDOW = 96
SCENE_MAGIC = b"SCN1"
QUICKLOOK_RANGE = (0.0, 1.5)


@dataclass(frozen=True)
class WindowPlan:
    origins: tuple
    window: int
    stride: int
    shape: tuple[int, int]


def _axis_origins(n: int, window: int, stride: int) -> list[int]:
    starts = list(range(0, n - window + 1, stride))
    if starts[-1] + window < n:
        starts.append(n - window)
    return starts


def slide_windows(height: int, width: int, window: int = WINDOW, stride: int = WINDOW) -> WindowPlan:
    if not 1 <= stride <= window:
        raise DataError(f"stride must be in [1, {window}], got {stride}")
    if height < window or width < window:
        raise DataError(f"scene {height}x{width} is smaller than the {window}px window")
    rows = _axis_origins(height, window, stride)
    cols = _axis_origins(width, window, stride)
    return WindowPlan(tuple((r, c) for r in rows for c in cols), window, stride, (height, width))


@dataclass
class SceneRetrieval:
    aod: np.ndarray
    coverage: np.ndarray
    valid: np.ndarray


Predictor = Union[nn.Module, Callable[[torch.Tensor], torch.Tensor]]


@torch.no_grad()
def retrieve_scene(model: Predictor, scene: GranuleScene, plan: WindowPlan,
                   band_stats: Optional[BandStats], batch_size: int = 8) -> SceneRetrieval:
    """Run ``model`` on every window and average overlapping predictions per pixel.

    Sums and counts accumulate in float64, so the result does not depend on
    the order in which windows are evaluated.
    """
    if band_stats is None:
        raise DataError("band statistics are required to standardize the scene")
    if plan.shape != scene.shape:
        raise DataError(f"plan is for {plan.shape}, scene is {scene.shape}")
    if band_stats.mean.shape != (scene.radiance.shape[0],):
        raise DataError("band statistics do not match the scene's band count")
    if isinstance(model, nn.Module):
        model.eval()
        dtype = next(model.parameters()).dtype
    else:
        dtype = torch.float32
    x_full = band_stats.standardize(scene.radiance, scene.valid)
    w = plan.window
    total = np.zeros(scene.shape, dtype=np.float64)
    count = np.zeros(scene.shape, dtype=np.int64)
    origins = list(plan.origins)
    for start in range(0, len(origins), batch_size):
        chunk = origins[start:start + batch_size]
        x = np.stack([x_full[:, r:r + w, c:c + w] for r, c in chunk])
        pred = model(torch.as_tensor(x, dtype=dtype))
        pred = pred.detach().cpu().numpy().astype(np.float64)
        if pred.shape != (len(chunk), w, w):
            raise DataError(f"model returned {pred.shape}, expected {(len(chunk), w, w)}")
        for (r, c), p in zip(chunk, pred):
            total[r:r + w, c:c + w] += p
            count[r:r + w, c:c + w] += 1
    return SceneRetrieval(total / count, count, scene.valid.copy())


_RAW_FIELDS = (("aod", "<f4"), ("coverage", "<i4"), ("valid", "u1"), ("lat", "<f8"), ("lon", "<f8"))


def write_scene_raw(path, result: SceneRetrieval, lat: np.ndarray, lon: np.ndarray,
                    granule_id: str = "") -> None:
    """SCN1 dump: magic, uint32 LE header length, JSON header, then the fields in header order."""
    h, w = result.aod.shape
    header = {"version": 1, "H": h, "W": w, "granule_id": granule_id,
              "fields": [[name, dt] for name, dt in _RAW_FIELDS]}
    arrays = {"aod": result.aod, "coverage": result.coverage, "valid": result.valid,
              "lat": lat, "lon": lon}
    blob = json.dumps(header).encode()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(SCENE_MAGIC + struct.pack("<I", len(blob)) + blob)
        for name, dt in _RAW_FIELDS:
            f.write(np.ascontiguousarray(arrays[name], dtype=dt).tobytes())


def read_scene_raw(path) -> dict:
    data = Path(path).read_bytes()
    if data[:4] != SCENE_MAGIC:
        raise DataError(f"{path}: not a scene dump")
    (hlen,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8:8 + hlen])
    h, w = header["H"], header["W"]
    offset = 8 + hlen
    out = {"granule_id": header["granule_id"]}
    for name, dt in header["fields"]:
        n = h * w * np.dtype(dt).itemsize
        if len(data) < offset + n:
            raise DataError(f"{path}: truncated at field {name}")
        out[name] = np.frombuffer(data, dt, h * w, offset).reshape(h, w).copy()
        offset += n
    out["valid"] = out["valid"].astype(bool)
    return out


def write_scene_netcdf(path, result: SceneRetrieval, lat: np.ndarray, lon: np.ndarray,
                       granule_id: str = "") -> None:
    import h5netcdf

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with h5netcdf.File(path, "w") as ds:
        ds.dimensions = {"y": result.aod.shape[0], "x": result.aod.shape[1]}
        ds.attrs["granule_id"] = granule_id
        aod = ds.create_variable("aod", ("y", "x"), "f4",
                                 data=np.where(result.valid, result.aod, np.nan).astype("f4"))
        aod.attrs["long_name"] = "aerosol optical depth at 550 nm"
        ds.create_variable("coverage", ("y", "x"), "i4", data=result.coverage.astype("i4"))
        ds.create_variable("valid", ("y", "x"), "u1", data=result.valid.astype("u1"))
        ds.create_variable("lat", ("y", "x"), "f8", data=lat)
        ds.create_variable("lon", ("y", "x"), "f8", data=lon)


def write_quicklook(path, aod: np.ndarray, valid: Optional[np.ndarray] = None) -> None:
    """8-bit PNG on a fixed colour ramp over [0, 1.5]; invalid pixels are black."""
    from matplotlib import colormaps
    from PIL import Image

    lo, hi = QUICKLOOK_RANGE
    scaled = np.clip((np.nan_to_num(aod, nan=lo) - lo) / (hi - lo), 0.0, 1.0)
    rgb = (colormaps["viridis"](scaled)[..., :3] * 255).round().astype(np.uint8)
    if valid is not None:
        rgb[~valid] = 0
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(rgb).save(path)
