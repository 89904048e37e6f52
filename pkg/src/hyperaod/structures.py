"""Plain array containers passed between the pipeline, models and metrics."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

import numpy as np

from hyperaod.errors import DataError


def _check_wavelengths(wavelengths: np.ndarray, channels: int) -> None:
    if wavelengths.shape != (channels,):
        raise DataError(f"expected {channels} wavelengths, got shape {wavelengths.shape}")
    if channels > 1 and not np.all(np.diff(wavelengths) > 0):
        raise DataError("wavelengths must be strictly increasing")


@dataclass
class RadiancePatch:
    """A C x H x W radiance cube with its pixel validity mask."""

    values: np.ndarray
    valid: np.ndarray
    wavelengths: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.valid = np.asarray(self.valid, dtype=bool)
        self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64)
        if self.values.ndim != 3:
            raise DataError(f"radiance must be C x H x W, got shape {self.values.shape}")
        if self.valid.shape != self.values.shape[1:]:
            raise DataError(
                f"mask shape {self.valid.shape} does not match spatial shape {self.values.shape[1:]}")
        _check_wavelengths(self.wavelengths, self.values.shape[0])

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[1:]


@dataclass
class AODField:
    """AOD at 550 nm on an H x W grid."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.valid.shape:
            raise DataError(
                f"AOD values {self.values.shape} and mask {self.valid.shape} must be equal 2-D shapes")


@dataclass
class GranuleScene:
    """A collocated scene: L1B radiance stack plus resampled L2 AOD and geolocation."""

    granule_id: str
    acquisition_time: datetime
    radiance: np.ndarray
    aod: np.ndarray
    valid: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    wavelengths: np.ndarray

    def __post_init__(self):
        self.radiance = np.asarray(self.radiance, dtype=np.float32)
        self.aod = np.asarray(self.aod, dtype=np.float32)
        self.valid = np.asarray(self.valid, dtype=bool)
        self.lat = np.asarray(self.lat, dtype=np.float64)
        self.lon = np.asarray(self.lon, dtype=np.float64)
        self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64)
        if self.radiance.ndim != 3:
            raise DataError(f"scene radiance must be C x H x W, got {self.radiance.shape}")
        grid = self.radiance.shape[1:]
        for name in ("aod", "valid", "lat", "lon"):
            if getattr(self, name).shape != grid:
                raise DataError(f"scene field {name} has shape {getattr(self, name).shape}, expected {grid}")
        _check_wavelengths(self.wavelengths, self.radiance.shape[0])
        if np.any(np.abs(self.lat) > 90) or np.any(np.abs(self.lon) > 180):
            raise DataError("latitude/longitude out of range")

    @property
    def shape(self) -> tuple[int, int]:
        return self.radiance.shape[1:]


@dataclass
class BandStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)

    def standardize(self, radiance: np.ndarray, valid: np.ndarray) -> np.ndarray:
        """Per-band z-score over axis -3, with invalid pixels set to zero."""
        shape = (-1, 1, 1)
        z = (radiance.astype(np.float64) - self.mean.reshape(shape)) / self.std.reshape(shape)
        z = np.where(valid[..., None, :, :] & np.isfinite(z), z, 0.0)
        return z.astype(np.float32)
