"""Reading collocated L1B radiance / L2 AOD granule pairs from NetCDF-4 files.

Variable paths and flag bits come from an ``IngestMapping``; nothing about a
particular product layout is hard-coded here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

import h5netcdf
import numpy as np

from hyperaod.datapipe.quality import filter_quality
from hyperaod.datapipe.resample import resample_aod, resample_factor
from hyperaod.errors import DataError
from hyperaod.structures import GranuleScene


@dataclass(frozen=True)
class IngestMapping:
    radiance: str = "observation_data/radiance"
    wavelengths: str = "sensor_band_parameters/wavelength"
    flags: Optional[str] = "observation_data/quality_flags"
    lat: str = "geolocation_data/latitude"
    lon: str = "geolocation_data/longitude"
    aod: str = "geophysical_data/aot"
    aod_wavelengths: Optional[str] = "sensor_band_parameters/wavelength"
    aod_target_nm: float = 550.0
    time_attr: str = "time_coverage_start"
    bad_bits: tuple = field(default_factory=tuple)
    coarse_km: float = 8.4
    fine_km: float = 1.2
    time_window_minutes: Optional[float] = None

    @classmethod
    def from_dict(cls, data: dict) -> "IngestMapping":
        data = dict(data)
        if "bad_bits" in data:
            data["bad_bits"] = tuple(data["bad_bits"])
        return cls(**data)


def _read(ds, path: str, what: str) -> np.ndarray:
    try:
        var = ds[path]
    except KeyError:
        raise DataError(f"{ds.filename}: variable {path!r} ({what}) not found") from None
    arr = np.asarray(var[...])
    attrs = var.attrs
    out = arr.astype(np.float64)
    if "_FillValue" in attrs:
        out[arr == attrs["_FillValue"]] = np.nan
    if "scale_factor" in attrs:
        out = out * float(attrs["scale_factor"])
    if "add_offset" in attrs:
        out = out + float(attrs["add_offset"])
    return out


def _read_time(ds, attr: str) -> Optional[datetime]:
    raw = ds.attrs.get(attr)
    if raw is None:
        return None
    if isinstance(raw, bytes):
        raw = raw.decode()
    when = datetime.fromisoformat(str(raw).replace("Z", "+00:00"))
    return when if when.tzinfo else when.replace(tzinfo=timezone.utc)


def _open(path):
    try:
        return h5netcdf.File(path, "r")
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc


def load_granule(l1b_path, l2_path, mapping: IngestMapping = IngestMapping(),
                 granule_id: Optional[str] = None) -> tuple[GranuleScene, dict]:
    """Quality-filter, align and resample one granule pair -> (scene, report)."""
    with _open(l1b_path) as l1b:
        radiance = _read(l1b, mapping.radiance, "radiance")
        wavelengths = _read(l1b, mapping.wavelengths, "band wavelengths")
        flags = None
        if mapping.flags:
            flags = np.asarray(l1b[mapping.flags][...]) if mapping.flags in l1b else None
            if flags is None:
                raise DataError(f"{l1b_path}: flag variable {mapping.flags!r} not found")
        lat = _read(l1b, mapping.lat, "latitude")
        lon = _read(l1b, mapping.lon, "longitude")
        t_l1b = _read_time(l1b, mapping.time_attr)
    with _open(l2_path) as l2:
        aod = _read(l2, mapping.aod, "AOD")
        if aod.ndim == 3:
            if not mapping.aod_wavelengths:
                raise DataError(f"{l2_path}: 3-D AOD needs aod_wavelengths to pick a band")
            aod_lam = _read(l2, mapping.aod_wavelengths, "AOD wavelengths")
            band = int(np.argmin(np.abs(aod_lam - mapping.aod_target_nm)))
            aod = aod[..., band] if aod.shape[-1] == aod_lam.size else aod[band]
        t_l2 = _read_time(l2, mapping.time_attr)

    if radiance.ndim != 3:
        raise DataError(f"{l1b_path}: radiance must be bands x rows x cols")
    if (mapping.time_window_minutes is not None and t_l1b is not None and t_l2 is not None
            and abs((t_l1b - t_l2).total_seconds()) > 60 * mapping.time_window_minutes):
        raise DataError(f"L1B/L2 times differ by more than {mapping.time_window_minutes} min")

    fine_aod, aod_valid = resample_aod(aod, None, coarse_km=mapping.coarse_km,
                                       fine_km=mapping.fine_km, fine_shape=radiance.shape[1:])
    valid = filter_quality(radiance, flags, fine_aod, mapping.bad_bits) & aod_valid
    valid &= fine_aod >= 0
    fine_aod = np.where(valid, fine_aod, np.nan)
    gid = granule_id or str(l1b_path).rsplit("/", 1)[-1]
    scene = GranuleScene(gid, t_l1b or datetime(1970, 1, 1, tzinfo=timezone.utc),
                         radiance, fine_aod, valid, lat, lon, wavelengths)
    report = {
        "granule_id": gid,
        "resample_factor": resample_factor(mapping.coarse_km, mapping.fine_km),
        "pixels": int(valid.size),
        "pixels_filtered": int((~valid).sum()),
    }
    return scene, report


def write_scene(path, scene: GranuleScene) -> None:
    """Store a collocated scene as NetCDF-4 (the layout ``read_scene`` expects)."""
    from pathlib import Path

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with h5netcdf.File(path, "w") as ds:
        c, h, w = scene.radiance.shape
        ds.dimensions = {"band": c, "y": h, "x": w}
        ds.attrs["granule_id"] = scene.granule_id
        ds.attrs["time_coverage_start"] = scene.acquisition_time.isoformat()
        ds.create_variable("wavelength", ("band",), "f8", data=scene.wavelengths)
        ds.create_variable("radiance", ("band", "y", "x"), "f4", data=scene.radiance)
        ds.create_variable("aod", ("y", "x"), "f4", data=scene.aod)
        ds.create_variable("valid", ("y", "x"), "u1", data=scene.valid.astype("u1"))
        ds.create_variable("lat", ("y", "x"), "f8", data=scene.lat)
        ds.create_variable("lon", ("y", "x"), "f8", data=scene.lon)


def read_scene(path) -> GranuleScene:
    with _open(path) as ds:
        try:
            return GranuleScene(
                str(ds.attrs["granule_id"]), _read_time(ds, "time_coverage_start"),
                np.asarray(ds["radiance"][...]), np.asarray(ds["aod"][...]),
                np.asarray(ds["valid"][...]).astype(bool), np.asarray(ds["lat"][...]),
                np.asarray(ds["lon"][...]), np.asarray(ds["wavelength"][...]))
        except KeyError as exc:
            raise DataError(f"{path}: not a scene file (missing {exc})") from None
