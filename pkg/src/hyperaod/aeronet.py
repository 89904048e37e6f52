"""Validation of retrieved AOD against ground-based sun-photometer records."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from hyperaod.errors import DataError
from hyperaod.metrics import MetricsReport, compute_metrics

log = logging.getLogger(__name__)

BLOCK = 8
EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class SiteRecord:
    site: str
    lat: float
    lon: float
    time: datetime
    aod_500: float
    angstrom: float

    def __post_init__(self):
        if self.aod_500 < 0:
            raise DataError(f"{self.site}: negative AOD {self.aod_500}")
        if abs(self.lat) > 90 or abs(self.lon) > 180:
            raise DataError(f"{self.site}: coordinates out of range")
        if not -1.0 <= self.angstrom <= 4.0:
            log.warning("%s: unusual Angstrom exponent %.3f", self.site, self.angstrom)


def _parse_time(text: str) -> datetime:
    when = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    return when if when.tzinfo else when.replace(tzinfo=timezone.utc)


def read_sites_csv(path, columns: Optional[dict] = None) -> list[SiteRecord]:
    """Read site records. ``columns`` maps SiteRecord fields to CSV headers when they differ."""
    names = {f: f for f in ("site", "lat", "lon", "time", "aod_500", "angstrom")}
    names.update(columns or {})
    records = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(names.values()) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            records.append(SiteRecord(row[names["site"]], float(row[names["lat"]]),
                                      float(row[names["lon"]]), _parse_time(row[names["time"]]),
                                      float(row[names["aod_500"]]), float(row[names["angstrom"]])))
    return records


def write_sites_csv(path, records: Sequence[SiteRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["site", "lat", "lon", "time", "aod_500", "angstrom"])
        for r in records:
            w.writerow([r.site, repr(r.lat), repr(r.lon), r.time.isoformat(), repr(r.aod_500),
                        repr(r.angstrom)])


def angstrom_adjust(tau0: float, alpha: float, lambda0: float = 500.0, lambda1: float = 550.0) -> float:
    """tau(lambda1) = tau(lambda0) * (lambda1 / lambda0) ** -alpha."""
    if lambda0 <= 0 or lambda1 <= 0:
        raise DataError(f"wavelengths must be positive, got {lambda0}, {lambda1}")
    return tau0 * (lambda1 / lambda0) ** (-alpha)


def temporal_match(overpass_time: datetime, records: Sequence[SiteRecord],
                   window_minutes: float = 30.0) -> list[SiteRecord]:
    """Records within +-window of the overpass (inclusive), closest one per site."""
    window = timedelta(minutes=window_minutes)
    best: dict[str, SiteRecord] = {}
    for r in records:
        dt = abs(r.time - overpass_time)
        if dt > window:
            continue
        cur = best.get(r.site)
        if cur is None or dt < abs(cur.time - overpass_time):
            best[r.site] = r
    return sorted(best.values(), key=lambda r: (r.time, r.site))


def nearest_pixel(lat: np.ndarray, lon: np.ndarray, site_lat: float, site_lon: float) -> tuple[int, int]:
    """Grid cell with the smallest great-circle (haversine) distance to the site."""
    phi1, phi2 = np.deg2rad(site_lat), np.deg2rad(lat)
    dphi = phi2 - phi1
    dlmb = np.deg2rad(lon - site_lon)
    a = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
    idx = int(np.argmin(a))
    return np.unravel_index(idx, lat.shape)


def inside_scene(lat: np.ndarray, lon: np.ndarray, site_lat: float, site_lon: float) -> bool:
    return bool(lat.min() <= site_lat <= lat.max() and lon.min() <= site_lon <= lon.max())


def block_bounds(r: int, c: int, shape, size: int = BLOCK):
    """Rows [r - size/2, r + size/2) and likewise for columns, clipped to the grid."""
    half = size // 2
    return (max(r - half, 0), min(r + half, shape[0]), max(c - half, 0), min(c + half, shape[1]))


def collocate_site(pred: np.ndarray, valid: np.ndarray, lat: np.ndarray, lon: np.ndarray,
                   site_lat: float, site_lon: float) -> float:
    """Mean prediction over the valid pixels of the 8x8 block around the site's nearest pixel."""
    if not inside_scene(lat, lon, site_lat, site_lon):
        raise DataError(f"site ({site_lat}, {site_lon}) lies outside the scene")
    r, c = nearest_pixel(lat, lon, site_lat, site_lon)
    r0, r1, c0, c1 = block_bounds(r, c, pred.shape)
    block = np.asarray(pred[r0:r1, c0:c1], dtype=np.float64)
    ok = np.asarray(valid[r0:r1, c0:c1], dtype=bool) & np.isfinite(block)
    if not ok.any():
        raise DataError(f"no valid pixels around site ({site_lat}, {site_lon})")
    return float(block[ok].mean())


@dataclass
class ScenePrediction:
    granule_id: str
    time: datetime
    aod: np.ndarray
    valid: np.ndarray
    lat: np.ndarray
    lon: np.ndarray


@dataclass
class ValidationResult:
    rows: list
    report: Optional[MetricsReport]
    notice: str = ""


_ROW_FIELDS = ("site", "granule_id", "time", "lat", "lon", "tau_ground_550", "tau_pred", "diff")


def validate(scenes: Sequence[ScenePrediction], records: Sequence[SiteRecord], *,
             window_minutes: float = 30.0, target_nm: float = 550.0, source_nm: float = 500.0,
             model_name: str = "") -> ValidationResult:
    """Pair every time-matched site inside a scene with its collocated prediction."""
    if not scenes or not records:
        raise DataError("validation needs at least one scene and one site record")
    rows = []
    for scene in scenes:
        for rec in temporal_match(scene.time, records, window_minutes):
            if not inside_scene(scene.lat, scene.lon, rec.lat, rec.lon):
                continue
            try:
                pred = collocate_site(scene.aod, scene.valid, scene.lat, scene.lon, rec.lat, rec.lon)
            except DataError:
                continue
            ground = angstrom_adjust(rec.aod_500, rec.angstrom, source_nm, target_nm)
            rows.append({"site": rec.site, "granule_id": scene.granule_id,
                         "time": rec.time.isoformat(), "lat": rec.lat, "lon": rec.lon,
                         "tau_ground_550": ground, "tau_pred": pred, "diff": pred - ground})
    if not rows:
        return ValidationResult([], None, "no spatiotemporally collocated site/overpass pairs")
    pred = np.array([r["tau_pred"] for r in rows])
    obs = np.array([r["tau_ground_550"] for r in rows])
    return ValidationResult(rows, compute_metrics(pred, obs, model_name=model_name),
                            f"{len(rows)} collocated samples")


def write_validation(result: ValidationResult, out_dir) -> None:
    """aeronet_validation.csv, aeronet_metrics.json and the site map image."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "aeronet_validation.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=_ROW_FIELDS)
        w.writeheader()
        w.writerows(result.rows)
    summary = {"n_samples": len(result.rows), "notice": result.notice,
               "metrics": None if result.report is None else result.report.to_dict()}
    (out / "aeronet_metrics.json").write_text(json.dumps(summary, indent=2))
    _plot_sites(result, out / "aeronet_map.png")


def _plot_sites(result: ValidationResult, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 3.6))
    ax.set_xlim(-180, 180)
    ax.set_ylim(-90, 90)
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    ax.grid(lw=0.3)
    if result.rows:
        lon = [r["lon"] for r in result.rows]
        lat = [r["lat"] for r in result.rows]
        diff = np.array([r["diff"] for r in result.rows])
        lim = max(float(np.abs(diff).max()), 1e-6)
        sc = ax.scatter(lon, lat, c=diff, cmap="coolwarm", vmin=-lim, vmax=lim, s=18,
                        edgecolors="k", linewidths=0.3)
        fig.colorbar(sc, ax=ax, label="retrieved - ground AOD (550 nm)")
    ax.set_title(result.notice)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
