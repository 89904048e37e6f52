"""Per-band standardization statistics over valid pixels."""

from __future__ import annotations

import numpy as np

from hyperaod.errors import DataError
from hyperaod.structures import BandStats

STD_FLOOR = 1e-8


def compute_band_stats(radiance: np.ndarray, valid: np.ndarray) -> BandStats:
    """Population mean/std per band from an (N, C, H, W) stack, valid finite pixels only.

    Pass the training split only. Accumulates in float64, one patch at a time.
    """
    radiance = np.asarray(radiance)
    valid = np.asarray(valid, dtype=bool)
    if radiance.ndim != 4 or valid.shape != (radiance.shape[0],) + radiance.shape[2:]:
        raise DataError(f"radiance {radiance.shape} and mask {valid.shape} are incongruent")
    c = radiance.shape[1]
    count = np.zeros(c)
    total = np.zeros(c)
    for x, m in zip(radiance, valid):
        x = x.astype(np.float64)
        ok = m[None] & np.isfinite(x)
        count += ok.sum(axis=(1, 2))
        total += np.where(ok, x, 0.0).sum(axis=(1, 2))
    empty = np.flatnonzero(count == 0)
    if empty.size:
        raise DataError(f"band {int(empty[0])} has no valid pixels")
    mean = total / count
    sq = np.zeros(c)
    for x, m in zip(radiance, valid):
        x = x.astype(np.float64)
        ok = m[None] & np.isfinite(x)
        sq += np.where(ok, (x - mean[:, None, None]) ** 2, 0.0).sum(axis=(1, 2))
    std = np.maximum(np.sqrt(sq / count), STD_FLOOR)
    return BandStats(mean, std)
