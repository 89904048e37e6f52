"""Bilinear resampling of the coarse L2 AOD grid onto the L1B pixel grid.

Coordinates are in coarse-cell index units with cell centers at integers. A
fine pixel i sits at (i + 0.5) / k - 0.5 for an integer factor k, clamped to
the coarse extent. Its stencil is the set of coarse cells that receive a
positive interpolation weight; the pixel is valid only if the whole stencil
is valid.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from hyperaod.errors import ConfigError, DataError


def resample_factor(coarse_km: float = 8.4, fine_km: float = 1.2) -> int:
    ratio = coarse_km / fine_km
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-6:
        raise ConfigError(f"resolution ratio {coarse_km}/{fine_km} = {ratio:g} is not an integer")
    return k


def _axis_weights(coords: np.ndarray, n: int):
    u = np.clip(np.asarray(coords, dtype=np.float64), 0.0, n - 1)
    i0 = np.floor(u).astype(np.int64)
    i0 = np.minimum(i0, n - 1)
    frac = u - i0
    i1 = np.minimum(i0 + 1, n - 1)
    return i0, i1, 1.0 - frac, frac


def bilinear_sample(coarse: np.ndarray, rows, cols, coarse_valid: Optional[np.ndarray] = None):
    """Sample ``coarse`` at every (rows[i], cols[j]) pair -> (values, valid) of shape (len(rows), len(cols))."""
    coarse = np.asarray(coarse, dtype=np.float64)
    if coarse.ndim != 2:
        raise DataError(f"coarse field must be 2-D, got {coarse.shape}")
    if coarse_valid is None:
        coarse_valid = np.isfinite(coarse)
    else:
        coarse_valid = np.asarray(coarse_valid, dtype=bool) & np.isfinite(coarse)
    r0, r1, wr0, wr1 = _axis_weights(rows, coarse.shape[0])
    c0, c1, wc0, wc1 = _axis_weights(cols, coarse.shape[1])
    filled = np.where(coarse_valid, coarse, 0.0)

    out = np.zeros((len(r0), len(c0)))
    ok = np.ones((len(r0), len(c0)), dtype=bool)
    for ri, wr in ((r0, wr0), (r1, wr1)):
        for ci, wc in ((c0, wc0), (c1, wc1)):
            w = wr[:, None] * wc[None, :]
            out += w * filled[np.ix_(ri, ci)]
            ok &= (w <= 0) | coarse_valid[np.ix_(ri, ci)]
    return out, ok


def resample_aod(coarse: np.ndarray, coarse_valid: Optional[np.ndarray] = None, *,
                 coarse_km: float = 8.4, fine_km: float = 1.2,
                 fine_shape: Optional[tuple[int, int]] = None):
    """Resample a coarse AOD grid to the fine grid -> (float32 values with NaN where invalid, mask)."""
    k = resample_factor(coarse_km, fine_km)
    coarse = np.asarray(coarse, dtype=np.float64)
    hf, wf = fine_shape or (coarse.shape[0] * k, coarse.shape[1] * k)
    rows = (np.arange(hf) + 0.5) / k - 0.5
    cols = (np.arange(wf) + 0.5) / k - 0.5
    values, valid = bilinear_sample(coarse, rows, cols, coarse_valid)
    # fine pixels beyond the coarse footprint are not extrapolated
    valid &= (rows < coarse.shape[0] - 0.5)[:, None] & (cols < coarse.shape[1] - 0.5)[None, :]
    values = np.where(valid, values, np.nan).astype(np.float32)
    return values, valid
