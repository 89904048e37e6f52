"""Pixel validity from instrument quality flags and data finiteness."""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from hyperaod.errors import DataError


def bad_bit_mask(bits: Iterable[int]) -> int:
    mask = 0
    for b in bits:
        if not 0 <= int(b) < 64:
            raise DataError(f"flag bit {b} outside [0, 64)")
        mask |= 1 << int(b)
    return mask


def filter_quality(radiance: np.ndarray, flags: Optional[np.ndarray], aod: np.ndarray,
                   bad_bits: Iterable[int] = ()) -> np.ndarray:
    """valid = no configured bad bit set AND radiance finite in every band AND AOD finite."""
    radiance = np.asarray(radiance)
    aod = np.asarray(aod)
    grid = radiance.shape[-2:]
    if radiance.ndim != 3 or aod.shape != grid:
        raise DataError(f"radiance {radiance.shape} and AOD {aod.shape} grids differ")
    valid = np.isfinite(radiance).all(axis=0) & np.isfinite(aod)
    if flags is not None:
        flags = np.asarray(flags)
        if flags.shape != grid:
            raise DataError(f"flag array {flags.shape} does not match grid {grid}")
        mask = bad_bit_mask(bad_bits)
        if mask:
            valid &= (flags.astype(np.uint64) & np.uint64(mask)) == 0
    return valid
