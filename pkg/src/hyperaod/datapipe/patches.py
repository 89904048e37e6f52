"""Non-overlapping patch extraction with the invalid-pixel filter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hyperaod.structures import AODField, GranuleScene, RadiancePatch

PATCH_SIZE = 96


def max_invalid_pixels(size: int = PATCH_SIZE, fraction: float = 0.01) -> int:
    """Largest invalid count that is not "more than" ``fraction`` of the tile (92 for 96x96)."""
    return int(np.floor(fraction * size * size + 1e-9))


@dataclass
class ScenePatch:
    radiance: RadiancePatch
    aod: AODField
    granule_id: str
    origin: tuple[int, int]


def tile_origins(height: int, width: int, size: int = PATCH_SIZE) -> list[tuple[int, int]]:
    return [(r, c) for r in range(0, height - size + 1, size)
            for c in range(0, width - size + 1, size)]


def extract_patches(scene: GranuleScene, size: int = PATCH_SIZE,
                    max_invalid_fraction: float = 0.01) -> list[ScenePatch]:
    """Tile the scene row-major from (0, 0), dropping partial edge tiles and
    tiles with more than ``max_invalid_fraction`` invalid pixels."""
    limit = max_invalid_pixels(size, max_invalid_fraction)
    out = []
    for r, c in tile_origins(*scene.shape, size):
        valid = scene.valid[r:r + size, c:c + size]
        if size * size - int(valid.sum()) > limit:
            continue
        rad = RadiancePatch(scene.radiance[:, r:r + size, c:c + size], valid, scene.wavelengths)
        aod = AODField(scene.aod[r:r + size, c:c + size], valid)
        out.append(ScenePatch(rad, aod, scene.granule_id, (r, c)))
    return out
