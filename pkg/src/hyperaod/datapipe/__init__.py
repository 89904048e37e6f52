"""Granule-to-patch data pipeline."""

from hyperaod.datapipe.pack import PatchPack, read_pack, write_pack
from hyperaod.datapipe.patches import PATCH_SIZE, ScenePatch, extract_patches, max_invalid_pixels
from hyperaod.datapipe.quality import filter_quality
from hyperaod.datapipe.resample import bilinear_sample, resample_aod, resample_factor
from hyperaod.datapipe.splits import SplitAssignment, split_granules
from hyperaod.datapipe.stats import compute_band_stats
from hyperaod.datapipe.synth import synth_granule

__all__ = [
    "PATCH_SIZE", "PatchPack", "ScenePatch", "SplitAssignment", "bilinear_sample",
    "compute_band_stats", "extract_patches", "filter_quality", "max_invalid_pixels",
    "read_pack", "resample_aod", "resample_factor", "split_granules", "synth_granule",
    "write_pack",
]
