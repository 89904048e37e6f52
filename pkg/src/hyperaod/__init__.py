"""Hyperspectral AOD retrieval with a channel-grouped vision transformer."""

from hyperaod.config import PixelDNNConfig, TrainConfig, ViTCGConfig
from hyperaod.model import ViTCG, count_parameters
from hyperaod.structures import AODField, BandStats, GranuleScene, RadiancePatch

__version__ = "0.1.0"

__all__ = [
    "AODField", "BandStats", "GranuleScene", "PixelDNNConfig", "RadiancePatch", "TrainConfig",
    "ViTCG", "ViTCGConfig", "count_parameters",
]
