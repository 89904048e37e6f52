"""Seeded synthetic granules standing in for collocated PACE L1B/L2 scenes.

The radiance model per band c is

    L_c = a_c * exp(-b_c * (AOD + texture(x, y))) + r_c * trend(x, y) + noise

``trend`` is a smooth surface-brightness ramp. ``texture`` is fine-grained,
zero-mean surface heterogeneity that enters exactly where AOD does, so a
single pixel cannot tell surface from aerosol. AOD varies smoothly while the
texture decorrelates within a few pixels, which means the ambiguity averages
out over a neighbourhood. Spatial models can exploit that; pixel-wise models
cannot.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import numpy as np
from scipy.ndimage import gaussian_filter

from hyperaod.structures import GranuleScene

AOD_MAX = 1.5
NOISE_SIGMA = 0.01
INVALID_FRACTION = 0.005
PIXEL_DEG = 1.2 / 111.0


def synth_wavelengths(channels: int) -> np.ndarray:
    if channels == 1:
        return np.array([550.0])
    return np.linspace(340.0, 2260.0, channels)


def spectral_coefficients(wavelengths: np.ndarray):
    """(a, b, r) per band: smooth functions of wavelength."""
    lam = np.asarray(wavelengths, dtype=np.float64)
    a = 0.8 + 0.4 * np.exp(-((lam - 500.0) / 400.0) ** 2)
    b = 0.9 * (lam / 550.0) ** -1.2
    r = 0.05 + 0.1 * (lam - 340.0) / 1920.0
    return a, b, r


def _aod_field(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    f = gaussian_filter(rng.standard_normal(shape), sigma, mode="reflect")
    f = f / f.std() + rng.uniform(0.3, 1.0)
    f = f * f
    return np.clip(AOD_MAX * f / f.max(), 0.0, AOD_MAX)


def _invalid_blobs(rng: np.random.Generator, shape) -> np.ndarray:
    h, w = shape
    invalid = np.zeros(shape, dtype=bool)
    target = int(round(INVALID_FRACTION * h * w))
    yy, xx = np.mgrid[-2:3, -2:3]
    while invalid.sum() < target:
        radius = rng.integers(1, 3)
        disc = yy ** 2 + xx ** 2 <= radius ** 2
        r0, c0 = rng.integers(0, h), rng.integers(0, w)
        rows, cols = np.nonzero(disc)
        rows, cols = rows + r0 - 2, cols + c0 - 2
        keep = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
        invalid[rows[keep], cols[keep]] = True
    return invalid


def synth_granule(seed: int, height: int = 192, width: int = 192, channels: int = 8, *,
                  aod_sigma: float = 12.0, texture_amplitude: float = 0.1) -> GranuleScene:
    rng = np.random.default_rng(seed)
    lam = synth_wavelengths(channels)
    a, b, r = spectral_coefficients(lam)

    aod = _aod_field(rng, (height, width), aod_sigma)
    yy, xx = np.mgrid[0:height, 0:width] / max(height, width)
    gy, gx = rng.uniform(-1, 1, 2)
    trend = 0.5 + 0.5 * np.tanh(gy * (yy - 0.5) + gx * (xx - 0.5))
    texture = gaussian_filter(rng.standard_normal((height, width)), 0.7)
    texture *= texture_amplitude / texture.std()

    radiance = (a[:, None, None] * np.exp(-b[:, None, None] * (aod + texture))
                + r[:, None, None] * trend
                + NOISE_SIGMA * rng.standard_normal((channels, height, width)))

    invalid = _invalid_blobs(rng, (height, width))
    radiance[:, invalid] = np.nan
    aod = np.where(invalid, np.nan, aod)

    lat0 = rng.uniform(-60.0, 60.0)
    lon0 = rng.uniform(-170.0, 160.0)
    rows, cols = np.mgrid[0:height, 0:width]
    lat = lat0 - rows * PIXEL_DEG
    lon = lon0 + cols * PIXEL_DEG / np.cos(np.deg2rad(lat))
    when = datetime(2025, 1, 1, tzinfo=timezone.utc) + timedelta(minutes=int(rng.integers(0, 525600)))
    return GranuleScene(f"SYN{seed:06d}", when, radiance, aod, ~invalid, lat, lon, lam)
