"""PatchPack container and its APK1 file format.

Layout::

    bytes 0-3   b"APK1"
    bytes 4-7   JSON header length, uint32 little-endian
    header      {"version", "N", "C", "H", "W", "wavelengths", "granule_ids",
                 "split_tags", "band_stats", "dtype": "f32"}
    payload     radiance [N,C,H,W] <f4, aod [N,H,W] <f4, valid [N,H,W] u1
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from hyperaod.errors import (DataError, PackHeaderError, PackMagicError, PackTruncatedError,
                             PackVersionError)
from hyperaod.datapipe.patches import PATCH_SIZE, ScenePatch, max_invalid_pixels
from hyperaod.datapipe.splits import SPLITS
from hyperaod.structures import AODField, BandStats, RadiancePatch

MAGIC = b"APK1"
VERSION = 1


@dataclass
class PatchPack:
    radiance: np.ndarray
    aod: np.ndarray
    valid: np.ndarray
    wavelengths: np.ndarray
    granule_ids: list = field(default_factory=list)
    split_tags: list = field(default_factory=list)
    band_stats: Optional[BandStats] = None

    def __post_init__(self):
        self.radiance = np.ascontiguousarray(self.radiance, dtype=np.float32)
        self.aod = np.ascontiguousarray(self.aod, dtype=np.float32)
        self.valid = np.ascontiguousarray(self.valid, dtype=bool)
        self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64)
        self.granule_ids = [str(g) for g in self.granule_ids]
        self.split_tags = [str(t) for t in self.split_tags]
        n = self.radiance.shape[0]
        if self.radiance.ndim != 4:
            raise DataError(f"pack radiance must be N x C x H x W, got {self.radiance.shape}")
        grid = (n,) + self.radiance.shape[2:]
        if self.aod.shape != grid or self.valid.shape != grid:
            raise DataError("pack aod/valid shapes do not match radiance")
        if self.wavelengths.shape != (self.radiance.shape[1],):
            raise DataError("pack wavelengths do not match channel count")
        if len(self.granule_ids) != n or len(self.split_tags) != n:
            raise DataError("granule_ids and split_tags need one entry per patch")

    def __len__(self) -> int:
        return self.radiance.shape[0]

    def __getitem__(self, i: int) -> tuple[RadiancePatch, AODField]:
        return (RadiancePatch(self.radiance[i], self.valid[i], self.wavelengths),
                AODField(self.aod[i], self.valid[i]))

    @property
    def channels(self) -> int:
        return self.radiance.shape[1]

    def check(self, size: int = PATCH_SIZE) -> None:
        """Raise DataError unless the pack invariants hold."""
        if len(self) and self.radiance.shape[2:] != (size, size):
            raise DataError(f"patches must be {size}x{size}, got {self.radiance.shape[2:]}")
        limit = max_invalid_pixels(size)
        invalid = (~self.valid).reshape(len(self), -1).sum(axis=1)
        if np.any(invalid > limit):
            raise DataError(f"{int((invalid > limit).sum())} patches exceed {limit} invalid pixels")
        tag_of = {}
        for g, t in zip(self.granule_ids, self.split_tags):
            if t not in SPLITS:
                raise DataError(f"unknown split tag {t!r}")
            if tag_of.setdefault(g, t) != t:
                raise DataError(f"granule {g} appears in more than one split")

    def select(self, indices) -> "PatchPack":
        idx = np.asarray(indices, dtype=np.int64)
        return PatchPack(self.radiance[idx], self.aod[idx], self.valid[idx], self.wavelengths,
                         [self.granule_ids[i] for i in idx], [self.split_tags[i] for i in idx],
                         self.band_stats)

    def subset(self, split: str) -> "PatchPack":
        return self.select([i for i, t in enumerate(self.split_tags) if t == split])

    @classmethod
    def from_patches(cls, patches: Sequence[ScenePatch], split_tags: Sequence[str],
                     wavelengths=None, band_stats: Optional[BandStats] = None) -> "PatchPack":
        if not patches:
            if wavelengths is None:
                raise DataError("cannot build an empty pack without wavelengths")
            c = len(wavelengths)
            empty = np.zeros((0, c, PATCH_SIZE, PATCH_SIZE), np.float32)
            return cls(empty, empty[:, 0], empty[:, 0].astype(bool), wavelengths, [], [], band_stats)
        return cls(np.stack([p.radiance.values for p in patches]),
                   np.stack([p.aod.values for p in patches]),
                   np.stack([p.radiance.valid for p in patches]),
                   patches[0].radiance.wavelengths if wavelengths is None else wavelengths,
                   [p.granule_id for p in patches], list(split_tags), band_stats)

    @classmethod
    def concatenate(cls, packs: Sequence["PatchPack"]) -> "PatchPack":
        return cls(np.concatenate([p.radiance for p in packs]),
                   np.concatenate([p.aod for p in packs]),
                   np.concatenate([p.valid for p in packs]),
                   packs[0].wavelengths,
                   [g for p in packs for g in p.granule_ids],
                   [t for p in packs for t in p.split_tags],
                   packs[0].band_stats)


def write_pack(pack: PatchPack, path) -> None:
    n, c, h, w = pack.radiance.shape
    header = {
        "version": VERSION,
        "N": n, "C": c, "H": h, "W": w,
        "wavelengths": pack.wavelengths.tolist(),
        "granule_ids": pack.granule_ids,
        "split_tags": pack.split_tags,
        "band_stats": None if pack.band_stats is None else {
            "mean": pack.band_stats.mean.tolist(), "std": pack.band_stats.std.tolist()},
        "dtype": "f32",
    }
    blob = json.dumps(header).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(pack.radiance.astype("<f4").tobytes())
        f.write(pack.aod.astype("<f4").tobytes())
        f.write(pack.valid.astype(np.uint8).tobytes())


def _parse_header(raw: bytes) -> dict:
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise PackHeaderError(f"unreadable pack header: {exc}") from exc
    if not isinstance(header, dict):
        raise PackHeaderError("pack header is not a JSON object")
    if header.get("version") != VERSION:
        raise PackVersionError(f"unsupported pack version {header.get('version')!r}")
    missing = {"N", "C", "H", "W", "wavelengths", "granule_ids", "split_tags", "dtype"} - set(header)
    if missing:
        raise PackHeaderError(f"pack header lacks {sorted(missing)}")
    if header["dtype"] != "f32":
        raise PackHeaderError(f"unsupported dtype {header['dtype']!r}")
    dims = [header[k] for k in ("N", "C", "H", "W")]
    if not all(isinstance(d, int) and d >= 0 for d in dims):
        raise PackHeaderError(f"bad dimensions {dims}")
    n, c = dims[:2]
    if len(header["wavelengths"]) != c:
        raise PackHeaderError("wavelength count does not match C")
    if len(header["granule_ids"]) != n or len(header["split_tags"]) != n:
        raise PackHeaderError("granule_ids/split_tags length does not match N")
    return header


def read_pack(path) -> PatchPack:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise PackMagicError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 8:
        raise PackTruncatedError(f"{path}: missing header length")
    (hlen,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + hlen:
        raise PackTruncatedError(f"{path}: header truncated")
    header = _parse_header(data[8:8 + hlen])
    n, c, h, w = (header[k] for k in ("N", "C", "H", "W"))
    sizes = (n * c * h * w * 4, n * h * w * 4, n * h * w)
    offset = 8 + hlen
    expected = offset + sum(sizes)
    if len(data) < expected:
        raise PackTruncatedError(f"{path}: payload has {len(data) - offset} bytes, header implies {sum(sizes)}")
    if len(data) > expected:
        raise PackHeaderError(f"{path}: {len(data) - expected} trailing bytes after payload")
    radiance = np.frombuffer(data, "<f4", n * c * h * w, offset).reshape(n, c, h, w)
    offset += sizes[0]
    aod = np.frombuffer(data, "<f4", n * h * w, offset).reshape(n, h, w)
    offset += sizes[1]
    valid = np.frombuffer(data, np.uint8, n * h * w, offset).reshape(n, h, w)
    if np.any(valid > 1):
        raise PackHeaderError(f"{path}: mask bytes must be 0 or 1")
    stats = header.get("band_stats")
    band_stats = None
    if stats is not None:
        if len(stats["mean"]) != c or len(stats["std"]) != c:
            raise PackHeaderError("band_stats length does not match C")
        band_stats = BandStats(stats["mean"], stats["std"])
    return PatchPack(radiance.astype(np.float32), aod.astype(np.float32), valid.astype(bool),
                     header["wavelengths"], header["granule_ids"], header["split_tags"], band_stats)
