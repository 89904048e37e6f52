"""Granule-level train/val/test assignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hyperaod.errors import ConfigError, DataError

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class SplitAssignment:
    mapping: dict
    seed: int
    ratios: tuple[float, float, float]

    def ids(self, split: str) -> list[str]:
        return sorted(g for g, tag in self.mapping.items() if tag == split)

    def counts(self) -> dict[str, int]:
        return {s: len(self.ids(s)) for s in SPLITS}


def largest_remainder(n: int, ratios) -> list[int]:
    quotas = [n * r for r in ratios]
    counts = [int(np.floor(q)) for q in quotas]
    remainders = [q - c for q, c in zip(quotas, counts)]
    # ties go to the earlier split
    for i in sorted(range(len(ratios)), key=lambda i: (-remainders[i], i))[: n - sum(counts)]:
        counts[i] += 1
    return counts


def split_granules(granule_ids, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitAssignment:
    ids = sorted(set(granule_ids))
    if not ids:
        raise DataError("no granules to split")
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be three non-negative numbers summing to 1: {ratios}")
    order = np.random.default_rng(seed).permutation(len(ids))
    counts = largest_remainder(len(ids), ratios)
    mapping = {}
    start = 0
    for tag, count in zip(SPLITS, counts):
        for i in order[start:start + count]:
            mapping[ids[i]] = tag
        start += count
    return SplitAssignment(mapping, seed, ratios)
