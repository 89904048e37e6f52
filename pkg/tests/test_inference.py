import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from hyperaod.datapipe import compute_band_stats
from hyperaod.errors import DataError
from hyperaod.inference import (read_scene_raw, retrieve_scene, slide_windows, write_quicklook,
                                write_scene_netcdf, write_scene_raw)


def test_origins_snap_to_border():
    plan = slide_windows(100, 192, 96, 96)
    assert sorted({r for r, _ in plan.origins}) == [0, 4]
    assert sorted({c for _, c in plan.origins}) == [0, 96]
    assert sorted({r for r, _ in slide_windows(96, 96, 96, 48).origins}) == [0]


@settings(max_examples=60, deadline=None)
@given(h=st.integers(96, 300), w=st.integers(96, 300), stride=st.integers(1, 96))
def test_coverage_matches_brute_force(h, w, stride):
    plan = slide_windows(h, w, 96, stride)
    count = np.zeros((h, w), int)
    for r, c in plan.origins:
        assert 0 <= r <= h - 96 and 0 <= c <= w - 96
        count[r:r + 96, c:c + 96] += 1
    assert count.min() >= 1
    assert len(set(plan.origins)) == len(plan.origins)


def test_bad_plan_arguments():
    with pytest.raises(DataError):
        slide_windows(95, 200)
    with pytest.raises(DataError):
        slide_windows(200, 200, 96, 97)


class _Stub:
    """Prediction = window origin encoded into the values, so overlaps are visible."""

    def __init__(self):
        self.calls = 0

    def __call__(self, x):
        self.calls += x.shape[0]
        return x[:, 0].double() * 0.5 + 1.0


def test_stub_assembly_and_blending(small_scene):
    stats = compute_band_stats(small_scene.radiance[None], small_scene.valid[None])
    z = stats.standardize(small_scene.radiance, small_scene.valid)[0].astype(np.float64)
    for stride in (96, 48, 40):
        plan = slide_windows(*small_scene.shape, 96, stride)
        res = retrieve_scene(_Stub(), small_scene, plan, stats, batch_size=3)
        # pointwise stub: any blend of identical predictions is the prediction itself
        assert np.allclose(res.aod, z * 0.5 + 1.0, atol=1e-12, rtol=0)
        assert res.coverage.min() >= 1


def test_blending_is_mean_of_overlaps(small_scene):
    stats = compute_band_stats(small_scene.radiance[None], small_scene.valid[None])
    plan = slide_windows(*small_scene.shape, 96, 48)
    k = {"i": 0}

    def numbered(x):
        out = torch.zeros(x.shape[0], 96, 96, dtype=torch.float64)
        for j in range(x.shape[0]):
            out[j] = k["i"]
            k["i"] += 1
        return out

    res = retrieve_scene(numbered, small_scene, plan, stats, batch_size=4)
    total = np.zeros(small_scene.shape)
    count = np.zeros(small_scene.shape)
    for i, (r, c) in enumerate(plan.origins):
        total[r:r + 96, c:c + 96] += i
        count[r:r + 96, c:c + 96] += 1
    assert np.array_equal(res.coverage, count)
    assert np.allclose(res.aod, total / count, atol=1e-12, rtol=0)


def test_shape_checks(small_scene):
    stats = compute_band_stats(small_scene.radiance[None], small_scene.valid[None])
    with pytest.raises(DataError):
        retrieve_scene(_Stub(), small_scene, slide_windows(200, 300), stats)
    with pytest.raises(DataError):
        retrieve_scene(_Stub(), small_scene, slide_windows(*small_scene.shape), None)
    with pytest.raises(DataError):
        retrieve_scene(lambda x: x[:, 0, :10], small_scene, slide_windows(*small_scene.shape), stats)


def test_writers(tmp_path, small_scene):
    import h5netcdf

    stats = compute_band_stats(small_scene.radiance[None], small_scene.valid[None])
    res = retrieve_scene(_Stub(), small_scene, slide_windows(*small_scene.shape), stats)
    write_scene_raw(tmp_path / "a.scn", res, small_scene.lat, small_scene.lon, "G1")
    back = read_scene_raw(tmp_path / "a.scn")
    assert back["granule_id"] == "G1"
    assert np.array_equal(back["aod"], res.aod.astype(np.float32))
    assert np.array_equal(back["valid"], res.valid)
    assert np.array_equal(back["lat"], small_scene.lat)
    raw = (tmp_path / "a.scn").read_bytes()
    (tmp_path / "b.scn").write_bytes(raw[:-10])
    with pytest.raises(DataError):
        read_scene_raw(tmp_path / "b.scn")

    write_scene_netcdf(tmp_path / "a.nc", res, small_scene.lat, small_scene.lon, "G1")
    with h5netcdf.File(tmp_path / "a.nc", "r") as ds:
        aod = ds["aod"][...]
        assert np.all(np.isnan(aod[~res.valid]))
        assert np.array_equal(ds["coverage"][...], res.coverage)

    write_quicklook(tmp_path / "q.png", res.aod, res.valid)
    img = np.asarray(Image.open(tmp_path / "q.png"))
    assert img.shape == small_scene.shape + (3,)
    assert np.all(img[~res.valid] == 0)
