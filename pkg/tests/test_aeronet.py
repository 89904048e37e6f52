import logging
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from hyperaod import aeronet as aero
from hyperaod.errors import DataError

T0 = datetime(2024, 6, 1, 18, 30, tzinfo=timezone.utc)


def _rec(site="S", minutes=0.0, lat=40.0, lon=-100.0, aod=0.2, alpha=1.0):
    return aero.SiteRecord(site, lat, lon, T0 + timedelta(minutes=minutes), aod, alpha)


def _grid(h=40, w=50):
    rows, cols = np.mgrid[0:h, 0:w]
    return 40.2 - rows * 0.01, -100.2 + cols * 0.01


def test_angstrom():
    assert abs(aero.angstrom_adjust(0.2, 1, 500, 550) - 0.18181818181818182) <= 1e-12
    assert aero.angstrom_adjust(0.3, 0.0) == 0.3
    with pytest.raises(DataError):
        aero.angstrom_adjust(0.2, 1, 0, 550)


def test_temporal_window_inclusive():
    recs = [_rec("A", 30), _rec("B", -30), _rec("C", 30.001), _rec("D", -31)]
    assert [r.site for r in aero.temporal_match(T0, recs)] == ["B", "A"]


def test_temporal_closest_per_site():
    recs = [_rec("A", -20), _rec("A", 5), _rec("A", -4)]
    (only,) = aero.temporal_match(T0, recs)
    assert only.time == T0 - timedelta(minutes=4)


def test_block_bounds():
    assert aero.block_bounds(10, 20, (40, 50)) == (6, 14, 16, 24)
    assert aero.block_bounds(1, 48, (40, 50)) == (0, 5, 44, 50)


def test_collocation_matches_enumeration(rng):
    lat, lon = _grid()
    pred = rng.random(lat.shape)
    valid = rng.random(lat.shape) > 0.2
    for _ in range(30):
        r, c = int(rng.integers(0, 40)), int(rng.integers(0, 50))
        got = aero.collocate_site(pred, valid, lat, lon, lat[r, c], lon[r, c])
        vals = [pred[i, j] for i in range(40) for j in range(50)
                if r - 4 <= i < r + 4 and c - 4 <= j < c + 4 and valid[i, j]]
        assert abs(got - np.mean(vals)) <= 1e-12


def test_nearest_pixel_haversine():
    lat, lon = _grid()
    assert aero.nearest_pixel(lat, lon, 40.2 - 0.031, -100.2 + 0.0749) == (3, 7)


def test_outside_and_empty():
    lat, lon = _grid()
    pred = np.ones(lat.shape)
    with pytest.raises(DataError):
        aero.collocate_site(pred, np.ones(lat.shape, bool), lat, lon, 10.0, 10.0)
    with pytest.raises(DataError):
        aero.collocate_site(pred, np.zeros(lat.shape, bool), lat, lon, 40.0, -100.0)


def test_site_record_checks(caplog):
    with pytest.raises(DataError):
        _rec(aod=-0.1)
    with pytest.raises(DataError):
        _rec(lat=91.0)
    with caplog.at_level(logging.WARNING):
        _rec(alpha=5.0)
    assert "Angstrom" in caplog.text


def test_csv_round_trip_and_mapping(tmp_path):
    recs = [_rec("A", 3), _rec("B", -7, aod=0.5, alpha=1.4)]
    aero.write_sites_csv(tmp_path / "s.csv", recs)
    assert aero.read_sites_csv(tmp_path / "s.csv") == recs
    (tmp_path / "x.csv").write_text(
        "Site_Name,Lat,Lon,Date_Time,AOD_500nm,Alpha\nX,40.0,-100.0,2024-06-01T18:30:00Z,0.2,1.1\n")
    cols = {"site": "Site_Name", "lat": "Lat", "lon": "Lon", "time": "Date_Time",
            "aod_500": "AOD_500nm", "angstrom": "Alpha"}
    (rec,) = aero.read_sites_csv(tmp_path / "x.csv", cols)
    assert rec.time == T0 and rec.angstrom == 1.1
    with pytest.raises(DataError, match="missing columns"):
        aero.read_sites_csv(tmp_path / "x.csv")


def test_end_to_end_self_consistency(tmp_path, rng):
    lat, lon = _grid()
    truth = rng.uniform(0.05, 1.0, lat.shape)
    valid = np.ones(lat.shape, bool)
    recs = []
    for k, (r, c) in enumerate([(5, 5), (20, 30), (35, 45)]):
        alpha = rng.uniform(0.5, 2.0)
        mean = aero.collocate_site(truth, valid, lat, lon, lat[r, c], lon[r, c])
        recs.append(aero.SiteRecord(f"S{k}", lat[r, c], lon[r, c], T0, mean * 1.1 ** alpha, alpha))
    recs.append(_rec("late", 45, lat=lat[5, 5], lon=lon[5, 5]))
    scene = aero.ScenePrediction("G", T0, truth, valid, lat, lon)
    res = aero.validate([scene], recs)
    assert len(res.rows) == 3
    assert max(abs(r["diff"]) for r in res.rows) <= 1e-6
    aero.write_validation(res, tmp_path)
    assert (tmp_path / "aeronet_map.png").exists()
    assert (tmp_path / "aeronet_validation.csv").read_text().count("\n") == 4


def test_no_matches_is_a_notice(tmp_path):
    lat, lon = _grid()
    scene = aero.ScenePrediction("G", T0, np.ones(lat.shape), np.ones(lat.shape, bool), lat, lon)
    res = aero.validate([scene], [_rec("far", 0, lat=0.0, lon=0.0)])
    assert res.rows == [] and res.report is None and "no" in res.notice
    aero.write_validation(res, tmp_path)
    with pytest.raises(DataError):
        aero.validate([], [_rec()])
