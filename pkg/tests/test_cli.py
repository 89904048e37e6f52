import json
import math

import numpy as np
import pytest
import yaml

from hyperaod import cli, trainer
from hyperaod.checkpoint import load_checkpoint
from hyperaod.datapipe import read_pack
from hyperaod.inference import read_scene_raw
from hyperaod.runconfig import load_run_config

from test_datapipe import _write_l1b_l2

TINY = {
    "seed": 1,
    "vitcg": {"groups": 2, "token_dim": 16, "encoder_depth": 1, "num_heads": 2,
              "decoder_channels": [16, 8, 8, 8]},
    "dnn": {"hidden_sizes": [8]},
    "train": {"learning_rate": 1e-3, "effective_batch": 4, "micro_batch": 2, "max_epochs": 2,
              "patience": 2},
    "synth": {"granules": 5, "height": 192, "width": 192, "channels": 8},
}


def _config(tmp_path, **extra):
    cfg = dict(TINY, data_dir="data", **extra)
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = _config(tmp)
    assert cli.main(["synth", "--config", cfg]) == 0
    assert cli.main(["train", "--config", cfg]) == 0
    assert cli.main(["train", "--config", cfg, "--model", "dnn8"]) == 0
    return tmp, cfg


def test_synth_outputs(workspace):
    tmp, _ = workspace
    data = tmp / "data"
    manifest = json.loads((data / "manifest.json").read_text())
    assert manifest["patches"] == {"train": 12, "val": 4, "test": 4}
    train_ids = {g for g, v in manifest["granules"].items() if v["split"] == "train"}
    test_pack = read_pack(data / "packs" / "test.apk")
    assert not train_ids & set(test_pack.granule_ids)
    stats = json.loads((data / "packs" / "band_stats.json").read_text())
    assert np.allclose(stats["mean"], test_pack.band_stats.mean)


def test_checkpoints_and_history(workspace):
    tmp, _ = workspace
    ck = load_checkpoint(tmp / "data" / "checkpoints" / "dnn8.pt")
    assert ck.variant == "dnn8" and ck.model.cfg.band_indices == tuple(range(8))
    lines = (tmp / "data" / "history" / "vitcg.jsonl").read_text().splitlines()
    assert [json.loads(l)["epoch"] for l in lines] == [1, 2]


def test_eval_all_models(workspace, capsys):
    tmp, cfg = workspace
    assert cli.main(["eval", "--config", cfg]) == 0
    table = json.loads((tmp / "data" / "eval" / "metrics.json").read_text())
    assert sorted(r["model_name"] for r in table["rows"]) == ["dnn8", "vitcg"]
    assert (tmp / "data" / "eval" / "vitcg" / "scatter.png").exists()
    assert "| vitcg |" in capsys.readouterr().out


def test_infer_raw_and_netcdf(workspace):
    tmp, cfg = workspace
    assert cli.main(["infer", "--config", cfg, "--stride", "48"]) == 0
    out = list((tmp / "data" / "infer" / "vitcg").glob("*.nc"))
    assert len(out) == 1 and out[0].with_suffix(".png").exists()
    # existing outputs are protected
    assert cli.main(["infer", "--config", cfg, "--stride", "48"]) == 2
    raw_cfg = _config(tmp, infer={"format": "raw"})
    assert cli.main(["infer", "--config", raw_cfg, "--model", "dnn8"]) == 0
    (scn,) = (tmp / "data" / "infer" / "dnn8").glob("*.scn")
    assert read_scene_raw(scn)["coverage"].min() == 1


def test_aeronet(workspace):
    tmp, cfg = workspace
    assert cli.main(["aeronet", "--config", cfg]) == 0
    summary = json.loads((tmp / "data" / "aeronet" / "vitcg" / "aeronet_metrics.json").read_text())
    assert summary["n_samples"] >= 1


def test_exit_codes(tmp_path, monkeypatch):
    assert cli.main(["bogus"]) == 2
    assert cli.main(["eval", "--config", str(tmp_path / "none.yaml")]) == 2
    (tmp_path / "bad.yaml").write_text("unknown_section: 1\n")
    assert cli.main(["eval", "--config", str(tmp_path / "bad.yaml")]) == 2
    cfg = _config(tmp_path)
    assert cli.main(["eval", "--config", cfg]) == 3
    assert cli.main(["synth", "--config", cfg]) == 0
    bad_model = _config(tmp_path, vitcg={"groups": 3})
    assert cli.main(["train", "--config", bad_model]) == 2
    monkeypatch.setattr(trainer, "validation_mse", lambda *a, **k: math.inf)
    assert cli.main(["train", "--config", cfg, "--model", "dnn8"]) == 4


def test_flags_override_file(tmp_path, monkeypatch):
    cfg = _config(tmp_path)
    rc = load_run_config(cfg, {"seed": 9, "model": "dnn291", "stride": 32})
    assert (rc.seed, rc.model, rc.infer.stride, rc.train_config().seed) == (9, "dnn291", 32, 9)
    assert rc.data_dir == tmp_path / "data"
    monkeypatch.setenv("HYPERAOD_DATA_DIR", str(tmp_path / "env"))
    assert load_run_config(None).data_dir == tmp_path / "env"
    assert load_run_config(cfg, {"model": "vitcg_nocg"}).vitcg_config(8).groups == 1


def test_prep_from_netcdf(tmp_path):
    for i in range(3):
        d = tmp_path / f"g{i}"
        d.mkdir()
        rng = np.random.default_rng(i)
        _write_l1b_l2(d, rng.uniform(0.2, 0.8, (4, 196, 196)),
                      rng.uniform(0, 1, (28, 28)).astype(np.float32))
    granules = [{"id": f"G{i}", "l1b": f"g{i}/l1b.nc", "l2": f"g{i}/l2.nc"} for i in range(3)]
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump({"data_dir": ".", "prep": {
        "granules": granules, "ratios": [0.34, 0.33, 0.33], "mapping": {"time_window_minutes": 30}}}))
    assert cli.main(["prep", "--config", str(path)]) == 0
    report = json.loads((tmp_path / "prep_report.json").read_text())
    assert all(g["resample_factor"] == 7 and g["patches_kept"] == 4 for g in report["granules"])
    assert report["patches"] == {"train": 4, "val": 4, "test": 4}
    empty = tmp_path / "empty.yaml"
    empty.write_text("prep: {granules: []}\n")
    assert cli.main(["prep", "--config", str(empty)]) == 2
