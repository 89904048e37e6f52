"""``hyperaod`` command line: synth | prep | train | eval | infer | aeronet.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import timedelta
from pathlib import Path

import numpy as np
import torch

from hyperaod import aeronet as aero
from hyperaod.checkpoint import build_model, load_checkpoint, save_checkpoint
from hyperaod.datapipe import (PatchPack, compute_band_stats, extract_patches, read_pack,
                               split_granules, synth_granule, write_pack)
from hyperaod.datapipe.ingest import IngestMapping, load_granule, read_scene, write_scene
from hyperaod.datapipe.patches import max_invalid_pixels, tile_origins
from hyperaod.datapipe.resample import resample_factor
from hyperaod.datapipe.splits import SPLITS
from hyperaod.errors import ConfigError, DataError, HyperAODError
from hyperaod.inference import (retrieve_scene, slide_windows, write_quicklook, write_scene_netcdf,
                                write_scene_raw)
from hyperaod.metrics import compute_metrics, export_scatter, export_table
from hyperaod.runconfig import RunConfig, load_run_config
from hyperaod.trainer import PackBatches, train

log = logging.getLogger("hyperaod")


def _claim(path: Path, force: bool) -> Path:
    if path.exists() and not force:
        raise ConfigError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_packs(rc: RunConfig, patches_by_split: dict, wavelengths, force: bool) -> dict:
    train_patches = patches_by_split["train"]
    if not train_patches:
        raise DataError("no training patches survived filtering")
    train_pack = PatchPack.from_patches(train_patches, ["train"] * len(train_patches))
    stats = compute_band_stats(train_pack.radiance, train_pack.valid)
    counts = {}
    for split in SPLITS:
        patches = patches_by_split[split]
        pack = PatchPack.from_patches(patches, [split] * len(patches), wavelengths, stats)
        pack.check()
        write_pack(pack, _claim(rc.path("packs", f"{split}.apk"), force))
        counts[split] = len(pack)
    _claim(rc.path("packs", "band_stats.json"), force).write_text(json.dumps(
        {"mean": stats.mean.tolist(), "std": stats.std.tolist()}, indent=1))
    return counts


def _plant_sites(scene, rng: np.random.Generator, n: int) -> list:
    """Ground records whose 550 nm value equals the truth 8x8 block mean at the site."""
    h, w = scene.shape
    records = []
    for k in range(n):
        r, c = int(rng.integers(8, h - 8)), int(rng.integers(8, w - 8))
        lat, lon = float(scene.lat[r, c]), float(scene.lon[r, c])
        try:
            truth = aero.collocate_site(scene.aod, scene.valid, scene.lat, scene.lon, lat, lon)
        except DataError:
            continue
        alpha = float(rng.uniform(0.5, 2.0))
        aod_500 = truth * (550.0 / 500.0) ** alpha
        when = scene.acquisition_time + timedelta(minutes=float(rng.uniform(-40, 40)))
        records.append(aero.SiteRecord(f"{scene.granule_id}_S{k}", lat, lon, when, aod_500, alpha))
    return records


def cmd_synth(rc: RunConfig, args) -> int:
    opts = rc.synth
    ids, scenes = [], {}
    for i in range(opts.granules):
        scene = synth_granule(rc.seed * 100003 + i, opts.height, opts.width, opts.channels,
                              texture_amplitude=opts.texture_amplitude)
        ids.append(scene.granule_id)
        scenes[scene.granule_id] = scene
    split = split_granules(ids, opts.ratios, rc.seed)
    by_split = {s: [] for s in SPLITS}
    per_granule = {}
    for gid in ids:
        patches = extract_patches(scenes[gid])
        by_split[split.mapping[gid]].extend(patches)
        per_granule[gid] = {"split": split.mapping[gid], "patches": len(patches)}
    wavelengths = scenes[ids[0]].wavelengths
    counts = _write_packs(rc, by_split, wavelengths, args.force)

    rng = np.random.default_rng(rc.seed)
    sites = []
    for gid in split.ids("test"):
        write_scene(_claim(rc.path("scenes", f"{gid}.nc"), args.force), scenes[gid])
        sites += _plant_sites(scenes[gid], rng, opts.sites_per_scene)
    aero.write_sites_csv(_claim(rc.path("sites.csv"), args.force), sites)

    manifest = {"seed": rc.seed, "ratios": list(split.ratios), "granules": per_granule,
                "patches": counts, "sites": len(sites)}
    _claim(rc.path("manifest.json"), args.force).write_text(json.dumps(manifest, indent=2))
    print(json.dumps({"granules": split.counts(), "patches": counts, "sites": len(sites)}))
    return 0


def cmd_prep(rc: RunConfig, args) -> int:
    if not rc.prep.granules:
        raise ConfigError("prep.granules lists no input files")
    try:
        mapping = IngestMapping.from_dict(rc.prep.mapping)
    except TypeError as exc:
        raise ConfigError(f"bad prep.mapping: {exc}") from None
    print(f"resample factor: {resample_factor(mapping.coarse_km, mapping.fine_km)}")
    entries = []
    for g in rc.prep.granules:
        if not {"l1b", "l2"} <= set(g):
            raise ConfigError(f"granule entry needs l1b and l2 paths: {g}")
        entries.append((g.get("id"), rc.resolve(g["l1b"]), rc.resolve(g["l2"])))
    scenes, reports = [], []
    for gid, l1b, l2 in entries:
        scene, report = load_granule(l1b, l2, mapping, gid)
        patches = extract_patches(scene)
        report["tiles"] = len(tile_origins(*scene.shape))
        report["patches_kept"] = len(patches)
        report["patches_dropped"] = report["tiles"] - len(patches)
        report["max_invalid_per_patch"] = max_invalid_pixels()
        scenes.append((scene, patches))
        reports.append(report)
    split = split_granules([s.granule_id for s, _ in scenes], rc.prep.ratios, rc.seed)
    by_split = {s: [] for s in SPLITS}
    for (scene, patches), report in zip(scenes, reports):
        report["split"] = split.mapping[scene.granule_id]
        by_split[report["split"]].extend(patches)
    counts = _write_packs(rc, by_split, scenes[0][0].wavelengths, args.force)
    _claim(rc.path("prep_report.json"), args.force).write_text(
        json.dumps({"granules": reports, "patches": counts}, indent=2))
    print(json.dumps({"patches": counts}))
    return 0


def _load_pack(rc: RunConfig, split: str) -> PatchPack:
    path = rc.path("packs", f"{split}.apk")
    if not path.exists():
        raise DataError(f"missing pack {path}; run synth or prep first")
    return read_pack(path)


def cmd_train(rc: RunConfig, args) -> int:
    train_pack = _load_pack(rc, "train")
    val_pack = _load_pack(rc, "val")
    stats = train_pack.band_stats or compute_band_stats(train_pack.radiance, train_pack.valid)
    c = train_pack.channels
    model_cfg = rc.dnn_config(c) if rc.model.startswith("dnn") else rc.vitcg_config(c)
    tcfg = rc.train_config()
    torch.manual_seed(tcfg.seed)
    model = build_model(model_cfg)
    ckpt = _claim(rc.path("checkpoints", f"{rc.model}.pt"), args.force)
    hist = _claim(rc.path("history", f"{rc.model}.jsonl"), args.force)
    result = train(model, train_pack, val_pack, tcfg, stats, history_path=hist)
    save_checkpoint(ckpt, result.model, stats, variant=rc.model)
    print(json.dumps({"model": rc.model, "best_epoch": result.best_epoch,
                      "best_val_mse": result.best_val, "epochs": len(result.history),
                      "checkpoint": str(ckpt)}))
    return 0


@torch.no_grad()
def predict_pack(model, pack: PatchPack, stats, batch_size: int = 8) -> np.ndarray:
    model.eval()
    batches = PackBatches(pack, stats, next(model.parameters()).dtype)
    out = []
    for start in range(0, len(pack), batch_size):
        x, _, _ = batches.get(np.arange(start, min(start + batch_size, len(pack))))
        out.append(model(x).float().numpy())
    return np.concatenate(out)


def _checkpoints(rc: RunConfig, explicit_model: bool) -> list[Path]:
    if explicit_model:
        paths = [rc.path("checkpoints", f"{rc.model}.pt")]
    else:
        paths = sorted(rc.path("checkpoints").glob("*.pt"))
    missing = [p for p in paths if not p.exists()]
    if not paths or missing:
        raise DataError(f"missing checkpoint(s): {[str(p) for p in missing] or 'none found'}")
    return paths


def cmd_eval(rc: RunConfig, args) -> int:
    test = _load_pack(rc, "test")
    if len(test) == 0:
        raise DataError("test split is empty")
    reports = []
    out = rc.path("eval")
    for path in _checkpoints(rc, args.model is not None):
        ck = load_checkpoint(path)
        pred = predict_pack(ck.model, test, ck.band_stats)
        reports.append(compute_metrics(pred, test.aod, test.valid, model_name=ck.variant))
        export_scatter(pred, test.aod, test.valid, out_dir=out / ck.variant, title=ck.variant)
    markdown, _ = export_table(reports, out)
    print(markdown, end="")
    return 0


def _scene_paths(rc: RunConfig, listed: list) -> list[Path]:
    paths = [rc.resolve(p) for p in listed] if listed else sorted(rc.path("scenes").glob("*.nc"))
    if not paths:
        raise DataError("no scenes to process")
    return paths


def _retrieve(rc: RunConfig, ck, scene):
    window = getattr(ck.model.cfg, "spatial_size", 96)
    plan = slide_windows(*scene.shape, window=window, stride=rc.infer.stride)
    return plan, retrieve_scene(ck.model, scene, plan, ck.band_stats, rc.infer.batch_size)


def cmd_infer(rc: RunConfig, args) -> int:
    ck = load_checkpoint(_checkpoints(rc, True)[0])
    for path in _scene_paths(rc, rc.infer.scenes):
        scene = read_scene(path)
        plan, result = _retrieve(rc, ck, scene)
        stem = rc.path("infer", rc.model, scene.granule_id)
        if rc.infer.format == "netcdf":
            target = _claim(stem.with_suffix(".nc"), args.force)
            write_scene_netcdf(target, result, scene.lat, scene.lon, scene.granule_id)
        else:
            target = _claim(stem.with_suffix(".scn"), args.force)
            write_scene_raw(target, result, scene.lat, scene.lon, scene.granule_id)
        write_quicklook(_claim(stem.with_suffix(".png"), args.force), result.aod, result.valid)
        print(json.dumps({"granule_id": scene.granule_id, "windows": len(plan.origins),
                          "max_overlap": int(result.coverage.max()),
                          "stride": rc.infer.stride, "output": str(target)}))
    return 0


def cmd_aeronet(rc: RunConfig, args) -> int:
    sites_path = rc.resolve(rc.aeronet.sites) if rc.aeronet.sites else rc.path("sites.csv")
    if not sites_path.exists():
        raise DataError(f"site file not found: {sites_path}")
    records = aero.read_sites_csv(sites_path)
    ck = load_checkpoint(_checkpoints(rc, True)[0])
    scenes = []
    for path in _scene_paths(rc, rc.aeronet.scenes):
        scene = read_scene(path)
        _, result = _retrieve(rc, ck, scene)
        scenes.append(aero.ScenePrediction(scene.granule_id, scene.acquisition_time, result.aod,
                                           result.valid, scene.lat, scene.lon))
    result = aero.validate(scenes, records, window_minutes=rc.aeronet.window_minutes,
                           model_name=rc.model)
    aero.write_validation(result, rc.path("aeronet", rc.model))
    print(json.dumps({"samples": len(result.rows), "notice": result.notice,
                      "metrics": None if result.report is None else result.report.to_dict()}))
    return 0


COMMANDS = {"synth": cmd_synth, "prep": cmd_prep, "train": cmd_train, "eval": cmd_eval,
            "infer": cmd_infer, "aeronet": cmd_aeronet}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperaod", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--model", choices=["vitcg", "vitcg_nocg", "dnn8", "dnn291"])
    parser.add_argument("--stride", type=int)
    parser.add_argument("--force", action="store_true", help="overwrite existing outputs")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = load_run_config(args.config, {"seed": args.seed, "model": args.model,
                                           "stride": args.stride})
        return COMMANDS[args.command](rc, args)
    except HyperAODError as exc:
        print(f"hyperaod {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
