import copy
import json
import math

import numpy as np
import pytest
import torch

from hyperaod import trainer
from hyperaod.baselines import PixelDNN
from hyperaod.config import PixelDNNConfig, TrainConfig
from hyperaod.datapipe import PatchPack, compute_band_stats
from hyperaod.errors import ConfigError, DataError, NumericalError
from hyperaod.trainer import (EarlyStopState, PackBatches, accumulate_step, early_stop_update,
                              make_optimizer, masked_mse, train)


def _pack(n=6, c=3, h=4, seed=0):
    rng = np.random.default_rng(seed)
    rad = rng.standard_normal((n, c, h, h)).astype(np.float32)
    valid = rng.random((n, h, h)) > 0.25
    aod = np.where(valid, rad.mean(axis=1) ** 2, np.nan).astype(np.float32)
    return PatchPack(rad, aod, valid, np.linspace(400, 800, c), [f"g{i}" for i in range(n)],
                     ["train"] * n)


def _dnn(seed=0, dtype=torch.float64):
    torch.manual_seed(seed)
    return PixelDNN(PixelDNNConfig(input_bands=3, hidden_sizes=(8,))).to(dtype)


def test_masked_mse_hand_case():
    pred = torch.tensor([[1.0, 2.0], [3.0, 4.0]])
    target = torch.tensor([[1.0, 0.0], [float("nan"), 2.0]])
    mask = torch.tensor([[True, True], [False, True]])
    assert masked_mse(pred, target, mask).item() == pytest.approx((0 + 4 + 4) / 3)


def test_masked_mse_nan_target_has_zero_grad():
    pred = torch.tensor([1.0, 2.0], requires_grad=True)
    target = torch.tensor([0.0, float("nan")])
    masked_mse(pred, target, torch.tensor([True, False])).backward()
    assert pred.grad.tolist() == [2.0, 0.0]


def test_masked_mse_errors():
    with pytest.raises(DataError):
        masked_mse(torch.zeros(2), torch.zeros(3), torch.ones(2, dtype=torch.bool))
    with pytest.raises(DataError):
        masked_mse(torch.zeros(2), torch.zeros(2), torch.zeros(2, dtype=torch.bool))


def test_accumulation_matches_single_batch():
    pack = _pack(n=7)
    batches = PackBatches(pack, None, torch.float64)
    idx = np.arange(7)
    grads = []
    for micro in (7, 3, 1):
        model = _dnn()
        opt = torch.optim.SGD(model.parameters(), lr=0.0)
        accumulate_step(model, opt, batches, idx, micro)
        grads.append(torch.cat([p.grad.reshape(-1) for p in model.parameters()]))
    # oracle: one masked_mse over the whole step
    model = _dnn()
    x, y, m = batches.get(idx)
    masked_mse(model(x), y, m).backward()
    ref = torch.cat([p.grad.reshape(-1) for p in model.parameters()])
    for g in grads:
        assert torch.allclose(g, ref, atol=1e-12, rtol=0)


def test_accumulation_float32_within_1e6():
    pack = _pack(n=8)
    batches = PackBatches(pack, None, torch.float32)
    out = []
    for micro in (8, 2):
        model = _dnn(dtype=torch.float32)
        opt = torch.optim.SGD(model.parameters(), lr=0.0)
        accumulate_step(model, opt, batches, np.arange(8), micro)
        out.append(torch.cat([p.grad.reshape(-1) for p in model.parameters()]))
    assert (out[0] - out[1]).abs().max().item() <= 1e-6


def _trace(vals, patience):
    state, stops = EarlyStopState(), []
    for v in vals:
        state, stop = early_stop_update(state, v, patience)
        stops.append(stop)
        if stop:
            break
    return state, stops


def test_early_stop_traces():
    state, stops = _trace([0.5, 0.4, 0.41, 0.42], 2)
    assert stops == [False, False, False, True]
    assert state.best_epoch == 2 and state.best_val == 0.4 and state.epoch == 4
    state, stops = _trace([0.5, 0.5, 0.5], 2)
    assert stops == [False, False, True] and state.best_epoch == 1
    state, stops = _trace([0.5, 0.4, 0.3, 0.2], 1)
    assert not any(stops) and state.best_epoch == 4
    state, stops = _trace([1.0, 2.0], 1)
    assert stops == [False, True]


def test_train_config_validation():
    assert TrainConfig(effective_batch=256, micro_batch=8).accumulation_steps == 32
    with pytest.raises(ConfigError):
        TrainConfig(effective_batch=10, micro_batch=3)
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ConfigError):
        TrainConfig(scheduler="step")


def test_train_is_reproducible(tmp_path):
    pack = _pack(n=8)
    stats = compute_band_stats(pack.radiance, pack.valid)
    cfg = TrainConfig(learning_rate=1e-2, effective_batch=4, micro_batch=2, max_epochs=5,
                      patience=5, seed=3)
    runs = []
    for k in range(2):
        res = train(_dnn(dtype=torch.float32), pack, pack, cfg, stats,
                    history_path=tmp_path / f"h{k}.jsonl")
        runs.append(res)
    assert runs[0].history == runs[1].history
    lines = (tmp_path / "h0.jsonl").read_text().splitlines()
    assert [json.loads(l)["epoch"] for l in lines] == [1, 2, 3, 4, 5]
    assert runs[0].steps == 10
    assert runs[0].history[-1]["val_mse"] < runs[0].history[0]["val_mse"]


def test_train_partial_last_batch_counts():
    pack = _pack(n=5)
    cfg = TrainConfig(learning_rate=1e-3, effective_batch=4, micro_batch=2, max_epochs=2,
                      patience=5)
    res = train(_dnn(dtype=torch.float32), pack, pack, cfg)
    assert res.steps == 4


def test_train_restores_best_and_stops(monkeypatch):
    pack = _pack(n=4)
    vals = iter([0.3, 0.2, 0.25, 0.26, 0.1])
    monkeypatch.setattr(trainer, "validation_mse", lambda *a, **k: next(vals))
    snaps = {}
    cfg = TrainConfig(learning_rate=1e-2, effective_batch=4, micro_batch=4, max_epochs=10,
                      patience=2)
    res = train(_dnn(dtype=torch.float32), pack, pack, cfg,
                on_epoch_end=lambda e, m: snaps.__setitem__(e, copy.deepcopy(m.state_dict())))
    assert res.stopped_early and res.best_epoch == 2 and len(res.history) == 4
    for k, v in res.model.state_dict().items():
        assert torch.equal(v, snaps[2][k])


def test_divergence_raises(monkeypatch):
    pack = _pack(n=2)
    monkeypatch.setattr(trainer, "validation_mse", lambda *a, **k: math.nan)
    cfg = TrainConfig(effective_batch=2, micro_batch=2, max_epochs=3, patience=3)
    with pytest.raises(NumericalError):
        train(_dnn(dtype=torch.float32), pack, pack, cfg)


def test_empty_pack_rejected():
    pack = _pack(n=2)
    with pytest.raises(DataError):
        train(_dnn(), pack, pack.select([]), TrainConfig(effective_batch=2, micro_batch=2))


def test_optimizer_settings():
    opt = make_optimizer(_dnn(), TrainConfig(weight_decay=0.05))
    g = opt.param_groups[0]
    assert isinstance(opt, torch.optim.AdamW) and g["weight_decay"] == 0.05 and g["lr"] == 1e-4
