"""Masked-MSE training with gradient accumulation and early stopping."""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch
from torch import nn

from hyperaod.config import TrainConfig
from hyperaod.datapipe.pack import PatchPack
from hyperaod.errors import DataError, NumericalError
from hyperaod.structures import BandStats

log = logging.getLogger(__name__)


def masked_sse(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Sum of squared errors over valid pixels; masked entries get exactly zero gradient."""
    diff = torch.where(mask, pred - torch.where(mask, target, torch.zeros_like(target)),
                       torch.zeros_like(pred))
    return (diff * diff).sum()


def masked_mse(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean squared error over valid pixels, pooled across the whole batch."""
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise DataError(f"shape mismatch: pred {tuple(pred.shape)}, target "
                        f"{tuple(target.shape)}, mask {tuple(mask.shape)}")
    n = int(mask.sum())
    if n == 0:
        raise DataError("no valid pixels in batch")
    return masked_sse(pred, target, mask) / n


@dataclass
class EarlyStopState:
    best_val: float = math.inf
    best_epoch: int = 0
    epochs_since_improve: int = 0
    epoch: int = 0


def early_stop_update(state: EarlyStopState, val_mse: float, patience: int):
    """Advance one epoch -> (new state, stop). Ties count as no improvement."""
    epoch = state.epoch + 1
    if val_mse < state.best_val:
        new = EarlyStopState(val_mse, epoch, 0, epoch)
    else:
        new = EarlyStopState(state.best_val, state.best_epoch, state.epochs_since_improve + 1, epoch)
    return new, new.epochs_since_improve >= patience


@dataclass
class TrainResult:
    model: nn.Module
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = math.inf
    stopped_early: bool = False
    steps: int = 0


def _device_dtype(model: nn.Module):
    p = next(model.parameters())
    return p.device, p.dtype


class PackBatches:
    """Standardizes pack slices on demand into (x, y, mask) tensors."""

    def __init__(self, pack: PatchPack, stats: Optional[BandStats], dtype=torch.float32):
        self.pack = pack
        self.stats = stats
        self.dtype = dtype

    def __len__(self):
        return len(self.pack)

    def get(self, idx):
        idx = np.asarray(idx)
        valid = self.pack.valid[idx]
        rad = self.pack.radiance[idx]
        if self.stats is not None:
            x = self.stats.standardize(rad, valid)
        else:
            x = np.where(valid[:, None] & np.isfinite(rad), rad, 0.0)
        y = np.where(valid, self.pack.aod[idx], 0.0)
        return (torch.as_tensor(x, dtype=self.dtype), torch.as_tensor(y, dtype=self.dtype),
                torch.as_tensor(valid))


def accumulate_step(model: nn.Module, optimizer: torch.optim.Optimizer, batches: PackBatches,
                    indices, micro_batch: int) -> tuple[float, int]:
    """One optimizer update over ``indices``, processed ``micro_batch`` patches at a time.

    Each micro-batch contributes SSE / (valid pixels in the whole step), so the
    accumulated gradient equals that of one pass over all of ``indices``.
    """
    indices = np.asarray(indices)
    total = int(batches.pack.valid[indices].sum())
    if total == 0:
        raise DataError("optimizer step has no valid pixels")
    optimizer.zero_grad(set_to_none=True)
    sse_sum = 0.0
    for start in range(0, len(indices), micro_batch):
        x, y, m = batches.get(indices[start:start + micro_batch])
        sse = masked_sse(model(x), y, m)
        (sse / total).backward()
        sse_sum += float(sse.detach())
    optimizer.step()
    return sse_sum, total


@torch.no_grad()
def validation_mse(model: nn.Module, batches: PackBatches, batch_size: int = 8) -> float:
    """Masked, pixel-weighted MSE over every patch in ``batches``."""
    was_training = model.training
    model.eval()
    sse, count = 0.0, 0
    try:
        for start in range(0, len(batches), batch_size):
            x, y, m = batches.get(np.arange(start, min(start + batch_size, len(batches))))
            sse += float(masked_sse(model(x), y, m))
            count += int(m.sum())
    finally:
        model.train(was_training)
    if count == 0:
        raise DataError("validation split has no valid pixels")
    return sse / count


def make_optimizer(model: nn.Module, cfg: TrainConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate, betas=cfg.betas,
                             eps=cfg.eps, weight_decay=cfg.weight_decay)


def train(model: nn.Module, train_pack: PatchPack, val_pack: PatchPack, cfg: TrainConfig,
          band_stats: Optional[BandStats] = None, *, history_path=None,
          on_epoch_end: Optional[Callable[[int, nn.Module], None]] = None) -> TrainResult:
    """Fit ``model`` and return it loaded with the parameters of its best validation epoch."""
    if len(train_pack) == 0 or len(val_pack) == 0:
        raise DataError("training needs non-empty train and val packs")
    _, dtype = _device_dtype(model)
    train_b = PackBatches(train_pack, band_stats, dtype)
    val_b = PackBatches(val_pack, band_stats, dtype)
    gen = torch.Generator().manual_seed(cfg.seed)
    optimizer = make_optimizer(model, cfg)
    steps_per_epoch = math.ceil(len(train_pack) / cfg.effective_batch)
    scheduler = None
    if cfg.scheduler == "cosine":
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
            optimizer, T_max=cfg.max_epochs * steps_per_epoch)

    hist_file = None
    if history_path is not None:
        Path(history_path).parent.mkdir(parents=True, exist_ok=True)
        hist_file = open(history_path, "w")

    state = EarlyStopState()
    best_params = copy.deepcopy(model.state_dict())
    result = TrainResult(model)
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            model.train()
            lr = optimizer.param_groups[0]["lr"]
            order = torch.randperm(len(train_pack), generator=gen).numpy()
            sse, count = 0.0, 0
            for start in range(0, len(order), cfg.effective_batch):
                s, n = accumulate_step(model, optimizer, train_b,
                                       order[start:start + cfg.effective_batch], cfg.micro_batch)
                sse += s
                count += n
                result.steps += 1
                if scheduler is not None:
                    scheduler.step()
            train_mse = sse / count
            if not math.isfinite(train_mse):
                raise NumericalError(f"training diverged at epoch {epoch}: loss {train_mse}")
            val = validation_mse(model, val_b, cfg.micro_batch)
            if not math.isfinite(val):
                raise NumericalError(f"validation loss is {val} at epoch {epoch}")
            state, stop = early_stop_update(state, val, cfg.patience)
            if state.best_epoch == epoch:
                best_params = copy.deepcopy(model.state_dict())
            record = {"epoch": epoch, "train_mse": train_mse, "val_mse": val, "lr": lr,
                      "stopped": stop}
            result.history.append(record)
            if hist_file is not None:
                hist_file.write(json.dumps(record) + "\n")
                hist_file.flush()
            log.info("epoch %d train %.6f val %.6f", epoch, train_mse, val)
            if on_epoch_end is not None:
                on_epoch_end(epoch, model)
            if stop:
                result.stopped_early = True
                break
    finally:
        if hist_file is not None:
            hist_file.close()

    model.load_state_dict(best_params)
    result.best_epoch = state.best_epoch
    result.best_val = state.best_val
    return result
