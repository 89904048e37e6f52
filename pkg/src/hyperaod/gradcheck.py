"""Central finite-difference verification of autograd gradients.

Meant for tiny models in float64: every parameter scalar costs two forward
passes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import torch
from torch import nn

from hyperaod.baselines import PixelDNN
from hyperaod.config import PixelDNNConfig, ViTCGConfig
from hyperaod.model import ViTCG
from hyperaod.trainer import masked_mse

TINY_VITCG = ViTCGConfig(channels=4, groups=2, spatial_size=16, patch_size=8, token_dim=16,
                         encoder_depth=1, num_heads=2, decoder_channels=(8, 4, 4, 4))
TINY_DNN = PixelDNNConfig(input_bands=4, hidden_sizes=(8, 8))


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_parameter: str
    worst_index: int
    n_checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def relative_error(analytic: torch.Tensor, numeric: torch.Tensor, floor: float = 1e-8):
    denom = torch.clamp(torch.maximum(analytic.abs(), numeric.abs()), min=floor)
    return (analytic - numeric).abs() / denom


def grad_check(model: nn.Module, loss_fn: Callable[[nn.Module], torch.Tensor], *,
               step: float = 1e-5, tolerance: float = 1e-3,
               fault: Optional[tuple[str, int, float]] = None) -> GradCheckReport:
    """Compare d loss_fn(model) / d theta from autograd against central differences.

    ``fault`` = (parameter name, flat index, factor) scales one analytic
    gradient entry before comparison, to confirm the check can fail.
    """
    model.zero_grad(set_to_none=True)
    loss_fn(model).backward()
    params = dict(model.named_parameters())
    analytic = {name: p.grad.detach().clone().reshape(-1) if p.grad is not None
                else torch.zeros(p.numel(), dtype=p.dtype) for name, p in params.items()}
    if fault is not None:
        name, index, factor = fault
        analytic[name][index] *= factor

    worst = (0.0, "", -1)
    n = 0
    with torch.no_grad():
        for name, p in params.items():
            flat = p.data.view(-1)
            numeric = torch.empty_like(flat)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                plus = loss_fn(model).item()
                flat[i] = orig - step
                minus = loss_fn(model).item()
                flat[i] = orig
                numeric[i] = (plus - minus) / (2 * step)
            err = relative_error(analytic[name], numeric)
            n += err.numel()
            j = int(err.argmax())
            if err[j].item() > worst[0]:
                worst = (err[j].item(), name, j)
    return GradCheckReport(worst[0], worst[1], worst[2], n, tolerance)


def tiny_problem(kind: str = "vitcg", seed: int = 0):
    """A float64 tiny model plus a masked-MSE loss closure on fixed random data."""
    g = torch.Generator().manual_seed(seed)
    torch.manual_seed(seed)
    if kind == "vitcg":
        cfg = TINY_VITCG
        model = ViTCG(cfg).double()
        shape = (2, cfg.channels, cfg.spatial_size, cfg.spatial_size)
    elif kind == "dnn":
        model = PixelDNN(TINY_DNN).double()
        shape = (2, TINY_DNN.input_bands, 6, 6)
    else:
        raise ValueError(f"unknown tiny problem {kind!r}")
    x = torch.randn(shape, generator=g, dtype=torch.float64)
    target = torch.rand(shape[:1] + shape[2:], generator=g, dtype=torch.float64)
    mask = torch.rand(target.shape, generator=g) > 0.1

    def loss_fn(m: nn.Module) -> torch.Tensor:
        return masked_mse(m(x), target, mask)

    return model, loss_fn
