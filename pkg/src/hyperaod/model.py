"""ViTCG: a vision transformer with channel-wise grouping for dense AOD regression.

Pipeline for a batch ``x`` of shape (B, C, H, W)::

    group_channels -> (B, G, C/G, H, W)
    embed_patches  -> (B, G*h*w, D)      shared patch projection for every group
    add_positional -> + spatial table[h*w] + group table[G]
    encode         -> post-norm transformer blocks over all G*h*w tokens jointly
    decode         -> group mean, token MLP, log2(p) x (upsample, conv, norm, GELU), 1x1 conv

where h = w = H / p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from hyperaod.config import ViTCGConfig
from hyperaod.errors import ConfigError, DataError
from hyperaod.structures import AODField, RadiancePatch


def group_channels(x, groups: int):
    """Split the channel axis (third from last) into ``groups`` contiguous blocks.

    Works on numpy arrays and torch tensors alike; leading batch axes are kept.
    Group g holds channels [g*C/G, (g+1)*C/G).
    """
    *lead, c, h, w = x.shape
    if groups < 1 or c % groups:
        raise ConfigError(f"cannot split C={c} channels into G={groups} equal groups")
    return x.reshape((*lead, groups, c // groups, h, w))


def ungroup_channels(xg):
    *lead, g, cg, h, w = xg.shape
    return xg.reshape((*lead, g * cg, h, w))


@dataclass
class TokenSequence:
    """Tokens of shape (B, N, D) plus the per-token layout metadata.

    Tokens of one group are contiguous and ordered row-major over the patch
    grid, so ``group_index`` is ``[0]*h*w + [1]*h*w + ...``.
    """

    tokens: torch.Tensor
    group_index: torch.Tensor
    grid_position: torch.Tensor

    def with_tokens(self, tokens: torch.Tensor) -> "TokenSequence":
        return TokenSequence(tokens, self.group_index, self.grid_position)


def token_layout(cfg: ViTCGConfig) -> tuple[torch.Tensor, torch.Tensor]:
    n = cfg.grid_size
    cells = torch.arange(n * n)
    group_index = torch.arange(cfg.groups).repeat_interleave(n * n)
    grid = torch.stack([cells // n, cells % n], dim=1).repeat(cfg.groups, 1)
    return group_index, grid


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        # no qkv bias: a key bias has an identically zero gradient under softmax
        self.qkv = nn.Linear(dim, 3 * dim, bias=False)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        out = F.scaled_dot_product_attention(qkv[0], qkv[1], qkv[2])
        return self.proj(out.transpose(1, 2).reshape(b, n, d))


class EncoderBlock(nn.Module):
    """Post-norm block: y = LN(x + MHSA(x)); z = LN(y + MLP(y))."""

    def __init__(self, dim: int, heads: int, hidden: int):
        super().__init__()
        self.attn = SelfAttention(dim, heads)
        self.norm1 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))
        self.norm2 = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.norm1(x + self.attn(x))
        return self.norm2(x + self.mlp(x))


def _norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(math.gcd(8, channels), channels)


class UpStage(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        # bias dropped: the following normalization removes it
        self.conv = nn.Conv2d(cin, cout, 3, padding=1, bias=False)
        self.norm = _norm(cout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        return F.gelu(self.norm(self.conv(x)))


class ViTCG(nn.Module):
    def __init__(self, cfg: ViTCGConfig = ViTCGConfig()):
        super().__init__()
        self.cfg = cfg
        d = cfg.token_dim
        # one projection shared by every group
        self.patch_embed = nn.Conv2d(cfg.group_channels, d, cfg.patch_size, stride=cfg.patch_size)
        self.spatial_pe = nn.Parameter(torch.zeros(cfg.grid_size ** 2, d))
        self.group_pe = nn.Parameter(torch.zeros(cfg.groups, d))
        self.blocks = nn.ModuleList(
            [EncoderBlock(d, cfg.num_heads, cfg.mlp_hidden) for _ in range(cfg.encoder_depth)])
        c0 = cfg.decoder_channels[0]
        self.token_mlp = nn.Sequential(nn.Linear(d, c0), nn.GELU(), nn.Linear(c0, c0))
        self.up = nn.ModuleList(
            [UpStage(a, b) for a, b in zip(cfg.decoder_channels, cfg.decoder_channels[1:])])
        self.head = nn.Conv2d(cfg.decoder_channels[-1], 1, 1)

        group_index, grid = token_layout(cfg)
        self.register_buffer("group_index", group_index, persistent=False)
        self.register_buffer("grid_position", grid, persistent=False)
        if not self.spatial_pe.is_meta:
            nn.init.trunc_normal_(self.spatial_pe, std=0.02)
            nn.init.trunc_normal_(self.group_pe, std=0.02)

    def group_channels(self, x: torch.Tensor) -> torch.Tensor:
        return group_channels(x, self.cfg.groups)

    def embed_patches(self, xg: torch.Tensor) -> TokenSequence:
        cfg = self.cfg
        b, g, cg, h, w = xg.shape
        if (g, cg) != (cfg.groups, cfg.group_channels) or h != cfg.spatial_size or w != cfg.spatial_size:
            raise ConfigError(f"grouped input {tuple(xg.shape)} does not match config")
        t = self.patch_embed(xg.reshape(b * g, cg, h, w))       # (B*G, D, h', w')
        t = t.flatten(2).transpose(1, 2).reshape(b, -1, cfg.token_dim)
        return TokenSequence(t, self.group_index, self.grid_position)

    def add_positional(self, seq: TokenSequence) -> TokenSequence:
        n = self.cfg.grid_size
        cells = seq.grid_position[:, 0] * n + seq.grid_position[:, 1]
        pe = self.spatial_pe[cells] + self.group_pe[seq.group_index]
        return seq.with_tokens(seq.tokens + pe)

    def encode(self, seq: TokenSequence) -> TokenSequence:
        x = seq.tokens
        for block in self.blocks:
            x = block(x)
        return seq.with_tokens(x)

    def fuse_groups(self, seq: TokenSequence) -> torch.Tensor:
        """Average tokens across groups at each grid cell -> (B, h, w, D)."""
        cfg = self.cfg
        b, _, d = seq.tokens.shape
        n = cfg.grid_size
        return seq.tokens.reshape(b, cfg.groups, n, n, d).mean(dim=1)

    def decode(self, seq: TokenSequence) -> torch.Tensor:
        x = self.token_mlp(self.fuse_groups(seq)).permute(0, 3, 1, 2)
        for stage in self.up:
            x = stage(x)
        return self.head(x)[:, 0]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, C, H, W) standardized radiance -> (B, H, W) AOD."""
        if x.ndim != 4 or x.shape[1] != self.cfg.channels:
            raise ConfigError(
                f"expected input (B, {self.cfg.channels}, H, W), got {tuple(x.shape)}")
        seq = self.embed_patches(self.group_channels(x))
        return self.decode(self.encode(self.add_positional(seq)))

    @torch.no_grad()
    def predict(self, patch: RadiancePatch) -> AODField:
        """Evaluate one standardized patch; the output mask is the input mask."""
        if patch.channels != self.cfg.channels:
            raise DataError(f"patch has {patch.channels} bands, model expects {self.cfg.channels}")
        was_training = self.training
        self.eval()
        try:
            param = next(self.parameters())
            x = torch.as_tensor(patch.values, dtype=param.dtype, device=param.device)[None]
            out = self(x)[0].cpu().numpy()
        finally:
            self.train(was_training)
        return AODField(out.astype(np.float32), patch.valid.copy())


def count_parameters(cfg: ViTCGConfig) -> int:
    """Learnable scalars in a ViTCG built from ``cfg`` (no weights are allocated)."""
    with torch.device("meta"):
        model = ViTCG(cfg)
    return sum(p.numel() for p in model.parameters())
