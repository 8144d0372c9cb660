"""Epsilon-predicting U-Net with text cross-attention.

Attention follows softmax(Q K^T / sqrt(d)) V with Q projected from flattened
U-Net features and K, V from the text context; each transformer block is
cross-attention plus a pointwise feed-forward, wrapped in 1x1 projections.
Timesteps enter through a sinusoidal embedding and per-resblock projections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ValidationError
from .text import TextBrief


def attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor,
              mask: Optional[torch.Tensor] = None, return_weights: bool = False):
    """Scaled dot-product attention core; rows of the weight matrix sum to 1.

    Accepts (N, d) matrices or batched (B, N, d) tensors. `mask` flags valid
    key rows (True = attend); masked logits are set to -inf before softmax.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ValidationError(
            f"incompatible attention shapes q{tuple(q.shape)} k{tuple(k.shape)} v{tuple(v.shape)}")
    scale = 1.0 / math.sqrt(q.shape[-1])
    logits = torch.matmul(q, k.transpose(-2, -1)) * scale
    if mask is not None:
        neg = torch.finfo(logits.dtype).min
        logits = logits.masked_fill(~mask.unsqueeze(-2).to(bool), neg)
    weights = torch.softmax(logits, dim=-1)
    out = torch.matmul(weights, v)
    if return_weights:
        return out, weights
    return out


def cross_attention(z_feat: torch.Tensor, ctx: torch.Tensor,
                    w_q: torch.Tensor, w_k: torch.Tensor, w_v: torch.Tensor,
                    w_out: Optional[torch.Tensor] = None,
                    mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Functional cross-attention: queries from image features, keys/values
    from the context; output optionally projected back to the feature width.

    Shapes: z_feat (N, d_e), ctx (L, d_t), w_q (d_e, d), w_k/w_v (d_t, d),
    w_out (d, d_e).
    """
    if z_feat.shape[-1] != w_q.shape[0]:
        raise ValidationError(f"w_q expects feature dim {w_q.shape[0]}, got {z_feat.shape[-1]}")
    if ctx.shape[-1] != w_k.shape[0] or ctx.shape[-1] != w_v.shape[0]:
        raise ValidationError(f"w_k/w_v expect context dim {ctx.shape[-1]}")
    if w_k.shape[1] != w_q.shape[1] or w_v.shape[1] != w_q.shape[1]:
        raise ValidationError("w_q, w_k, w_v must project to a common inner dim")
    q = z_feat @ w_q
    k = ctx @ w_k
    v = ctx @ w_v
    out = attention(q, k, v, mask=mask)
    if w_out is not None:
        out = out @ w_out
    return out


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sinusoidal embedding of (possibly fractional) timesteps, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=t.dtype) / half)
    args = t[:, None].to(freqs.dtype) * freqs[None]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


@dataclass
class UNetConfig:
    in_channels: int = 4
    base_channels: int = 64
    channel_mults: tuple = (1, 2, 4)
    attention_resolutions: tuple = (4, 2, 1)  # downsample factors carrying attention
    transformer_depth: int = 1
    context_dim: int = 128
    num_res_blocks: int = 1
    time_embed_dim: Optional[int] = None
    norm_groups: int = 8

    def __post_init__(self):
        achievable = {2 ** i for i in range(len(self.channel_mults))}
        extra = set(self.attention_resolutions) - achievable
        if extra:
            raise ValidationError(
                f"attention resolutions {sorted(extra)} not achievable with "
                f"{len(self.channel_mults)} levels (factors {sorted(achievable)})")
        if self.transformer_depth < 1:
            raise ValidationError("transformer_depth must be >= 1")
        if self.time_embed_dim is None:
            self.time_embed_dim = 4 * self.base_channels

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "base_channels": self.base_channels,
            "channel_mults": list(self.channel_mults),
            "attention_resolutions": list(self.attention_resolutions),
            "transformer_depth": self.transformer_depth,
            "context_dim": self.context_dim,
            "num_res_blocks": self.num_res_blocks,
            "time_embed_dim": self.time_embed_dim,
            "norm_groups": self.norm_groups,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UNetConfig":
        d = dict(d)
        d["channel_mults"] = tuple(d["channel_mults"])
        d["attention_resolutions"] = tuple(d["attention_resolutions"])
        return cls(**d)


def _norm(channels: int, groups: int) -> nn.GroupNorm:
    g = groups
    while channels % g:
        g //= 2
    return nn.GroupNorm(max(g, 1), channels)


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, time_dim: int, groups: int):
        super().__init__()
        self.norm1 = _norm(in_ch, groups)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = _norm(out_ch, groups)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x, t_emb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time_proj(F.silu(t_emb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class CrossAttention(nn.Module):
    def __init__(self, dim: int, context_dim: int):
        super().__init__()
        self.to_q = nn.Linear(dim, dim, bias=False)
        self.to_k = nn.Linear(context_dim, dim, bias=False)
        self.to_v = nn.Linear(context_dim, dim, bias=False)
        self.to_out = nn.Linear(dim, dim)

    def forward(self, x, ctx, ctx_mask=None):
        out = attention(self.to_q(x), self.to_k(ctx), self.to_v(ctx), mask=ctx_mask)
        return self.to_out(out)


class TransformerBlock(nn.Module):
    """proj_in -> depth x (cross-attn + feed-forward) -> proj_out, residual."""

    def __init__(self, channels: int, context_dim: int, depth: int, groups: int):
        super().__init__()
        self.norm = _norm(channels, groups)
        self.proj_in = nn.Conv2d(channels, channels, 1)
        self.attn = nn.ModuleList()
        self.attn_norms = nn.ModuleList()
        self.ff = nn.ModuleList()
        self.ff_norms = nn.ModuleList()
        for _ in range(depth):
            self.attn.append(CrossAttention(channels, context_dim))
            self.attn_norms.append(nn.LayerNorm(channels))
            self.ff.append(nn.Sequential(
                nn.Linear(channels, channels * 4), nn.GELU(),
                nn.Linear(channels * 4, channels)))
            self.ff_norms.append(nn.LayerNorm(channels))
        self.proj_out = nn.Conv2d(channels, channels, 1)

    def forward(self, x, ctx, ctx_mask=None):
        if ctx is None:
            raise ValidationError("transformer block requires a text context")
        b, c, h, w = x.shape
        residual = x
        x = self.proj_in(self.norm(x))
        x = x.view(b, c, h * w).transpose(1, 2)  # (B, N, C)
        for attn, ln_a, ff, ln_f in zip(self.attn, self.attn_norms, self.ff, self.ff_norms):
            x = x + attn(ln_a(x), ctx, ctx_mask)
            x = x + ff(ln_f(x))
        x = x.transpose(1, 2).view(b, c, h, w)
        return self.proj_out(x) + residual


class Downsample(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.op = nn.Conv2d(channels, channels, 3, stride=2, padding=1)

    def forward(self, x):
        return self.op(x)


class Upsample(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        return self.conv(F.interpolate(x, scale_factor=2, mode="nearest"))


class _Stage(nn.Module):
    """Routes (x, t_emb, ctx) through a mixed stack of blocks."""

    def __init__(self, *blocks):
        super().__init__()
        self.blocks = nn.ModuleList(blocks)

    def forward(self, x, t_emb, ctx, ctx_mask=None):
        for block in self.blocks:
            if isinstance(block, ResBlock):
                x = block(x, t_emb)
            elif isinstance(block, TransformerBlock):
                x = block(x, ctx, ctx_mask)
            else:
                x = block(x)
        return x


class UNet(nn.Module):
    """Predicts the noise added to a latent at timestep t, given text context.

    `control`, when given, is the list of per-stage residuals produced by a
    control branch: one tensor per encoder stage output plus one for the
    middle block, added to the skip connections and middle activation.
    """

    def __init__(self, config: UNetConfig):
        super().__init__()
        self.config = config
        cfg = config
        time_dim = cfg.time_embed_dim
        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.base_channels, time_dim), nn.SiLU(),
            nn.Linear(time_dim, time_dim))

        def attn_here(level):
            return (2 ** level) in cfg.attention_resolutions

        self.input_stages = nn.ModuleList()
        self.input_stages.append(_Stage(nn.Conv2d(cfg.in_channels, cfg.base_channels, 3, padding=1)))
        ch = cfg.base_channels
        stage_chans = [ch]
        for level, mult in enumerate(cfg.channel_mults):
            out_ch = cfg.base_channels * mult
            for _ in range(cfg.num_res_blocks):
                blocks = [ResBlock(ch, out_ch, time_dim, cfg.norm_groups)]
                ch = out_ch
                if attn_here(level):
                    blocks.append(TransformerBlock(ch, cfg.context_dim,
                                                   cfg.transformer_depth, cfg.norm_groups))
                self.input_stages.append(_Stage(*blocks))
                stage_chans.append(ch)
            if level != len(cfg.channel_mults) - 1:
                self.input_stages.append(_Stage(Downsample(ch)))
                stage_chans.append(ch)
        self.stage_channels = list(stage_chans)

        self.middle = _Stage(
            ResBlock(ch, ch, time_dim, cfg.norm_groups),
            TransformerBlock(ch, cfg.context_dim, cfg.transformer_depth, cfg.norm_groups),
            ResBlock(ch, ch, time_dim, cfg.norm_groups))

        self.output_stages = nn.ModuleList()
        for level, mult in reversed(list(enumerate(cfg.channel_mults))):
            out_ch = cfg.base_channels * mult
            for j in range(cfg.num_res_blocks + 1):
                skip_ch = stage_chans.pop()
                blocks = [ResBlock(ch + skip_ch, out_ch, time_dim, cfg.norm_groups)]
                ch = out_ch
                if attn_here(level):
                    blocks.append(TransformerBlock(ch, cfg.context_dim,
                                                   cfg.transformer_depth, cfg.norm_groups))
                if level != 0 and j == cfg.num_res_blocks:
                    blocks.append(Upsample(ch))
                self.output_stages.append(_Stage(*blocks))

        self.out_norm = _norm(ch, cfg.norm_groups)
        self.out_conv = nn.Conv2d(ch, cfg.in_channels, 3, padding=1)
        self.n_control_points = len(self.input_stages) + 1  # stages + middle
        self._captured_mid = None

    def forward(self, z_t: torch.Tensor, t, ctx: Optional[torch.Tensor] = None,
                ctx_mask: Optional[torch.Tensor] = None,
                control: Optional[Sequence[torch.Tensor]] = None,
                capture_mid: bool = False) -> torch.Tensor:
        if z_t.ndim != 4 or z_t.shape[1] != self.config.in_channels:
            raise ValidationError(
                f"expected (B, {self.config.in_channels}, h, w) latent, got {tuple(z_t.shape)}")
        if isinstance(t, int):
            t = torch.full((z_t.shape[0],), t, dtype=torch.long)
        t_emb = self.time_mlp(timestep_embedding(t.to(z_t.dtype), self.config.base_channels))

        if control is not None and len(control) != self.n_control_points:
            raise ValidationError(
                f"control expects {self.n_control_points} residuals, got {len(control)}")
        skips = list(control[:-1]) if control is not None else None

        hs = []
        h = z_t
        for stage in self.input_stages:
            h = stage(h, t_emb, ctx, ctx_mask)
            hs.append(h)
        h = self.middle(h, t_emb, ctx, ctx_mask)
        if control is not None:
            h = h + control[-1]
        if capture_mid:
            self._captured_mid = h.detach()
        for stage in self.output_stages:
            s = hs.pop()
            if skips is not None:
                s = s + skips.pop()
            h = stage(torch.cat([h, s], dim=1), t_emb, ctx, ctx_mask)
        return self.out_conv(F.silu(self.out_norm(h)))


def predict_eps(model: UNet, z_t: torch.Tensor, t: int, brief: TextBrief) -> torch.Tensor:
    """Single-brief convenience wrapper over UNet.forward."""
    ctx = torch.as_tensor(brief.embedding, dtype=z_t.dtype)[None]
    ctx = ctx.expand(z_t.shape[0], -1, -1)
    return model(z_t, t, ctx)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
