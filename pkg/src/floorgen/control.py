"""Footprint conditioning: frozen base network, trainable clone, zero convs.

The controlled forward pass composes
    eps = F(z_t; frozen) + Z(F(z_t + Z(hint(y2)); clone); zero_convs)
where every Z is a 1x1 convolution initialized to exactly zero, so the
controlled model reproduces the frozen model bit-for-bit before training.
The clone covers the encoder and middle of the base U-Net; its per-stage
outputs pass through one zero conv each and are added to the frozen
network's skip connections and middle activation.
"""

from __future__ import annotations

import copy
import math
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from .errors import ValidationError
from .unet import UNet


def zero_module(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        nn.init.zeros_(p)
    return module


class HintEncoder(nn.Module):
    """Three conv layers taking the H x W mask down to the latent grid."""

    def __init__(self, out_channels: int, downsample_factor: int, base: int = 16):
        super().__init__()
        n_down = int(math.log2(downsample_factor))
        if 2 ** n_down != downsample_factor:
            raise ValidationError(f"downsample_factor must be a power of 2, got {downsample_factor}")
        strides = [2] * n_down + [1] * max(3 - n_down, 0)
        layers = []
        ch = 1
        for i, s in enumerate(strides):
            out = out_channels if i == len(strides) - 1 else base * (2 ** min(i, 2))
            layers.append(nn.Conv2d(ch, out, 3, stride=s, padding=1))
            if i != len(strides) - 1:
                layers.append(nn.SiLU())
            ch = out
        self.net = nn.Sequential(*layers)

    def forward(self, mask: torch.Tensor) -> torch.Tensor:
        if mask.ndim == 3:
            mask = mask[:, None]
        if mask.ndim != 4 or mask.shape[1] != 1:
            raise ValidationError(f"mask must be (B, 1, H, W) or (B, H, W), got {tuple(mask.shape)}")
        return self.net(mask)


class ControlBranch(nn.Module):
    """Trainable clone of the base encoder/middle plus all zero convs."""

    def __init__(self, base: UNet, downsample_factor: int):
        super().__init__()
        self._sin_dim = base.config.base_channels
        self.time_mlp = copy.deepcopy(base.time_mlp)
        self.input_stages = copy.deepcopy(base.input_stages)
        self.middle = copy.deepcopy(base.middle)
        self.hint_encoder = HintEncoder(base.config.in_channels, downsample_factor)
        self.zero_conv_in = zero_module(nn.Conv2d(base.config.in_channels,
                                                  base.config.in_channels, 1))
        self.zero_convs = nn.ModuleList(
            zero_module(nn.Conv2d(ch, ch, 1)) for ch in base.stage_channels)
        self.zero_conv_mid = zero_module(nn.Conv2d(base.stage_channels[-1],
                                                   base.stage_channels[-1], 1))
        self.to(next(base.parameters()).dtype)

    def forward(self, z_t, t, ctx, mask, ctx_mask=None):
        from .unet import timestep_embedding

        hint = self.zero_conv_in(self.hint_encoder(mask.to(z_t.dtype)))
        if hint.shape[-2:] != z_t.shape[-2:]:
            raise ValidationError(
                f"hint grid {tuple(hint.shape[-2:])} does not match latent {tuple(z_t.shape[-2:])}")
        t_emb = self.time_mlp(timestep_embedding(t.to(z_t.dtype), self._sin_dim))
        h = z_t + hint
        outs = []
        for stage, zc in zip(self.input_stages, self.zero_convs):
            h = stage(h, t_emb, ctx, ctx_mask)
            outs.append(zc(h))
        h = self.middle(h, t_emb, ctx, ctx_mask)
        outs.append(self.zero_conv_mid(h))
        return outs


class ControlledModel(nn.Module):
    """Frozen stage-1 U-Net plus the trainable control branch."""

    def __init__(self, base: UNet, downsample_factor: int):
        super().__init__()
        self.base = base
        self.branch = ControlBranch(base, downsample_factor)
        self.downsample_factor = downsample_factor
        self.freeze_base()

    def freeze_base(self):
        for p in self.base.parameters():
            p.requires_grad_(False)

    def trainable_parameters(self):
        return self.branch.parameters()

    def forward(self, z_t, t, ctx, mask, ctx_mask=None, capture_mid: bool = False):
        if isinstance(t, int):
            t = torch.full((z_t.shape[0],), t, dtype=torch.long)
        residuals = self.branch(z_t, t, ctx, mask, ctx_mask=ctx_mask)
        return self.base(z_t, t, ctx, ctx_mask=ctx_mask, control=residuals,
                         capture_mid=capture_mid)


def clone_and_freeze(base: UNet, downsample_factor: int) -> ControlledModel:
    """Clone the trained network into a control branch and freeze the original.

    The clone is an exact parameter copy; every zero conv starts at exactly 0,
    so the controlled forward equals the frozen forward until training moves
    the branch.
    """
    return ControlledModel(base, downsample_factor)


def controlled_forward(cm: ControlledModel, z_t: torch.Tensor, t, brief,
                       mask: torch.Tensor) -> torch.Tensor:
    """Single-brief convenience wrapper over ControlledModel.forward."""
    ctx = torch.as_tensor(brief.embedding, dtype=z_t.dtype)[None]
    ctx = ctx.expand(z_t.shape[0], -1, -1)
    if mask.ndim == 2:
        mask = mask[None]
    if mask.shape[0] != z_t.shape[0]:
        mask = mask.expand(z_t.shape[0], *mask.shape[1:])
    return cm(z_t, t, ctx, mask)


def affine_condition_transform(mask: np.ndarray, A: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Resample a binary mask under x' = A(x - c) + c + t about the canvas
    center c, with nearest-neighbor lookup through the inverse map.

    Coordinates are (row, col). The identity transform is a bit-exact no-op;
    out-of-canvas sources read as background.
    """
    A = np.asarray(A, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64).reshape(2)
    if A.shape != (2, 2):
        raise ValidationError(f"A must be 2x2, got {A.shape}")
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if abs(det) < 1e-12:
        raise ValidationError("affine matrix is singular")
    arr = np.asarray(mask)
    vals = np.unique(arr)
    if not np.all(np.isin(vals, (0, 1))):
        raise ValidationError("mask must be binary {0, 1}")
    H, W = arr.shape
    center = np.array([(H - 1) / 2.0, (W - 1) / 2.0])
    A_inv = np.linalg.inv(A)
    rows, cols = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    out_coords = np.stack([rows, cols], axis=-1).astype(np.float64)
    src = (out_coords - center - t) @ A_inv.T + center
    src_r = np.round(src[..., 0]).astype(np.int64)
    src_c = np.round(src[..., 1]).astype(np.int64)
    inside = (src_r >= 0) & (src_r < H) & (src_c >= 0) & (src_c < W)
    out = np.zeros_like(arr)
    out[inside] = arr[src_r[inside], src_c[inside]]
    return out


def state_checksum(module: nn.Module, prefix: Optional[str] = None) -> str:
    """Order-stable sha256 over (name, bytes) of the module's parameters and
    buffers; used for the freeze contract and checkpoint lineage."""
    import hashlib

    digest = hashlib.sha256()
    state = module.state_dict()
    for name in sorted(state):
        if prefix is not None and not name.startswith(prefix):
            continue
        digest.update(name.encode())
        digest.update(state[name].detach().cpu().numpy().tobytes())
    return digest.hexdigest()
