"""Latent image codec: convolutional encoder/decoder with a Gaussian posterior.

encode(x) returns (mu, sigma^2, z): the posterior q(z|x) = N(mu(x), sigma^2(x) I)
with z = mu + sigma * eps when an rng is supplied and z = mu otherwise.
decode(z) maps latents back to image space, bounded to [-1, 1].
"""

from __future__ import annotations

import math
from typing import Optional

import torch
import torch.nn as nn

from .errors import ValidationError


class LatentCodec(nn.Module):
    def __init__(self, in_channels: int = 3, z_channels: int = 4,
                 base_channels: int = 32, downsample_factor: int = 4):
        super().__init__()
        n_down = int(math.log2(downsample_factor))
        if 2 ** n_down != downsample_factor:
            raise ValidationError(f"downsample_factor must be a power of 2, got {downsample_factor}")
        self.in_channels = in_channels
        self.z_channels = z_channels
        self.downsample_factor = downsample_factor

        enc = []
        ch = in_channels
        for i in range(n_down):
            out = base_channels * (2 ** i)
            enc += [nn.Conv2d(ch, out, 3, stride=2, padding=1), nn.SiLU()]
            ch = out
        enc += [nn.Conv2d(ch, ch, 3, padding=1), nn.SiLU(),
                nn.Conv2d(ch, 2 * z_channels, 1)]
        self.encoder = nn.Sequential(*enc)

        dec = [nn.Conv2d(z_channels, ch, 3, padding=1), nn.SiLU()]
        for i in reversed(range(n_down)):
            out = base_channels * (2 ** max(i - 1, 0)) if i > 0 else base_channels
            dec += [nn.Upsample(scale_factor=2, mode="nearest"),
                    nn.Conv2d(ch, out, 3, padding=1), nn.SiLU()]
            ch = out
        dec += [nn.Conv2d(ch, in_channels, 3, padding=1), nn.Tanh()]
        self.decoder = nn.Sequential(*dec)

    def latent_shape(self, image_size: int) -> tuple[int, int, int]:
        f = self.downsample_factor
        return (self.z_channels, image_size // f, image_size // f)

    def encode(self, x: torch.Tensor, rng: Optional[torch.Generator] = None):
        if x.ndim != 4:
            raise ValidationError(f"expected (B, C, H, W) input, got shape {tuple(x.shape)}")
        if x.shape[-1] % self.downsample_factor or x.shape[-2] % self.downsample_factor:
            raise ValidationError(
                f"spatial dims {x.shape[-2:]} not divisible by factor {self.downsample_factor}")
        h = self.encoder(x)
        mu, logvar = torch.chunk(h, 2, dim=1)
        logvar = torch.clamp(logvar, -30.0, 20.0)
        sigma2 = torch.exp(logvar)
        if rng is None:
            z = mu
        else:
            eps = torch.randn(mu.shape, generator=rng, dtype=mu.dtype, device=mu.device)
            z = mu + torch.sqrt(sigma2) * eps
        return mu, sigma2, z

    def encode_mean(self, x: torch.Tensor) -> torch.Tensor:
        return self.encode(x)[0]

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        if z.ndim != 4 or z.shape[1] != self.z_channels:
            raise ValidationError(
                f"expected (B, {self.z_channels}, h, w) latent, got shape {tuple(z.shape)}")
        return self.decoder(z)

    def forward(self, x: torch.Tensor, rng: Optional[torch.Generator] = None):
        mu, sigma2, z = self.encode(x, rng)
        return self.decode(z), mu, sigma2
