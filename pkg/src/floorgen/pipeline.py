"""Assembled generation pipeline: codec + text embedder + denoiser (+ control).

Checkpoints round-trip the whole bundle so sampling, evaluation, analytics,
and the HTTP service all load one artifact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from . import checkpoint as ckpt
from . import diffusion
from .codec import LatentCodec
from .config import RunConfig, build_config
from .control import ControlledModel, clone_and_freeze, state_checksum
from .errors import CheckpointError, ValidationError
from .images import chw_to_hwc, to_storage
from .text import HashTextEmbedder
from .unet import UNet


@dataclass
class Pipeline:
    config: RunConfig
    codec: LatentCodec
    embedder: HashTextEmbedder
    schedule: diffusion.NoiseSchedule
    unet: UNet
    controlled: Optional[ControlledModel] = None
    latent_scale: float = 1.0
    meta: dict = None

    @property
    def stage(self) -> str:
        return "stage2" if self.controlled is not None else "stage1"

    @property
    def eps_model(self):
        return self.controlled if self.controlled is not None else self.unet

    def latent_shape(self) -> tuple[int, int, int]:
        return self.codec.latent_shape(self.config.image_size)

    @classmethod
    def build(cls, config: RunConfig) -> "Pipeline":
        torch.manual_seed(config.seed)
        codec = LatentCodec(**vars(config.codec))
        embedder = HashTextEmbedder(**vars(config.embedder))
        schedule = diffusion.make_noise_schedule(
            config.schedule.T, config.schedule.beta_start, config.schedule.beta_end)
        unet = UNet(config.unet_config())
        return cls(config=config, codec=codec, embedder=embedder,
                   schedule=schedule, unet=unet, meta={})

    def attach_control(self) -> ControlledModel:
        self.controlled = clone_and_freeze(self.unet, self.codec.downsample_factor)
        return self.controlled

    def save(self, path, *, stage: Optional[str] = None, extra_meta: Optional[dict] = None) -> str:
        stage = stage or self.stage
        modules = {"codec": self.codec, "unet": self.unet}
        if stage == "stage2":
            if self.controlled is None:
                raise CheckpointError("no control branch attached; cannot save stage2")
            modules["branch"] = self.controlled.branch
        meta = {
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash,
            "seed": self.config.seed,
            "embedder": self.embedder.to_meta(),
            "latent_scale": self.latent_scale,
            **(self.meta or {}),
            **(extra_meta or {}),
        }
        if stage == "stage2":
            meta["stage1_checksum"] = state_checksum(self.unet)
        return ckpt.save_checkpoint(path, stage=stage, modules=modules,
                                    schedule_params=self.schedule.to_dict(), meta=meta)

    @classmethod
    def load(cls, path) -> "Pipeline":
        payload = ckpt.load_checkpoint(path)
        meta = payload["meta"]
        config = build_config(meta["config"])
        pipe = cls.build(config)
        pipe.embedder = HashTextEmbedder.from_meta(meta["embedder"])
        ckpt.load_into(pipe.codec, payload["weights"], "codec")
        ckpt.load_into(pipe.unet, payload["weights"], "unet")
        if payload["stage"] == "stage2":
            pipe.attach_control()
            ckpt.load_into(pipe.controlled.branch, payload["weights"], "branch")
            recorded = meta.get("stage1_checksum")
            if recorded and state_checksum(pipe.unet) != recorded:
                raise CheckpointError("frozen stage-1 weights do not match the recorded checksum")
        pipe.latent_scale = float(meta.get("latent_scale", 1.0))
        pipe.meta = {k: v for k, v in meta.items() if k not in ("config",)}
        return pipe

    def fit_latent_scale(self, plans) -> float:
        from .training import fit_latent_scale

        self.latent_scale = fit_latent_scale(self.codec, plans)
        return self.latent_scale

    @torch.no_grad()
    def generate(self, prompt: str, mask: Optional[np.ndarray], *, steps: int,
                 seed: int, n: int = 1) -> list[np.ndarray]:
        """Sample n floorplan images; returns uint8 HWC storage-space arrays."""
        if n < 1:
            raise ValidationError(f"n must be >= 1, got {n}")
        brief = self.embedder.embed(prompt)
        shape = (n, *self.latent_shape())
        mask_t = None
        if mask is not None:
            arr = np.asarray(mask, dtype=np.float32)
            if arr.shape != (self.config.image_size, self.config.image_size):
                raise ValidationError(
                    f"mask shape {arr.shape} != image size {self.config.image_size}")
            if self.controlled is None:
                raise CheckpointError("mask conditioning requires a stage-2 checkpoint")
            mask_t = torch.as_tensor(arr)[None, None].expand(n, 1, *arr.shape)
        model = self.eps_model if mask_t is not None else self.unet
        self.eps_model.eval()
        z0 = diffusion.sample(model, shape, self.schedule, steps, seed,
                              brief=brief, mask=mask_t)
        imgs = self.codec.decode(z0 / self.latent_scale)
        return [to_storage(chw_to_hwc(img.numpy())) for img in imgs]
