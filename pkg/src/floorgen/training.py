"""Training loops for the codec, the stage-1 denoiser, and the stage-2
control branch.

All loops are single-threaded, Adam-driven (cosine-decayed), and
deterministic under the run seed. Latents are standardized by a fixed
latent_scale (1/std of the training latents) before diffusion, the usual
conditioning trick for latent-space denoisers. Progress is tracked with a
deterministic probe loss: a frozen set of (timestep, noise) draws evaluated
batched and without gradients, so "loss fell below r x initial" is decided
on the same inputs at every check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from . import diffusion
from .codec import LatentCodec
from .control import ControlledModel
from .diffusion import NoiseSchedule
from .errors import ValidationError
from .images import hwc_to_chw


@dataclass
class TrainResult:
    stage: str
    steps: int
    initial_loss: float
    final_loss: float
    curve: list = field(default_factory=list)  # per-epoch {epoch, train_loss, val_loss}

    @property
    def ratio(self) -> float:
        return self.final_loss / self.initial_loss if self.initial_loss else float("inf")


@dataclass
class Triple:
    """One training record in model space."""

    plan: np.ndarray   # (H, W, 3) float32 in [-1, 1]
    prompt: str
    mask: np.ndarray   # (H, W) float32 in {0, 1}


def _to_tensor_images(images: Sequence[np.ndarray], dtype=torch.float32) -> torch.Tensor:
    return torch.stack([torch.as_tensor(hwc_to_chw(np.asarray(im)), dtype=dtype) for im in images])


def fit_latent_scale(codec: LatentCodec, images: Sequence[np.ndarray]) -> float:
    """1 / std of the mean-encoded training latents."""
    with torch.no_grad():
        z = codec.encode_mean(_to_tensor_images(images))
    std = float(z.std())
    if std <= 0:
        raise ValidationError("degenerate latents: zero standard deviation")
    return 1.0 / std


def train_codec(codec: LatentCodec, images: Sequence[np.ndarray], *, steps: int = 1000,
                batch_size: int = 4, lr: float = 2e-3, kl_weight: float = 1e-6,
                seed: int = 0) -> TrainResult:
    """Reconstruction + small-KL training of the latent codec."""
    if len(images) == 0:
        raise ValidationError("codec training needs at least one image")
    x_all = _to_tensor_images(images)
    opt = torch.optim.Adam(codec.parameters(), lr=lr)
    gen = torch.Generator().manual_seed(seed)

    def eval_loss() -> float:
        codec.eval()
        with torch.no_grad():
            recon, _, _ = codec(x_all)
            return float(torch.mean((recon - x_all) ** 2))

    initial = eval_loss()
    codec.train()
    curve = []
    for step in range(steps):
        idx = torch.randint(0, len(x_all), (min(batch_size, len(x_all)),), generator=gen)
        x = x_all[idx]
        recon, mu, sigma2 = codec(x, rng=gen)
        rec = torch.mean((recon - x) ** 2)
        kl = 0.5 * torch.mean(mu ** 2 + sigma2 - 1.0 - torch.log(sigma2))
        loss = rec + kl_weight * kl
        opt.zero_grad()
        loss.backward()
        opt.step()
        if (step + 1) % max(steps // 10, 1) == 0:
            curve.append({"epoch": len(curve) + 1, "train_loss": float(rec.detach()),
                          "val_loss": eval_loss()})
            codec.train()
    final = eval_loss()
    return TrainResult(stage="codec", steps=steps, initial_loss=initial,
                       final_loss=final, curve=curve)


class _DiffusionData:
    """Latents and embedded briefs precomputed once per training run."""

    def __init__(self, codec: LatentCodec, embedder, triples: Sequence[Triple],
                 latent_scale: float = 1.0, dtype=torch.float32):
        if len(triples) == 0:
            raise ValidationError("training dataset is empty")
        with torch.no_grad():
            z = codec.encode_mean(_to_tensor_images([t.plan for t in triples], dtype))
        self.z0 = z * latent_scale
        self.briefs = [embedder.embed(t.prompt) for t in triples]
        self.masks = torch.stack([torch.as_tensor(t.mask, dtype=dtype) for t in triples])

    def __len__(self):
        return len(self.briefs)


def probe_loss(objective, data: _DiffusionData, schedule: NoiseSchedule, *,
               probes_per_t: int = 2, seed: int = 1234, n_t: int = 4) -> float:
    """Deterministic batched evaluation loss over frozen (t, eps) draws."""
    gen = torch.Generator().manual_seed(seed)
    t_grid = np.unique(np.linspace(1, schedule.T, n_t).round().astype(int))
    losses = []
    with torch.no_grad():
        for t in t_grid:
            for _ in range(probes_per_t):
                ts = torch.full((len(data),), int(t), dtype=torch.long)
                eps = torch.randn(data.z0.shape, generator=gen, dtype=data.z0.dtype)
                losses.append(float(objective(torch.arange(len(data)), ts, eps)))
    return float(np.mean(losses))


def train_stage1(unet, codec: LatentCodec, embedder, triples: Sequence[Triple],
                 schedule: NoiseSchedule, *, epochs: Optional[int] = None,
                 max_steps: int = 2000, batch_size: int = 1, lr: float = 1e-4,
                 seed: int = 0, val_triples: Sequence[Triple] = (),
                 target_ratio: Optional[float] = None, check_every: int = 100,
                 latent_scale: float = 1.0) -> TrainResult:
    """Text-conditioned epsilon-prediction training of the base network."""
    data = _DiffusionData(codec, embedder, triples, latent_scale)
    val = _DiffusionData(codec, embedder, val_triples, latent_scale) if len(val_triples) else data

    def objective(dataset):
        def fn(idx, ts, eps):
            return diffusion.stage1_objective(
                unet, dataset.z0[idx], [dataset.briefs[int(i)] for i in idx],
                schedule, ts, eps)
        return fn

    opt = torch.optim.Adam(unet.parameters(), lr=lr)
    return _run_diffusion_loop("stage1", unet, opt, data, val, schedule,
                               objective(data), objective(val),
                               epochs=epochs, max_steps=max_steps, batch_size=batch_size,
                               seed=seed, target_ratio=target_ratio, check_every=check_every)


def train_stage2(cm: ControlledModel, codec: LatentCodec, embedder,
                 triples: Sequence[Triple], schedule: NoiseSchedule, *,
                 epochs: Optional[int] = None, max_steps: int = 2000,
                 batch_size: int = 1, lr: float = 1e-4, seed: int = 0,
                 val_triples: Sequence[Triple] = (),
                 target_ratio: Optional[float] = None, check_every: int = 100,
                 latent_scale: float = 1.0) -> TrainResult:
    """Footprint-conditioned training; only the control branch is updated."""
    data = _DiffusionData(codec, embedder, triples, latent_scale)
    val = _DiffusionData(codec, embedder, val_triples, latent_scale) if len(val_triples) else data

    def objective(dataset):
        def fn(idx, ts, eps):
            return diffusion.stage2_objective(
                cm, dataset.z0[idx], [dataset.briefs[int(i)] for i in idx],
                dataset.masks[idx], schedule, ts, eps)
        return fn

    opt = torch.optim.Adam(cm.trainable_parameters(), lr=lr)
    return _run_diffusion_loop("stage2", cm, opt, data, val, schedule,
                               objective(data), objective(val),
                               epochs=epochs, max_steps=max_steps, batch_size=batch_size,
                               seed=seed, target_ratio=target_ratio, check_every=check_every)


def _run_diffusion_loop(stage, module, opt, data, val, schedule, train_objective,
                        val_objective, *, epochs, max_steps, batch_size, seed,
                        target_ratio, check_every) -> TrainResult:
    gen = torch.Generator().manual_seed(seed)
    n = len(data)
    batch_size = min(batch_size, n)
    steps_per_epoch = max(n // batch_size, 1)
    total_steps = epochs * steps_per_epoch if epochs is not None else max_steps
    n_epochs = max(total_steps // steps_per_epoch, 1)
    # curve granularity: every epoch, but capped so degenerate one-step
    # epochs (whole dataset in a batch) do not spend the run on probes
    curve_stride = max(n_epochs // 60, 1)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        opt, T_max=total_steps, eta_min=opt.param_groups[0]["lr"] * 0.05)

    module.eval()
    initial = probe_loss(train_objective, data, schedule)
    module.train()

    curve = []
    step = 0
    epoch = 0
    done = False
    epoch_losses: list[float] = []
    while step < total_steps and not done:
        order = torch.randperm(n, generator=gen)
        epoch += 1
        for b in range(steps_per_epoch):
            idx = order[b * batch_size:(b + 1) * batch_size]
            ts = torch.randint(1, schedule.T + 1, (len(idx),), generator=gen)
            eps = torch.randn((len(idx), *data.z0.shape[1:]), generator=gen,
                              dtype=data.z0.dtype)
            loss = train_objective(idx, ts, eps)
            opt.zero_grad()
            loss.backward()
            opt.step()
            scheduler.step()
            epoch_losses.append(float(loss.detach()))
            step += 1
            if target_ratio is not None and step % check_every == 0:
                module.eval()
                current = probe_loss(train_objective, data, schedule)
                module.train()
                if current < target_ratio * initial:
                    done = True
                    break
            if step >= total_steps:
                break
        if epoch % curve_stride == 0 or done or step >= total_steps:
            module.eval()
            curve.append({
                "epoch": epoch,
                "train_loss": float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
                "val_loss": probe_loss(val_objective, val, schedule, probes_per_t=1, n_t=2),
            })
            module.train()
            epoch_losses = []

    module.eval()
    final = probe_loss(train_objective, data, schedule)
    return TrainResult(stage=stage, steps=step, initial_loss=initial,
                       final_loss=final, curve=curve)
