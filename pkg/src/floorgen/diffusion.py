"""Diffusion mechanics: noise schedule, forward process, objectives, sampler.

Forward process (closed form of the stepwise Gaussian corruption):
    z_t = sqrt(abar_t) * z_0 + sqrt(1 - abar_t) * eps,   eps ~ N(0, I)
with beta_t linear in t, alpha_t = 1 - beta_t, abar_t = prod_{s<=t} alpha_s.

Training objectives (epsilon prediction, mean-squared error over all
elements and the batch):
    stage 1:  E || eps - eps_theta(z_t, t, ctx(y1)) ||^2
    stage 2:  E || eps - eps_theta(z_t, t, y1, y2) ||^2

Sampling is the deterministic DDIM recursion on a strided subset of
timesteps: predict z_0 from the current state and re-noise to the previous
grid point with eta = 0, so a fixed seed gives a bit-stable trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from .errors import ValidationError


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep variance tables. Timesteps are 1-indexed: t in {1..T}."""

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta)

    def abar(self, t: int) -> float:
        """abar_t for t in {1..T}; abar_0 is defined as 1 (clean data)."""
        if t == 0:
            return 1.0
        self._check_t(t)
        return float(self.alpha_bar[t - 1])

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValidationError(f"timestep {t} outside schedule range 1..{self.T}")

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "beta_start": float(self.beta[0]),
            "beta_end": float(self.beta[-1]),
        }


def make_noise_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear beta schedule from beta_start to beta_end over T steps."""
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ValidationError(f"T must be an integer >= 1, got {T!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValidationError(
            f"betas must satisfy 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar)


@dataclass(frozen=True)
class LatentState:
    """A latent tensor together with the timestep it was diffused to."""

    z: object  # numpy array or torch tensor, latent-shaped
    t: int


@dataclass(frozen=True)
class LossReport:
    value: float
    stage: int
    batch_size: int


def forward_diffuse(z0, t: int, eps, schedule: NoiseSchedule) -> LatentState:
    """Diffuse z0 to timestep t with the given noise draw (closed form)."""
    schedule._check_t(t)
    if tuple(z0.shape) != tuple(eps.shape):
        raise ValidationError(f"eps shape {tuple(eps.shape)} != z0 shape {tuple(z0.shape)}")
    ab = schedule.abar(t)
    z_t = math.sqrt(ab) * z0 + math.sqrt(1.0 - ab) * eps
    return LatentState(z=z_t, t=t)


def _as_context(briefs, batch: int, dtype, device):
    """Stack per-sample text embeddings into (B, L, d) plus a padding mask."""
    from .text import TextBrief  # local import to avoid a cycle

    if isinstance(briefs, TextBrief):
        briefs = [briefs] * batch
    if len(briefs) != batch:
        raise ValidationError(f"got {len(briefs)} briefs for batch of {batch}")
    lengths = [b.embedding.shape[0] for b in briefs]
    L = max(lengths)
    d = briefs[0].embedding.shape[1]
    ctx = torch.zeros(batch, L, d, dtype=dtype, device=device)
    mask = torch.zeros(batch, L, dtype=torch.bool, device=device)
    for i, b in enumerate(briefs):
        n = b.embedding.shape[0]
        ctx[i, :n] = torch.as_tensor(b.embedding, dtype=dtype)
        mask[i, :n] = True
    return ctx, mask


def _batched_marginal(z0: torch.Tensor, ts: torch.Tensor, eps: torch.Tensor,
                      schedule: NoiseSchedule) -> torch.Tensor:
    ab = torch.as_tensor(schedule.alpha_bar, dtype=z0.dtype)[ts - 1]
    ab = ab.view(-1, *([1] * (z0.ndim - 1)))
    return torch.sqrt(ab) * z0 + torch.sqrt(1.0 - ab) * eps


def draw_t_eps(z0: torch.Tensor, schedule: NoiseSchedule, rng: torch.Generator):
    """Sample t ~ Uniform{1..T} per batch element and eps ~ N(0, I)."""
    B = z0.shape[0]
    ts = torch.randint(1, schedule.T + 1, (B,), generator=rng)
    eps = torch.randn(z0.shape, generator=rng, dtype=z0.dtype)
    return ts, eps


def stage1_objective(model, z0: torch.Tensor, briefs, schedule: NoiseSchedule,
                     ts: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    """Differentiable stage-1 loss for a fixed (t, eps) draw."""
    if z0.ndim != 4:
        raise ValidationError(f"z0 must be (B, C, h, w), got shape {tuple(z0.shape)}")
    ctx, ctx_mask = _as_context(briefs, z0.shape[0], z0.dtype, z0.device)
    z_t = _batched_marginal(z0, ts, eps, schedule)
    eps_hat = model(z_t, ts, ctx, ctx_mask=ctx_mask)
    if eps_hat.shape != eps.shape:
        raise ValidationError(f"model output shape {tuple(eps_hat.shape)} != eps shape {tuple(eps.shape)}")
    return torch.mean((eps - eps_hat) ** 2)


def stage1_loss(model, z0: torch.Tensor, briefs, schedule: NoiseSchedule,
                rng: torch.Generator) -> LossReport:
    ts, eps = draw_t_eps(z0, schedule, rng)
    with torch.no_grad():
        value = stage1_objective(model, z0, briefs, schedule, ts, eps)
    return LossReport(value=float(value), stage=1, batch_size=z0.shape[0])


def stage2_objective(controlled_model, z0: torch.Tensor, briefs, masks: torch.Tensor,
                     schedule: NoiseSchedule, ts: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    """Differentiable stage-2 loss for a fixed (t, eps) draw."""
    if z0.ndim != 4:
        raise ValidationError(f"z0 must be (B, C, h, w), got shape {tuple(z0.shape)}")
    ctx, ctx_mask = _as_context(briefs, z0.shape[0], z0.dtype, z0.device)
    z_t = _batched_marginal(z0, ts, eps, schedule)
    eps_hat = controlled_model(z_t, ts, ctx, masks, ctx_mask=ctx_mask)
    if eps_hat.shape != eps.shape:
        raise ValidationError(f"model output shape {tuple(eps_hat.shape)} != eps shape {tuple(eps.shape)}")
    return torch.mean((eps - eps_hat) ** 2)


def stage2_loss(controlled_model, z0: torch.Tensor, briefs, masks: torch.Tensor,
                schedule: NoiseSchedule, rng: torch.Generator) -> LossReport:
    ts, eps = draw_t_eps(z0, schedule, rng)
    with torch.no_grad():
        value = stage2_objective(controlled_model, z0, briefs, masks, schedule, ts, eps)
    return LossReport(value=float(value), stage=2, batch_size=z0.shape[0])


def sampling_timesteps(T: int, steps: int) -> list[int]:
    """Strided, strictly decreasing subset of {1..T} with `steps` entries."""
    if not 1 <= steps <= T:
        raise ValidationError(f"steps must be in [1, {T}], got {steps}")
    ts = np.linspace(T, 1, steps)
    return [int(round(t)) for t in ts]


@torch.no_grad()
def sample(model, shape: Sequence[int], schedule: NoiseSchedule, steps: int,
           seed: int, brief=None, mask: Optional[torch.Tensor] = None,
           x_init: Optional[torch.Tensor] = None,
           eps_fn: Optional[Callable] = None) -> torch.Tensor:
    """Deterministic DDIM reverse recursion; returns the z_0 estimate.

    `model` predicts eps from (z_t, t, ctx[, mask]); `eps_fn` overrides it for
    oracle models in tests. `x_init` replaces the seeded N(0, I) start.
    """
    ts = sampling_timesteps(schedule.T, steps)
    if x_init is not None:
        x = x_init.clone()
        dtype = x.dtype
    else:
        dtype = next(model.parameters()).dtype if hasattr(model, "parameters") else torch.float32
        gen = torch.Generator().manual_seed(seed)
        x = torch.randn(*shape, generator=gen, dtype=dtype)

    ctx = ctx_mask = None
    if brief is not None:
        ctx, ctx_mask = _as_context(brief, x.shape[0], dtype, x.device)

    for i, t in enumerate(ts):
        t_prev = ts[i + 1] if i + 1 < len(ts) else 0
        ab_t = schedule.abar(t)
        ab_prev = schedule.abar(t_prev)
        t_batch = torch.full((x.shape[0],), t, dtype=torch.long)
        if eps_fn is not None:
            eps_hat = eps_fn(x, t)
        elif mask is not None:
            eps_hat = model(x, t_batch, ctx, mask, ctx_mask=ctx_mask)
        else:
            eps_hat = model(x, t_batch, ctx, ctx_mask=ctx_mask)
        x0_pred = (x - math.sqrt(1.0 - ab_t) * eps_hat) / math.sqrt(ab_t)
        x = math.sqrt(ab_prev) * x0_pred + math.sqrt(1.0 - ab_prev) * eps_hat
    return x


def steps_fidelity_sweep(pipeline, eval_set, step_list: Sequence[int],
                         seeds: Sequence[int] = (0,), dump_dir=None) -> list[dict]:
    """Fidelity-vs-denoising-steps report on a trained pipeline.

    For each step count, every eval item is regenerated from its own
    (prompt, mask) condition under each seed; rows carry the median across
    seeds of the per-seed mean reconstruction MSE / SSIM against the ground
    truth plans. Deterministic for fixed seeds.
    """
    from . import metrics
    from .images import encode_png, to_model, to_storage

    if len(eval_set) == 0:
        raise ValidationError("eval_set must be non-empty")
    if len(step_list) == 0:
        raise ValidationError("step_list must be non-empty")
    for s in step_list:
        if not 1 <= s <= pipeline.schedule.T:
            raise ValidationError(f"step count {s} outside [1, {pipeline.schedule.T}]")

    rows = []
    for steps in step_list:
        mse_per_seed, ssim_per_seed = [], []
        for seed in seeds:
            mses, ssims = [], []
            for idx, item in enumerate(eval_set):
                img = pipeline.generate(item["prompt"], item["mask"], steps=steps,
                                        seed=seed * 100003 + idx, n=1)[0]
                if dump_dir is not None:
                    path = dump_dir / f"sweep_s{steps}_seed{seed}_i{idx}.png"
                    path.write_bytes(encode_png(img))
                gen = to_model(img)
                ref = to_model(to_storage(item["plan"]))
                mses.append(float(np.mean((gen - ref) ** 2)))
                ssims.append(metrics.ssim(gen, ref, data_range=2.0))
            mse_per_seed.append(float(np.mean(mses)))
            ssim_per_seed.append(float(np.mean(ssims)))
        rows.append({
            "steps": int(steps),
            "mse": float(np.median(mse_per_seed)),
            "ssim": float(np.median(ssim_per_seed)),
            "n_seeds": len(seeds),
            "n_items": len(eval_set),
        })
    return rows
