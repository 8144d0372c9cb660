"""Latent-space analytics: embedding collection and PCA projection export.

Embeddings are spatially pooled middle-block activations of the denoiser,
evaluated on each generated latent at the fixed mid-trajectory timestep
t = T/2; the pooled vector carries the text-conditioned representation the
projection figures interpret.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from . import diffusion
from .errors import ValidationError


@dataclass(frozen=True)
class EmbeddingSet:
    vectors: np.ndarray  # (n, d) float64
    labels: list
    ids: list

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise ValidationError(f"vectors must be (n, d), got {self.vectors.shape}")
        if not np.all(np.isfinite(self.vectors)):
            raise ValidationError("embedding vectors contain non-finite values")
        if len(self.labels) != len(self.vectors) or len(self.ids) != len(self.vectors):
            raise ValidationError("labels/ids length must match vector count")


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray               # (d,)
    components: np.ndarray         # (k, d), row-orthonormal
    explained_variance: np.ndarray  # (k,), non-increasing


@torch.no_grad()
def collect_embeddings(pipeline, conditions: Sequence[dict], n: int,
                       seed: int = 0, steps: Optional[int] = None) -> EmbeddingSet:
    """One pooled mid-block vector per generated output.

    `conditions` entries carry prompt, mask (model-space (H, W) or None), and
    label; they are cycled until n vectors exist. Deterministic per seed.
    """
    if n < 2:
        raise ValidationError(f"n must be >= 2, got {n}")
    if not conditions:
        raise ValidationError("need at least one condition")
    if not pipeline.meta or not pipeline.meta.get("trained", False):
        warnings.warn("collecting embeddings from an untrained checkpoint", stacklevel=2)

    model = pipeline.eps_model
    model.eval()
    schedule = pipeline.schedule
    steps = steps or min(schedule.T, 10)
    t_mid = max(schedule.T // 2, 1)
    vectors, labels, ids = [], [], []
    for i in range(n):
        cond = conditions[i % len(conditions)]
        brief = pipeline.embedder.embed(cond["prompt"])
        mask = cond.get("mask")
        mask_t = torch.as_tensor(np.asarray(mask, dtype=np.float32))[None, None] \
            if mask is not None else None
        use_control = mask_t is not None and pipeline.controlled is not None
        z0 = diffusion.sample(pipeline.controlled if use_control else pipeline.unet,
                              (1, *pipeline.latent_shape()), schedule, steps,
                              seed=seed * 1000003 + i, brief=brief,
                              mask=mask_t if use_control else None)
        ctx = torch.as_tensor(brief.embedding, dtype=z0.dtype)[None]
        if use_control:
            pipeline.controlled(z0, t_mid, ctx, mask_t, capture_mid=True)
            mid = pipeline.unet._captured_mid
        else:
            pipeline.unet(z0, t_mid, ctx, capture_mid=True)
            mid = pipeline.unet._captured_mid
        vectors.append(mid.mean(dim=(0, 2, 3)).numpy().astype(np.float64))
        labels.append(cond.get("label", cond["prompt"]))
        ids.append(f"{i:05d}")
    return EmbeddingSet(vectors=np.stack(vectors), labels=labels, ids=ids)


def pca_fit(vectors, k: int) -> PcaModel:
    """Centered SVD-based PCA; each component's largest-|entry| is positive."""
    X = vectors.vectors if isinstance(vectors, EmbeddingSet) else np.asarray(vectors, dtype=np.float64)
    n, d = X.shape
    if not 1 <= k <= min(n, d):
        raise ValidationError(f"k must be in [1, {min(n, d)}], got {k}")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, S, Vt = np.linalg.svd(Xc, full_matrices=False)
    components = Vt[:k].copy()
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    explained = (S[:k] ** 2) / max(n - 1, 1)
    return PcaModel(mean=mean, components=components, explained_variance=explained)


def pca_transform(model: PcaModel, vectors) -> np.ndarray:
    X = vectors.vectors if isinstance(vectors, EmbeddingSet) else np.asarray(vectors, dtype=np.float64)
    if X.shape[1] != model.mean.shape[0]:
        raise ValidationError(f"vectors have d={X.shape[1]}, model expects {model.mean.shape[0]}")
    return (X - model.mean) @ model.components.T


def pca_inverse(model: PcaModel, projected: np.ndarray) -> np.ndarray:
    return np.asarray(projected) @ model.components + model.mean


def export_projection(model: PcaModel, embeddings: EmbeddingSet, csv_path) -> Path:
    """CSV with id,label,pc1,pc2 plus a JSON sidecar of explained variance."""
    if model.components.shape[0] < 2:
        raise ValidationError("projection export needs a fitted model with k >= 2")
    proj = pca_transform(model, embeddings)
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", "pc1", "pc2"])
        for i in range(len(proj)):
            writer.writerow([embeddings.ids[i], embeddings.labels[i],
                             repr(float(proj[i, 0])), repr(float(proj[i, 1]))])
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(json.dumps({
        "explained_variance": [float(v) for v in model.explained_variance],
        "k": int(model.components.shape[0]),
        "d": int(model.components.shape[1]),
        "n": int(len(proj)),
    }, indent=2))
    return csv_path
