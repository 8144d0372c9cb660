"""Checkpoint archives: weight tensors under canonical dotted names, the
noise-schedule parameters, and a JSON-safe metadata block.

Stage-2 archives record the checksum of the stage-1 weights they were cloned
from; loading verifies the frozen branch still matches it.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import torch

from .control import state_checksum
from .errors import CheckpointError

FORMAT = "floorgen-checkpoint-v1"
STAGES = ("codec", "stage1", "stage2")


def save_checkpoint(path, *, stage: str, modules: dict, schedule_params: Optional[dict],
                    meta: dict) -> str:
    """Write an archive; returns the combined weight checksum."""
    if stage not in STAGES:
        raise CheckpointError(f"unknown stage {stage!r}")
    weights = {}
    checksums = {}
    for prefix, module in modules.items():
        for name, tensor in module.state_dict().items():
            weights[f"{prefix}.{name}"] = tensor.detach().cpu()
        checksums[prefix] = state_checksum(module)
    payload = {
        "format": FORMAT,
        "stage": stage,
        "weights": weights,
        "schedule": schedule_params,
        "meta": dict(meta, checksums=checksums),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)
    return checksums.get("unet", "")


def load_checkpoint(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} archive")
    return payload


def split_weights(weights: dict, prefix: str) -> dict:
    head = prefix + "."
    return {k[len(head):]: v for k, v in weights.items() if k.startswith(head)}


def load_into(module: torch.nn.Module, weights: dict, prefix: str) -> None:
    state = split_weights(weights, prefix)
    if not state:
        raise CheckpointError(f"archive carries no weights under {prefix!r}")
    try:
        module.load_state_dict(state)
    except RuntimeError as exc:
        raise CheckpointError(f"weights under {prefix!r} do not fit the module: {exc}") from exc
