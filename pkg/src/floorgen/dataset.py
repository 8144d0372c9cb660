"""Dataset build and loading: JSONL manifest over (mask, prompt, plan) triples.

Manifest lines carry exactly: id, prompt, mask_path, plan_path, building_type,
seed, split. Paths are relative to the manifest location. A sidecar
manifest.meta.json records build parameters and warnings.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from . import synth
from .errors import LoadError, ValidationError
from .images import load_png, save_png, to_model

log = logging.getLogger(__name__)

MANIFEST_FIELDS = ("id", "prompt", "mask_path", "plan_path", "building_type", "seed", "split")


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    prompt: str
    mask_path: str
    plan_path: str
    building_type: str
    seed: int
    split: str


def _derived_seed(base_seed: int, index: int) -> int:
    digest = hashlib.sha256(f"{base_seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def _stratified_counts(n: int, type_mix: dict[str, float]) -> dict[str, int]:
    """Largest-remainder apportionment; every count within +-1 of n*fraction."""
    total = sum(type_mix.values())
    quotas = {k: n * v / total for k, v in type_mix.items()}
    counts = {k: int(np.floor(q)) for k, q in quotas.items()}
    remainder = n - sum(counts.values())
    by_frac = sorted(quotas, key=lambda k: (quotas[k] - np.floor(quotas[k])), reverse=True)
    for k in by_frac[:remainder]:
        counts[k] += 1
    return counts


def build_dataset(out_dir, n: int = 500, type_mix: Optional[dict] = None,
                  seed: int = 0, size: int = 64, hires: bool = False) -> Path:
    """Generate n records, write images + manifest, return the manifest path."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    if hires:
        (out_dir / "hires").mkdir(exist_ok=True)
    if type_mix is None:
        type_mix = {t: 1.0 for t in synth.BUILDING_TYPES}
    for t in type_mix:
        if t not in synth.BUILDING_TYPES:
            raise ValidationError(f"unknown building type in mix: {t!r}")

    counts = _stratified_counts(n, type_mix)
    records = []
    index = 0
    for btype in sorted(counts):
        for _ in range(counts[btype]):
            rec_seed = _derived_seed(seed, index)
            rng = np.random.default_rng(rec_seed ^ 0x5F5F)
            footprint = str(rng.choice(synth.TYPE_FOOTPRINTS[btype]))
            spec = synth.BuildingSpec(building_type=btype, footprint=footprint, seed=rec_seed)
            mask, plan, prompt = synth.generate_sample(spec, size=size)
            rec_id = f"{btype}-{index:05d}"
            mask_path = f"images/{rec_id}_mask.png"
            plan_path = f"images/{rec_id}_plan.png"
            save_png(out_dir / mask_path, mask)
            save_png(out_dir / plan_path, plan)
            if hires:
                hmask, hplan, _ = synth.generate_sample(spec, size=256)
                save_png(out_dir / "hires" / f"{rec_id}_mask.png", hmask)
                save_png(out_dir / "hires" / f"{rec_id}_plan.png", hplan)
            records.append({"id": rec_id, "prompt": prompt, "mask_path": mask_path,
                            "plan_path": plan_path, "building_type": btype,
                            "seed": rec_seed})
            index += 1

    # 90/10 split on a deterministic shuffle
    order = np.random.default_rng(seed).permutation(len(records))
    n_val = len(records) // 10
    val_ids = {records[i]["id"] for i in order[:n_val]}
    for rec in records:
        rec["split"] = "val" if rec["id"] in val_ids else "train"

    manifest_path = out_dir / "manifest.jsonl"
    with open(manifest_path, "w") as fh:
        for rec in records:
            fh.write(json.dumps({k: rec[k] for k in MANIFEST_FIELDS}) + "\n")

    meta = {"n": n, "seed": seed, "size": size, "type_mix": type_mix,
            "counts": counts, "val_empty": n_val == 0, "hires": hires}
    if n_val == 0:
        log.warning("dataset of %d record(s) has an empty validation split", n)
    (out_dir / "manifest.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return manifest_path


def read_manifest(manifest_path) -> list[DatasetRecord]:
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise LoadError(f"manifest not found: {manifest_path}")
    records = []
    seen = set()
    for line_no, line in enumerate(manifest_path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        row = json.loads(line)
        if set(row) != set(MANIFEST_FIELDS):
            raise ValidationError(
                f"manifest line {line_no} fields {sorted(row)} != {sorted(MANIFEST_FIELDS)}")
        rec = DatasetRecord(**row)
        if rec.id in seen:
            raise ValidationError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records


def load_record(manifest_path, rec: DatasetRecord):
    """Load one record into model space: plan (H,W,3) in [-1,1], mask (H,W) in {0,1}."""
    root = Path(manifest_path).parent
    try:
        plan = load_png(root / rec.plan_path)
        mask = load_png(root / rec.mask_path)
    except (FileNotFoundError, OSError) as exc:
        raise LoadError(f"record {rec.id!r}: {exc}") from exc
    if plan.shape[:2] != mask.shape[:2]:
        raise ValidationError(f"record {rec.id!r}: mask/plan size mismatch")
    return to_model(plan), (mask.astype(np.float32) / 255.0 >= 0.5).astype(np.float32)


def load_batches(manifest_path, split: str, batch_size: int, seed: int,
                 epoch: int = 0) -> Iterator[tuple]:
    """One deterministic epoch of (plans, prompts, masks) batches.

    plans: (B, H, W, 3) float32 in [-1, 1]; masks: (B, H, W) float32 {0, 1}.
    Order is a seeded permutation; the same (seed, epoch) reproduces it.
    """
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    records = [r for r in read_manifest(manifest_path) if r.split == split]
    if not records:
        raise ValidationError(f"no records in split {split!r}")
    order = np.random.default_rng([seed, epoch]).permutation(len(records))
    for start in range(0, len(records), batch_size):
        chunk = [records[i] for i in order[start:start + batch_size]]
        loaded = [load_record(manifest_path, r) for r in chunk]
        plans = np.stack([p for p, _ in loaded])
        masks = np.stack([m for _, m in loaded])
        prompts = [r.prompt for r in chunk]
        yield plans, prompts, masks


def load_triples(manifest_path, split: Optional[str] = None) -> list:
    """All records of a split (or all records) as training Triples."""
    from .training import Triple

    records = read_manifest(manifest_path)
    if split is not None:
        records = [r for r in records if r.split == split]
    triples = []
    for rec in records:
        plan, mask = load_record(manifest_path, rec)
        triples.append(Triple(plan=plan, prompt=rec.prompt, mask=mask))
    return triples
