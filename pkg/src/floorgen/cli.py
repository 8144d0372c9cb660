"""Command-line entry point: dataset, train, sample, eval, embed, sweep, serve.

Exit codes: 2 for invalid configuration or violated preconditions (with a
field-level message), 1 for runtime failures, 0 on success. Every command
writes a run manifest (config hash, artifact checksums, timings) under its
output directory; FLOORGEN_OUT overrides the output root.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (CheckpointError, ConfigError, GenerationError, LoadError,
                     ValidationError)


def _out_dir(args) -> Path:
    root = os.environ.get("FLOORGEN_OUT")
    out = Path(args.out) if args.out else None
    if out is None:
        out = Path(root) if root else Path("runs") / args.command
    elif root and not out.is_absolute():
        out = Path(root) / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_run_manifest(out_dir: Path, args, artifacts, started: float,
                        config_hash: str | None = None, seed: int | None = None) -> Path:
    manifest = {
        "command": args.command,
        "version": __version__,
        "config_hash": config_hash,
        "seed": seed,
        "artifacts": [{"path": str(Path(p).relative_to(out_dir)) if str(p).startswith(str(out_dir)) else str(p),
                       "sha256": _sha256(Path(p))} for p in artifacts],
        "timings": {"started_at": started, "duration_s": time.time() - started},
    }
    path = out_dir / "run.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def _load_run_config(args):
    from .config import build_config, load_config

    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    profile = getattr(args, "profile", None)
    if getattr(args, "config", None):
        return load_config(args.config, profile=profile, overrides=overrides)
    return build_config(None, profile=profile, overrides=overrides)


def cmd_dataset(args) -> int:
    from .dataset import build_dataset

    started = time.time()
    out = _out_dir(args)
    type_mix = json.loads(args.type_mix) if args.type_mix else None
    manifest = build_dataset(out, n=args.n, type_mix=type_mix, seed=args.seed,
                             size=args.size, hires=args.hires)
    artifacts = [manifest, out / "manifest.meta.json"]
    _write_run_manifest(out, args, artifacts, started, seed=args.seed)
    print(f"wrote {args.n} records to {manifest}")
    return 0


def cmd_train(args) -> int:
    import torch

    from . import dataset as ds
    from .pipeline import Pipeline
    from .training import train_codec, train_stage1, train_stage2

    started = time.time()
    cfg = _load_run_config(args)
    out = _out_dir(args)
    if args.stage in ("1", "2", "codec") and not args.data:
        raise ConfigError("data", "training requires --data MANIFEST")
    torch.manual_seed(cfg.seed)

    triples = ds.load_triples(args.data, split="train")
    val_triples = []
    try:
        val_triples = ds.load_triples(args.data, split="val")
    except Exception:
        pass

    artifacts = []
    if args.stage == "codec":
        pipe = Pipeline.build(cfg)
        result = train_codec(pipe.codec, [t.plan for t in triples],
                             steps=cfg.codec_train.steps, batch_size=cfg.codec_train.batch_size,
                             lr=cfg.codec_train.lr, kl_weight=cfg.codec_train.kl_weight,
                             seed=cfg.seed)
        ck = out / "codec.pt"
        pipe.save(ck, stage="codec", extra_meta={"train": result.__dict__})
        artifacts.append(ck)
    elif args.stage == "1":
        if args.from_checkpoint:
            pipe = Pipeline.load(args.from_checkpoint)
        else:
            pipe = Pipeline.build(cfg)
            train_codec(pipe.codec, [t.plan for t in triples],
                        steps=cfg.codec_train.steps, batch_size=cfg.codec_train.batch_size,
                        lr=cfg.codec_train.lr, kl_weight=cfg.codec_train.kl_weight,
                        seed=cfg.seed)
        pipe.fit_latent_scale([t.plan for t in triples])
        result = train_stage1(pipe.unet, pipe.codec, pipe.embedder, triples, pipe.schedule,
                              epochs=cfg.stage1.epochs, max_steps=cfg.stage1.max_steps,
                              batch_size=cfg.stage1.batch_size, lr=cfg.stage1.lr,
                              seed=cfg.seed, val_triples=val_triples,
                              latent_scale=pipe.latent_scale)
        ck = out / "stage1.pt"
        pipe.save(ck, stage="stage1",
                  extra_meta={"trained": True, "train": _result_dict(result)})
        artifacts.append(ck)
        _write_curve(out / "stage1_losses.json", result, artifacts)
    else:  # stage 2
        if not args.from_checkpoint:
            raise ConfigError("from", "stage-2 training requires --from STAGE1_CHECKPOINT "
                                      "(train stage 1 first)")
        pipe = Pipeline.load(args.from_checkpoint)
        if pipe.stage != "stage1":
            raise ConfigError("from", f"expected a stage-1 checkpoint, got {pipe.stage}")
        pipe.attach_control()
        result = train_stage2(pipe.controlled, pipe.codec, pipe.embedder, triples,
                              pipe.schedule, epochs=cfg.stage2.epochs,
                              max_steps=cfg.stage2.max_steps, batch_size=cfg.stage2.batch_size,
                              lr=cfg.stage2.lr, seed=cfg.seed, val_triples=val_triples,
                              latent_scale=pipe.latent_scale)
        ck = out / "stage2.pt"
        pipe.save(ck, stage="stage2",
                  extra_meta={"trained": True, "train": _result_dict(result)})
        artifacts.append(ck)
        _write_curve(out / "stage2_losses.json", result, artifacts)

    _write_run_manifest(out, args, artifacts, started,
                        config_hash=cfg.config_hash, seed=cfg.seed)
    print(f"stage {args.stage}: loss {result.initial_loss:.4f} -> {result.final_loss:.4f} "
          f"({result.steps} steps)")
    return 0


def _result_dict(result) -> dict:
    return {"stage": result.stage, "steps": result.steps,
            "initial_loss": result.initial_loss, "final_loss": result.final_loss}


def _write_curve(path: Path, result, artifacts: list) -> None:
    path.write_text(json.dumps(result.curve, indent=2))
    artifacts.append(path)


def cmd_sample(args) -> int:
    from .images import encode_png, load_png, save_png
    from .pipeline import Pipeline

    started = time.time()
    out = _out_dir(args)
    pipe = Pipeline.load(args.checkpoint)
    mask = None
    if args.mask:
        raw = load_png(args.mask)
        if raw.ndim == 3:
            raw = raw.mean(axis=2)
        mask = (raw.astype(np.float32) / 255.0 >= 0.5).astype(np.float32)
    images = pipe.generate(args.prompt, mask, steps=args.steps, seed=args.seed, n=args.n)
    artifacts = []
    for i, img in enumerate(images):
        p = out / f"sample_{i:02d}.png"
        save_png(p, img)
        artifacts.append(p)
    grid = np.concatenate(images, axis=1)
    grid_path = out / "grid.png"
    grid_path.write_bytes(encode_png(grid))
    artifacts.append(grid_path)
    _write_run_manifest(out, args, artifacts, started, seed=args.seed)
    print(f"wrote {len(images)} sample(s) to {out}")
    return 0


def cmd_eval(args) -> int:
    from .images import load_png
    from .metrics import RandomConvExtractor, metric_report, render_metric_table

    started = time.time()
    out = _out_dir(args)

    def load_dir(d):
        paths = sorted(Path(d).glob("*.png"))
        if not paths:
            raise ValidationError(f"no PNG images under {d}")
        return [load_png(p) for p in paths]

    report = metric_report(load_dir(args.real), load_dir(args.gen),
                           extractor=RandomConvExtractor(seed=args.extractor_seed))
    report_path = out / "metrics.json"
    report_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    artifacts = [report_path]
    print(render_metric_table(report))
    if args.ratings:
        summary = _ratings_summary(Path(args.ratings), Path(args.real), Path(args.gen))
        summary_path = out / "scores.json"
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True))
        artifacts.append(summary_path)
    _write_run_manifest(out, args, artifacts, started, seed=args.extractor_seed)
    return 0


def _ratings_summary(log_path: Path, real_dir: Path, gen_dir: Path) -> dict:
    """Score the rating log offline, resolving groups through the image pools."""
    from .metrics import render_score_table, score_summary
    from .service import GameState, ServiceSettings

    state = GameState(ServiceSettings(real_dir=real_dir, gen_dir=gen_dir,
                                      log_path=log_path))
    pairs = []
    for rec in state.ratings:
        image = state.pool.get(rec["image_id"])
        if image is not None:
            pairs.append((image.group, rec["score"]))
    summary = score_summary(pairs)
    print(render_score_table(summary))
    return {
        "real": summary["real"].to_dict(),
        "generated": summary["generated"].to_dict(),
        "welch_t": summary["welch_t"],
    }


def cmd_embed(args) -> int:
    from . import synth
    from .analytics import collect_embeddings, export_projection, pca_fit
    from .pipeline import Pipeline

    started = time.time()
    out = _out_dir(args)
    pipe = Pipeline.load(args.checkpoint)
    conditions = []
    for i, btype in enumerate(synth.BUILDING_TYPES):
        spec = synth.BuildingSpec(building_type=btype, seed=args.seed * 131 + i)
        mask, _, prompt = synth.generate_sample(spec, size=pipe.config.image_size)
        conditions.append({"prompt": prompt, "label": btype,
                           "mask": (mask > 127).astype(np.float32)
                           if pipe.stage == "stage2" else None})
    embeddings = collect_embeddings(pipe, conditions, n=args.n, seed=args.seed)
    model = pca_fit(embeddings, k=2)
    csv_path = export_projection(model, embeddings, out / "projection.csv")
    artifacts = [csv_path, csv_path.with_suffix(".json")]
    _write_run_manifest(out, args, artifacts, started, seed=args.seed)
    print(f"wrote {args.n} projected embeddings to {csv_path}")
    return 0


def cmd_sweep(args) -> int:
    from . import dataset as ds
    from .diffusion import steps_fidelity_sweep
    from .pipeline import Pipeline

    started = time.time()
    out = _out_dir(args)
    pipe = Pipeline.load(args.checkpoint)
    records = ds.read_manifest(args.data)
    subset = [r for r in records if r.split == args.split] or records
    eval_set = []
    for rec in subset[:args.limit]:
        plan, mask = ds.load_record(args.data, rec)
        eval_set.append({"prompt": rec.prompt, "mask": mask, "plan": plan})
    step_list = [int(s) for s in args.steps.split(",")]
    rows = steps_fidelity_sweep(pipe, eval_set, step_list,
                                seeds=list(range(args.seeds)))
    report_path = out / "sweep.json"
    report_path.write_text(json.dumps(rows, indent=2, sort_keys=True))
    _write_run_manifest(out, args, [report_path], started, seed=0)
    for row in rows:
        print(f"steps={row['steps']:4d}  mse={row['mse']:.6f}  ssim={row['ssim']:.4f}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceSettings, create_app

    settings = ServiceSettings(
        real_dir=Path(args.real),
        gen_dir=Path(args.gen),
        log_path=Path(args.log) if args.log else Path(args.real).parent / "ratings.jsonl",
        checkpoint=Path(args.checkpoint) if args.checkpoint else None,
        cors_origins=tuple(args.cors.split(",")) if args.cors else ("*",),
        rng_seed=args.rng_seed,
    )
    app = create_app(settings)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="floorgen",
                                     description="floorplan diffusion pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="generate the synthetic dataset")
    p.add_argument("--out", default=None)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--hires", action="store_true")
    p.add_argument("--type-mix", default=None, help="JSON object {type: weight}")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train codec / stage 1 / stage 2")
    p.add_argument("--stage", choices=("codec", "1", "2"), required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--profile", choices=("desk",), default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--from", dest="from_checkpoint", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate floorplans from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--mask", default=None)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="compute FID/KID/SSIM/PSNR over image dirs")
    p.add_argument("--real", required=True)
    p.add_argument("--gen", required=True)
    p.add_argument("--extractor-seed", type=int, default=0)
    p.add_argument("--ratings", default=None,
                   help="rating log JSONL; adds the per-group score table")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("embed", help="collect embeddings and export a PCA projection")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, default=1600)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("sweep", help="fidelity vs denoising steps report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--steps", default="5,10,25,50")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--limit", type=int, default=8)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("serve", help="run the evaluation-game / studio service")
    p.add_argument("--real", required=True)
    p.add_argument("--gen", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--log", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--cors", default=None)
    p.add_argument("--rng-seed", type=int, default=None)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        import torch

        torch.set_num_threads(1)  # single-threaded mode keeps runs bit-stable
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, LoadError, GenerationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
