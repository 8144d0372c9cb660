import numpy as np
import pytest
import torch

torch.set_num_threads(1)

from floorgen.codec import LatentCodec
from floorgen.config import build_config
from floorgen.synth import BUILDING_TYPES, BuildingSpec, generate_sample
from floorgen.text import HashTextEmbedder
from floorgen.training import Triple
from floorgen.unet import UNet, UNetConfig


def make_triples(size=32, types=None, seeds=None, footprints=None):
    types = types or BUILDING_TYPES
    seeds = seeds or list(range(len(types)))
    triples = []
    for i, (btype, seed) in enumerate(zip(types, seeds)):
        fp = footprints[i] if footprints else None
        mask, plan, prompt = generate_sample(
            BuildingSpec(building_type=btype, footprint=fp, seed=seed), size=size)
        triples.append(Triple(plan=(plan.astype(np.float32) / 127.5 - 1.0),
                              prompt=prompt,
                              mask=(mask > 127).astype(np.float32)))
    return triples


@pytest.fixture(scope="session")
def desk_config():
    return build_config(None, profile="desk")


def _train_two_stage(cfg, pretrain, target, *, stage1_steps=2000, stage2_steps=2000,
                     seed=0):
    """Shared two-corpus training path: codec, stage-1 prior, stage-2 adapt."""
    import time

    from floorgen.pipeline import Pipeline
    from floorgen.training import train_codec, train_stage1, train_stage2

    t0 = time.time()
    torch.manual_seed(seed)
    pipe = Pipeline.build(cfg)
    train_codec(pipe.codec, [t.plan for t in pretrain + target],
                steps=cfg.codec_train.steps, batch_size=cfg.codec_train.batch_size,
                lr=cfg.codec_train.lr, kl_weight=cfg.codec_train.kl_weight, seed=seed)
    pipe.fit_latent_scale([t.plan for t in pretrain])
    res1 = train_stage1(pipe.unet, pipe.codec, pipe.embedder, pretrain, pipe.schedule,
                        max_steps=stage1_steps, batch_size=8, lr=3e-3, seed=seed,
                        latent_scale=pipe.latent_scale)
    pipe.attach_control()
    res2 = train_stage2(pipe.controlled, pipe.codec, pipe.embedder, target,
                        pipe.schedule, max_steps=stage2_steps, batch_size=4,
                        lr=3e-3, seed=seed, latent_scale=pipe.latent_scale)
    pipe.meta = {"trained": True}
    return {
        "pipeline": pipe,
        "pretrain": pretrain,
        "target": target,
        "stage1": res1,
        "stage2": res2,
        "train_seconds": time.time() - t0,
    }


@pytest.fixture(scope="session")
def overfit_desk(desk_config):
    """Desk-profile (T=8) two-stage overfit: 8 pretrain + 8 target triples."""
    from floorgen.synth import BUILDING_TYPES

    pretrain = make_triples(size=32, types=BUILDING_TYPES, seeds=range(100, 108))
    target = make_triples(size=32, types=BUILDING_TYPES, seeds=range(8))
    return _train_two_stage(desk_config, pretrain, target)


@pytest.fixture(scope="session")
def overfit_cond():
    """T=64 stage-2 overfit on 4 distinct-footprint triples of one type."""
    from floorgen.synth import BUILDING_TYPES, FOOTPRINTS

    cfg = build_config({"schedule": {"T": 64, "beta_start": 0.0133,
                                     "beta_end": 0.1875}}, profile="desk")
    pretrain = make_triples(size=32, types=BUILDING_TYPES, seeds=range(200, 208))
    target = make_triples(size=32, types=["library"] * 4, seeds=range(40, 44),
                          footprints=list(FOOTPRINTS))
    return _train_two_stage(cfg, pretrain, target)


@pytest.fixture()
def tiny_unet():
    torch.manual_seed(0)
    cfg = UNetConfig(in_channels=3, base_channels=8, channel_mults=(1, 2),
                     attention_resolutions=(1, 2), context_dim=16,
                     num_res_blocks=1, norm_groups=4)
    return UNet(cfg)


@pytest.fixture()
def tiny_embedder():
    return HashTextEmbedder(d_model=16, vocab_size=512, seed=0)


@pytest.fixture()
def tiny_codec():
    torch.manual_seed(0)
    return LatentCodec(in_channels=3, z_channels=4, base_channels=8, downsample_factor=4)
