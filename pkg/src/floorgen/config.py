"""Declarative run configuration: one JSON document drives every command.

Flags override fields; the desk profile pins tiny sizes for fast end-to-end
runs on a single CPU core.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .unet import UNetConfig


@dataclass
class ScheduleConfig:
    T: int = 1000
    beta_start: float = 0.00085
    beta_end: float = 0.012


@dataclass
class CodecConfig:
    in_channels: int = 3
    z_channels: int = 4
    base_channels: int = 32
    downsample_factor: int = 4


@dataclass
class EmbedderConfig:
    d_model: int = 128
    vocab_size: int = 4096
    seed: int = 0
    max_len: int = 32


@dataclass
class StageConfig:
    lr: float = 1e-4
    epochs: int = 429
    batch_size: int = 1
    max_steps: int = 100000


@dataclass
class CodecTrainConfig:
    lr: float = 2e-3
    steps: int = 1500
    batch_size: int = 4
    kl_weight: float = 1e-6


@dataclass
class RunConfig:
    seed: int = 0
    image_size: int = 64
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    codec: CodecConfig = field(default_factory=CodecConfig)
    codec_train: CodecTrainConfig = field(default_factory=CodecTrainConfig)
    unet: dict = field(default_factory=lambda: UNetConfig().to_dict())
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    stage1: StageConfig = field(default_factory=StageConfig)
    stage2: StageConfig = field(default_factory=StageConfig)
    dataset_path: str | None = None
    output_dir: str = "runs"

    def unet_config(self) -> UNetConfig:
        d = dict(self.unet)
        d["in_channels"] = self.codec.z_channels
        d.setdefault("context_dim", self.embedder.d_model)
        d["context_dim"] = self.embedder.d_model
        return UNetConfig.from_dict(d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


DESK_PROFILE = {
    "image_size": 32,
    "schedule": {"T": 8, "beta_start": 0.05, "beta_end": 0.75},
    "codec": {"z_channels": 4, "base_channels": 16, "downsample_factor": 4},
    "codec_train": {"steps": 800, "batch_size": 4, "lr": 2e-3},
    "unet": {
        "base_channels": 16,
        "channel_mults": [1, 2],
        "attention_resolutions": [2, 1],
        "transformer_depth": 1,
        "num_res_blocks": 1,
        "norm_groups": 8,
    },
    "embedder": {"d_model": 48, "vocab_size": 2048, "seed": 0, "max_len": 32},
    "stage1": {"lr": 2e-3, "epochs": 5, "batch_size": 4, "max_steps": 2000},
    "stage2": {"lr": 2e-3, "epochs": 5, "batch_size": 4, "max_steps": 2000},
}

PROFILES = {"desk": DESK_PROFILE}

_SECTION_TYPES = {
    "schedule": ScheduleConfig,
    "codec": CodecConfig,
    "codec_train": CodecTrainConfig,
    "embedder": EmbedderConfig,
    "stage1": StageConfig,
    "stage2": StageConfig,
}


def _merge_section(name: str, cls, current, override: dict):
    valid = {f.name: f.type for f in dataclasses.fields(cls)}
    values = dataclasses.asdict(current)
    for key, val in override.items():
        if key not in valid:
            raise ConfigError(f"{name}.{key}", "unknown field")
        values[key] = val
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(name, str(exc)) from exc


def build_config(document: dict | None = None, profile: str | None = None,
                 overrides: dict | None = None) -> RunConfig:
    """Assemble a RunConfig from an optional JSON document, an optional
    profile, and flat overrides; later sources win."""
    cfg = RunConfig()
    layers = []
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError("profile", f"unknown profile {profile!r}")
        layers.append(PROFILES[profile])
    if document is not None:
        if not isinstance(document, dict):
            raise ConfigError("config", "document must be a JSON object")
        layers.append(document)
    if overrides:
        layers.append(overrides)

    for layer in layers:
        for key, val in layer.items():
            if key in _SECTION_TYPES:
                if not isinstance(val, dict):
                    raise ConfigError(key, "must be an object")
                setattr(cfg, key, _merge_section(key, _SECTION_TYPES[key],
                                                 getattr(cfg, key), val))
            elif key == "unet":
                if not isinstance(val, dict):
                    raise ConfigError("unet", "must be an object")
                merged = dict(cfg.unet)
                merged.update(val)
                cfg.unet = merged
            elif key in ("seed", "image_size"):
                if not isinstance(val, int) or isinstance(val, bool):
                    raise ConfigError(key, f"must be an integer, got {val!r}")
                setattr(cfg, key, val)
            elif key in ("dataset_path", "output_dir"):
                if val is not None and not isinstance(val, str):
                    raise ConfigError(key, f"must be a string, got {val!r}")
                setattr(cfg, key, val)
            else:
                raise ConfigError(key, "unknown field")

    _validate(cfg)
    return cfg


def load_config(path, profile: str | None = None, overrides: dict | None = None) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError("config", f"file not found: {p}")
    try:
        document = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    return build_config(document, profile=profile, overrides=overrides)


def _validate(cfg: RunConfig) -> None:
    if cfg.image_size < 8:
        raise ConfigError("image_size", f"too small: {cfg.image_size}")
    if cfg.image_size % cfg.codec.downsample_factor:
        raise ConfigError("image_size",
                          f"{cfg.image_size} not divisible by codec factor "
                          f"{cfg.codec.downsample_factor}")
    s = cfg.schedule
    if s.T < 1:
        raise ConfigError("schedule.T", f"must be >= 1, got {s.T}")
    if not (0.0 < s.beta_start <= s.beta_end < 1.0):
        raise ConfigError("schedule.beta_start",
                          f"betas must satisfy 0 < start <= end < 1, got ({s.beta_start}, {s.beta_end})")
    for name in ("stage1", "stage2"):
        st = getattr(cfg, name)
        if st.epochs < 1 or st.batch_size < 1:
            raise ConfigError(f"{name}.epochs", "epochs and batch_size must be >= 1")
    try:
        cfg.unet_config()
    except Exception as exc:
        raise ConfigError("unet", str(exc)) from exc
