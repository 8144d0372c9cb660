"""floorgen: two-stage conditional latent diffusion for floorplan synthesis.

A desk-scale pipeline that turns a building footprint mask and a text design
brief into floorplan images, plus the evaluation apparatus around it:
quantitative metrics, a human rating game service, and latent-space
analytics.
"""

__version__ = "0.1.0"

from .diffusion import (LatentState, LossReport, NoiseSchedule, forward_diffuse,
                        make_noise_schedule, sample, stage1_loss, stage2_loss,
                        steps_fidelity_sweep)
from .errors import (CheckpointError, ConfigError, GenerationError, LoadError,
                     ValidationError)
from .synth import BuildingSpec, generate_sample, prompt_from_spec
from .text import HashTextEmbedder, TextBrief, tokenize

__all__ = [
    "BuildingSpec",
    "CheckpointError",
    "ConfigError",
    "GenerationError",
    "HashTextEmbedder",
    "LatentState",
    "LoadError",
    "LossReport",
    "NoiseSchedule",
    "TextBrief",
    "ValidationError",
    "forward_diffuse",
    "generate_sample",
    "make_noise_schedule",
    "prompt_from_spec",
    "sample",
    "stage1_loss",
    "stage2_loss",
    "steps_fidelity_sweep",
    "tokenize",
]
