"""First-frame- and graph-conditioned latent video diffusion."""

from .schedule import NoiseSchedule, forward_diffuse, low_freq_init
from .codec import IdentityCodec, ConvCodec, load_codec_checkpoint, train_codec
from .denoiser import VideoDenoiser, DenoiserConfig, WindowedTemporalAttention
from .training import (
    DiffusionConfig,
    DiffusionError,
    GenerationStack,
    load_generation_checkpoint,
    save_generation_checkpoint,
    train_diffusion,
    training_step,
)
from .sampling import autoregress, sample

__all__ = [
    "NoiseSchedule", "forward_diffuse", "low_freq_init",
    "IdentityCodec", "ConvCodec", "load_codec_checkpoint", "train_codec",
    "VideoDenoiser", "DenoiserConfig", "WindowedTemporalAttention",
    "DiffusionConfig", "DiffusionError", "GenerationStack",
    "load_generation_checkpoint", "save_generation_checkpoint",
    "train_diffusion", "training_step", "autoregress", "sample",
]
