from dfwi.nn.denoiser import (ArchSpec, DenoiserParams, denoiser_backward,
                              denoiser_forward, init_denoiser,
                              sinusoidal_embedding)
from dfwi.nn.optim import adam_init, adam_step
from dfwi.nn.serial import bounds_checksum, load_checkpoint, save_checkpoint

__all__ = [
    "ArchSpec", "DenoiserParams", "denoiser_forward", "denoiser_backward",
    "init_denoiser", "sinusoidal_embedding", "adam_init", "adam_step",
    "save_checkpoint", "load_checkpoint", "bounds_checksum",
]
