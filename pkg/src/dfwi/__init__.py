"""dfwi: desk-scale full-waveform inversion with a conditional diffusion prior."""

__version__ = "0.1.0"
