"""Coarse-to-fine video outpainting toolkit with a deterministic toy denoiser."""

from .video import MaskVideo, PadSpec, VideoTensor

__all__ = ["MaskVideo", "PadSpec", "VideoTensor"]
__version__ = "0.1.0"
