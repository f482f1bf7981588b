"""Discriminator-driven gradient-ascent feature visualization."""

from .dreaming import DreamConfig, dream, dream_step, random_start
from .errors import DiscDreamError
from .estimator import DiscriminatorDreamer
from .frames import FrameTransform, VideoConfig, render_video, rotate, translate, zoom
from .graph import (
    ArchConfig,
    DiscriminatorGraph,
    TapSet,
    build_discriminator,
    layer_names,
    truncated_forward_min_size,
)
from .weights_io import load_weights, random_weights, weights_digest, write_weights

__version__ = "0.1.0"

__all__ = [
    "ArchConfig",
    "DiscDreamError",
    "DiscriminatorDreamer",
    "DiscriminatorGraph",
    "DreamConfig",
    "FrameTransform",
    "TapSet",
    "VideoConfig",
    "build_discriminator",
    "dream",
    "dream_step",
    "layer_names",
    "load_weights",
    "random_start",
    "random_weights",
    "render_video",
    "rotate",
    "translate",
    "truncated_forward_min_size",
    "weights_digest",
    "write_weights",
    "zoom",
]
