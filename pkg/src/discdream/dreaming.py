"""Gradient-ascent dreaming loop: seeded starts, octave pyramid, updates.

Random starts use numpy's PCG64 generator (a fixed, documented algorithm with
64-bit seeding), so a seed reproduces bit-exactly across platforms.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ConfigError, SizeError
from .graph import NORM_MODES, TapSet, truncated_forward_min_size

GRAD_EPS = np.float32(1e-8)


@dataclass
class DreamConfig:
    taps: TapSet
    norm: str = "none"
    octaves: int = 10
    octave_scale: float = 1.4
    learning_rate: float = 0.01
    iterations: int = 20
    resize_octaves: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.norm not in NORM_MODES:
            raise ConfigError("norm must be one of %s" % (NORM_MODES,))
        if self.octaves < 1:
            raise ConfigError("octaves must be >= 1")
        if self.octave_scale <= 1.0:
            raise ConfigError("octave_scale must be > 1")
        if self.learning_rate < 0.0:
            raise ConfigError("learning_rate must be >= 0")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")


def random_start(seed, channels, height, width):
    """Uniform [-1, 1] noise image from PCG64(seed); bit-reproducible."""
    if channels < 1 or height < 1 or width < 1:
        raise ConfigError("image dimensions must be positive")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    return rng.uniform(-1.0, 1.0, (1, channels, height, width)).astype(np.float32)


def _ascent_update(img, grad, lr):
    dt = img.dtype
    scale = dt.type(lr) / (grad.std() + dt.type(GRAD_EPS))
    return np.clip(img + grad * scale, -1.0, 1.0)


def dream_step(g, img, cfg):
    """One gradient-ascent step at the image's own size.

    Returns (updated image, pre-update loss)."""
    min_size = truncated_forward_min_size(cfg.taps, g.cfg)
    if min(img.shape[2:]) < min_size:
        raise SizeError(
            "image %dx%d too small for the requested taps (minimum %d)"
            % (img.shape[2], img.shape[3], min_size)
        )
    loss, grad = g.input_gradient(img, cfg.taps, cfg.norm)
    return _ascent_update(img, grad, cfg.learning_rate), loss


def _resized_step(g, img, cfg):
    native = g.cfg.img_resolution
    up = ops.bilinear_resize(img, native, native)
    loss, grad_native = g.input_gradient(up, cfg.taps, cfg.norm)
    grad = ops.bilinear_resize(grad_native, img.shape[2], img.shape[3])
    return _ascent_update(img, grad, cfg.learning_rate), loss


def dream(g, start, cfg, octave_log=None):
    """Run the full octave pyramid on `start` and return the dreamed image.

    Octaves are processed smallest first; the dreamed "detail" at each scale
    is carried up to the next one. With resize_octaves set, gradients are
    evaluated at the graph's native resolution; without it, octaves smaller
    than the taps' minimum size are skipped with a warning.
    """
    cfg.taps.validate(g.cfg)
    if cfg.iterations == 0:
        return start.copy()
    h, w = start.shape[2:]
    sizes = []
    for k in range(cfg.octaves):
        factor = cfg.octave_scale ** k
        sizes.append((round(h / factor), round(w / factor)))
    if min(sizes[-1]) < 1:
        raise ConfigError(
            "octave_scale^(octaves-1) reduces the image below 1 pixel"
        )
    sizes.reverse()  # smallest first

    min_size = None
    if not cfg.resize_octaves:
        min_size = truncated_forward_min_size(cfg.taps, g.cfg)
        if all(min(s) < min_size for s in sizes):
            raise ConfigError(
                "all %d octaves are below the taps' minimum size %d"
                % (cfg.octaves, min_size)
            )

    detail = np.zeros((1, start.shape[1]) + sizes[0], dtype=start.dtype)
    cur = None
    for idx, (sh, sw) in enumerate(sizes):
        base = ops.bilinear_resize(start, sh, sw)
        if idx:
            detail = ops.bilinear_resize(detail, sh, sw)
        cur = np.clip(base + detail, -1.0, 1.0)
        skipped = min_size is not None and min(sh, sw) < min_size
        if skipped:
            warnings.warn(
                "skipping octave %dx%d: below minimum size %d for the taps"
                % (sh, sw, min_size),
                stacklevel=2,
            )
        else:
            for _ in range(cfg.iterations):
                if cfg.resize_octaves:
                    cur, _loss = _resized_step(g, cur, cfg)
                else:
                    cur, _loss = dream_step(g, cur, cfg)
        if octave_log is not None:
            octave_log.append(((sh, sw), skipped))
        detail = cur - base
    return cur
