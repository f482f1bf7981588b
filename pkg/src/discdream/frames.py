"""Per-frame geometric transforms and the iterative video render loop."""

import dataclasses
import json
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ArgumentError, ConfigError
from .dreaming import DreamConfig, dream
from .imageio import save_png

BLACK = (-1.0, -1.0, -1.0)


@dataclass(frozen=True)
class FrameTransform:
    zoom_px: int = 0
    rotate_deg: float = 0.0
    translate_px: tuple = (0, 0)
    fill: tuple = BLACK


@dataclass
class VideoConfig:
    fps: int
    duration_sec: float
    iterations_per_frame: int
    dream: DreamConfig
    transform: FrameTransform
    out_dir: str
    reverse: bool = False

    def __post_init__(self):
        if self.fps < 1:
            raise ConfigError("fps must be >= 1")
        if self.duration_sec <= 0:
            raise ConfigError("duration_sec must be > 0")
        if self.iterations_per_frame < 0:
            raise ConfigError("iterations_per_frame must be >= 0")
        if self.total_frames < 1:
            raise ConfigError("fps * duration must give at least one frame")

    @property
    def total_frames(self):
        return round(self.fps * self.duration_sec)


def _fill_array(fill, channels, dtype):
    fill = np.asarray(fill, dtype=dtype).reshape(-1)
    if fill.size == 1:
        fill = np.repeat(fill, channels)
    if fill.size != channels:
        raise ArgumentError("fill must have 1 or %d components" % channels)
    return fill


def zoom(img, px, fill=BLACK):
    """Crop (px > 0) or pad (px < 0) every border, then resize back."""
    h, w = img.shape[2:]
    if abs(px) >= min(h, w) / 2:
        raise ArgumentError("|zoom_px| must be < min(H, W)/2, got %d" % px)
    if px == 0:
        return img.copy()
    if px > 0:
        core = img[:, :, px : h - px, px : w - px]
    else:
        a = -px
        f = _fill_array(fill, img.shape[1], img.dtype)
        core = np.empty((img.shape[0], img.shape[1], h + 2 * a, w + 2 * a), dtype=img.dtype)
        core[:] = f.reshape(1, -1, 1, 1)
        core[:, :, a : a + h, a : a + w] = img
    return ops.bilinear_resize(core, h, w)


def rotate(img, deg, fill=BLACK):
    """Rotate counter-clockwise about the center; out-of-source pixels take fill."""
    if deg == 0.0:
        return img.copy()
    n, c, h, w = img.shape
    f = _fill_array(fill, c, img.dtype)
    th = math.radians(deg)
    cos, sin = math.cos(th), math.sin(th)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    sx = cos * (xx - cx) - sin * (yy - cy) + cx
    sy = sin * (xx - cx) + cos * (yy - cy) + cy
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    out = np.zeros((n, c, h, w), dtype=img.dtype)
    for dyi in (0, 1):
        for dxi in (0, 1):
            xi = x0 + dxi
            yi = y0 + dyi
            wx = 1.0 - np.abs(sx - xi)
            wy = 1.0 - np.abs(sy - yi)
            weight = (wx * wy).astype(img.dtype)
            valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            xi_c = np.clip(xi, 0, w - 1)
            yi_c = np.clip(yi, 0, h - 1)
            sample = img[:, :, yi_c, xi_c]
            sample = np.where(valid, sample, f.reshape(1, -1, 1, 1))
            out += weight * sample
    return out


def translate(img, dx, dy, fill=BLACK):
    """Integer shift: right by dx, down by dy; vacated pixels take fill."""
    n, c, h, w = img.shape
    if abs(dx) >= w or abs(dy) >= h:
        raise ArgumentError("shift (%d, %d) must be smaller than the image" % (dx, dy))
    if dx == 0 and dy == 0:
        return img.copy()
    f = _fill_array(fill, c, img.dtype)
    out = np.empty_like(img)
    out[:] = f.reshape(1, -1, 1, 1)
    src_y = slice(max(0, -dy), h - max(0, dy))
    src_x = slice(max(0, -dx), w - max(0, dx))
    dst_y = slice(max(0, dy), h - max(0, -dy))
    dst_x = slice(max(0, dx), w - max(0, -dx))
    out[:, :, dst_y, dst_x] = img[:, :, src_y, src_x]
    return out


def apply_transform(img, tf):
    """Zoom, then rotate, then translate; identity parameters are skipped."""
    out = img
    if tf.zoom_px:
        out = zoom(out, tf.zoom_px, tf.fill)
    if tf.rotate_deg:
        out = rotate(out, tf.rotate_deg, tf.fill)
    dx, dy = tf.translate_px
    if dx or dy:
        out = translate(out, dx, dy, tf.fill)
    return out


def _config_dict(vcfg, seed, weights_digest):
    d = dataclasses.asdict(vcfg)
    d["dream"]["taps"] = [list(e) for e in vcfg.dream.taps.entries]
    d["seed"] = seed
    d["weights_digest"] = weights_digest
    return d


def render_video(g, start, vcfg, weights_digest=None, progress=None):
    """Write total_frames PNG frames plus a manifest into vcfg.out_dir.

    Each frame is the previous one transformed and dreamed; with `reverse`
    set, frame files are emitted in reversed temporal order.
    """
    os.makedirs(vcfg.out_dir, exist_ok=True)
    try:
        with tempfile.TemporaryFile(dir=vcfg.out_dir):
            pass
    except OSError as exc:
        raise OSError("output directory %r is not writable: %s" % (vcfg.out_dir, exc)) from exc

    total = vcfg.total_frames
    dcfg = dataclasses.replace(vcfg.dream, iterations=vcfg.iterations_per_frame)
    manifest = _config_dict(vcfg, vcfg.dream.seed, weights_digest)
    manifest_path = os.path.join(vcfg.out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)

    cur = start
    for t in range(total):
        cur = apply_transform(cur, vcfg.transform)
        cur = dream(g, cur, dcfg)
        idx = total - 1 - t if vcfg.reverse else t
        save_png(cur, os.path.join(vcfg.out_dir, "frame_%06d.png" % idx))
        if progress is not None:
            progress(t + 1, total)
    return total
