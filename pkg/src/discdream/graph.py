"""StyleGAN2-style discriminator: graph builder, tapped forward, input gradient.

The graph is a fixed sequence of residual blocks followed by a 4x4 head
(minibatch-stddev, conv, two fully-connected layers). Every layer output can
be "tapped": recorded post-activation and fed into the dreaming loss. The
backward pass is hand-written per block; only the gradient with respect to
the input image is produced.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError, SizeError, UnknownLayerError

INV_SQRT2 = 1.0 / math.sqrt(2.0)

# The only group size supported by the DDRW v1 format (and by this builder).
SUPPORTED_MBSTD_GROUP = 4

MIN_RESOLUTION = 8
MAX_RESOLUTION = 1024


def _is_pow2(v):
    return v >= 1 and (v & (v - 1)) == 0


@dataclass(frozen=True)
class ArchConfig:
    img_resolution: int
    img_channels: int = 3
    channel_base: int = 32768
    channel_max: int = 512
    mbstd_group: int = SUPPORTED_MBSTD_GROUP
    latent_dim: int = 512

    def __post_init__(self):
        r = self.img_resolution
        if not _is_pow2(r) or not MIN_RESOLUTION <= r <= MAX_RESOLUTION:
            raise ConfigError(
                "img_resolution must be a power of two in [%d, %d], got %r"
                % (MIN_RESOLUTION, MAX_RESOLUTION, r)
            )
        if self.img_channels < 1:
            raise ConfigError("img_channels must be positive")
        if not _is_pow2(self.channel_base) or self.channel_base < r:
            raise ConfigError("channel_base must be a power of two >= img_resolution")
        if not _is_pow2(self.channel_max):
            raise ConfigError("channel_max must be a power of two")
        if self.mbstd_group != SUPPORTED_MBSTD_GROUP:
            raise ConfigError(
                "only mbstd_group=%d is supported" % SUPPORTED_MBSTD_GROUP
            )
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be positive")

    @property
    def num_blocks(self):
        return int(math.log2(self.img_resolution / 4))

    @property
    def block_resolutions(self):
        return [self.img_resolution >> i for i in range(self.num_blocks)]

    def channels(self, res):
        return min(self.channel_base // res, self.channel_max)


def layer_names(cfg):
    """Canonical evaluation order of all tappable layers."""
    names = ["b%d.fromrgb" % cfg.img_resolution]
    for r in cfg.block_resolutions:
        names += ["b%d.conv0" % r, "b%d.conv1" % r, "b%d.skip" % r]
    names += ["b4.mbstd", "b4.conv", "b4.fc", "b4.out"]
    return names


def parameter_shapes(cfg):
    """Ordered parameter-name -> shape map matching the builder's allocation."""
    shapes = {}
    top = cfg.img_resolution
    shapes["b%d.fromrgb.weight" % top] = (cfg.channels(top), cfg.img_channels, 1, 1)
    shapes["b%d.fromrgb.bias" % top] = (cfg.channels(top),)
    for r in cfg.block_resolutions:
        ci, co = cfg.channels(r), cfg.channels(r // 2)
        shapes["b%d.conv0.weight" % r] = (ci, ci, 3, 3)
        shapes["b%d.conv0.bias" % r] = (ci,)
        shapes["b%d.conv1.weight" % r] = (co, ci, 3, 3)
        shapes["b%d.conv1.bias" % r] = (co,)
        shapes["b%d.skip.weight" % r] = (co, ci, 1, 1)
    c4 = cfg.channels(4)
    shapes["b4.conv.weight"] = (c4, c4 + 1, 3, 3)
    shapes["b4.conv.bias"] = (c4,)
    shapes["b4.fc.weight"] = (cfg.latent_dim, c4 * 16)
    shapes["b4.fc.bias"] = (cfg.latent_dim,)
    shapes["b4.out.weight"] = (1, cfg.latent_dim)
    shapes["b4.out.bias"] = (1,)
    return shapes


@dataclass(frozen=True)
class TapSet:
    """Ordered, weighted set of tapped layer names."""

    entries: tuple  # tuple of (name, weight)

    @classmethod
    def of(cls, names, weights=None):
        names = list(names)
        if weights is None:
            weights = [1.0] * len(names)
        return cls(tuple(zip(names, [float(w) for w in weights])))

    def validate(self, cfg):
        valid = layer_names(cfg)
        if not self.entries:
            raise ConfigError("tap set must not be empty")
        seen = set()
        for name, _ in self.entries:
            if name not in valid:
                raise UnknownLayerError(name, valid)
            if name in seen:
                raise ConfigError("duplicate tap %r" % name)
            seen.add(name)

    @property
    def names(self):
        return [n for n, _ in self.entries]


NORM_MODES = ("none", "count", "sqrt")


def norm_factor(mode, n_elements):
    if mode == "none":
        return 1.0
    if mode == "count":
        return 1.0 / n_elements
    if mode == "sqrt":
        return 1.0 / math.sqrt(n_elements)
    raise ConfigError("unknown normalization mode %r" % mode)


class DiscriminatorGraph:
    """Layer list plus parameters; immutable once weights are assigned."""

    def __init__(self, cfg, params):
        self.cfg = cfg
        self.params = params  # name -> np.ndarray (float32)
        self.layer_names = layer_names(cfg)

    def param(self, name, dtype):
        p = self.params[name]
        return p if p.dtype == dtype else p.astype(dtype)

    # -- graph-level downsample: tolerates odd sizes by zero-padding to even --

    @staticmethod
    def _down(x):
        h, w = x.shape[2:]
        if h < 2 or w < 2:
            raise ShapeError("cannot downsample %dx%d feature map" % (h, w))
        ph, pw = h % 2, w % 2
        if ph or pw:
            x = np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)))
        return ops.fir_downsample2x(x)

    @staticmethod
    def _down_grad(dy, in_hw):
        h, w = in_hw
        ph, pw = h % 2, w % 2
        dx = ops.fir_downsample2x_grad(dy, (h + ph, w + pw))
        if ph or pw:
            dx = np.ascontiguousarray(dx[:, :, :h, :w])
        return dx

    # -- forward ----------------------------------------------------------

    def forward_with_taps(self, x, taps, trace=None):
        """Run until the deepest tap; return {layer name: post-activation}."""
        acts, _ = self._forward(x, taps, keep_ctx=False, trace=trace)
        return acts

    def _forward(self, x, taps, keep_ctx, trace=None):
        cfg = self.cfg
        taps.validate(cfg)
        if x.ndim != 4 or x.shape[1] != cfg.img_channels:
            raise ShapeError(
                "input must be [N, %d, H, W], got %s" % (cfg.img_channels, x.shape)
            )
        h, w = x.shape[2:]
        if h > cfg.img_resolution or w > cfg.img_resolution:
            raise SizeError(
                "input %dx%d exceeds the graph resolution %d" % (h, w, cfg.img_resolution)
            )
        wanted = set(taps.names)
        order = self.layer_names
        deepest = max(order.index(n) for n in wanted)
        has_head_tap = any(n.startswith("b4.") for n in wanted)
        if has_head_tap and (h, w) != (cfg.img_resolution, cfg.img_resolution):
            raise SizeError(
                "b4 taps require a %dx%d input, got %dx%d"
                % (cfg.img_resolution, cfg.img_resolution, h, w)
            )
        dt = x.dtype

        def done(name):
            return order.index(name) >= deepest

        def run(name):
            if trace is not None:
                trace.append(name)

        acts = {}
        frames = []  # reversed for backward
        top = cfg.img_resolution

        # fromRGB
        name = "b%d.fromrgb" % top
        spec = ops.ConvSpec(cfg.img_channels, cfg.channels(top), kernel=1, padding=0)
        z = ops.conv2d_forward(
            x, self.param(name + ".weight", dt), self.param(name + ".bias", dt), spec
        )
        cur = ops.lrelu(z, gain=ops.LRELU_GAIN)
        run(name)
        if name in wanted:
            acts[name] = cur
        if keep_ctx:
            frames.append(("fromrgb", name, spec, x.shape[2:], z))
        if done(name):
            return acts, frames

        for r in cfg.block_resolutions:
            cur, stop = self._block_forward(r, cur, wanted, acts, frames, keep_ctx, done, run)
            if stop:
                return acts, frames

        self._head_forward(cur, wanted, acts, frames, keep_ctx, done, run)
        return acts, frames

    def _block_forward(self, r, x_in, wanted, acts, frames, keep_ctx, done, run):
        cfg = self.cfg
        dt = x_in.dtype
        ci, co = cfg.channels(r), cfg.channels(r // 2)
        spec0 = ops.ConvSpec(ci, ci, kernel=3, padding=1)
        spec1 = ops.ConvSpec(ci, co, kernel=3, padding=1, has_bias=False)
        spec_s = ops.ConvSpec(ci, co, kernel=1, padding=0, has_bias=False)

        n0, n1, ns = "b%d.conv0" % r, "b%d.conv1" % r, "b%d.skip" % r

        z0 = ops.conv2d_forward(
            x_in, self.param(n0 + ".weight", dt), self.param(n0 + ".bias", dt), spec0
        )
        a0 = ops.lrelu(z0, gain=ops.LRELU_GAIN)
        run(n0)
        if n0 in wanted:
            acts[n0] = a0
        if done(n0):
            if keep_ctx:
                frames.append(("block_partial", r, "conv0", spec0, x_in.shape[2:], z0))
            return None, True

        z1 = ops.conv2d_forward(a0, self.param(n1 + ".weight", dt), None, spec1)
        z1d = self._down(z1)
        z1db = z1d + self.param(n1 + ".bias", dt).reshape(1, -1, 1, 1)
        a1 = ops.lrelu(z1db, gain=ops.LRELU_GAIN)
        run(n1)
        if n1 in wanted:
            acts[n1] = a1
        if done(n1):
            if keep_ctx:
                frames.append(
                    ("block_partial", r, "conv1", (spec0, spec1), x_in.shape[2:], (z0, z1db))
                )
            return None, True

        sp = ops.conv2d_forward(x_in, self.param(ns + ".weight", dt), None, spec_s)
        sd = self._down(sp)
        run(ns)
        if ns in wanted:
            acts[ns] = sd
        y = (a1 + sd) * dt.type(INV_SQRT2)
        if keep_ctx:
            frames.append(
                ("block", r, (spec0, spec1, spec_s), x_in.shape[2:], (z0, z1db))
            )
        if done(ns):
            return None, True
        return y, False

    def _head_forward(self, x_in, wanted, acts, frames, keep_ctx, done, run):
        cfg = self.cfg
        dt = x_in.dtype
        c4 = cfg.channels(4)

        m = ops.minibatch_stddev(x_in, cfg.mbstd_group)
        run("b4.mbstd")
        if "b4.mbstd" in wanted:
            acts["b4.mbstd"] = m
        if keep_ctx:
            frames.append(("mbstd", x_in))
        if done("b4.mbstd"):
            return

        spec_c = ops.ConvSpec(c4 + 1, c4, kernel=3, padding=1)
        zc = ops.conv2d_forward(
            m, self.param("b4.conv.weight", dt), self.param("b4.conv.bias", dt), spec_c
        )
        ac = ops.lrelu(zc, gain=ops.LRELU_GAIN)
        run("b4.conv")
        if "b4.conv" in wanted:
            acts["b4.conv"] = ac
        if keep_ctx:
            frames.append(("head_conv", spec_c, m.shape[2:], zc))
        if done("b4.conv"):
            return

        n = ac.shape[0]
        flat = ac.reshape(n, -1)
        if flat.shape[1] != c4 * 16:
            raise SizeError(
                "head expects a 4x4 feature map; got %dx%d" % (ac.shape[2], ac.shape[3])
            )
        afc = ops.linear_forward(
            flat,
            self.param("b4.fc.weight", dt),
            self.param("b4.fc.bias", dt),
            activation="lrelu",
            gain=ops.LRELU_GAIN,
        )
        run("b4.fc")
        if "b4.fc" in wanted:
            acts["b4.fc"] = afc
        if keep_ctx:
            frames.append(("head_fc", flat, ac.shape))
        if done("b4.fc"):
            return

        out = ops.linear_forward(
            afc, self.param("b4.out.weight", dt), self.param("b4.out.bias", dt)
        )
        run("b4.out")
        if "b4.out" in wanted:
            acts["b4.out"] = out
        if keep_ctx:
            frames.append(("head_out", afc))

    # -- input gradient ---------------------------------------------------

    def input_gradient(self, x, taps, norm="none"):
        """Loss = sum over taps of weight * norm_factor * sum(act^2); returns
        (loss, dL/dx)."""
        acts, frames = self._forward(x, taps, keep_ctx=True)
        dt = x.dtype
        loss = 0.0
        seeds = {}
        for name, weight in taps.entries:
            a = acts[name]
            nf = norm_factor(norm, a.size)
            loss += weight * nf * float(np.sum(a.astype(np.float64) ** 2))
            seeds[name] = a * dt.type(2.0 * weight * nf)
        grad = self._backward(frames, seeds, dt)
        return loss, grad

    def _backward(self, frames, seeds, dt):
        cfg = self.cfg

        def seed(name, like):
            return seeds.get(name, np.zeros(like, dtype=dt))

        dy = None  # gradient w.r.t. the output of the most recent frame
        for frame in reversed(frames):
            kind = frame[0]
            if kind == "head_out":
                (_, afc) = frame
                d_out = seed("b4.out", (afc.shape[0], 1))
                dy = ops.linear_input_grad(
                    d_out, self.param("b4.out.weight", dt), self.param("b4.out.bias", dt), afc
                )
            elif kind == "head_fc":
                (_, flat, ac_shape) = frame
                d_afc = seed("b4.fc", (flat.shape[0], cfg.latent_dim))
                if dy is not None:
                    d_afc = d_afc + dy
                dflat = ops.linear_input_grad(
                    d_afc,
                    self.param("b4.fc.weight", dt),
                    self.param("b4.fc.bias", dt),
                    flat,
                    activation="lrelu",
                    gain=ops.LRELU_GAIN,
                )
                dy = dflat.reshape(ac_shape)
            elif kind == "head_conv":
                (_, spec_c, m_hw, zc) = frame
                d_ac = seed("b4.conv", zc.shape)
                if dy is not None:
                    d_ac = d_ac + dy
                dzc = ops.lrelu_grad(d_ac, zc, gain=ops.LRELU_GAIN)
                dy = ops.conv2d_input_grad(dzc, self.param("b4.conv.weight", dt), spec_c, m_hw)
            elif kind == "mbstd":
                (_, x_in) = frame
                dm = seed("b4.mbstd", (x_in.shape[0], x_in.shape[1] + 1) + x_in.shape[2:])
                if dy is not None:
                    dm = dm + dy
                dy = ops.minibatch_stddev_grad(dm, x_in, cfg.mbstd_group)
            elif kind == "block":
                (_, r, (spec0, spec1, spec_s), in_hw, (z0, z1db)) = frame
                scale = dt.type(INV_SQRT2)
                d_y = dy if dy is not None else np.zeros(z1db.shape, dtype=dt)
                d_a1 = d_y * scale + seed("b%d.conv1" % r, z1db.shape)
                d_sd = d_y * scale + seed("b%d.skip" % r, z1db.shape)
                dy = self._block_main_grad(
                    r, spec0, spec1, in_hw, z0, z1db, d_a1, seed("b%d.conv0" % r, z0.shape), dt
                )
                dsp = self._down_grad(d_sd, in_hw)
                dy = dy + ops.conv2d_input_grad(
                    dsp, self.param("b%d.skip.weight" % r, dt), spec_s, in_hw
                )
            elif kind == "block_partial":
                if frame[2] == "conv0":
                    (_, r, _, spec0, in_hw, z0) = frame
                    d_a0 = seed("b%d.conv0" % r, z0.shape)
                    dz0 = ops.lrelu_grad(d_a0, z0, gain=ops.LRELU_GAIN)
                    dy = ops.conv2d_input_grad(
                        dz0, self.param("b%d.conv0.weight" % r, dt), spec0, in_hw
                    )
                else:  # stopped after conv1
                    (_, r, _, (spec0, spec1), in_hw, (z0, z1db)) = frame
                    d_a1 = seed("b%d.conv1" % r, z1db.shape)
                    dy = self._block_main_grad(
                        r, spec0, spec1, in_hw, z0, z1db, d_a1, seed("b%d.conv0" % r, z0.shape), dt
                    )
            elif kind == "fromrgb":
                (_, name, spec, in_hw, z) = frame
                d_a = seed(name, z.shape)
                if dy is not None:
                    d_a = d_a + dy
                dz = ops.lrelu_grad(d_a, z, gain=ops.LRELU_GAIN)
                dy = ops.conv2d_input_grad(dz, self.param(name + ".weight", dt), spec, in_hw)
            else:  # pragma: no cover
                raise AssertionError("unknown frame kind %r" % kind)
        return dy

    def _block_main_grad(self, r, spec0, spec1, in_hw, z0, z1db, d_a1, d_a0_seed, dt):
        # conv1 path: lrelu -> bias (pass-through) -> downsample -> conv -> a0
        dz1db = ops.lrelu_grad(d_a1, z1db, gain=ops.LRELU_GAIN)
        dz1 = self._down_grad(dz1db, z0.shape[2:])
        d_a0 = ops.conv2d_input_grad(dz1, self.param("b%d.conv1.weight" % r, dt), spec1, z0.shape[2:])
        d_a0 = d_a0 + d_a0_seed
        dz0 = ops.lrelu_grad(d_a0, z0, gain=ops.LRELU_GAIN)
        return ops.conv2d_input_grad(dz0, self.param("b%d.conv0.weight" % r, dt), spec0, in_hw)


def build_discriminator(cfg):
    """Allocate the graph with zero-valued parameters."""
    params = {
        name: np.zeros(shape, dtype=np.float32)
        for name, shape in parameter_shapes(cfg).items()
    }
    return DiscriminatorGraph(cfg, params)


def truncated_forward_min_size(taps, cfg):
    """Smallest square input size for which every tapped layer gets a valid map."""
    taps.validate(cfg)
    if any(n.startswith("b4.") for n in taps.names):
        return cfg.img_resolution
    order = layer_names(cfg)
    deepest = max(order.index(n) for n in taps.names)
    for s in range(1, cfg.img_resolution + 1):
        if _size_ok(s, deepest, cfg, order):
            return s
    return cfg.img_resolution


def _size_ok(s, deepest, cfg, order):
    cur = s
    idx = 0  # fromrgb
    if idx == deepest:
        return cur >= 1
    for r in cfg.block_resolutions:
        i0 = order.index("b%d.conv0" % r)
        if i0 == deepest:
            return cur >= 1
        # conv1 / skip (or any deeper layer) downsample this block's map
        if cur < 2:
            return False
        cur = -(-cur // 2)  # ceil halving (odd maps are padded to even)
        if order.index("b%d.skip" % r) >= deepest:
            return True
    return True
