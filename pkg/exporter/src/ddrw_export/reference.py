"""Torch evaluation of StyleGAN2-style discriminator checkpoints.

Checkpoints store raw (equalized-learning-rate) weights; every weight is
scaled by 1/sqrt(fan_in) at use time. Tensor names follow the common
convention: b{res}.fromrgb, b{res}.conv0 / conv1 / skip per block, and the
b4 head (mbstd, conv, fc, out).
"""

import math

import numpy as np
import torch
import torch.nn.functional as F

from .errors import MissingTensorError, UnsupportedArchitectureError

FIR_TAPS = (1.0, 3.0, 3.0, 1.0)
LRELU_SLOPE = 0.2
LRELU_GAIN = math.sqrt(2.0)
MBSTD_GROUP = 4
MBSTD_EPS = 1e-8


def channels(r, channel_base, channel_max):
    return min(channel_base // r, channel_max)


def block_resolutions(img_resolution):
    res = []
    r = img_resolution
    while r >= 8:
        res.append(r)
        r //= 2
    return res


def expected_names(img_resolution):
    """Required tensor names (biases included) in serialization order."""
    names = ["b%d.fromrgb.weight" % img_resolution, "b%d.fromrgb.bias" % img_resolution]
    for r in block_resolutions(img_resolution):
        names += [
            "b%d.conv0.weight" % r,
            "b%d.conv0.bias" % r,
            "b%d.conv1.weight" % r,
            "b%d.conv1.bias" % r,
            "b%d.skip.weight" % r,
        ]
    names += [
        "b4.conv.weight", "b4.conv.bias",
        "b4.fc.weight", "b4.fc.bias",
        "b4.out.weight", "b4.out.bias",
    ]
    return names


def fan_in(shape):
    if len(shape) == 4:
        return shape[1] * shape[2] * shape[3]
    return shape[1]


def _lrelu(x):
    return F.leaky_relu(x, LRELU_SLOPE) * LRELU_GAIN


def _scaled(sd, name):
    w = sd[name]
    return w * (1.0 / math.sqrt(fan_in(tuple(w.shape))))


def _fir_downsample(x):
    c = x.shape[1]
    taps = torch.tensor(FIR_TAPS, dtype=x.dtype) / sum(FIR_TAPS)
    k = torch.outer(taps, taps).reshape(1, 1, 4, 4).repeat(c, 1, 1, 1)
    return F.conv2d(x, k, stride=2, padding=1, groups=c)


def _mbstd(x):
    n, c, h, w = x.shape
    g = min(MBSTD_GROUP, n)
    y = x.reshape(g, n // g, c, h, w)
    var = y.var(dim=0, unbiased=False)
    std = torch.sqrt(var + MBSTD_EPS)
    feat = std.mean(dim=(1, 2, 3), keepdim=True)
    feat = feat.reshape(n // g, 1, 1, 1).repeat(g, 1, h, w)
    return torch.cat([x, feat], dim=1)


def forward_logit(state_dict, arch, img):
    """Evaluate the discriminator on a [1, C, R, R] float32 image."""
    sd = {k: torch.as_tensor(v, dtype=torch.float32) for k, v in state_dict.items()}
    x = torch.as_tensor(img, dtype=torch.float32)
    top = arch["img_resolution"]
    with torch.no_grad():
        y = _lrelu(F.conv2d(x, _scaled(sd, "b%d.fromrgb.weight" % top),
                            sd["b%d.fromrgb.bias" % top]))
        for r in block_resolutions(top):
            a0 = _lrelu(F.conv2d(y, _scaled(sd, "b%d.conv0.weight" % r),
                                 sd["b%d.conv0.bias" % r], padding=1))
            a1 = F.conv2d(a0, _scaled(sd, "b%d.conv1.weight" % r), padding=1)
            a1 = _lrelu(_fir_downsample(a1) + sd["b%d.conv1.bias" % r].reshape(1, -1, 1, 1))
            sk = _fir_downsample(F.conv2d(y, _scaled(sd, "b%d.skip.weight" % r)))
            y = (a1 + sk) * (1.0 / math.sqrt(2.0))
        y = _mbstd(y)
        y = _lrelu(F.conv2d(y, _scaled(sd, "b4.conv.weight"), sd["b4.conv.bias"], padding=1))
        y = y.reshape(y.shape[0], -1)
        y = _lrelu(F.linear(y, _scaled(sd, "b4.fc.weight"), sd["b4.fc.bias"]))
        y = F.linear(y, _scaled(sd, "b4.out.weight"), sd["b4.out.bias"])
    return float(y[0, 0])


def detect_arch(state_dict):
    """Infer (img_resolution, img_channels, channel_base, channel_max,
    latent_dim) from tensor shapes and cross-check every expected shape."""
    fromrgb = [k for k in state_dict if k.endswith(".fromrgb.weight")]
    if len(fromrgb) != 1:
        raise UnsupportedArchitectureError(
            "expected exactly one fromrgb layer, found %d" % len(fromrgb))
    top = int(fromrgb[0].split(".")[0][1:])
    if top < 8 or top & (top - 1):
        raise UnsupportedArchitectureError("bad top resolution %d" % top)
    img_channels = state_dict[fromrgb[0]].shape[1]

    if "b4.fc.weight" not in state_dict:
        raise MissingTensorError("missing required tensor 'b4.fc.weight'")
    latent_dim = state_dict["b4.fc.weight"].shape[0]
    channel_max = state_dict["b4.fc.weight"].shape[1] // 16

    # channel_base is visible wherever a block is below the channel cap;
    # if every block is capped, the smallest value producing these shapes.
    observed = {r: state_dict["b%d.conv0.weight" % r].shape[0]
                for r in block_resolutions(top)
                if "b%d.conv0.weight" % r in state_dict}
    uncapped = [r * c for r, c in observed.items() if c < channel_max]
    channel_base = min(uncapped) if uncapped else channel_max * top
    if uncapped and len(set(uncapped)) != 1:
        raise UnsupportedArchitectureError(
            "inconsistent per-block channel counts: %s" % observed)

    arch = {
        "img_resolution": top,
        "img_channels": int(img_channels),
        "channel_base": int(channel_base),
        "channel_max": int(channel_max),
        "mbstd_group": MBSTD_GROUP,
        "latent_dim": int(latent_dim),
    }
    for name, shape in expected_shapes(arch).items():
        if name not in state_dict:
            raise MissingTensorError("missing required tensor %r" % name)
        got = tuple(state_dict[name].shape)
        if got != shape:
            raise UnsupportedArchitectureError(
                "tensor %r has shape %s, expected %s" % (name, got, shape))
    return arch


def expected_shapes(arch):
    """Name -> shape for every tensor of the detected architecture."""
    top = arch["img_resolution"]
    cb, cm = arch["channel_base"], arch["channel_max"]
    ch = lambda r: channels(r, cb, cm)
    shapes = {
        "b%d.fromrgb.weight" % top: (ch(top), arch["img_channels"], 1, 1),
        "b%d.fromrgb.bias" % top: (ch(top),),
    }
    for r in block_resolutions(top):
        shapes["b%d.conv0.weight" % r] = (ch(r), ch(r), 3, 3)
        shapes["b%d.conv0.bias" % r] = (ch(r),)
        shapes["b%d.conv1.weight" % r] = (ch(r // 2), ch(r), 3, 3)
        shapes["b%d.conv1.bias" % r] = (ch(r // 2),)
        shapes["b%d.skip.weight" % r] = (ch(r // 2), ch(r), 1, 1)
    shapes["b4.conv.weight"] = (ch(4), ch(4) + 1, 3, 3)
    shapes["b4.conv.bias"] = (ch(4),)
    shapes["b4.fc.weight"] = (arch["latent_dim"], ch(4) * 16)
    shapes["b4.fc.bias"] = (arch["latent_dim"],)
    shapes["b4.out.weight"] = (1, arch["latent_dim"])
    shapes["b4.out.bias"] = (1,)
    return shapes


def random_checkpoint(arch, seed):
    """Synthetic raw-weight state dict of the given architecture."""
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    return {name: torch.from_numpy(rng.standard_normal(shape).astype(np.float32))
            for name, shape in expected_shapes(arch).items()}
