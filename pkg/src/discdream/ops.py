"""Dense NCHW layer primitives and their input-gradient (VJP) rules.

All public operations are pure functions. They compute in the dtype of the
input array: production code feeds float32, the finite-difference oracles in
the test suite feed float64. Only input gradients are provided; weight
gradients are out of scope.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError, ShapeError

# Normalized 4-tap low-pass filter used for every x2 downsample.
FIR_TAPS = (1.0 / 8.0, 3.0 / 8.0, 3.0 / 8.0, 1.0 / 8.0)

LRELU_SLOPE = 0.2
LRELU_GAIN = np.sqrt(2.0)


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int = 3
    stride: int = 1
    padding: int = 1
    has_bias: bool = True
    activation: str = "linear"  # "linear" or "lrelu", applied by the caller
    gain: float = 1.0

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ArgumentError("channel counts must be positive")
        if self.kernel not in (1, 3):
            raise ArgumentError("kernel must be 1 or 3, got %d" % self.kernel)
        if self.stride not in (1, 2):
            raise ArgumentError("stride must be 1 or 2, got %d" % self.stride)
        if self.padding != self.kernel // 2:
            raise ArgumentError(
                "padding must be kernel//2 (%d), got %d" % (self.kernel // 2, self.padding)
            )
        if self.activation not in ("linear", "lrelu"):
            raise ArgumentError("activation must be 'linear' or 'lrelu'")


def _require_nchw(x, name):
    if x.ndim != 4:
        raise ShapeError("%s must be 4-D NCHW, got %d axes" % (name, x.ndim))


def conv2d_forward(x, w, b, spec):
    """Cross-correlation with zero padding; bias added, no activation."""
    _require_nchw(x, "x")
    _require_nchw(w, "w")
    k, s, p = spec.kernel, spec.stride, spec.padding
    n, ci, h, wd = x.shape
    if ci != spec.in_channels:
        raise ShapeError(
            "input channel axis: expected %d channels, got %d" % (spec.in_channels, ci)
        )
    if w.shape != (spec.out_channels, spec.in_channels, k, k):
        raise ShapeError(
            "weight shape %s does not match spec %s"
            % (w.shape, (spec.out_channels, spec.in_channels, k, k))
        )
    if b is not None and b.shape != (spec.out_channels,):
        raise ShapeError("bias axis: expected shape (%d,), got %s" % (spec.out_channels, b.shape))
    ho = (h + 2 * p - k) // s + 1
    wo = (wd + 2 * p - k) // s + 1
    if ho < 1 or wo < 1:
        raise ShapeError("spatial axes too small: %dx%d input for kernel %d" % (h, wd, k))

    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]  # n,ci,ho,wo,k,k
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, ci * k * k)
    y = cols @ w.reshape(spec.out_channels, ci * k * k).T
    y = np.ascontiguousarray(y.reshape(n, ho, wo, spec.out_channels).transpose(0, 3, 1, 2))
    if b is not None:
        y += b.reshape(1, -1, 1, 1)
    return y


def conv2d_input_grad(dy, w, spec, input_hw):
    """dL/dx for conv2d_forward given dL/dy and the original spatial size."""
    _require_nchw(dy, "dy")
    _require_nchw(w, "w")
    k, s, p = spec.kernel, spec.stride, spec.padding
    h, wd = input_hw
    n, co, ho, wo = dy.shape
    if co != spec.out_channels:
        raise ShapeError("dy channel axis: expected %d, got %d" % (spec.out_channels, co))
    exp_ho = (h + 2 * p - k) // s + 1
    exp_wo = (wd + 2 * p - k) // s + 1
    if (ho, wo) != (exp_ho, exp_wo):
        raise ShapeError(
            "dy spatial axes %s do not match forward output %s" % ((ho, wo), (exp_ho, exp_wo))
        )
    ci = spec.in_channels
    dxp = np.zeros((n, ci, h + 2 * p, wd + 2 * p), dtype=dy.dtype)
    for ki in range(k):
        for kj in range(k):
            # n,ho,wo,ci <- dy[n,co,ho,wo] * w[co,ci,ki,kj]
            contrib = np.tensordot(dy, w[:, :, ki, kj], axes=([1], [0]))
            dxp[:, :, ki : ki + s * ho : s, kj : kj + s * wo : s] += contrib.transpose(0, 3, 1, 2)
    return np.ascontiguousarray(dxp[:, :, p : p + h, p : p + wd])


def lrelu(x, slope=LRELU_SLOPE, gain=1.0):
    if not 0.0 < slope < 1.0:
        raise ArgumentError("slope must lie in (0, 1)")
    dt = x.dtype
    return (np.where(x >= 0, x, dt.type(slope) * x) * dt.type(gain)).astype(dt, copy=False)


def lrelu_grad(dy, x_saved, slope=LRELU_SLOPE, gain=1.0):
    dt = dy.dtype
    factor = np.where(x_saved >= 0, dt.type(gain), dt.type(gain * slope))
    return dy * factor


def fir_downsample2x(x):
    """Separable [1,3,3,1]/8 low-pass (zero padded) followed by 2x decimation."""
    _require_nchw(x, "x")
    h, w = x.shape[2:]
    if h % 2 or w % 2 or h < 2 or w < 2:
        raise ShapeError("spatial axes must be even and >= 2, got %dx%d" % (h, w))
    taps = [x.dtype.type(t) for t in FIR_TAPS]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    h2, w2 = h // 2, w // 2
    rows = taps[0] * xp[:, :, 0 : 2 * h2 : 2]
    for t in range(1, 4):
        rows = rows + taps[t] * xp[:, :, t : t + 2 * h2 : 2]
    out = taps[0] * rows[:, :, :, 0 : 2 * w2 : 2]
    for t in range(1, 4):
        out = out + taps[t] * rows[:, :, :, t : t + 2 * w2 : 2]
    return out


def fir_downsample2x_grad(dy, input_hw):
    """Transpose of fir_downsample2x: zero-interleave then correlate."""
    _require_nchw(dy, "dy")
    h, w = input_hw
    if h % 2 or w % 2:
        raise ShapeError("input spatial axes must be even, got %dx%d" % (h, w))
    n, c, h2, w2 = dy.shape
    if (h2, w2) != (h // 2, w // 2):
        raise ShapeError("dy spatial axes %s do not match %s" % ((h2, w2), (h // 2, w // 2)))
    taps = [dy.dtype.type(t) for t in FIR_TAPS]
    dcol = np.zeros((n, c, h2, w + 2), dtype=dy.dtype)
    for t in range(4):
        dcol[:, :, :, t : t + 2 * w2 : 2] += taps[t] * dy
    dxp = np.zeros((n, c, h + 2, w + 2), dtype=dy.dtype)
    for t in range(4):
        dxp[:, :, t : t + 2 * h2 : 2, :] += taps[t] * dcol
    return np.ascontiguousarray(dxp[:, :, 1 : h + 1, 1 : w + 1])


def _axis_lerp(n_in, n_out, dtype):
    # align_corners=False source coordinates, clamped to the valid range
    c = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    c = np.clip(c, 0.0, n_in - 1)
    i0 = np.floor(c).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = (c - i0).astype(dtype)
    return i0, i1, f


def bilinear_resize(x, out_h, out_w):
    """Bilinear resampling with align_corners=False semantics."""
    _require_nchw(x, "x")
    if out_h < 1 or out_w < 1:
        raise ArgumentError("target dimensions must be positive, got %dx%d" % (out_h, out_w))
    h, w = x.shape[2:]
    if (out_h, out_w) == (h, w):
        return x.copy()
    dt = x.dtype
    i0, i1, fy = _axis_lerp(h, out_h, dt)
    a = x[:, :, i0, :]
    tmp = a + fy.reshape(1, 1, -1, 1) * (x[:, :, i1, :] - a)
    j0, j1, fx = _axis_lerp(w, out_w, dt)
    b = tmp[:, :, :, j0]
    return b + fx.reshape(1, 1, 1, -1) * (tmp[:, :, :, j1] - b)


def bilinear_resize_grad(dy, in_h, in_w):
    """Exact transpose of bilinear_resize: scatter with the sampling weights."""
    _require_nchw(dy, "dy")
    if in_h < 1 or in_w < 1:
        raise ArgumentError("input dimensions must be positive")
    n, c, out_h, out_w = dy.shape
    if (out_h, out_w) == (in_h, in_w):
        return dy.copy()
    dt = dy.dtype
    j0, j1, fx = _axis_lerp(in_w, out_w, dt)
    dtmp = np.zeros((n, c, out_h, in_w), dtype=dt)
    np.add.at(dtmp, (slice(None), slice(None), slice(None), j0), dy * (1 - fx))
    np.add.at(dtmp, (slice(None), slice(None), slice(None), j1), dy * fx)
    i0, i1, fy = _axis_lerp(in_h, out_h, dt)
    dx = np.zeros((n, c, in_h, in_w), dtype=dt)
    np.add.at(dx, (slice(None), slice(None), i0), dtmp * (1 - fy).reshape(1, 1, -1, 1))
    np.add.at(dx, (slice(None), slice(None), i1), dtmp * fy.reshape(1, 1, -1, 1))
    return dx


def linear_forward(x, w, b, activation="linear", slope=LRELU_SLOPE, gain=1.0):
    """y = act(x @ w.T + b) * gain over [N, D] inputs."""
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError("linear_forward expects 2-D x and w")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            "inner axis: x has %d features, w expects %d" % (x.shape[1], w.shape[1])
        )
    z = x @ w.T
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ShapeError("bias axis: expected shape (%d,), got %s" % (w.shape[0], b.shape))
        z = z + b
    if activation == "lrelu":
        return lrelu(z, slope, gain)
    return z * z.dtype.type(gain)


def linear_input_grad(dy, w, b, x_saved, activation="linear", slope=LRELU_SLOPE, gain=1.0):
    z = x_saved @ w.T
    if b is not None:
        z = z + b
    if activation == "lrelu":
        dz = lrelu_grad(dy, z, slope, gain)
    else:
        dz = dy * dy.dtype.type(gain)
    return dz @ w


MBSTD_EPS = 1e-8


def _mbstd_stats(x, group_size):
    n = x.shape[0]
    g = min(group_size, n)
    if n % g:
        raise ShapeError("batch size %d not divisible by group size %d" % (n, g))
    m = n // g
    dt = x.dtype
    y = x.reshape(g, m, *x.shape[1:])
    mu = y.mean(axis=0)
    var = ((y - mu) ** 2).mean(axis=0)
    std = np.sqrt(var + dt.type(MBSTD_EPS))
    scalar = std.mean(axis=(1, 2, 3))  # one value per group
    return g, m, y, mu, std, scalar


def minibatch_stddev(x, group_size):
    """Append one channel of group-averaged per-feature standard deviation."""
    _require_nchw(x, "x")
    if group_size < 1:
        raise ArgumentError("group_size must be >= 1")
    g, m, _, _, _, scalar = _mbstd_stats(x, group_size)
    n, _, h, w = x.shape
    ch = np.tile(scalar.reshape(1, m), (g, 1)).reshape(n, 1, 1, 1)
    ch = np.broadcast_to(ch, (n, 1, h, w)).astype(x.dtype, copy=False)
    return np.concatenate([x, ch], axis=1)


def minibatch_stddev_grad(dy, x_saved, group_size):
    """Propagate gradients through the appended stddev channel."""
    _require_nchw(dy, "dy")
    n, c, h, w = x_saved.shape
    if dy.shape != (n, c + 1, h, w):
        raise ShapeError("dy channel axis: expected %d channels, got %d" % (c + 1, dy.shape[1]))
    g, m, y, mu, std, _ = _mbstd_stats(x_saved, group_size)
    dx = dy[:, :c].copy()
    # alpha[m] = total gradient flowing into each group's scalar
    d_append = dy[:, c].reshape(g, m, h, w)
    alpha = d_append.sum(axis=(0, 2, 3))  # per group
    feat = c * h * w
    coeff = (alpha.reshape(1, m, 1, 1, 1) / (dy.dtype.type(feat) * dy.dtype.type(g))) / std
    dx += (coeff * (y - mu)).reshape(n, c, h, w)
    return dx
