"""DDRW binary weights container.

Layout (all integers little-endian u32, floats little-endian f32):

    magic "DDRW" | version=1 | img_resolution | img_channels | channel_base
    | channel_max | mbstd_group | latent_dim | tensor_count
    | per tensor: name_len | name (UTF-8) | ndim | dims... | payload

Record names equal the builder's parameter names (e.g. "b64.conv0.weight").
Loading validates everything against the architecture rebuilt from the
embedded fields and fails atomically on any mismatch.
"""

import hashlib
import struct

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    ExtraRecordError,
    MissingRecordError,
    RecordShapeError,
    TruncatedFileError,
    UnsupportedVersionError,
    WeightsError,
)
from .graph import ArchConfig, DiscriminatorGraph, parameter_shapes

MAGIC = b"DDRW"
VERSION = 1


def _arch_fields(cfg):
    return (
        cfg.img_resolution,
        cfg.img_channels,
        cfg.channel_base,
        cfg.channel_max,
        cfg.mbstd_group,
        cfg.latent_dim,
    )


def write_weights(g, path):
    """Serialize graph parameters; the result round-trips bit-exactly."""
    chunks = [MAGIC, struct.pack("<8I", VERSION, *_arch_fields(g.cfg), len(g.params))]
    for name, shape in parameter_shapes(g.cfg).items():
        arr = np.ascontiguousarray(g.params[name], dtype="<f4")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack("<%dI" % arr.ndim, *arr.shape))
        chunks.append(arr.tobytes())
    with open(path, "wb") as fh:
        for chunk in chunks:
            fh.write(chunk)


class _Reader:
    def __init__(self, fh):
        self.fh = fh
        self.offset = 0

    def read(self, n, what):
        data = self.fh.read(n)
        if len(data) != n:
            raise TruncatedFileError(
                self.offset + len(data),
                "file truncated at byte offset %d while reading %s"
                % (self.offset + len(data), what),
            )
        self.offset += n
        return data

    def u32(self, what):
        return struct.unpack("<I", self.read(4, what))[0]


def load_weights(path):
    """Parse and validate a DDRW file; returns (ArchConfig, graph)."""
    with open(path, "rb") as fh:
        rd = _Reader(fh)
        magic = rd.read(4, "magic")
        if magic != MAGIC:
            raise BadMagicError("bad magic %r at offset 0 (expected %r)" % (magic, MAGIC))
        version = rd.u32("version")
        if version != VERSION:
            raise UnsupportedVersionError("unsupported version %d (expected %d)" % (version, VERSION))
        fields = [rd.u32("architecture field") for _ in range(6)]
        try:
            cfg = ArchConfig(*fields)
        except ConfigError as exc:
            raise WeightsError("invalid architecture header: %s" % exc) from exc
        expected = parameter_shapes(cfg)
        count = rd.u32("tensor count")
        if count != len(expected):
            raise WeightsError(
                "tensor count %d does not match the architecture's %d parameters"
                % (count, len(expected))
            )
        params = {}
        for _ in range(count):
            name_len = rd.u32("record name length")
            if name_len > 4096:
                raise WeightsError("implausible record name length %d" % name_len)
            try:
                name = rd.read(name_len, "record name").decode("utf-8")
            except UnicodeDecodeError as exc:
                raise WeightsError("record name is not valid UTF-8") from exc
            if name not in expected:
                raise ExtraRecordError("unexpected record %r" % name)
            if name in params:
                raise ExtraRecordError("duplicate record %r" % name)
            ndim = rd.u32("record ndim")
            if ndim > 8:
                raise WeightsError("implausible rank %d for record %r" % (ndim, name))
            dims = tuple(rd.u32("record dim") for _ in range(ndim))
            if dims != expected[name]:
                raise RecordShapeError(
                    "record %r has shape %s, expected %s" % (name, dims, expected[name])
                )
            n_elem = int(np.prod(dims, dtype=np.int64)) if dims else 1
            payload = rd.read(n_elem * 4, "payload of %r" % name)
            params[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
        missing = set(expected) - set(params)
        if missing:
            raise MissingRecordError("missing records: %s" % ", ".join(sorted(missing)))
        if fh.read(1):
            raise WeightsError("trailing data after the last record")
    return cfg, DiscriminatorGraph(cfg, params)


def random_weights(cfg, seed):
    """Deterministic normal(0, 1/sqrt(fan_in)) test-fixture parameters."""
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    shapes = parameter_shapes(cfg)
    params = {}
    for name, shape in shapes.items():
        if name.endswith(".bias"):
            fan_in = _fan_in(shapes[name[: -len(".bias")] + ".weight"])
        else:
            fan_in = _fan_in(shape)
        std = 1.0 / np.sqrt(fan_in)
        params[name] = rng.normal(0.0, std, shape).astype(np.float32)
    return DiscriminatorGraph(cfg, params)


def _fan_in(weight_shape):
    if len(weight_shape) == 4:
        return weight_shape[1] * weight_shape[2] * weight_shape[3]
    return weight_shape[1]


def weights_digest(path):
    """SHA-256 hex digest of a weights file, recorded in run manifests."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
