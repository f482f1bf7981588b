"""DDRW serialization.

Wire format (all integers little-endian u32, floats little-endian f32):

    magic "DDRW" | version=1 | img_resolution | img_channels | channel_base
    | channel_max | mbstd_group | latent_dim | tensor_count
    | per tensor: name_len | name (UTF-8) | ndim | dims... | payload
"""

import os
import struct
import tempfile

import numpy as np

MAGIC = b"DDRW"
VERSION = 1

ARCH_FIELDS = (
    "img_resolution",
    "img_channels",
    "channel_base",
    "channel_max",
    "mbstd_group",
    "latent_dim",
)


def write_ddrw(path, arch, tensors):
    """Write name -> float32 ndarray records atomically (temp file + rename)."""
    chunks = [MAGIC, struct.pack("<8I", VERSION, *(arch[f] for f in ARCH_FIELDS), len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<%dI" % (arr.ndim + 1), arr.ndim, *arr.shape))
        chunks.append(arr.tobytes())
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            for chunk in chunks:
                fh.write(chunk)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
