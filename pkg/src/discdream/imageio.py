"""PNG input/output with the engine's [-1, 1] value convention."""

import numpy as np
from PIL import Image

from .errors import ArgumentError


def save_png(img, path):
    """img: [1, C, H, W] in [-1, 1] -> 8-bit PNG via round((v + 1) * 127.5)."""
    arr = np.asarray(img)
    if arr.ndim == 4:
        arr = arr[0]
    u8 = np.clip(np.rint((arr + 1.0) * 127.5), 0, 255).astype(np.uint8)
    hwc = np.transpose(u8, (1, 2, 0))
    if hwc.shape[2] == 1:
        Image.fromarray(hwc[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(hwc, mode="RGB").save(path)


def load_png(path):
    """8-bit RGB PNG -> [1, 3, H, W] float32 in [-1, 1]; alpha is rejected."""
    with Image.open(path) as im:
        if im.mode in ("RGBA", "LA", "PA"):
            raise ArgumentError("%s has an alpha channel; only 8-bit RGB is supported" % path)
        rgb = im.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float32)
    chw = np.transpose(arr, (2, 0, 1)) / np.float32(127.5) - np.float32(1.0)
    return chw[np.newaxis].astype(np.float32)
