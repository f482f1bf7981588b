"""Estimator-style wrapper so dreaming composes with sklearn-like pipelines."""

import numpy as np

from . import ops
from .dreaming import DreamConfig, dream
from .errors import ArgumentError
from .graph import TapSet
from .weights_io import load_weights


def check_image_batch(X):
    """Validate and coerce input to float32 [N, C, H, W] in [-1, 1]."""
    arr = np.asarray(X, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[np.newaxis]
    if arr.ndim != 4:
        raise ArgumentError("expected [N, C, H, W] or [C, H, W], got %d axes" % arr.ndim)
    if not np.all(np.isfinite(arr)):
        raise ArgumentError("input contains non-finite values")
    if arr.min() < -1.0 or arr.max() > 1.0:
        raise ArgumentError("input values must lie in [-1, 1]")
    return arr


class DiscriminatorDreamer:
    """Transformer that replaces each input image with its dreamed version.

    Parameters mirror DreamConfig; `weights` is a DDRW file path. Follows the
    fit/transform/get_params protocol.
    """

    def __init__(
        self,
        weights,
        layers=("b4.conv",),
        layer_weights=None,
        norm="none",
        octaves=10,
        octave_scale=1.4,
        learning_rate=0.01,
        iterations=20,
        resize_octaves=True,
        seed=0,
    ):
        self.weights = weights
        self.layers = layers
        self.layer_weights = layer_weights
        self.norm = norm
        self.octaves = octaves
        self.octave_scale = octave_scale
        self.learning_rate = learning_rate
        self.iterations = iterations
        self.resize_octaves = resize_octaves
        self.seed = seed

    _param_names = (
        "weights",
        "layers",
        "layer_weights",
        "norm",
        "octaves",
        "octave_scale",
        "learning_rate",
        "iterations",
        "resize_octaves",
        "seed",
    )

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._param_names}

    def set_params(self, **params):
        for name, value in params.items():
            if name not in self._param_names:
                raise ArgumentError("unknown parameter %r" % name)
            setattr(self, name, value)
        return self

    def fit(self, X=None, y=None):
        self.arch_, self.graph_ = load_weights(self.weights)
        taps = TapSet.of(self.layers, self.layer_weights)
        taps.validate(self.arch_)
        self.config_ = DreamConfig(
            taps=taps,
            norm=self.norm,
            octaves=self.octaves,
            octave_scale=self.octave_scale,
            learning_rate=self.learning_rate,
            iterations=self.iterations,
            resize_octaves=self.resize_octaves,
            seed=self.seed,
        )
        return self

    def transform(self, X):
        if not hasattr(self, "graph_"):
            self.fit()
        arr = check_image_batch(X)
        r = self.arch_.img_resolution
        out = []
        for i in range(arr.shape[0]):
            img = arr[i : i + 1]
            if img.shape[2:] != (r, r):
                img = ops.bilinear_resize(img, r, r)
            out.append(dream(self.graph_, img, self.config_))
        return np.concatenate(out, axis=0)

    def fit_transform(self, X, y=None):
        return self.fit(X, y).transform(X)
