import numpy as np
import pytest

from discdream import ops
from discdream.errors import ConfigError, ShapeError, SizeError, UnknownLayerError
from discdream.graph import (
    ArchConfig,
    TapSet,
    build_discriminator,
    layer_names,
    parameter_shapes,
    truncated_forward_min_size,
)
from discdream.weights_io import random_weights

from conftest import fd_gradient


class TestArchConfig:
    @pytest.mark.parametrize("res,blocks", [(8, 1), (16, 2), (32, 3), (64, 4), (128, 5), (256, 6), (512, 7), (1024, 8)])
    def test_block_count_formula(self, res, blocks):
        assert ArchConfig(res).num_blocks == blocks

    def test_non_power_of_two_rejected(self):
        with pytest.raises(ConfigError):
            ArchConfig(96)

    def test_too_small_rejected(self):
        with pytest.raises(ConfigError):
            ArchConfig(4)

    def test_channels(self):
        cfg = ArchConfig(1024)
        assert cfg.channels(1024) == 32
        assert cfg.channels(256) == 128
        assert cfg.channels(64) == 512  # capped at channel_max
        assert cfg.channels(4) == 512

    def test_fc_width_is_latent_dim(self):
        cfg = ArchConfig(256)
        assert parameter_shapes(cfg)["b4.fc.weight"][0] == 512 == cfg.latent_dim


class TestForward:
    def test_head_logit_shape(self, res16_graph):
        x = np.zeros((1, 3, 16, 16), np.float32)
        acts = res16_graph.forward_with_taps(x, TapSet.of(["b4.out"]))
        assert acts["b4.out"].shape == (1, 1)

    def test_conv1_tap_shape_256(self):
        # conv1 output lives at the next-lower resolution
        cfg = ArchConfig(256, channel_base=2048, channel_max=64)
        g = build_discriminator(cfg)
        x = np.zeros((1, 3, 256, 256), np.float32)
        acts = g.forward_with_taps(x, TapSet.of(["b16.conv1"]))
        assert acts["b16.conv1"].shape == (1, cfg.channels(8), 8, 8)

    def test_zero_weights_zero_taps(self):
        g = build_discriminator(ArchConfig(16, channel_max=8))
        x = np.random.default_rng(0).uniform(-1, 1, (1, 3, 16, 16)).astype(np.float32)
        acts = g.forward_with_taps(x, TapSet.of(["b16.conv0", "b8.conv1", "b4.conv"]))
        for a in acts.values():
            assert not a.any()

    def test_unknown_tap(self, res16_graph):
        with pytest.raises(UnknownLayerError, match="b999.conv0"):
            res16_graph.forward_with_taps(
                np.zeros((1, 3, 16, 16), np.float32), TapSet.of(["b999.conv0"])
            )

    def test_never_runs_past_deepest_tap(self, res16_graph):
        x = np.zeros((1, 3, 16, 16), np.float32)
        order = layer_names(res16_graph.cfg)
        for deepest in ("b16.conv0", "b16.skip", "b8.conv1", "b4.conv", "b4.out"):
            trace = []
            res16_graph.forward_with_taps(x, TapSet.of([deepest]), trace=trace)
            assert trace == order[: order.index(deepest) + 1]

    def test_returns_exactly_requested_taps(self, res16_graph):
        x = np.zeros((1, 3, 16, 16), np.float32)
        acts = res16_graph.forward_with_taps(x, TapSet.of(["b16.conv0", "b8.skip"]))
        assert set(acts) == {"b16.conv0", "b8.skip"}

    def test_all_taps_finite(self, res16_graph):
        x = np.random.default_rng(3).uniform(-1, 1, (1, 3, 16, 16)).astype(np.float32)
        acts = res16_graph.forward_with_taps(x, TapSet.of(layer_names(res16_graph.cfg)))
        for a in acts.values():
            assert np.isfinite(a).all()


class TestResidual:
    def _block_paths(self, g, x):
        acts = g.forward_with_taps(x, TapSet.of(["b8.conv1", "b8.skip", "b4.mbstd"]))
        a1, sd = acts["b8.conv1"], acts["b8.skip"]
        y = acts["b4.mbstd"][:, : a1.shape[1]]  # mbstd prepends the block output
        return a1, sd, y

    def test_residual_sum_scaled(self):
        g = random_weights(ArchConfig(8, channel_max=8), seed=3)
        x = np.random.default_rng(4).uniform(-1, 1, (1, 3, 8, 8)).astype(np.float32)
        a1, sd, y = self._block_paths(g, x)
        assert np.allclose(y, (a1 + sd) / np.sqrt(2), atol=1e-6)

    def test_skip_zeroed_gives_main_over_sqrt2(self):
        g = random_weights(ArchConfig(8, channel_max=8), seed=3)
        g.params["b8.skip.weight"][:] = 0
        x = np.random.default_rng(4).uniform(-1, 1, (1, 3, 8, 8)).astype(np.float32)
        a1, sd, y = self._block_paths(g, x)
        assert not sd.any()
        assert np.allclose(y, a1 / np.sqrt(2), atol=1e-6)

    def test_main_zeroed_gives_skip_over_sqrt2(self):
        g = random_weights(ArchConfig(8, channel_max=8), seed=3)
        for p in ("b8.conv0.weight", "b8.conv0.bias", "b8.conv1.weight", "b8.conv1.bias"):
            g.params[p][:] = 0
        x = np.random.default_rng(4).uniform(-1, 1, (1, 3, 8, 8)).astype(np.float32)
        a1, sd, y = self._block_paths(g, x)
        assert not a1.any()
        assert np.allclose(y, sd / np.sqrt(2), atol=1e-6)


class TestInputGradient:
    def test_zero_weights(self):
        g = build_discriminator(ArchConfig(16, channel_max=8))
        x = np.random.default_rng(5).uniform(-1, 1, (1, 3, 16, 16)).astype(np.float32)
        loss, grad = g.input_gradient(x, TapSet.of(["b8.conv1"]))
        assert loss == 0.0
        assert not grad.any()

    def test_count_norm_of_ones(self, res16_graph):
        # single tap whose activation is all ones: mean of squares is 1
        g = build_discriminator(ArchConfig(16, channel_max=8))
        x = np.zeros((1, 3, 16, 16), np.float32)
        g.params["b16.fromrgb.bias"][:] = 1.0 / np.sqrt(2.0)  # lrelu gain cancels
        loss, _ = g.input_gradient(x, TapSet.of(["b16.fromrgb"]), norm="count")
        assert abs(loss - 1.0) < 1e-5

    def test_loss_nonnegative(self, res16_graph):
        r = np.random.default_rng(6)
        for tap in ("b16.conv0", "b8.skip", "b4.fc"):
            x = r.uniform(-1, 1, (1, 3, 16, 16)).astype(np.float32)
            loss, _ = res16_graph.input_gradient(x, TapSet.of([tap]))
            assert loss >= 0.0

    def test_matches_finite_differences(self, res16_graph):
        r = np.random.default_rng(7)
        x = r.uniform(-1, 1, (1, 3, 16, 16))
        taps = TapSet.of(["b16.conv1", "b8.conv0", "b4.conv"], [1.0, 0.7, 2.0])
        _, grad = res16_graph.input_gradient(x, taps, "sqrt")
        # spot-check a random subset of pixels against central differences
        h = 1e-4
        for i in [tuple(v) for v in np.stack([np.zeros(12, int), r.integers(0, 3, 12), r.integers(0, 16, 12), r.integers(0, 16, 12)], axis=1)]:
            xp = x.copy()
            xp[i] += h
            xm = x.copy()
            xm[i] -= h
            lp, _ = res16_graph.input_gradient(xp, taps, "sqrt")
            lm, _ = res16_graph.input_gradient(xm, taps, "sqrt")
            assert abs(grad[i] - (lp - lm) / (2 * h)) < 1e-2

    def test_norm_modes_same_direction(self, res16_graph):
        x = np.random.default_rng(8).uniform(-1, 1, (1, 3, 16, 16)).astype(np.float32)
        dirs = []
        for norm in ("none", "count", "sqrt"):
            _, g = res16_graph.input_gradient(x, TapSet.of(["b8.conv0"], [0.5]), norm)
            dirs.append(g / np.linalg.norm(g))
        assert np.abs(dirs[0] - dirs[1]).max() < 1e-6
        assert np.abs(dirs[0] - dirs[2]).max() < 1e-6


class TestTruncatedMinSize:
    def test_fromrgb_is_one(self):
        cfg = ArchConfig(1024)
        assert truncated_forward_min_size(TapSet.of(["b1024.fromrgb"]), cfg) == 1

    def test_b4_taps_need_native(self):
        cfg = ArchConfig(1024)
        for tap in ("b4.mbstd", "b4.conv", "b4.fc", "b4.out"):
            assert truncated_forward_min_size(TapSet.of([tap]), cfg) == 1024

    def test_consistent_with_forward(self, res32_graph):
        # the reported minimum is exactly the size where the forward starts working
        cfg = res32_graph.cfg
        for name in layer_names(cfg):
            if name.startswith("b4."):
                continue
            m = truncated_forward_min_size(TapSet.of([name]), cfg)
            ok = np.zeros((1, 3, m, m), np.float32)
            res32_graph.forward_with_taps(ok, TapSet.of([name]))
            if m > 1:
                small = np.zeros((1, 3, m - 1, m - 1), np.float32)
                with pytest.raises((SizeError, ShapeError)):
                    res32_graph.forward_with_taps(small, TapSet.of([name]))

    def test_truncated_forward_runs(self, res32_graph):
        x = np.zeros((1, 3, 8, 8), np.float32)
        acts = res32_graph.forward_with_taps(x, TapSet.of(["b16.conv0"]))
        assert acts["b16.conv0"].shape[2:] == (4, 4)

    def test_b4_tap_requires_native_input(self, res16_graph):
        with pytest.raises(SizeError):
            res16_graph.forward_with_taps(np.zeros((1, 3, 8, 8), np.float32), TapSet.of(["b4.out"]))


class TestTapSet:
    def test_duplicates_rejected(self, res16_graph):
        with pytest.raises(ConfigError):
            TapSet.of(["b8.conv0", "b8.conv0"]).validate(res16_graph.cfg)

    def test_empty_rejected(self, res16_graph):
        with pytest.raises(ConfigError):
            TapSet.of([]).validate(res16_graph.cfg)
