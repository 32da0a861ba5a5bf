"""Model assembly: components, aggregation, final frame, frame buffer."""
import numpy as np
import pytest

import oracles
from ffnerv.model import (FFNeRVConfig, FFNeRVModel, FrameBuffer,
                          FrameComponents, layer_shapes, update_buffer)
from ffnerv.presets import paper_720p_config, tiny_config
from ffnerv.tensor import Tensor, backward


def small_config(**overrides):
    defaults = dict(
        num_frames=4,
        frame_hw=(16, 16),
        upscale_factors=(2, 2, 2),
        block_widths=(8, 8, 8),
        grid_resolutions=(2, 4),
        latent_channels=8,
        neighbors=(-2, -1, 1, 2),
        groups=4,
        compact_blocks=True,
    )
    defaults.update(overrides)
    return FFNeRVConfig(**defaults)


def flat_config(**overrides):
    """Single 1x2-pixel stage; flow head at frame resolution."""
    defaults = dict(
        num_frames=3,
        frame_hw=(1, 2),
        upscale_factors=(1,),
        block_widths=(4,),
        grid_resolutions=(3,),
        latent_channels=4,
        neighbors=(-1, 1),
        groups=1,
        compact_blocks=False,
        flow_attach_stage=0,
    )
    defaults.update(overrides)
    return FFNeRVConfig(**defaults)


class TestConfig:
    def test_zero_neighbor_rejected(self):
        with pytest.raises(ValueError, match="neighbor"):
            small_config(neighbors=(-1, 0, 1))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="lengths"):
            small_config(upscale_factors=(2, 2))

    def test_indivisible_frame_rejected(self):
        with pytest.raises(ValueError, match="divisible"):
            small_config(frame_hw=(12, 16))

    def test_latent_split_rejected(self):
        with pytest.raises(ValueError, match="divisible across"):
            small_config(latent_channels=9)

    def test_flow_attach_default(self):
        cfg = FFNeRVConfig(num_frames=4, frame_hw=(32, 32),
                           upscale_factors=(2, 2, 2, 2, 2),
                           block_widths=(8, 8, 8, 8, 8),
                           grid_resolutions=(4,), latent_channels=8)
        assert cfg.flow_attach_stage == 2

    def test_grids_disabled_single_full_rate_grid(self):
        cfg = small_config(grids_enabled=False)
        assert cfg.effective_grid_resolutions == (4,)
        model = FFNeRVModel(cfg)
        assert len(model.bank.grids) == 1
        assert model.bank.grids[0].resolution == 4

    def test_round_trips_through_dict(self):
        cfg = small_config()
        assert FFNeRVConfig.from_dict(cfg.to_dict()) == cfg


class TestLayerShapes:
    def test_published_720p_shapes(self):
        shapes = dict(layer_shapes(paper_720p_config()))
        assert shapes["grids"] == (156, 9, 16)
        assert shapes["block0"] == (156, 45, 80)
        assert shapes["block2"] == (96, 180, 320)
        assert shapes["head_flow"] == (12, 180, 320)
        assert shapes["block4"] == (96, 720, 1280)
        assert shapes["head_color"] == (5, 720, 1280)
        assert shapes["aggregation"] == (3, 720, 1280)

    def test_matches_actual_forward(self):
        cfg = small_config()
        model = FFNeRVModel(cfg, seed=0)
        comp = model.forward_components(1)
        shapes = dict(layer_shapes(cfg))
        assert comp.independent.shape == (3, *shapes["head_color"][1:])
        assert comp.flows[0].shape == (2, *shapes["head_flow"][1:])


class TestForwardComponents:
    def test_zero_heads_neutral_components(self):
        model = FFNeRVModel(small_config(), seed=0)
        for p in model.flow_head.params.values():
            p.data[...] = 0.0
        for p in model.color_head.params.values():
            p.data[...] = 0.0
        comp = model.forward_components(0)
        np.testing.assert_allclose(comp.independent.data, 0.5, atol=1e-7)
        for f in comp.flows:
            np.testing.assert_array_equal(f.data, 0.0)
        for l in comp.flow_logits:
            np.testing.assert_array_equal(l.data, 0.0)

    def test_component_counts(self):
        cfg = small_config()
        comp = FFNeRVModel(cfg, seed=1).forward_components(2)
        assert len(comp.flows) == len(cfg.neighbors)
        assert len(comp.flow_logits) == len(cfg.neighbors)
        assert comp.agg_logit.shape == (1, 16, 16)

    def test_out_of_range_t_rejected(self):
        model = FFNeRVModel(small_config(), seed=0)
        with pytest.raises(ValueError, match="outside"):
            model.forward_components(4)


class TestAggregate:
    def test_equal_buffer_frames_identity(self):
        cfg = small_config()
        model = FFNeRVModel(cfg, seed=2)
        X = np.random.default_rng(0).uniform(0, 1, (3, 16, 16)).astype(np.float32)
        buf = FrameBuffer(4, (16, 16))
        for t in range(4):
            buf.write(t, X)
        comp = model.forward_components(1)
        for f in comp.flows:
            f.data[...] = 0.0
        agg = model.aggregate(comp, buf, 1)
        np.testing.assert_allclose(agg.data, X, atol=1e-6)

    def test_softmax_saturation_selects_neighbor(self):
        cfg = flat_config()
        model = FFNeRVModel(cfg, seed=3)
        rng = np.random.default_rng(1)
        buf = FrameBuffer(3, (1, 2))
        frames = rng.uniform(0, 1, (3, 3, 1, 2)).astype(np.float32)
        for t in range(3):
            buf.write(t, frames[t])
        flows = [Tensor(np.zeros((2, 1, 2), dtype=np.float32))] * 2
        logits = [Tensor(np.full((1, 1, 2), 20.0, dtype=np.float32)),
                  Tensor(np.full((1, 1, 2), -20.0, dtype=np.float32))]
        comp = FrameComponents(independent=Tensor(frames[1]),
                               agg_logit=Tensor(np.zeros((1, 1, 2))),
                               ind_logit=Tensor(np.zeros((1, 1, 2))),
                               flows=flows, flow_logits=logits)
        agg = model.aggregate(comp, buf, 1)  # neighbors [0, 2]
        np.testing.assert_allclose(agg.data, frames[0], atol=1e-6)

    def test_two_pixel_hand_oracle(self):
        cfg = flat_config()
        model = FFNeRVModel(cfg, seed=4)
        buf = FrameBuffer(3, (1, 2))
        f0 = np.array([[[0.2, 0.8]]] * 3, dtype=np.float32)
        f2 = np.array([[[0.6, 0.4]]] * 3, dtype=np.float32)
        buf.write(0, f0)
        buf.write(2, f2)
        flow0 = np.zeros((2, 1, 2), dtype=np.float32)
        flow0[0] = 1.0  # shift right with clamp
        flow1 = np.zeros((2, 1, 2), dtype=np.float32)
        logit0 = np.full((1, 1, 2), np.log(3.0), dtype=np.float32)
        logit1 = np.zeros((1, 1, 2), dtype=np.float32)
        comp = FrameComponents(independent=Tensor(f0),
                               agg_logit=Tensor(np.zeros((1, 1, 2))),
                               ind_logit=Tensor(np.zeros((1, 1, 2))),
                               flows=[Tensor(flow0), Tensor(flow1)],
                               flow_logits=[Tensor(logit0), Tensor(logit1)])
        agg = model.aggregate(comp, buf, 1).data
        warped0 = np.array([[[0.8, 0.8]]] * 3)  # f0 shifted right, clamped
        ref = oracles.aggregate_hand([warped0, f2], [logit0, logit1])
        assert np.abs(agg - ref).max() <= 1e-6

    def test_convexity_over_warped_neighbors(self):
        cfg = small_config()
        model = FFNeRVModel(cfg, seed=5)
        buf = FrameBuffer(4, (16, 16))
        rng = np.random.default_rng(2)
        for t in range(4):
            buf.write(t, rng.uniform(0, 1, (3, 16, 16)).astype(np.float32))
        comp = model.forward_components(1)
        warped, _, agg = model.aggregation_detail(comp, buf, 1)
        stack = np.stack([w.data for w in warped])
        assert (agg.data >= stack.min(axis=0) - 1e-6).all()
        assert (agg.data <= stack.max(axis=0) + 1e-6).all()

    def test_uninitialized_slot_rejected(self):
        model = FFNeRVModel(small_config(), seed=6)
        buf = FrameBuffer(4, (16, 16))
        comp = model.forward_components(1)
        with pytest.raises(ValueError, match="slot"):
            model.aggregate(comp, buf, 1)


class TestFinalFrame:
    def _setup(self, seed=7):
        model = FFNeRVModel(small_config(), seed=seed)
        rng = np.random.default_rng(seed)
        agg = Tensor(rng.uniform(0, 1, (3, 16, 16)).astype(np.float32))
        comp = model.forward_components(1)
        return model, comp, agg

    def test_collapsed_weight_returns_independent(self):
        model, comp, agg = self._setup()
        comp.agg_logit.data[...] = -40.0
        comp.ind_logit.data[...] = 0.0
        out = model.final_frame(comp, agg)
        np.testing.assert_allclose(out.data, comp.independent.data, atol=1e-6)

    def test_equal_logits_average(self):
        model, comp, agg = self._setup(8)
        comp.agg_logit.data[...] = 1.0
        comp.ind_logit.data[...] = 1.0
        out = model.final_frame(comp, agg)
        np.testing.assert_allclose(
            out.data, 0.5 * (agg.data + comp.independent.data), atol=1e-6)

    def test_convex_between_inputs(self):
        model, comp, agg = self._setup(9)
        out = model.final_frame(comp, agg).data
        lo = np.minimum(agg.data, comp.independent.data)
        hi = np.maximum(agg.data, comp.independent.data)
        assert (out >= lo - 1e-6).all() and (out <= hi + 1e-6).all()
        assert (out >= 0).all() and (out <= 1).all()


class TestNeighborIndices:
    def test_clamping_at_start(self):
        model = FFNeRVModel(small_config(num_frames=8), seed=0)
        assert model.neighbor_indices(0) == [0, 0, 1, 2]

    def test_clamping_at_end(self):
        model = FFNeRVModel(small_config(num_frames=8), seed=0)
        assert model.neighbor_indices(7) == [5, 6, 7, 7]

    def test_fractional_t_uses_floor(self):
        model = FFNeRVModel(small_config(num_frames=8), seed=0)
        assert model.neighbor_indices(3.5) == [1, 2, 4, 5]


class TestFrameBuffer:
    def test_untouched_slots_stay_untouched(self):
        buf = FrameBuffer(6, (4, 4))
        update_buffer([3], [np.ones((3, 4, 4), dtype=np.float32)], buf)
        assert buf.initialized[3]
        with pytest.raises(ValueError, match="slot 5"):
            buf.read(5)

    def test_permutation_sweep_refreshes_all(self):
        buf = FrameBuffer(5, (4, 4))
        order = np.random.default_rng(0).permutation(5)
        for t in order:
            update_buffer([t], [np.full((3, 4, 4), float(t), dtype=np.float32)],
                          buf)
        assert buf.initialized.all()
        for t in range(5):
            np.testing.assert_array_equal(buf.read(t).data, float(t))

    def test_rejects_graph_attached_frames(self):
        buf = FrameBuffer(2, (4, 4))
        live = Tensor(np.zeros((3, 4, 4)), requires_grad=True)
        with pytest.raises(ValueError, match="detached"):
            update_buffer([0], [live], buf)

    def test_index_out_of_range(self):
        buf = FrameBuffer(2, (4, 4))
        with pytest.raises(IndexError):
            update_buffer([2], [np.zeros((3, 4, 4), dtype=np.float32)], buf)

    def test_reads_are_detached(self):
        buf = FrameBuffer(1, (4, 4))
        buf.write(0, np.zeros((3, 4, 4), dtype=np.float32))
        assert not buf.read(0).requires_grad


class TestDecodeFrame:
    def test_flow_disabled_returns_independent(self):
        model = FFNeRVModel(small_config(flow_enabled=False), seed=10)
        out = model.decode_frame(1)
        np.testing.assert_array_equal(out, model.independent_frame(1))

    def test_output_in_unit_range(self):
        model = FFNeRVModel(small_config(), seed=11)
        for t in range(4):
            out = model.decode_frame(t)
            assert (out >= 0).all() and (out <= 1).all()

    def test_live_matches_stored_independent_buffer(self):
        model = FFNeRVModel(small_config(), seed=12)
        buf = FrameBuffer(4, (16, 16))
        for t in range(4):
            buf.write(t, model.independent_frame(t))
        for t in range(4):
            live = model.decode_frame(t, buffer_mode="live")
            stored = model.decode_frame(t, buffer_mode="stored", buffer=buf)
            np.testing.assert_array_equal(live, stored)

    def test_cache_does_not_change_result(self):
        model = FFNeRVModel(small_config(), seed=13)
        cache = {}
        a = model.decode_frame(2, cache=cache)
        b = model.decode_frame(2, cache=cache)
        np.testing.assert_array_equal(a, b)
        assert cache

    def test_invalid_buffer_mode(self):
        model = FFNeRVModel(small_config(), seed=14)
        with pytest.raises(ValueError, match="buffer_mode"):
            model.decode_frame(0, buffer_mode="frozen")


class TestAblation:
    def test_flow_disabled_has_no_flow_params(self):
        model = FFNeRVModel(small_config(flow_enabled=False), seed=15)
        assert not any(n.startswith("head_flow") for n in model.parameters())

    def test_flow_enabled_flow_head_receives_gradient(self):
        model = FFNeRVModel(small_config(), seed=16)
        buf = FrameBuffer(4, (16, 16))
        for t in range(4):
            buf.write(t, model.independent_frame(t))
        comp = model.forward_components(1)
        agg = model.aggregate(comp, buf, 1)
        backward(model.final_frame(comp, agg).sum())
        assert model.flow_head.params["w"].grad is not None
        assert np.abs(model.flow_head.params["w"].grad).sum() > 0

    def test_parameter_naming(self):
        model = FFNeRVModel(small_config(), seed=17)
        names = set(model.parameters())
        assert "grid0" in names and "grid1" in names
        assert "block0/w" in names and "block1/gw" in names
        assert "head_color/w" in names and "head_flow/b" in names
        wc = model.weight_class_names()
        assert "grid0" in wc and "block0/w" in wc
        assert "block0/b" not in wc
        conv = model.conv_weight_names()
        assert "grid0" not in conv and "head_color/w" in conv
