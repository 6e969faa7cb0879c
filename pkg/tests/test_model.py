"""Network-level contracts: shapes, fusion bookkeeping, compositing."""

import numpy as np
import pytest

from avsi import nn
from avsi.corruption import GapSpec, apply_mask, build_mask
from avsi.exceptions import ConfigError
from avsi.model import (
    AvEmbedding,
    InpaintingModel,
    ModelConfig,
    VisualFeatures,
    sinusoid_encoding,
)
from avsi.nn.tensor import Tensor


@pytest.fixture(scope="module")
def toy_model():
    return InpaintingModel(ModelConfig.toy(visual_dim=6), seed=0)


def _mag(rng, bins=257, frames=20):
    return rng.random((bins, frames)) * 2.0


class TestConfig:
    def test_paper_preset_dimensions(self):
        cfg = ModelConfig()
        assert (cfg.d_model, cfg.heads, cfg.ffn) == (512, 8, 1024)
        assert (cfg.fusion_blocks, cfg.inpaint_blocks) == (6, 7)
        assert cfg.num_bins == 257

    def test_head_divisibility_enforced(self):
        with pytest.raises(ConfigError):
            ModelConfig(d_model=100, heads=7)


class TestFrontends:
    def test_audio_tokens_shape(self, toy_model):
        rng = np.random.default_rng(0)
        tokens = toy_model.embed_audio(_mag(rng)[None])
        assert tokens.shape == (1, 20, 64)

    def test_per_frame_independence(self, toy_model):
        rng = np.random.default_rng(1)
        a = _mag(rng)
        b = a.copy()
        b[:, 7] = rng.random(257)  # change a single column elsewhere
        ta = toy_model.embed_audio(a[None]).data[0]
        tb = toy_model.embed_audio(b[None]).data[0]
        assert np.array_equal(ta[3], tb[3])
        assert not np.array_equal(ta[7], tb[7])

    def test_zeroed_columns_share_one_token(self, toy_model):
        rng = np.random.default_rng(2)
        mag = _mag(rng)
        mask = build_mask(GapSpec(5, 8), 20)
        tokens = toy_model.embed_audio(apply_mask(mag, mask)[None]).data[0]
        gap_tokens = tokens[5:13]
        assert np.array_equal(gap_tokens, np.broadcast_to(gap_tokens[0], gap_tokens.shape))

    def test_visual_tokens_shape_and_width_check(self, toy_model):
        rng = np.random.default_rng(3)
        tokens = toy_model.embed_visual(rng.random((1, 9, 6)))
        assert tokens.shape == (1, 9, 64)
        with pytest.raises(ConfigError):
            toy_model.embed_visual(rng.random((1, 9, 7)))


class TestFuse:
    def test_token_count_is_sum_of_modalities(self, toy_model):
        rng = np.random.default_rng(4)
        audio = Tensor(rng.random((1, 12, 64)).astype(np.float32))
        visual = Tensor(rng.random((1, 5, 64)).astype(np.float32))
        fused = toy_model.fuse(audio, visual)
        assert isinstance(fused, AvEmbedding)
        assert fused.tokens.shape == (1, 17, 64)
        assert fused.audio_span == (0, 12)
        assert fused.visual_span == (12, 17)

    def test_positional_differences_on_zero_input(self, toy_model):
        zeros = Tensor(np.zeros((1, 10, 64), dtype=np.float32))
        fused = toy_model.fuse(zeros, None)
        tokens = fused.tokens.data[0]
        pe = sinusoid_encoding(10, 64)
        for j, jp in ((0, 4), (2, 7)):
            np.testing.assert_allclose(
                tokens[j] - tokens[jp], pe[j] - pe[jp], atol=1e-6
            )

    def test_modality_encodings_differ(self, toy_model):
        me_a = toy_model.params["modality/audio"].data
        me_v = toy_model.params["modality/visual"].data
        assert not np.array_equal(me_a, me_v)

    def test_positions_restart_per_modality(self, toy_model):
        zeros_a = Tensor(np.zeros((1, 6, 64), dtype=np.float32))
        zeros_v = Tensor(np.zeros((1, 6, 64), dtype=np.float32))
        fused = toy_model.fuse(zeros_a, zeros_v)
        tokens = fused.tokens.data[0]
        me_a = toy_model.params["modality/audio"].data
        me_v = toy_model.params["modality/visual"].data
        # both modalities restart at position 0
        np.testing.assert_allclose(tokens[0] - me_a, tokens[6] - me_v, atol=1e-6)
        # visual positions advance by the audio/video rate ratio (62.5/25)
        pe_v = sinusoid_encoding(6, 64, step=2.5)
        np.testing.assert_allclose(tokens[6:] - me_v, pe_v, atol=1e-6)


class TestForward:
    @pytest.mark.parametrize("frames,vframes", [(20, 8), (5, 1), (13, 0)])
    def test_output_shape_and_nonnegativity(self, toy_model, frames, vframes):
        rng = np.random.default_rng(5)
        mag = _mag(rng, frames=frames)
        visual = VisualFeatures(rng.random((vframes, 6))) if vframes else None
        out = toy_model.forward(mag, visual)
        assert out.shape == (257, frames)
        assert (out >= 0.0).all()

    def test_visual_tokens_reach_the_output(self, toy_model):
        # gradient probe: d(output)/d(visual input) must not vanish
        rng = np.random.default_rng(6)
        mag = _mag(rng, frames=10)
        visual = Tensor(rng.random((1, 4, 6)).astype(np.float32), requires_grad=True)
        audio_tokens = toy_model.embed_audio(mag[None])
        h1 = nn.elu(nn.linear(visual, toy_model.params["visual_in/1/w"],
                              toy_model.params["visual_in/1/b"]))
        visual_tokens = nn.elu(nn.linear(h1, toy_model.params["visual_in/2/w"],
                                         toy_model.params["visual_in/2/b"]))
        fused = toy_model.fuse(audio_tokens, visual_tokens)
        x = fused.tokens
        for block in toy_model._fusion + toy_model._inpaint:
            x = nn.transformer_block(x, block, toy_model.config.heads)
        x = nn.layer_norm(x, toy_model.params["final_ln/gain"], toy_model.params["final_ln/bias"])
        x = nn.narrow(x, -2, 0, 10)
        out = nn.softplus(nn.linear(x, toy_model.params["head/w"], toy_model.params["head/b"]))
        nn.tensor_sum(out).backward()
        assert visual.grad is not None
        assert np.abs(visual.grad).max() > 0.0

    def test_forward_deterministic(self, toy_model):
        rng = np.random.default_rng(7)
        mag = _mag(rng, frames=12)
        visual = VisualFeatures(rng.random((5, 6)))
        assert np.array_equal(
            toy_model.forward(mag, visual), toy_model.forward(mag, visual)
        )


class TestInpaint:
    def test_all_ones_mask_returns_input_exactly(self, toy_model):
        rng = np.random.default_rng(8)
        mag = _mag(rng)
        out = toy_model.inpaint(mag, None, np.ones(20))
        assert np.array_equal(out, mag)

    def test_corrupted_columns_come_from_forward(self, toy_model):
        rng = np.random.default_rng(9)
        mag = _mag(rng)
        mask = build_mask(GapSpec(4, 6), 20)
        masked = apply_mask(mag, mask)
        out = toy_model.inpaint(masked, None, mask)
        predicted = toy_model.forward(masked, None)
        assert np.array_equal(out[:, 4:10], predicted[:, 4:10])
        assert np.array_equal(out[:, :4], masked[:, :4])
        assert np.array_equal(out[:, 10:], masked[:, 10:])

    def test_uncorrupted_region_error_is_zero(self, toy_model):
        from avsi.metrics import mae_region

        rng = np.random.default_rng(10)
        mag = _mag(rng)
        mask = build_mask(GapSpec(2, 5), 20)
        out = toy_model.inpaint(apply_mask(mag, mask), None, mask)
        assert mae_region(out, mag, mask, "uncorrupted") == 0.0
        forward_mae = mae_region(toy_model.forward(apply_mask(mag, mask), None), mag, mask,
                                 "corrupted")
        assert mae_region(out, mag, mask, "corrupted") == forward_mae


class TestPersistence:
    def test_checkpoint_round_trip_identical_forward(self, tmp_path, toy_model):
        rng = np.random.default_rng(11)
        toy_model.set_normalization(0.3, 1.7)
        mag = _mag(rng, frames=15)
        visual = VisualFeatures(rng.random((6, 6)))
        before = toy_model.forward(mag, visual)
        path = tmp_path / "model.ckpt"
        toy_model.save(path)
        restored = InpaintingModel.load(path)
        assert restored.config == toy_model.config
        assert restored.norm_mean == toy_model.norm_mean
        after = restored.forward(mag, visual)
        assert np.array_equal(before, after)


class TestFullModelGradients:
    def test_toy_model_passes_finite_differences(self):
        from fdcheck import check_op_gradients

        cfg = ModelConfig(
            d_model=8, heads=2, ffn=12, fusion_blocks=1, inpaint_blocks=1,
            num_bins=9, visual_dim=5, dropout=0.0,
        )
        model = InpaintingModel(cfg, seed=3, dtype=np.float64)
        model.set_normalization(0.1, 1.3)
        rng = np.random.default_rng(12)
        masked = rng.random((1, 9, 6))
        visual = rng.random((1, 4, 5))
        names = model.params.names()

        def op(*tensors):
            for name, t in zip(names, tensors):
                model.params._params[name] = t
            return model.predict_log_batch(masked, visual, training=False)

        arrays = [model.params[name].data.copy() for name in names]
        check_op_gradients(op, arrays, dtype=np.float64)
