"""Loss contract, trainer determinism, and the synthetic dataset."""

import numpy as np
import pytest

from avsi.corruption import GapPolicy, GapSpec, build_mask
from avsi.dataset import scenes_to_items
from avsi.dsp import StftConfig, Waveform, magnitude, stft
from avsi.exceptions import InvalidInput
from avsi.model import InpaintingModel, ModelConfig
from avsi.synth import SyntheticSceneSpec, latent_to_features, make_synthetic_dataset, visual_projection
from avsi.train import (
    TrainConfig,
    Trainer,
    batch_loss,
    configs_from_mapping,
    loss,
    overfit_one,
    read_config_file,
    region_weights,
)


def brute_force_loss(pred, target, mask, alpha, beta):
    """Entry-by-entry oracle for the weighted region MAE."""
    bins, cols = pred.shape
    sum_c = cnt_c = sum_u = cnt_u = 0
    for k in range(bins):
        for l in range(cols):
            d = abs(pred[k, l] - target[k, l])
            if mask[l] == 0.0:
                sum_c += d
                cnt_c += 1
            else:
                sum_u += d
                cnt_u += 1
    total = 0.0
    if cnt_c:
        total += alpha * sum_c / cnt_c
    if cnt_u:
        total += beta * sum_u / cnt_u
    return total


class TestLoss:
    def test_perfect_prediction_is_zero(self):
        a = np.random.default_rng(0).random((33, 20))
        assert loss(a, a, build_mask(GapSpec(3, 5), 20)) == 0.0

    def test_constant_error_closed_form(self):
        rng = np.random.default_rng(1)
        a = rng.random((33, 20))
        mask = build_mask(GapSpec(3, 5), 20)
        value = loss(a + 0.25, a, mask, alpha=10.0, beta=1.0)
        assert value == pytest.approx(11.0 * 0.25, rel=1e-9)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(2)
        for trial in range(50):
            pred = rng.random((33, 20))
            target = rng.random((33, 20))
            gap_frames = int(rng.integers(1, 20))
            start = int(rng.integers(0, 20 - gap_frames + 1))
            mask = build_mask(GapSpec(start, gap_frames), 20)
            mine = loss(pred, target, mask, alpha=10.0, beta=1.0)
            oracle = brute_force_loss(pred, target, mask, 10.0, 1.0)
            assert mine == pytest.approx(oracle, abs=1e-6), f"trial {trial}"

    def test_zero_weights_zero_loss(self):
        rng = np.random.default_rng(3)
        mask = build_mask(GapSpec(2, 4), 10)
        assert loss(rng.random((5, 10)), rng.random((5, 10)), mask, 0.0, 0.0) == 0.0

    def test_empty_spectrogram_raises(self):
        with pytest.raises(InvalidInput):
            loss(np.zeros((5, 0)), np.zeros((5, 0)), np.zeros(0))

    def test_empty_region_contributes_zero(self):
        rng = np.random.default_rng(6)
        pred, target = rng.random((5, 8)), rng.random((5, 8))
        all_known = np.ones(8)
        expected = np.abs(pred - target).mean()
        assert loss(pred, target, all_known, alpha=10.0, beta=1.0) == pytest.approx(expected)

    def test_zero_weights_give_zero_gradients(self):
        from avsi.nn.tensor import Tensor

        rng = np.random.default_rng(7)
        pred = Tensor(rng.random((1, 8, 5)).astype(np.float64), requires_grad=True)
        target = rng.random((1, 8, 5))
        masks = build_mask(GapSpec(2, 3), 8)[None]
        weights = region_weights(masks, 5, alpha=0.0, beta=0.0)
        node = batch_loss(pred, target, weights)
        assert node.item() == 0.0
        node.backward()
        assert not pred.grad.any()

    def test_homogeneous_in_scale(self):
        rng = np.random.default_rng(4)
        a, b = rng.random((9, 12)), rng.random((9, 12))
        mask = build_mask(GapSpec(1, 6), 12)
        assert loss(3 * a, 3 * b, mask) == pytest.approx(3 * loss(a, b, mask), rel=1e-12)

    def test_batch_loss_matches_scalar_loss(self):
        from avsi.nn.tensor import Tensor

        rng = np.random.default_rng(5)
        pred = rng.random((2, 12, 9))
        target = rng.random((2, 12, 9))
        masks = np.stack([build_mask(GapSpec(1, 4), 12), build_mask(GapSpec(6, 3), 12)])
        weights = region_weights(masks, 9, alpha=10.0, beta=1.0)
        node = batch_loss(Tensor(pred.astype(np.float64)), target, weights)
        expected = np.mean(
            [loss(pred[i].T, target[i].T, masks[i]) for i in range(2)]
        )
        assert node.item() == pytest.approx(expected, rel=1e-9)


class TestSyntheticDataset:
    SPEC = SyntheticSceneSpec(visual_dim=8)

    def test_reproducible(self):
        a = make_synthetic_dataset(self.SPEC, 2, seed=9)
        b = make_synthetic_dataset(self.SPEC, 2, seed=9)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.waveform.samples, sb.waveform.samples)
            assert np.array_equal(sa.visual.feats, sb.visual.feats)

    def test_shapes_and_rates(self):
        scene = make_synthetic_dataset(self.SPEC, 1, seed=0)[0]
        assert len(scene.waveform) == 32000
        assert scene.visual.num_frames == 50
        assert scene.visual.fps == 25.0
        assert scene.visual.width == 8

    def test_spectral_peak_tracks_f0(self):
        scene = make_synthetic_dataset(self.SPEC, 1, seed=3)[0]
        cfg = StftConfig()
        mag = magnitude(stft(scene.waveform, cfg))
        bin_hz = 16000.0 / cfg.fft_size
        # frame l covers time l*hop/sr; video frame at 25 fps
        checked = 0
        for vf in range(8, 42):
            t = (vf + 0.5) / 25.0
            col = int(round(t * 16000 / cfg.hop))
            if scene.env_frames[vf] < 0.5:
                continue
            low_bins = mag[: int(400 / bin_hz), col]
            peak_hz = low_bins.argmax() * bin_hz
            assert abs(peak_hz - scene.f0_frames[vf]) <= bin_hz + 1e-9
            checked += 1
        assert checked > 5

    def test_features_are_function_of_latent(self):
        proj = visual_projection(self.SPEC, seed=4)
        f0 = np.array([120.0, 200.0])
        env = np.array([0.5, 0.9])
        a = latent_to_features(f0, env, self.SPEC, proj)
        b = latent_to_features(f0.copy(), env.copy(), self.SPEC, proj)
        assert np.array_equal(a, b)

    def test_n_items_validation(self):
        with pytest.raises(InvalidInput):
            make_synthetic_dataset(self.SPEC, 0, seed=0)


@pytest.fixture(scope="module")
def tiny_items():
    spec = SyntheticSceneSpec(visual_dim=8)
    return scenes_to_items(make_synthetic_dataset(spec, 4, seed=21))


def _toy(seed=1):
    return InpaintingModel(ModelConfig.toy(visual_dim=8, dropout=0.1), seed=seed)


class TestTrainer:
    def test_identical_seeds_identical_trajectories(self, tiny_items):
        def run():
            cfg = TrainConfig(batch=2, max_steps=4, eval_every=100, seed=7)
            trainer = Trainer(_toy(), tiny_items, cfg)
            return [trainer.train_step(s) for s in range(1, 5)]

        assert run() == run()

    def test_gap_resampled_across_steps(self, tiny_items):
        cfg = TrainConfig(batch=1, max_steps=1, eval_every=100, seed=0)
        trainer = Trainer(_toy(), tiny_items[:1], cfg)
        gaps = {trainer._gap_for(tiny_items[0], step, 0, tag=1) for step in range(100)}
        assert len(gaps) >= 2

    def test_loss_decreases_on_smoke_run(self, tiny_items):
        cfg = TrainConfig(batch=4, max_steps=200, eval_every=10**6, seed=3)
        model = InpaintingModel(ModelConfig.toy(visual_dim=8, dropout=0.0), seed=2)
        trainer = Trainer(model, tiny_items, cfg)
        losses = [trainer.train_step(s) for s in range(1, 201)]
        assert np.mean(losses[-20:]) < losses[0] * 0.8

    def test_mismatched_frame_counts_rejected(self, tiny_items):
        bad = tiny_items[0]
        from avsi.dataset import Item

        short = Item(
            item_id="short",
            waveform=Waveform(bad.waveform.samples[:16000]),
            visual=bad.visual,
            mag=bad.mag[:, :63],
            activity=bad.activity[:63],
        )
        cfg = TrainConfig(batch=2, max_steps=1, eval_every=10, seed=0)
        with pytest.raises(InvalidInput):
            Trainer(_toy(), [tiny_items[0], short], cfg)

    def test_run_writes_csv_log(self, tiny_items, tmp_path):
        cfg = TrainConfig(batch=2, max_steps=4, eval_every=2, seed=1,
                          val_stoi_items=0, phase_iters=5)
        trainer = Trainer(_toy(), tiny_items[:2], cfg, val_items=tiny_items[2:])
        csv_path = tmp_path / "log.csv"
        ckpt_path = tmp_path / "m.ckpt"
        rows = trainer.run(csv_path=csv_path, ckpt_path=ckpt_path)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "step,loss,val_mae_corrupted,val_stoi"
        assert len(lines) == 1 + len(rows)
        assert ckpt_path.exists()


class TestOverfitOne:
    def test_zero_steps_returns_untrained_mae(self, tiny_items):
        mae_a = overfit_one(_toy(seed=5), tiny_items[0], steps=0)
        mae_b = overfit_one(_toy(seed=5), tiny_items[0], steps=0)
        assert mae_a == mae_b
        assert mae_a > 0

    def test_short_run_reduces_mae_deterministically(self, tiny_items):
        base = overfit_one(_toy(seed=6), tiny_items[0], steps=0)
        first = overfit_one(_toy(seed=6), tiny_items[0], steps=30)
        second = overfit_one(_toy(seed=6), tiny_items[0], steps=30)
        assert first == second
        assert first < base


class TestConfigFile:
    def test_round_trip_known_keys(self, tmp_path):
        path = tmp_path / "train.cfg"
        path.write_text(
            """
            # desk-scale run
            preset = toy
            alpha = 10
            beta = 1
            lr = 2e-4
            batch = 4
            max_steps = 50
            seed = 11
            gap_mode = fixed-duration
            gap_ms = 400
            placement = active-speech-only
            """
        )
        train_cfg, model_cfg = configs_from_mapping(read_config_file(path))
        assert train_cfg.lr == pytest.approx(2e-4)
        assert train_cfg.batch == 4
        assert train_cfg.seed == 11
        assert train_cfg.gap_policy.mode == "fixed-duration"
        assert train_cfg.gap_policy.placement == "active-speech-only"
        assert model_cfg.d_model == 64

    def test_unknown_key_rejected(self, tmp_path):
        from avsi.exceptions import ConfigError

        path = tmp_path / "bad.cfg"
        path.write_text("warp_speed = 9\n")
        with pytest.raises(ConfigError):
            configs_from_mapping(read_config_file(path))

    def test_malformed_line_rejected(self, tmp_path):
        from avsi.exceptions import ConfigError

        path = tmp_path / "bad.cfg"
        path.write_text("just some words\n")
        with pytest.raises(ConfigError):
            read_config_file(path)
