"""Gap sampling, mask construction, and compositing identities."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avsi.corruption import (
    GapPolicy,
    GapSpec,
    active_columns,
    apply_mask,
    build_mask,
    composite,
    ms_to_frames,
    sample_gap,
)
from avsi.exceptions import InfeasiblePlacement, InvalidInput


class TestMsToFrames:
    @pytest.mark.parametrize("ms,frames", [(160, 10), (400, 25), (800, 50), (1600, 100)])
    def test_reference_durations(self, ms, frames):
        assert ms_to_frames(ms) == frames

    def test_tiny_duration_raises(self):
        with pytest.raises(InvalidInput):
            ms_to_frames(1.0)

    def test_negative_raises(self):
        with pytest.raises(InvalidInput):
            ms_to_frames(-5.0)


class TestSampleGap:
    def test_exact_fit_returns_start_zero(self):
        policy = GapPolicy(mode="fixed-duration", fixed_duration_ms=1600)
        gap = sample_gap(policy, 100)
        assert gap == GapSpec(start_frame=0, num_frames=100)

    def test_too_long_raises(self):
        policy = GapPolicy(mode="fixed-duration", fixed_duration_ms=1600)
        with pytest.raises(InfeasiblePlacement):
            sample_gap(policy, 99)

    def test_seed_determinism(self):
        policy = GapPolicy(rng_seed=42)
        assert sample_gap(policy, 126) == sample_gap(policy, 126)

    def test_gap_always_inside(self):
        policy = GapPolicy(rng_seed=1)
        rng = np.random.default_rng(0)
        for _ in range(200):
            gap = sample_gap(policy, 126, rng=rng)
            assert 0 <= gap.start_frame and gap.stop_frame <= 126

    def test_duration_distribution_uniform_over_ms(self):
        # chi-square against the sampler's own stated distribution
        policy = GapPolicy(mode="random-duration")
        rng = np.random.default_rng(3)
        n = 10000
        draws = np.array([policy.sample_duration_ms(rng) for _ in range(n)])
        assert draws.min() >= 160.0 and draws.max() <= 1600.0
        bins = 12
        counts, _ = np.histogram(draws, bins=bins, range=(160.0, 1600.0))
        expected = n / bins
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        # dof = 11; 99.9th percentile is ~31.3
        assert chi2 < 31.3

    def test_active_only_placement_respects_activity(self):
        policy = GapPolicy(
            mode="fixed-duration", fixed_duration_ms=160, placement="active-speech-only"
        )
        activity = np.zeros(126, dtype=bool)
        activity[20:90] = True
        rng = np.random.default_rng(5)
        for _ in range(100):
            gap = sample_gap(policy, 126, activity=activity, rng=rng)
            assert activity[gap.start_frame : gap.stop_frame].all()

    def test_active_only_infeasible_raises(self):
        policy = GapPolicy(
            mode="fixed-duration", fixed_duration_ms=1600, placement="active-speech-only"
        )
        activity = np.zeros(200, dtype=bool)
        activity[10:60] = True  # 50-frame run < 100 frames needed
        with pytest.raises(InfeasiblePlacement):
            sample_gap(policy, 200, activity=activity)

    def test_active_only_requires_activity(self):
        policy = GapPolicy(placement="active-speech-only")
        with pytest.raises(InvalidInput):
            sample_gap(policy, 126)


class TestBuildMask:
    def test_full_gap_zeroes_everything(self):
        mask = build_mask(GapSpec(0, 80), 80)
        assert not mask.any()

    def test_specific_gap(self):
        mask = build_mask(GapSpec(5, 10), 126)
        assert mask.sum() == 116
        assert not mask[5:15].any()
        assert mask[:5].all() and mask[15:].all()

    @given(st.integers(min_value=1, max_value=120), st.integers(min_value=0, max_value=100))
    @settings(max_examples=50, deadline=None)
    def test_zero_count_equals_gap_frames(self, frames, start):
        total = 126
        if start + frames > total:
            return
        mask = build_mask(GapSpec(start, frames), total)
        assert int((mask == 0).sum()) == frames

    def test_gap_past_end_raises(self):
        with pytest.raises(InvalidInput):
            build_mask(GapSpec(120, 10), 126)


class TestApplyMask:
    def test_all_ones_is_identity(self):
        rng = np.random.default_rng(0)
        mag = rng.random((257, 20))
        out = apply_mask(mag, np.ones(20))
        np.testing.assert_array_equal(out, mag)

    def test_all_zeros_gives_zero(self):
        mag = np.random.default_rng(1).random((257, 20))
        assert not apply_mask(mag, np.zeros(20)).any()

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(2)
        mag = rng.random((33, 12))
        mask = (rng.random(12) > 0.5).astype(float)
        out = apply_mask(mag, mask)
        for k in range(33):
            for l in range(12):
                assert out[k, l] == mag[k, l] * mask[l]

    def test_shape_mismatch_raises(self):
        with pytest.raises(InvalidInput):
            apply_mask(np.ones((4, 5)), np.ones(6))


class TestComposite:
    def test_all_ones_returns_known_exactly(self):
        rng = np.random.default_rng(3)
        a, b = rng.random((257, 30)), rng.random((257, 30))
        out = composite(a, b, np.ones(30))
        assert np.array_equal(out, a)

    def test_all_zeros_returns_predicted_exactly(self):
        rng = np.random.default_rng(4)
        a, b = rng.random((257, 30)), rng.random((257, 30))
        out = composite(a, b, np.zeros(30))
        assert np.array_equal(out, b)

    def test_matches_mask_equation_oracle(self):
        rng = np.random.default_rng(5)
        a, b = rng.random((33, 14)), rng.random((33, 14))
        mask = (rng.random(14) > 0.5).astype(float)
        out = composite(a, b, mask)
        full = np.broadcast_to(mask, (33, 14))
        oracle = full * a + (1.0 - full) * b
        np.testing.assert_array_equal(out, oracle)

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_self_composite_identity(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.random((17, 9))
        mask = (rng.random(9) > 0.5).astype(float)
        assert np.array_equal(composite(a, a, mask), a)

    def test_idempotent_and_region_consistent(self):
        rng = np.random.default_rng(6)
        a, b = rng.random((17, 9)), rng.random((17, 9))
        mask = build_mask(GapSpec(2, 4), 9)
        once = composite(a, b, mask)
        twice = composite(once, b, mask)
        assert np.array_equal(once, twice)
        assert np.array_equal(apply_mask(once, mask), apply_mask(a, mask))


class TestActiveColumns:
    def test_quiet_columns_inactive(self):
        mag = np.ones((257, 10)) * 1e-6
        mag[:, 4] = 1.0
        active = active_columns(mag)
        assert active[4]
        assert not active[:4].any() and not active[5:].any()

    def test_all_zero_is_all_inactive(self):
        assert not active_columns(np.zeros((257, 5))).any()


class TestDemoZeroing:
    def test_gap_span_covers_window_support(self):
        from avsi.corruption import gap_sample_span, zero_gap_samples
        from avsi.dsp import StftConfig

        cfg = StftConfig()
        gap = GapSpec(start_frame=20, num_frames=10)
        lo, hi = gap_sample_span(gap, cfg)
        assert lo == 20 * 256 - 256
        assert hi == 29 * 256 - 256 + 512
        out = zero_gap_samples(np.ones(16000), gap, cfg)
        assert not out[lo:hi].any()
        assert out[:lo].all() and out[hi:].all()
