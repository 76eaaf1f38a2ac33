"""Clip sampling protocols and per-frame label construction."""

import numpy as np
import pytest

from echoformer.errors import ClipRejectedError, ConfigurationError, ValidationError
from echoformer.heads import CLASS_ED, CLASS_ES, CLASS_TRANSITION
from echoformer.sampling import (
    IGNORE_LABEL,
    PAD_INDEX,
    VideoRecord,
    guided_random_sample,
    make_sd_labels,
    mirror_sample,
    scale_ef,
    subsample,
)


def _video(num_frames=160, label_a=100, kind_a="ES", label_b=120, kind_b="ED",
           ef=55.0, fps=50.0, rng=None):
    rng = rng or np.random.default_rng(0)
    frames = rng.integers(0, 256, size=(num_frames, 8, 8), dtype=np.uint8)
    frames[:, 0, 0] = np.arange(num_frames) % 256      # frame fingerprint
    return VideoRecord(frames=frames, fps=fps, label_a=label_a, kind_a=kind_a,
                       label_b=label_b, kind_b=kind_b, ef_percent=ef, video_id="v")


class TestScaleEF:
    def test_representative_value(self):
        assert scale_ef(56.25) == 0.5625

    def test_open_interval(self):
        with pytest.raises(ValidationError):
            scale_ef(100.0)
        with pytest.raises(ValidationError):
            scale_ef(0.0)

    def test_gamma_alignment(self):
        assert scale_ef(65.0) == 0.65


class TestSubsample:
    def test_halves_long_videos(self):
        v = _video(num_frames=300, label_a=40, label_b=90, fps=50.0)
        out = subsample(v)
        assert out.num_frames == 150
        assert out.fps == 25.0
        assert (out.label_a, out.label_b) == (20, 45)

    def test_short_videos_unchanged(self):
        v = _video(num_frames=100, label_a=40, label_b=90)
        assert subsample(v) is v

    def test_single_application_may_still_exceed_limit(self):
        # one halving only; anything still longer is the evaluator's problem
        # (sliding windows), not repeated subsampling
        v = _video(num_frames=300, label_a=40, label_b=90)
        once = subsample(v)
        np.testing.assert_array_equal(once.frames, v.frames[::2])
        assert once.num_frames == 150 > 128

    def test_custom_limit(self):
        v = _video(num_frames=100, label_a=40, label_b=90)
        out = subsample(v, limit=64)
        assert out.num_frames == 50


class TestGuidedRandomSample:
    def test_spec_span_example(self):
        # gap 20; extensions 0.5g and 0.2g land on frames 90..124, 35 live
        v = _video()

        class FixedRng:
            def __init__(self):
                self.draws = iter([10.0, 4.0])

            def uniform(self, lo, hi):
                return next(self.draws)

        clip = guided_random_sample(v, FixedRng(), clip_len=128)
        assert clip.mask.sum() == 35
        assert clip.source_indices[0] == 90
        assert clip.source_indices[34] == 124
        assert (clip.source_indices[35:] == PAD_INDEX).all()
        assert (~clip.mask[35:]).all()

    def test_padded_frames_black_and_masked(self):
        v = _video()
        clip = guided_random_sample(v, np.random.default_rng(1), clip_len=128)
        assert clip.clip_len == 128
        pad = ~clip.mask
        assert pad.any()
        assert clip.frames[pad].sum() == 0
        assert (clip.source_indices[pad] == PAD_INDEX).all()

    def test_labels_always_live(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            v = _video()
            clip = guided_random_sample(v, rng, clip_len=128)
            src = clip.source_indices[clip.mask]
            assert v.label_a in src and v.label_b in src

    def test_extension_draws_recorded_in_range(self):
        rng = np.random.default_rng(3)
        v = _video()
        g = v.gap
        for _ in range(50):
            clip = guided_random_sample(v, rng, clip_len=128)
            assert 0.1 * g <= clip.ext_pre <= 0.7 * g
            assert 0.1 * g <= clip.ext_post <= 0.7 * g

    def test_zero_extension_boundary(self):
        # tiny gap rounds the 10% extension to zero: clip starts at label_a
        v = _video(num_frames=40, label_a=20, label_b=24)

        class FixedRng:
            def uniform(self, lo, hi):
                return lo      # 0.1*g = 0.4 -> rounds to 0

        clip = guided_random_sample(v, FixedRng(), clip_len=32)
        assert clip.source_indices[0] == 20

    def test_overlong_span_center_cropped_keeps_labels(self):
        rng = np.random.default_rng(4)
        v = _video(num_frames=400, label_a=100, label_b=199)
        for _ in range(50):
            clip = guided_random_sample(v, rng, clip_len=128)
            assert clip.clip_len == 128
            assert clip.mask.all()
            src = clip.source_indices
            assert 100 in src and 199 in src

    def test_unfittable_pair_rejected(self):
        v = _video(num_frames=400, label_a=100, label_b=299)
        with pytest.raises(ClipRejectedError):
            guided_random_sample(v, np.random.default_rng(5), clip_len=128)

    def test_frames_copied_from_source(self):
        v = _video()
        clip = guided_random_sample(v, np.random.default_rng(6), clip_len=128)
        live = clip.mask.nonzero()[0]
        for pos in live[:5]:
            np.testing.assert_array_equal(clip.frames[pos],
                                          v.frames[clip.source_indices[pos]])


class TestMirrorSample:
    def test_tiling_pattern_small_base(self):
        # base [a, t, b] tiles as a,t,b,t,a,t,b,...
        v = _video(num_frames=60, label_a=30, label_b=32)

        class ZeroCrop:
            def integers(self, lo, hi):
                return lo

        clip = mirror_sample(v, ZeroCrop(), clip_len=9)
        np.testing.assert_array_equal(
            clip.source_indices, [30, 31, 32, 31, 30, 31, 32, 31, 30])

    def test_all_live(self):
        v = _video()
        clip = mirror_sample(v, np.random.default_rng(7), clip_len=128)
        assert clip.mask.all()
        assert clip.clip_len == 128

    def test_extrema_occurrences_are_exact_copies(self):
        v = _video()
        clip = mirror_sample(v, np.random.default_rng(8), clip_len=128)
        for pos in range(clip.clip_len):
            src = clip.source_indices[pos]
            np.testing.assert_array_equal(clip.frames[pos], v.frames[src])

    def test_palindrome_about_extrema(self):
        rng = np.random.default_rng(9)
        v = _video()
        clip = mirror_sample(v, rng, clip_len=128)
        src = clip.source_indices
        extrema = np.nonzero((src == v.label_a) | (src == v.label_b))[0]
        assert len(extrema) > 0
        for p in extrema:
            for d in range(1, min(p, 127 - p) + 1):
                assert src[p - d] == src[p + d]

    def test_crop_offsets_shift_tiling(self):
        v = _video(num_frames=60, label_a=30, label_b=33)

        class Crop:
            def __init__(self, k):
                self.k = k

            def integers(self, lo, hi):
                return self.k

        c0 = mirror_sample(v, Crop(0), clip_len=16)
        c1 = mirror_sample(v, Crop(1), clip_len=16)
        np.testing.assert_array_equal(c0.source_indices[1:], c1.source_indices[:-1])


class TestMakeSDLabels:
    def test_classification_marks_every_extremum_occurrence(self):
        v = _video(num_frames=60, label_a=30, kind_a="ES", label_b=33, kind_b="ED")
        clip = mirror_sample(v, np.random.default_rng(10), clip_len=32)
        labels = make_sd_labels(clip, "classification", "mirror")
        src = clip.source_indices
        assert (labels[src == 30] == CLASS_ES).all()
        assert (labels[src == 33] == CLASS_ED).all()
        between = (src > 30) & (src < 33)
        assert (labels[between] == CLASS_TRANSITION).all()

    def test_classification_padded_gets_ignore(self):
        v = _video()
        clip = guided_random_sample(v, np.random.default_rng(11), clip_len=128)
        labels = make_sd_labels(clip, "classification", "random")
        assert (labels[~clip.mask] == IGNORE_LABEL).all()

    def test_regression_extrema_hit_plus_minus_one(self):
        v = _video(num_frames=60, label_a=20, kind_a="ES", label_b=36, kind_b="ED")
        clip = mirror_sample(v, np.random.default_rng(12), clip_len=64)
        labels = make_sd_labels(clip, "regression", "mirror")
        src = clip.source_indices
        np.testing.assert_array_equal(labels[src == 20], -1.0)
        np.testing.assert_array_equal(labels[src == 36], 1.0)
        assert (np.abs(labels) <= 1.0).all()

    def test_regression_cubic_ramp_values(self):
        v = _video(num_frames=60, label_a=20, kind_a="ES", label_b=36, kind_b="ED")
        clip = mirror_sample(v, np.random.default_rng(13), clip_len=64)
        labels = make_sd_labels(clip, "regression", "mirror")
        src = clip.source_indices
        np.testing.assert_allclose(labels[src == 28], 0.0, atol=1e-12)   # midpoint
        np.testing.assert_allclose(labels[src == 24], -0.125, atol=1e-12)  # u=-0.5
        np.testing.assert_allclose(labels[src == 32], 0.125, atol=1e-12)

    def test_regression_orientation_flips_with_kinds(self):
        v = _video(num_frames=60, label_a=20, kind_a="ED", label_b=36, kind_b="ES")
        clip = mirror_sample(v, np.random.default_rng(14), clip_len=64)
        labels = make_sd_labels(clip, "regression", "mirror")
        src = clip.source_indices
        np.testing.assert_array_equal(labels[src == 20], 1.0)
        np.testing.assert_array_equal(labels[src == 36], -1.0)

    def test_guided_constant_extrapolation_beyond_pair(self):
        v = _video(num_frames=200, label_a=100, kind_a="ES", label_b=120, kind_b="ED")
        rng = np.random.default_rng(15)
        clip = guided_random_sample(v, rng, clip_len=128)
        labels = make_sd_labels(clip, "regression", "random")
        src = clip.source_indices
        before = clip.mask & (src >= 0) & (src < 100)
        after = clip.mask & (src > 120)
        assert before.any() and after.any()
        np.testing.assert_array_equal(labels[before], -1.0)
        np.testing.assert_array_equal(labels[after], 1.0)
        assert (labels[~clip.mask] == 0.0).all()

    def test_unknown_mode_or_method(self):
        v = _video()
        clip = mirror_sample(v, np.random.default_rng(16), clip_len=32)
        with pytest.raises(ConfigurationError):
            make_sd_labels(clip, "ordinal", "mirror")
        with pytest.raises(ConfigurationError):
            make_sd_labels(clip, "regression", "sliding")


class TestReproducibility:
    def test_fixed_seed_reproduces_clips(self):
        v = _video()
        a = guided_random_sample(v, np.random.default_rng(99), clip_len=128)
        b = guided_random_sample(v, np.random.default_rng(99), clip_len=128)
        np.testing.assert_array_equal(a.frames, b.frames)
        np.testing.assert_array_equal(a.source_indices, b.source_indices)
        m1 = mirror_sample(v, np.random.default_rng(7), clip_len=128)
        m2 = mirror_sample(v, np.random.default_rng(7), clip_len=128)
        np.testing.assert_array_equal(m1.source_indices, m2.source_indices)


class TestVideoRecordValidation:
    def test_label_ordering_enforced(self):
        rng = np.random.default_rng(17)
        frames = rng.integers(0, 256, size=(10, 4, 4), dtype=np.uint8)
        with pytest.raises(ValidationError):
            VideoRecord(frames=frames, fps=30.0, label_a=5, kind_a="ES",
                        label_b=5, kind_b="ED", ef_percent=50.0)
        with pytest.raises(ValidationError):
            VideoRecord(frames=frames, fps=30.0, label_a=2, kind_a="ES",
                        label_b=12, kind_b="ED", ef_percent=50.0)
        with pytest.raises(ValidationError):
            VideoRecord(frames=frames, fps=30.0, label_a=2, kind_a="ES",
                        label_b=5, kind_b="ED", ef_percent=100.0)
