"""Index extraction against brute-force oracles, plus metric arithmetic."""

import numpy as np
import pytest

from echoformer.errors import ValidationError
from echoformer.metrics import (
    ef_metrics,
    extract_indices,
    heart_rate,
    lvef_from_volumes,
    nearest_match,
    afd_summary,
    report_to_csv,
    summarize,
    VideoResult,
)


def brute_force_regression(signal):
    """Independent oracle: explicit crossing-pair scan with python loops."""
    signs = [1 if s >= 0 else -1 for s in signal]
    # crossing positions: sign change between i and i+1
    crossings = [i for i in range(len(signs) - 1) if signs[i] != signs[i + 1]]
    es, ed = [], []
    for a, b in zip(crossings, crossings[1:]):
        run = list(range(a + 1, b + 1))          # bounded run between crossings
        vals = [signal[i] for i in run]
        if signs[a + 1] > 0:
            ed.append(run[vals.index(max(vals))])
        else:
            es.append(run[vals.index(min(vals))])
    return es, ed


def brute_force_classification(probs):
    classes = [int(np.argmax(probs[:, i])) for i in range(probs.shape[1])]
    es, ed = [], []
    i = 0
    while i < len(classes):
        j = i
        while j + 1 < len(classes) and classes[j + 1] == classes[i]:
            j += 1
        center = (i + j) // 2
        if classes[i] == 2:
            es.append(center)
        elif classes[i] == 1:
            ed.append(center)
        i = j + 1
    return es, ed


class TestExtractRegression:
    def test_clean_sweep(self):
        # -1 -> +1 -> -1 over 60 frames: one bounded positive run with the ED
        # at its maximum; the boundary minima sit in tail runs and are
        # discarded, so no ES survives and the video is rejected
        t = np.linspace(0, 2 * np.pi, 60)
        signal = -np.cos(t)
        found = extract_indices(signal, mode="regression")
        assert found.ed_indices == [int(np.argmax(signal))]
        assert found.es_indices == []
        assert found.rejected

    def test_two_full_cycles(self):
        t = np.linspace(0, 4 * np.pi, 120)
        signal = np.sin(t + 0.1)
        found = extract_indices(signal, mode="regression")
        assert not found.rejected
        assert len(found.ed_indices) >= 1
        assert len(found.es_indices) >= 1

    def test_constant_signal_rejected(self):
        found = extract_indices(np.full(50, 0.2), mode="regression")
        assert found.rejected
        assert found.es_indices == [] and found.ed_indices == []

    def test_agrees_with_brute_force_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(4, 65))
            kind = rng.integers(0, 3)
            if kind == 0:
                signal = rng.normal(size=n)
            elif kind == 1:
                signal = np.sin(np.linspace(0, rng.uniform(1, 20), n)
                                + rng.uniform(0, 7))
            else:
                signal = np.round(rng.normal(size=n), 1)   # exact zeros happen
            found = extract_indices(signal, mode="regression")
            es, ed = brute_force_regression(signal)
            assert found.es_indices == es
            assert found.ed_indices == ed
            assert found.rejected == (not es or not ed)

    def test_mask_restricts_scan_but_keeps_positions(self):
        signal = np.array([9.0, -1.0, 1.0, -1.0, 1.0, -1.0, 9.0])
        mask = np.array([False, True, True, True, True, True, False])
        found = extract_indices(signal, mask, mode="regression")
        assert found.ed_indices == [2] or found.ed_indices == [2, 4]
        for idx in found.es_indices + found.ed_indices:
            assert mask[idx]


class TestExtractClassification:
    def test_run_centers_tie_low(self):
        probs = np.zeros((3, 60))
        probs[0] = 1.0
        probs[:, 10:13] = 0.0
        probs[2, 10:13] = 1.0          # ES run frames 10-12
        probs[:, 40:42] = 0.0
        probs[1, 40:42] = 1.0          # ED run frames 40-41
        found = extract_indices(probs, mode="classification")
        assert found.es_indices == [11]
        assert found.ed_indices == [40]
        assert not found.rejected

    def test_missing_class_rejected(self):
        probs = np.zeros((3, 30))
        probs[0] = 1.0
        probs[:, 5:7] = 0.0
        probs[1, 5:7] = 1.0
        found = extract_indices(probs, mode="classification")
        assert found.rejected and found.es_indices == []

    def test_agrees_with_brute_force_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            n = int(rng.integers(3, 65))
            probs = rng.dirichlet(np.ones(3), size=n).T
            found = extract_indices(probs, mode="classification")
            es, ed = brute_force_classification(probs)
            assert found.es_indices == es
            assert found.ed_indices == ed


class TestNearestMatch:
    def test_spec_example(self):
        dist, matched = nearest_match([29, 47], 45)
        assert dist == 2.0 and matched == 47

    def test_exact_match(self):
        dist, matched = nearest_match([45], 45)
        assert dist == 0.0 and matched == 45

    def test_far_beat_selected_when_only_one(self):
        dist, matched = nearest_match([518], 129)
        assert dist == 389.0 and matched == 518

    def test_agrees_with_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            preds = sorted(rng.integers(0, 64, size=rng.integers(1, 8)).tolist())
            gt = int(rng.integers(0, 64))
            dist, matched = nearest_match(preds, gt)
            best = min(abs(p - gt) for p in preds)
            assert dist == best
            assert abs(matched - gt) == best


class TestEFMetrics:
    def test_perfect(self):
        mae, rmse, r2 = ef_metrics([(50.0, 50.0), (60.0, 60.0), (70.0, 70.0)])
        assert (mae, rmse, r2) == (0.0, 0.0, 1.0)

    def test_single_pair_mae(self):
        mae, rmse, r2 = ef_metrics([(58.24, 56.25)])
        assert mae == pytest.approx(1.99, abs=1e-9)

    def test_zero_variance_r2_missing(self):
        mae, rmse, r2 = ef_metrics([(50.0, 60.0), (70.0, 60.0)])
        assert mae == 10.0 and rmse == 10.0 and r2 is None

    def test_rmse_dominates_mae(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n = int(rng.integers(2, 20))
            pairs = [(float(a), float(b))
                     for a, b in rng.uniform(10, 90, size=(n, 2))]
            mae, rmse, _ = ef_metrics(pairs)
            assert rmse >= mae >= 0.0


class TestHeartRate:
    def test_one_second_spacing(self):
        assert heart_rate([10, 60, 110], fps=50.0) == pytest.approx(60.0)

    def test_slow(self):
        assert heart_rate([0, 120], fps=25.0) == pytest.approx(12.5)

    def test_single_ed_missing(self):
        assert heart_rate([42], fps=50.0) is None

    def test_shift_invariant(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            eds = np.cumsum(rng.integers(5, 40, size=4)).tolist()
            shift = int(rng.integers(0, 100))
            a = heart_rate(eds, 30.0)
            b = heart_rate([e + shift for e in eds], 30.0)
            assert a == pytest.approx(b)


class TestLVEF:
    def test_standard_definition(self):
        assert lvef_from_volumes(100.0, 40.0, "EDV") == pytest.approx(60.0)

    def test_alternative_denominator(self):
        assert lvef_from_volumes(100.0, 40.0, "ESV") == pytest.approx(150.0)

    def test_default_is_edv(self):
        assert lvef_from_volumes(100.0, 40.0) == pytest.approx(60.0)

    def test_degenerate_volumes_rejected(self):
        with pytest.raises(ValidationError):
            lvef_from_volumes(40.0, 40.0)
        with pytest.raises(ValidationError):
            lvef_from_volumes(40.0, -1.0)


class TestReport:
    def _rows(self):
        return [
            VideoResult(video_id="a", pred_es=10, pred_ed=20, gt_es=11, gt_ed=20,
                        afd_es=1.0, afd_ed=0.0, ef_pred=55.0, ef_gt=50.0,
                        rejected=False, multi_beat=True, bpm=60.0),
            VideoResult(video_id="b", pred_es=None, pred_ed=None, gt_es=5, gt_ed=15,
                        afd_es=None, afd_ed=None, ef_pred=52.0, ef_gt=60.0,
                        rejected=True),
        ]

    def test_summary_counts(self):
        report = summarize(self._rows())
        assert report.rejected_count == 1
        assert report.multi_beat_count == 1
        assert report.afd_es == 1.0 and report.afd_ed == 0.0
        assert report.rmse >= report.mae >= 0.0

    def test_afd_std_is_distance_spread(self):
        mean, std = afd_summary([1.0, 3.0])
        assert mean == 2.0 and std == 1.0

    def test_csv_row_per_video_plus_summary(self):
        report = summarize(self._rows())
        text = report_to_csv(report)
        lines = text.strip().splitlines()
        assert len(lines) == 1 + 2 + 1          # header, rows, summary
        assert lines[0].startswith("id,")
        assert lines[-1].startswith("SUMMARY")
        assert ",1" in lines[2]                 # rejected flag for video b
