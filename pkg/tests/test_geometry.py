from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from ffprid.errors import ValidationError
from ffprid.geometry import (
    BoundingBox,
    DetectionRecord,
    GroundTruthBox,
    average_precision,
    evaluate_detections,
    f1_score,
    iou,
    match_detections,
    precision_recall_f1,
)


def det(frame, det_index, box, confidence=0.9):
    return DetectionRecord(frame=frame, det_index=det_index, bbox=box,
                           confidence=confidence)


@st.composite
def boxes(draw):
    ulx = draw(st.floats(-100, 100, allow_nan=False))
    uly = draw(st.floats(-100, 100, allow_nan=False))
    w = draw(st.floats(0.5, 100, allow_nan=False))
    h = draw(st.floats(0.5, 100, allow_nan=False))
    return BoundingBox(ulx, uly, ulx + w, uly + h)


class TestIou:
    def test_identical_boxes(self):
        b = BoundingBox(3, 4, 10, 12)
        assert iou(b, b) == 1.0

    def test_disjoint_boxes(self):
        assert iou(BoundingBox(0, 0, 5, 5), BoundingBox(10, 10, 20, 20)) == 0.0

    def test_half_overlap(self):
        # intersection 50, union 150
        a = BoundingBox(0, 0, 10, 10)
        b = BoundingBox(5, 0, 15, 10)
        assert iou(a, b) == pytest.approx(1 / 3, abs=1e-9)

    def test_invalid_box_rejected(self):
        with pytest.raises(ValidationError):
            BoundingBox(5, 0, 5, 10)
        with pytest.raises(ValidationError):
            BoundingBox(0, 10, 5, 2)

    @given(a=boxes(), b=boxes())
    def test_symmetric_and_bounded(self, a, b):
        v = iou(a, b)
        assert 0.0 <= v <= 1.0
        assert v == iou(b, a)

    @given(a=boxes(), b=boxes(),
           dx=st.floats(-50, 50, allow_nan=False),
           dy=st.floats(-50, 50, allow_nan=False))
    def test_translation_invariant(self, a, b, dx, dy):
        def shift(box):
            return BoundingBox(box.ulx + dx, box.uly + dy,
                               box.brx + dx, box.bry + dy)
        assert iou(a, b) == pytest.approx(iou(shift(a), shift(b)), abs=1e-9)


class TestMatching:
    def test_perfect_overlap_matches(self):
        gt = [GroundTruthBox("p1", BoundingBox(0, 0, 10, 10))]
        m = match_detections([det(0, 0, BoundingBox(0, 0, 10, 10))], gt, 0.5)
        assert len(m.pairs) == 1
        assert m.unmatched_detections == ()
        assert m.unmatched_ground_truths == ()

    def test_one_to_one_keeps_higher_confidence(self):
        gt = [GroundTruthBox("p1", BoundingBox(0, 0, 10, 10))]
        exact = det(0, 0, BoundingBox(0, 0, 10, 10), confidence=0.9)
        close = det(0, 1, BoundingBox(0, 0, 10, 14), confidence=0.8)  # IoU ~0.71
        m = match_detections([exact, close], gt, 0.5)
        assert [p.det_index for p in m.pairs] == [0]
        assert m.unmatched_detections == (1,)

    def test_below_threshold_is_fp_and_fn(self):
        gt = [GroundTruthBox("p1", BoundingBox(0, 0, 10, 10))]
        # IoU 0.4: intersection 40 of union 100
        far = det(0, 0, BoundingBox(0, 6, 10, 16))
        m = match_detections([far], gt, 0.5)
        assert m.pairs == ()
        assert m.unmatched_detections == (0,)
        assert m.unmatched_ground_truths == (0,)

    def test_mixed_frames_rejected(self):
        with pytest.raises(ValidationError):
            match_detections(
                [det(0, 0, BoundingBox(0, 0, 5, 5)), det(1, 0, BoundingBox(0, 0, 5, 5))],
                [], 0.5,
            )

    def test_matching_is_one_to_one(self):
        gt = [GroundTruthBox("p1", BoundingBox(0, 0, 10, 10)),
              GroundTruthBox("p2", BoundingBox(8, 0, 18, 10))]
        dets = [det(0, i, BoundingBox(0.5 * i, 0, 10 + 0.5 * i, 10), 0.9 - 0.1 * i)
                for i in range(3)]
        m = match_detections(dets, gt, 0.3)
        assert len({p.det_index for p in m.pairs}) == len(m.pairs)
        assert len({p.gt_index for p in m.pairs}) == len(m.pairs)


class TestPrecisionRecallF1:
    def test_paper_f1_identities(self):
        assert f1_score(0.462, 0.866) == pytest.approx(0.603, abs=1e-3)
        assert f1_score(0.761, 0.824) == pytest.approx(0.791, abs=1e-3)

    def test_zero_tp_degenerate(self):
        gt = [GroundTruthBox("p1", BoundingBox(0, 0, 10, 10))]
        m = match_detections([det(0, 0, BoundingBox(50, 50, 60, 60))], gt, 0.5)
        report = precision_recall_f1([m])
        assert (report.precision, report.recall, report.f1) == (0.0, 0.0, 0.0)

    def test_empty_input_is_flagged(self):
        report = precision_recall_f1([])
        assert set(report.zero_division) == {"precision", "recall"}

    @given(p=st.floats(0, 1, allow_nan=False), r=st.floats(0, 1, allow_nan=False))
    def test_f1_bounded_by_max(self, p, r):
        f1 = f1_score(p, r)
        assert 0.0 <= f1 <= max(p, r) + 1e-12


class TestAveragePrecision:
    def test_single_true_positive(self):
        assert average_precision([True], 1) == 1.0

    def test_tp_then_fp(self):
        # recall 1 already reached at precision 1
        assert average_precision([True, False], 1) == 1.0

    def test_fp_then_tp(self):
        assert average_precision([False, True], 1) == 0.5

    def test_no_ground_truth_is_undefined(self):
        assert average_precision([False], 0) is None

    def test_no_detections(self):
        assert average_precision([], 3) == 0.0

    @given(st.lists(st.booleans(), max_size=30), st.integers(1, 10))
    def test_bounded(self, labels, extra_gt):
        total_gt = sum(labels) + extra_gt
        ap = average_precision(labels, total_gt)
        assert 0.0 <= ap <= 1.0

    @given(st.lists(st.booleans(), min_size=1, max_size=30))
    def test_trailing_false_positive_never_raises_ap(self, labels):
        total_gt = max(1, sum(labels))
        assert average_precision(labels + [False], total_gt) <= average_precision(
            labels, total_gt
        )


class TestEvaluateDetections:
    def test_perfect_detector(self):
        gt_frames = {
            f: [GroundTruthBox("p1", BoundingBox(f, 0, f + 10, 20))]
            for f in range(5)
        }
        dets = [det(f, 0, BoundingBox(f, 0, f + 10, 20)) for f in range(5)]
        report = evaluate_detections(dets, gt_frames, 0.5)
        assert report.precision == report.recall == report.f1 == 1.0
        assert report.ap == 1.0

    def test_missed_frames_count_as_false_negatives(self):
        gt_frames = {
            f: [GroundTruthBox("p1", BoundingBox(0, 0, 10, 20))] for f in range(4)
        }
        dets = [det(0, 0, BoundingBox(0, 0, 10, 20))]
        report = evaluate_detections(dets, gt_frames, 0.5)
        assert report.true_positives == 1
        assert report.false_negatives == 3
        assert report.recall == 0.25

    def test_ap_invariant_under_monotone_confidence_rescale(self):
        gt_frames = {0: [GroundTruthBox("p1", BoundingBox(0, 0, 10, 20))]}
        dets = [
            det(0, 0, BoundingBox(0, 0, 10, 20), confidence=0.9),
            det(0, 1, BoundingBox(40, 40, 50, 60), confidence=0.4),
        ]
        rescaled = [
            DetectionRecord(d.frame, d.det_index, d.bbox, d.confidence**2)
            for d in dets
        ]
        assert (
            evaluate_detections(dets, gt_frames, 0.5).ap
            == evaluate_detections(rescaled, gt_frames, 0.5).ap
        )
