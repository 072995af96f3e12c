from __future__ import annotations

import json

import pytest

from ffprid.core import EvalParams
from ffprid.dataio import label_gallery
from ffprid.engine import run_pipeline
from ffprid.errors import ValidationError
from ffprid.geometry import evaluate_detections
from ffprid.dataio import full_frame_boxes
from ffprid.synth import SyntheticWorldConfig, generate_synthetic_world, write_world


def perfect_config(seed=11, **overrides):
    base = dict(
        seed=seed,
        total_frames=300,
        num_identities=6,
        miss_rate=0.0,
        false_positive_rate=0.0,
        box_jitter=0.0,
        match_similarity=(0.7, 1.0),
        nonmatch_similarity=(0.0, 0.6),
    )
    base.update(overrides)
    return SyntheticWorldConfig(**base)


class TestConfig:
    def test_json_round_trip(self, tmp_path):
        config = perfect_config(queries=("p001", "p003"))
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config.to_dict()), encoding="utf-8")
        assert SyntheticWorldConfig.from_json(path) == config

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text('{"seed": 1, "frames": 100}', encoding="utf-8")
        with pytest.raises(ValidationError, match="frames"):
            SyntheticWorldConfig.from_json(path)

    def test_missing_seed_rejected(self):
        with pytest.raises(ValidationError, match="seed"):
            SyntheticWorldConfig.from_dict({"total_frames": 10})

    @pytest.mark.parametrize(
        "overrides",
        [dict(miss_rate=1.5), dict(false_positive_rate=-0.1),
         dict(box_jitter=-1.0), dict(match_similarity=(0.9, 0.2)),
         dict(nonmatch_similarity=(0.0, 1.4)), dict(total_frames=0)],
    )
    def test_invalid_values_rejected(self, overrides):
        with pytest.raises(ValidationError):
            perfect_config(**overrides)

    def test_queries_must_exist(self):
        with pytest.raises(ValidationError, match="p999"):
            generate_synthetic_world(perfect_config(queries=("p999",)))


class TestDeterminism:
    def test_same_seed_same_world(self):
        a = generate_synthetic_world(perfect_config())
        b = generate_synthetic_world(perfect_config())
        assert a.tracks == b.tracks
        assert a.detections == b.detections
        assert a.scores == b.scores

    def test_different_seed_different_world(self):
        a = generate_synthetic_world(perfect_config(seed=1))
        b = generate_synthetic_world(perfect_config(seed=2))
        assert a.detections != b.detections

    def test_files_bit_identical(self, tmp_path):
        world = generate_synthetic_world(perfect_config())
        first = write_world(world, tmp_path / "a")
        second = write_world(generate_synthetic_world(perfect_config()), tmp_path / "b")
        for name in ("ground_truth", "detections", "scores", "config"):
            assert (
                getattr(first, name).read_bytes() == getattr(second, name).read_bytes()
            )


class TestWorldShape:
    def test_perfect_detector_reproduces_ground_truth(self):
        world = generate_synthetic_world(perfect_config())
        boxes = full_frame_boxes(world.tracks)
        report = evaluate_detections(world.detections, boxes, 0.5)
        assert report.precision == report.recall == report.f1 == 1.0
        assert report.ap == 1.0

    def test_labels_match_generator_truth_without_jitter(self):
        world = generate_synthetic_world(perfect_config())
        labeled, coverage = label_gallery(world.detections, world.tracks, 0.5)
        assert coverage.unknown == coverage.unlabelable == 0
        for item, source in zip(labeled, world.detection_sources):
            assert item.true_identity == source

    def test_miss_rate_drops_detections(self):
        full = generate_synthetic_world(perfect_config())
        lossy = generate_synthetic_world(perfect_config(miss_rate=0.5))
        assert len(lossy.detections) < len(full.detections)

    def test_false_positives_have_no_source(self):
        world = generate_synthetic_world(perfect_config(false_positive_rate=0.8))
        assert any(source is None for source in world.detection_sources)

    def test_scores_cover_every_query_detection_pair(self):
        world = generate_synthetic_world(perfect_config(queries=("p001", "p002")))
        assert len(world.scores) == 2 * len(world.detections)


class TestSeparatedDistributions:
    def test_perfect_world_scores_perfectly(self):
        # match scores in [0.7, 1] vs non-match in [0, 0.6]: beta = 0.65
        # separates them exactly, so FR = TVR = 1 for any eta >= 1
        world = generate_synthetic_world(perfect_config())
        result = run_pipeline(
            world.tracks,
            world.detections,
            world.scores,
            world.queries,
            EvalParams(tau=30, beta=0.65, eta=1),
            total_frames=world.config.total_frames,
        )
        assert result.fr.value == 1.0
        assert result.tvr.value == 1.0
        assert result.counts.tmc == result.counts.fs == result.counts.fc == 0
