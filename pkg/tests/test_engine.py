from __future__ import annotations

import random

import pytest

from ffprid.core import EvalParams, MetricValue, Outcome, OutcomeCounts
from ffprid.dataio import ScoreRecord
from ffprid.engine import (
    SweepResult,
    beta_grid,
    export_sweep_csv,
    load_run_results,
    parse_sweep_csv,
    run_pipeline,
    sweep,
    write_run_results,
)
from ffprid.errors import ValidationError
from ffprid.oracle import brute_force_metrics, brute_force_world
from ffprid.synth import SyntheticWorldConfig, generate_synthetic_world, write_world


def make_world(seed=5, **overrides):
    base = dict(
        seed=seed,
        total_frames=240,
        num_identities=6,
        miss_rate=0.2,
        false_positive_rate=0.5,
        box_jitter=3.0,
        match_similarity=(0.4, 0.95),
        nonmatch_similarity=(0.2, 0.75),
    )
    base.update(overrides)
    return generate_synthetic_world(SyntheticWorldConfig(**base))


@pytest.fixture(scope="module")
def world():
    return make_world()


class TestRunPipeline:
    def test_partition_over_queries_and_segments(self, world):
        params = EvalParams(tau=25, beta=0.6, eta=2)
        result = run_pipeline(
            world.tracks, world.detections, world.scores, world.queries,
            params, total_frames=world.config.total_frames,
        )
        n_segments = -(-world.config.total_frames // params.tau)
        assert result.counts.total == len(world.queries) * n_segments
        assert len(result.segment_results) == result.counts.total

    def test_beta_above_all_scores_silences_everything(self, world):
        result = run_pipeline(
            world.tracks, world.detections, world.scores, world.queries,
            EvalParams(tau=25, beta=1.0, eta=2),
            total_frames=world.config.total_frames,
        )
        assert result.counts.alerts == 0
        assert not result.tvr.defined
        assert result.fr.value == 0.0  # queries do appear somewhere

    def test_huge_eta_prevents_missed_calls_for_perfect_separation(self):
        world = make_world(
            miss_rate=0.0, false_positive_rate=0.0, box_jitter=0.0,
            match_similarity=(0.7, 1.0), nonmatch_similarity=(0.0, 0.6),
        )
        result = run_pipeline(
            world.tracks, world.detections, world.scores, world.queries,
            EvalParams(tau=20, beta=0.65, eta=10_000),
            total_frames=world.config.total_frames,
        )
        assert result.counts.tmc == 0

    def test_dangling_score_reference_rejected(self, world):
        scores = list(world.scores) + [ScoreRecord("p001", "f9999_d0", 0.5)]
        with pytest.raises(ValidationError, match="f9999_d0"):
            run_pipeline(
                world.tracks, world.detections, scores, world.queries,
                EvalParams(tau=25, beta=0.6, eta=2),
            )

    def test_query_without_scores_warns_and_runs(self, world):
        kept = [s for s in world.scores if s.query_id != "p001"]
        result = run_pipeline(
            world.tracks, world.detections, kept, world.queries,
            EvalParams(tau=25, beta=0.6, eta=2),
            total_frames=world.config.total_frames,
        )
        assert any("p001" in w and "no similarity records" in w
                   for w in result.warnings)

    def test_missing_similarities_excluded_with_warning(self, world):
        kept = [s for s in world.scores if s.item_id != world.detections[0].item_id]
        result = run_pipeline(
            world.tracks, world.detections, kept, world.queries,
            EvalParams(tau=25, beta=0.6, eta=2),
            total_frames=world.config.total_frames,
        )
        assert any("lacked similarity scores" in w for w in result.warnings)

    def test_trackless_query_warns_and_counts_as_absent(self, world):
        result = run_pipeline(
            world.tracks, world.detections, world.scores,
            list(world.queries) + ["ghost"],
            EvalParams(tau=25, beta=1.0, eta=1),
            total_frames=world.config.total_frames,
        )
        assert any("ghost" in w and "no ground-truth track" in w
                   for w in result.warnings)
        ghost_outcomes = {
            r.outcome for r in result.segment_results if r.query_id == "ghost"
        }
        assert ghost_outcomes == {Outcome.TRUE_SILENCE}

    def test_reserved_query_identity_rejected(self, world):
        with pytest.raises(ValidationError, match="reserved"):
            run_pipeline(
                world.tracks, world.detections, world.scores, ["unknown"],
                EvalParams(tau=25, beta=0.6, eta=2),
            )

    def test_results_json_round_trip(self, world, tmp_path):
        result = run_pipeline(
            world.tracks, world.detections, world.scores, world.queries[:2],
            EvalParams(tau=40, beta=0.6, eta=3),
            total_frames=world.config.total_frames,
        )
        path = tmp_path / "run.json"
        write_run_results(result, path)
        loaded = load_run_results(path)
        assert loaded == result


class TestOracleEquivalence:
    def test_counts_match_brute_force(self, world, tmp_path):
        paths = write_world(world, tmp_path)
        params = EvalParams(tau=17, beta=0.55, eta=2)
        result = run_pipeline(
            world.tracks, world.detections, world.scores, world.queries,
            params, total_frames=world.config.total_frames,
        )
        counts, fr, tvr = brute_force_world(
            paths.ground_truth, paths.detections, paths.scores, world.queries,
            params, total_frames=world.config.total_frames,
        )
        assert counts == result.counts
        assert fr == result.fr
        assert tvr == result.tvr

    def test_derived_frame_universe_matches(self, world, tmp_path):
        paths = write_world(world, tmp_path)
        params = EvalParams(tau=31, beta=0.5, eta=1)
        result = run_pipeline(
            world.tracks, world.detections, world.scores, world.queries[:2], params,
        )
        counts, _, _ = brute_force_world(
            paths.ground_truth, paths.detections, paths.scores,
            world.queries[:2], params,
        )
        assert counts == result.counts

    def test_never_present_query_has_undefined_fr(self, tmp_path):
        world = make_world(seed=9, num_identities=4)
        paths = write_world(world, tmp_path)
        # p004 exists; give the oracle a query with no track at all
        _, fr, _ = brute_force_metrics(
            paths.ground_truth, paths.detections, paths.scores, "ghost",
            EvalParams(tau=20, beta=0.5, eta=1),
            total_frames=world.config.total_frames,
        )
        assert not fr.defined

    def test_compact_ground_truth_agrees_on_presence_outcomes(self, tmp_path):
        # compact form: labels exist only on first frames, both paths must
        # agree on the unlabelable handling
        from ffprid.dataio import write_ground_truth_csv, GroundTruthTrack

        world = make_world(seed=21, box_jitter=0.0)
        compact = [
            GroundTruthTrack(t.identity, t.first_frame, t.num_frames, t.initial_box)
            for t in world.tracks
        ]
        gt_path = tmp_path / "gt.csv"
        write_ground_truth_csv(compact, gt_path)
        paths = write_world(world, tmp_path)
        params = EvalParams(tau=26, beta=0.5, eta=2)
        result = run_pipeline(
            compact, world.detections, world.scores, world.queries, params,
            total_frames=world.config.total_frames,
        )
        counts, _, _ = brute_force_world(
            gt_path, paths.detections, paths.scores, world.queries, params,
            total_frames=world.config.total_frames,
        )
        assert counts == result.counts


class TestBetaGrid:
    def test_inclusive_endpoints(self):
        grid = beta_grid(0.5, 0.98, 25)
        assert len(grid) == 25
        assert grid[0] == 0.5
        assert grid[-1] == 0.98

    def test_single_step(self):
        assert beta_grid(0.7, 0.9, 1) == [0.7]

    def test_values_survive_csv_formatting(self):
        for value in beta_grid(0.5, 0.98, 25):
            assert float(f"{value:.6g}") == value

    def test_invalid_grids_rejected(self):
        with pytest.raises(ValidationError):
            beta_grid(0.9, 0.5, 5)
        with pytest.raises(ValidationError):
            beta_grid(0.5, 1.5, 5)
        with pytest.raises(ValidationError):
            beta_grid(0.5, 0.9, 0)


class TestSweep:
    def test_grid_cardinality_and_order(self, world):
        results = sweep(
            world.tracks, world.detections, world.scores, world.queries,
            tau_values=[100, 10, 50], eta_values=[2, 1], beta_values=[0.7, 0.5],
            total_frames=world.config.total_frames,
        )
        assert len(results) == 3 * 2 * 2
        keys = [(r.tau, r.beta, r.eta) for r in results]
        assert keys == sorted(keys)

    def test_cells_match_run_pipeline(self, world):
        betas = beta_grid(0.4, 0.8, 5)
        results = sweep(
            world.tracks, world.detections, world.scores, world.queries,
            tau_values=[15, 60], eta_values=[1, 3], beta_values=betas,
            total_frames=world.config.total_frames,
        )
        rng = random.Random(0)
        for cell in rng.sample(results, 6):
            single = run_pipeline(
                world.tracks, world.detections, world.scores, world.queries,
                EvalParams(tau=cell.tau, beta=cell.beta, eta=cell.eta),
                total_frames=world.config.total_frames,
            )
            assert single.counts == cell.counts

    def test_partition_in_every_cell(self, world):
        results = sweep(
            world.tracks, world.detections, world.scores, world.queries,
            tau_values=[7, 25, 240], eta_values=[1, 2], beta_values=[0.5, 0.7],
            total_frames=world.config.total_frames,
        )
        for cell in results:
            n_segments = -(-world.config.total_frames // cell.tau)
            assert cell.counts.total == len(world.queries) * n_segments

    def test_fr_non_increasing_in_beta(self, world):
        results = sweep(
            world.tracks, world.detections, world.scores, world.queries,
            tau_values=[20], eta_values=[1, 2, 5], beta_values=beta_grid(0.3, 0.9, 13),
            total_frames=world.config.total_frames,
        )
        for eta in (1, 2, 5):
            curve = [r for r in results if r.eta == eta]
            frs = [r.fr.value for r in curve if r.fr.defined]
            assert all(a >= b for a, b in zip(frs, frs[1:]))

    def test_fr_tvr_non_decreasing_in_eta(self, world):
        results = sweep(
            world.tracks, world.detections, world.scores, world.queries,
            tau_values=[20], eta_values=[1, 2, 4, 8], beta_values=[0.45, 0.6],
            total_frames=world.config.total_frames,
        )
        for beta in (0.45, 0.6):
            curve = sorted(
                (r for r in results if r.beta == beta), key=lambda r: r.eta
            )
            frs = [r.fr.value for r in curve if r.fr.defined]
            tvrs = [r.tvr.value for r in curve if r.tvr.defined]
            assert all(a <= b for a, b in zip(frs, frs[1:]))
            assert all(a <= b for a, b in zip(tvrs, tvrs[1:]))

    def test_worker_count_does_not_change_results(self, world):
        kwargs = dict(
            tau_values=[15, 40], eta_values=[1, 3],
            beta_values=beta_grid(0.4, 0.8, 7),
            total_frames=world.config.total_frames,
        )
        serial = sweep(world.tracks, world.detections, world.scores,
                       world.queries, **kwargs)
        threaded = sweep(world.tracks, world.detections, world.scores,
                         world.queries, workers=4, **kwargs)
        assert serial == threaded


class TestSweepCsv:
    def test_example_row(self, tmp_path):
        counts = OutcomeCounts(tc=3, tmc=1, fs=1, fc=2, ts=5)
        row = SweepResult(
            tau=100, beta=0.5, eta=10, counts=counts,
            fr=MetricValue(0.6), tvr=MetricValue(0.5),
        )
        path = tmp_path / "sweep.csv"
        export_sweep_csv([row], path)
        lines = path.read_text().splitlines()
        assert lines[0] == "tau,beta,eta,tc,tmc,fs,fc,ts,fr,tvr"
        assert lines[1] == "100,0.5,10,3,1,1,2,5,0.6,0.5"

    def test_undefined_metric_serialized_empty(self, tmp_path):
        counts = OutcomeCounts(fs=3, ts=7)
        row = SweepResult(
            tau=10, beta=0.9, eta=1, counts=counts,
            fr=MetricValue(0.0), tvr=MetricValue(None),
        )
        path = tmp_path / "sweep.csv"
        export_sweep_csv([row], path)
        assert path.read_text().splitlines()[1] == "10,0.9,1,0,0,3,0,7,0,"

    def test_empty_results_error_before_writing(self, tmp_path):
        path = tmp_path / "sweep.csv"
        with pytest.raises(ValidationError):
            export_sweep_csv([], path)
        assert not path.exists()

    def test_round_trip_reproduces_results(self, world, tmp_path):
        results = sweep(
            world.tracks, world.detections, world.scores, world.queries,
            tau_values=[12, 48], eta_values=[1, 2],
            beta_values=beta_grid(0.5, 0.98, 9),
            total_frames=world.config.total_frames,
        )
        path = tmp_path / "sweep.csv"
        export_sweep_csv(results, path)
        assert parse_sweep_csv(path) == results

    def test_repeated_export_is_byte_identical(self, world, tmp_path):
        kwargs = dict(
            tau_values=[12], eta_values=[1, 2], beta_values=beta_grid(0.5, 0.9, 5),
            total_frames=world.config.total_frames,
        )
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        export_sweep_csv(
            sweep(world.tracks, world.detections, world.scores, world.queries,
                  **kwargs), a)
        export_sweep_csv(
            sweep(world.tracks, world.detections, world.scores, world.queries,
                  **kwargs), b)
        assert a.read_bytes() == b.read_bytes()

    def test_tampered_metric_field_rejected(self, tmp_path):
        path = tmp_path / "sweep.csv"
        path.write_text(
            "tau,beta,eta,tc,tmc,fs,fc,ts,fr,tvr\n"
            "10,0.5,1,3,1,1,2,5,0.9,0.5\n",  # fr should be 0.6
            encoding="utf-8",
        )
        with pytest.raises(ValidationError, match="fr"):
            parse_sweep_csv(path)
