"""Command-line entry point.

Subcommands: segment, eval-detect, eval-cmc, run, sweep, synth, oracle,
serve. Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .cmc import RankedQueryResult, cmc
from .core import EvalParams
from .dataio import (
    label_gallery,
    full_frame_boxes,
    parse_detections,
    parse_ground_truth,
    parse_scores,
    derive_total_frames,
    segment_timeline,
)
from .engine import (
    beta_grid,
    export_sweep_csv,
    load_run_results,
    run_pipeline,
    sweep,
    write_run_results,
)
from .errors import ValidationError
from .geometry import evaluate_detections, precision_recall_points
from .oracle import brute_force_metrics
from .synth import SyntheticWorldConfig, generate_synthetic_world, write_world


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are validation errors (exit 1)
        raise ValidationError(message)


def _ids(text: str) -> list[str]:
    values = [v.strip() for v in text.split(",") if v.strip()]
    if not values:
        raise ValidationError(f"empty id list: {text!r}")
    return values


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"expected comma-separated integers, got {text!r}") from exc


def _single(values: list[int], flag: str) -> int:
    if len(values) != 1:
        raise ValidationError(f"{flag} takes exactly one value here, got {values}")
    return values[0]


def _metric_str(metric) -> str:
    return f"{metric.value:.6g}" if metric.defined else "undefined"


def _out_or_stdout(path, lines):
    text = "\n".join(lines) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _load_inputs(args):
    tracks = parse_ground_truth(args.gt)
    detections = parse_detections(args.detections)
    scores = parse_scores(args.scores)
    return tracks, detections, scores


def cmd_segment(args) -> int:
    tau = _single(args.tau, "--tau")
    if args.frames is not None:
        total = args.frames
    elif args.gt:
        total = derive_total_frames(parse_ground_truth(args.gt))
    else:
        raise ValidationError("segment needs --frames or --gt")
    segments = segment_timeline(total, tau)
    lines = ["index,start_frame,end_frame"]
    lines += [f"{s.index},{s.start_frame},{s.end_frame}" for s in segments]
    _out_or_stdout(args.out, lines)
    return 0


def cmd_eval_detect(args) -> int:
    tracks = parse_ground_truth(args.gt)
    detections = parse_detections(args.detections)
    report = evaluate_detections(
        detections, full_frame_boxes(tracks), args.iou_threshold
    )
    ap = f"{report.ap:.6g}" if report.ap is not None else ""
    lines = [
        "precision,recall,f1,ap,tp,fp,fn",
        f"{report.precision:.6g},{report.recall:.6g},{report.f1:.6g},{ap},"
        f"{report.true_positives},{report.false_positives},{report.false_negatives}",
    ]
    _out_or_stdout(args.out, lines)
    print(
        f"precision={report.precision:.4f} recall={report.recall:.4f} "
        f"f1={report.f1:.4f} ap={ap or 'undefined'}",
        file=sys.stderr,
    )
    if args.figures:
        if not args.out:
            raise ValidationError("--figures needs --out to name the image file")
        from .figures import save_pr_figure

        total_gt = report.true_positives + report.false_negatives
        points = precision_recall_points(report.ranked_tp_labels, total_gt)
        out = Path(args.out)
        figure = save_pr_figure(points, report.ap, out.with_suffix(".png"))
        print(f"wrote {figure}", file=sys.stderr)
    return 0


def cmd_eval_cmc(args) -> int:
    tracks, detections, scores = _load_inputs(args)
    labeled, coverage = label_gallery(detections, tracks, args.iou_threshold)
    label_of = {item.item_id: item.true_identity for item in labeled}
    dangling = sorted({s.item_id for s in scores if s.item_id not in label_of})
    if dangling:
        raise ValidationError(
            f"scores reference unknown detections: {', '.join(dangling[:10])}"
        )
    by_query: dict[str, list[tuple[str, float]]] = {}
    for record in scores:
        by_query.setdefault(record.query_id, []).append(
            (record.item_id, record.similarity)
        )
    queries = args.queries if args.queries else list(by_query)
    results = []
    for query in queries:
        entries = by_query.get(query)
        if not entries:
            raise ValidationError(f"query {query}: no similarity records")
        entries = sorted(entries, key=lambda e: _item_key(e[0]))
        results.append(
            RankedQueryResult.from_scores(
                query, [(label_of[item_id], sim) for item_id, sim in entries]
            )
        )
    max_rank = args.max_rank
    if max_rank is None:
        max_rank = min(20, min(len(r.ranked_gallery) for r in results))
    curve = cmc(results, max_rank)
    if not curve.defined:
        raise ValidationError("no queries to evaluate")
    lines = ["k,cmc_k"]
    lines += [f"{k},{v:.6g}" for k, v in enumerate(curve.values, start=1)]
    _out_or_stdout(args.out, lines)
    if curve.never_matched:
        print(
            f"warning: {len(curve.never_matched)} queries never matched: "
            f"{', '.join(curve.never_matched)}",
            file=sys.stderr,
        )
    if coverage.unlabelable:
        print(
            f"warning: {coverage.unlabelable} detections unlabelable "
            "(compact ground truth)",
            file=sys.stderr,
        )
    print(
        f"rank-1 {curve.values[0]:.4f}, rank-{max_rank} {curve.values[-1]:.4f} "
        f"over {curve.num_queries} queries",
        file=sys.stderr,
    )
    if args.figures:
        if not args.out:
            raise ValidationError("--figures needs --out to name the image file")
        from .figures import save_cmc_figure

        figure = save_cmc_figure(curve, Path(args.out).with_suffix(".png"))
        print(f"wrote {figure}", file=sys.stderr)
    return 0


def _item_key(item_id: str):
    # "f{frame}_d{det}" -> (frame, det); unparsable ids sort last
    try:
        frame_part, det_part = item_id.split("_")
        return (int(frame_part[1:]), int(det_part[1:]))
    except (ValueError, IndexError):
        return (1 << 40, 0)


def cmd_run(args) -> int:
    tracks, detections, scores = _load_inputs(args)
    params = EvalParams(
        tau=_single(args.tau, "--tau"), beta=args.beta,
        eta=_single(args.eta, "--eta"),
    )
    result = run_pipeline(
        tracks, detections, scores, args.queries, params,
        iou_threshold=args.iou_threshold, total_frames=args.frames,
    )
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    c = result.counts
    print(
        f"tc={c.tc} tmc={c.tmc} fs={c.fs} fc={c.fc} ts={c.ts} "
        f"fr={_metric_str(result.fr)} tvr={_metric_str(result.tvr)}"
    )
    if args.out:
        write_run_results(result, args.out)
        print(f"wrote {args.out}", file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    tracks, detections, scores = _load_inputs(args)
    betas = beta_grid(args.beta_start, args.beta_end, args.beta_steps)
    results = sweep(
        tracks, detections, scores, args.queries,
        tau_values=args.tau, eta_values=args.eta, beta_values=betas,
        iou_threshold=args.iou_threshold, total_frames=args.frames,
        workers=args.workers,
    )
    export_sweep_csv(results, args.out)
    print(f"wrote {len(results)} rows to {args.out}", file=sys.stderr)
    if args.figures:
        from .figures import save_sweep_figures

        base = Path(args.out)
        written = save_sweep_figures(results, base.parent / base.stem)
        for path in written:
            print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_synth(args) -> int:
    if args.config:
        config = SyntheticWorldConfig.from_json(args.config)
        if args.seed is not None:
            config = SyntheticWorldConfig.from_dict(
                {**config.to_dict(), "seed": args.seed}
            )
    elif args.seed is not None:
        config = SyntheticWorldConfig(seed=args.seed)
    else:
        raise ValidationError("synth needs --config or --seed")
    world = generate_synthetic_world(config)
    paths = write_world(world, args.out)
    print(
        f"world: {len(world.tracks)} tracks, {len(world.detections)} detections, "
        f"{len(world.scores)} scores, queries: {','.join(world.queries)}",
        file=sys.stderr,
    )
    for path in (paths.ground_truth, paths.detections, paths.scores, paths.config):
        print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_oracle(args) -> int:
    params = EvalParams(
        tau=_single(args.tau, "--tau"), beta=args.beta,
        eta=_single(args.eta, "--eta"),
    )
    lines = ["query_id,tc,tmc,fs,fc,ts,fr,tvr"]
    total = None
    for query in args.queries:
        counts, fr, tvr = brute_force_metrics(
            args.gt, args.detections, args.scores, query, params,
            iou_threshold=args.iou_threshold, total_frames=args.frames,
        )
        total = counts if total is None else total + counts
        lines.append(
            f"{query},{counts.tc},{counts.tmc},{counts.fs},{counts.fc},{counts.ts},"
            f"{_fmt_metric_csv(fr)},{_fmt_metric_csv(tvr)}"
        )
    from .core import finding_rate, true_validation_rate

    lines.append(
        f"ALL,{total.tc},{total.tmc},{total.fs},{total.fc},{total.ts},"
        f"{_fmt_metric_csv(finding_rate(total))},"
        f"{_fmt_metric_csv(true_validation_rate(total))}"
    )
    _out_or_stdout(args.out, lines)
    return 0


def _fmt_metric_csv(metric) -> str:
    return f"{metric.value:.6g}" if metric.defined else ""


def cmd_serve(args) -> int:
    import uvicorn

    from .service import AlertQueue, create_app

    result = load_run_results(args.results)
    queue = AlertQueue(
        result, replay_speed=args.replay_speed, audit_path=args.audit_log
    )
    crops_root = args.crops or Path(args.results).parent
    app = create_app(queue, crops_root=crops_root, static_dir=args.static)
    alerts = len(queue.alerts())
    print(
        f"replaying {queue.result.counts.alerts} alerts "
        f"({alerts} visible now) on port {args.port}",
        file=sys.stderr,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ffprid", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(p, gt=True, detections=True, scores=True):
        if gt:
            p.add_argument("--gt", required=True, help="ground-truth file (CSV or JSONL)")
        if detections:
            p.add_argument("--detections", required=True, help="detections JSONL")
        if scores:
            p.add_argument("--scores", required=True, help="similarity scores JSONL")
        p.add_argument("--iou-threshold", type=float, default=0.5,
                       help="IoU threshold for matching/labeling (default 0.5)")

    def add_universe(p):
        p.add_argument("--frames", type=int, default=None,
                       help="total frame count (default: derived from the data)")

    p = sub.add_parser("segment", help="emit the segment table for a tau")
    p.add_argument("--tau", type=_ints, required=True)
    p.add_argument("--gt")
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval-detect", help="detection precision/recall/F1/AP")
    add_io(p, scores=False)
    p.add_argument("--out")
    p.add_argument("--figures", action="store_true",
                   help="also render a precision/recall figure next to --out")
    p.set_defaults(func=cmd_eval_detect)

    p = sub.add_parser("eval-cmc", help="CMC curve over labeled galleries")
    add_io(p)
    p.add_argument("--queries", type=_ids, default=None)
    p.add_argument("--max-rank", type=int, default=None)
    p.add_argument("--out")
    p.add_argument("--figures", action="store_true",
                   help="also render the CMC curve next to --out")
    p.set_defaults(func=cmd_eval_cmc)

    p = sub.add_parser("run", help="single (tau, beta, eta) evaluation")
    add_io(p)
    add_universe(p)
    p.add_argument("--queries", type=_ids, required=True)
    p.add_argument("--tau", type=_ints, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--eta", type=_ints, required=True)
    p.add_argument("--out", help="write replayable run results JSON here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="full (tau, beta, eta) grid to CSV")
    add_io(p)
    add_universe(p)
    p.add_argument("--queries", type=_ids, required=True)
    p.add_argument("--tau", type=_ints, required=True)
    p.add_argument("--eta", type=_ints, required=True)
    p.add_argument("--beta-start", type=float, required=True)
    p.add_argument("--beta-end", type=float, required=True)
    p.add_argument("--beta-steps", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--figures", action="store_true",
                   help="also render FR/TVR curves per tau next to --out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="generate a synthetic world")
    p.add_argument("--config", help="world config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("oracle", help="brute-force cross-check of a run")
    add_io(p)
    add_universe(p)
    p.add_argument("--queries", type=_ids, required=True)
    p.add_argument("--tau", type=_ints, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--eta", type=_ints, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("serve", help="replay a run as a live alert queue")
    p.add_argument("--results", required=True, help="run results JSON (from run --out)")
    p.add_argument("--port", type=int, default=8707)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--replay-speed", type=float, default=0.0,
                   help="frames per wall-second; 0 enqueues everything immediately")
    p.add_argument("--crops", help="directory crop references resolve against")
    p.add_argument("--static", help="serve this directory (the console) at /")
    p.add_argument("--audit-log", help="append operator decisions to this JSONL file")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
