"""Command-line entry point: ``vcmr <subcommand> ...``.

Every subcommand exits with status 2 on a validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import embeddings, ensemble, evaluation, reader, retriever, segmenter, synthetic
from .errors import VcmrError
from .runs import read_run, write_run

log = logging.getLogger("vcmr")


def _segment_config(args) -> segmenter.SegmentConfig:
    if args.preset:
        return segmenter.preset(args.preset)
    if args.config:
        return segmenter.load_config(args.config)
    raise VcmrError("give --config or --preset")


def cmd_segment(args) -> None:
    config = _segment_config(args)
    durations = segmenter.read_durations(args.durations)
    segments = segmenter.segment_corpus(durations, config)
    segmenter.write_segments(args.out, segments)
    log.info("wrote %d segments for %d videos to %s", len(segments), len(durations), args.out)
    if args.annotations:
        anns = [a for a in evaluation.read_annotations(args.annotations) if a.span is not None]
        frac = segmenter.coverage(segments, anns, args.threshold)
        print(json.dumps({"segments": len(segments), "coverage": frac, "tiou_threshold": args.threshold}))


def cmd_index(args) -> None:
    store = embeddings.load_store(args.embeddings, args.format)
    if args.videos:
        index = retriever.SegmentIndex.from_videos(segmenter.read_durations(args.videos), store)
    elif args.segments:
        index = retriever.SegmentIndex.from_segments(segmenter.read_segments(args.segments), store)
    else:
        raise VcmrError("give --segments (moment retrieval) or --videos (video retrieval)")
    retriever.write_index(index, args.out)
    log.info("indexed %d entries of dimension %d", len(index), index.dimension)


def cmd_search(args) -> None:
    queries = embeddings.load_store(args.queries, args.format, kind="query")
    index = retriever.read_index(args.index)
    run = retriever.search_run(queries, index, args.k, workers=args.workers)
    write_run(args.out, run)


def cmd_fuse(args) -> None:
    cfg = reader.FusionConfig()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = reader.FusionConfig.from_dict(json.load(fh))
    refined = reader.refine_run(read_run(args.run), reader.read_logits(args.logits), cfg)
    write_run(args.out, refined)


def cmd_ensemble(args) -> None:
    weights = ensemble.EnsembleWeights(args.alpha, args.beta)
    merged = ensemble.merge_rerank(read_run(args.run_a), read_run(args.run_b), weights, args.normalize)
    if args.depth:
        merged = {q: moments[: args.depth] for q, moments in merged.items()}
    write_run(args.out, merged)


def _eval_config(args) -> evaluation.EvalConfig:
    return evaluation.EvalConfig(tuple(args.ks), args.threshold, args.task)


def _load_grid(path: str | None) -> list[ensemble.EnsembleWeights] | None:
    if path is None:
        return None
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict) and "steps" in data:
        return ensemble.default_grid(int(data["steps"]))
    points = data["points"] if isinstance(data, dict) else data
    return [ensemble.EnsembleWeights(float(a), float(b)) for a, b in points]


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_grid_search(args) -> None:
    annotations = evaluation.read_annotations(args.annotations)
    config = _eval_config(args)
    run_a, run_b = read_run(args.run_a), read_run(args.run_b)
    scores = ensemble.grid_scores(run_a, run_b, annotations, _load_grid(args.grid), config, args.normalize, args.workers)
    best, value = ensemble.select_best(scores)
    report = {
        "alpha": best.alpha,
        "beta": best.beta,
        "average_recall": value,
        "grid": [{"alpha": w.alpha, "beta": w.beta, "average_recall": v} for w, v in scores],
    }
    _emit(json.dumps(report, indent=2) + "\n", args.out)


def cmd_eval(args) -> None:
    run = read_run(args.run)
    annotations = evaluation.read_annotations(args.annotations)
    report = evaluation.evaluate(run, annotations, _eval_config(args), args.ranks)
    _emit(report.to_json(), args.out)


def cmd_gen_synthetic(args) -> None:
    spec = synthetic.SyntheticSpec.load(args.spec) if args.spec else synthetic.SyntheticSpec()
    overrides = {"seed": args.seed, "noise": args.noise}
    spec = synthetic.SyntheticSpec.from_dict({**spec.__dict__, **{k: v for k, v in overrides.items() if v is not None}})
    corpus = synthetic.generate_synthetic(spec)
    synthetic.write_corpus(corpus, args.out)
    log.info("wrote %d videos, %d segments, %d queries to %s", len(corpus.durations), len(corpus.segments), len(corpus.annotations), args.out)


def cmd_fuse_embeddings(args) -> None:
    pre = embeddings.load_store(args.precomputed, kind="visual_precomputed")
    raw = embeddings.load_store(args.raw, kind="visual_raw") if args.raw else None
    sub = embeddings.load_store(args.subtitle, kind="subtitle") if args.subtitle else None
    embeddings.save_store(embeddings.fuse_stores(pre, raw, sub), args.out)


def _add_eval_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--task", choices=evaluation.TASKS, default="VCMR")
    p.add_argument("--threshold", type=float, default=0.7, help="tIoU a VCMR hit must exceed")
    p.add_argument("--ks", type=int, nargs="+", default=[1, 5, 10])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vcmr", description="Segment-level video corpus moment retrieval toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="cut videos into fixed-length strided segments")
    p.add_argument("--durations", required=True, help='JSONL of {"video_id", "duration"}')
    p.add_argument("--config", help='JSON {"lengths": [...], "strides": [...]}')
    p.add_argument("--preset", choices=sorted(segmenter.PRESETS))
    p.add_argument("--annotations", help="also report coverage of these annotations")
    p.add_argument("--threshold", type=float, default=0.7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("index", help="build a search index from embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--format", choices=["binary", "jsonl"])
    group = p.add_mutually_exclusive_group()
    group.add_argument("--segments", help="segment manifest (moment retrieval)")
    group.add_argument("--videos", help="duration manifest (whole-video retrieval)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="exact top-k cosine search")
    p.add_argument("--queries", required=True)
    p.add_argument("--format", choices=["binary", "jsonl"])
    p.add_argument("--index", required=True)
    p.add_argument("-k", type=int, default=100)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("fuse", help="refine a run with reader logits")
    p.add_argument("--run", required=True)
    p.add_argument("--logits", required=True)
    p.add_argument("--config", help="JSON fusion config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("ensemble", help="merge two runs with weights alpha, beta")
    p.add_argument("--run-a", required=True)
    p.add_argument("--run-b", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--normalize", choices=ensemble.NORMALIZATIONS, default="minmax_per_query")
    p.add_argument("--depth", type=int, help="keep only the top DEPTH moments per query")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("grid-search", help="pick ensemble weights on validation annotations")
    p.add_argument("--run-a", required=True)
    p.add_argument("--run-b", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--grid", help='JSON list of [alpha, beta] pairs, or {"steps": n}')
    p.add_argument("--normalize", choices=ensemble.NORMALIZATIONS, default="minmax_per_query")
    p.add_argument("--workers", type=int, default=1)
    _add_eval_options(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_grid_search)

    p = sub.add_parser("eval", help="Recall@k report for a run")
    p.add_argument("--run", required=True)
    p.add_argument("--annotations", required=True)
    _add_eval_options(p)
    p.add_argument("--ranks", type=int, nargs="+", help="per-dataset leaderboard ranks to average")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-synthetic", help="write a synthetic corpus with planted ground truth")
    p.add_argument("--spec", help="TOML or JSON spec file")
    p.add_argument("--seed", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("fuse-embeddings", help="precomputed + raw visual + subtitle -> video encoding")
    p.add_argument("--precomputed", required=True)
    p.add_argument("--raw")
    p.add_argument("--subtitle")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse_embeddings)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (VcmrError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"vcmr {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
