"""Command-line interface.

Commands: validate, replay, stats, evaluate, segment, simulate.
Exit codes: 0 success, 1 validation failures, 2 configuration error,
3 client or transport failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .evaluation import (
    MockJudgeClient,
    aggregate,
    bleu4,
    build_judge_prompt,
    cider_scores,
    corpus_metrics,
    CorpusTooSmall,
    parse_scorecard,
    rouge_l,
)
from .match_model import ScoringConfig
from .memory import LongTermMemory, MemoryEntry, consolidate
from .pipeline import ConfigError, PipelineConfig, load_dataset, replay_match
from .prompt_engine import GenerationRequest, generate, serialize_metadata
from .segmentation import ImpactEvent, SegmentationParams, cluster_impacts, filter_intervals
from .simulate import simulate_match
from .event_stream import rally_to_json

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_CLIENT = 3


def _write_output(payload, output: str | None) -> None:
    text = json.dumps(payload, indent=2, ensure_ascii=False)
    if output:
        Path(output).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _write_jsonl(rows, output: str | None) -> None:
    lines = [json.dumps(row, ensure_ascii=False) for row in rows]
    if output:
        Path(output).write_text("\n".join(lines) + ("\n" if lines else ""),
                                encoding="utf-8")
    else:
        for line in lines:
            print(line)


def _build_config(args) -> PipelineConfig:
    config = (PipelineConfig.from_file(args.config)
              if getattr(args, "config", None) else PipelineConfig())
    overrides = {}
    if getattr(args, "client", None):
        overrides["client"] = args.client
    if getattr(args, "k", None) is not None:
        overrides["memory_window"] = args.k
    if getattr(args, "token_cap", None) is not None:
        overrides["token_cap"] = args.token_cap
    if getattr(args, "log_requests", None):
        overrides["log_requests"] = args.log_requests
    if getattr(args, "best_of", None) is not None:
        overrides["scoring"] = replace(config.scoring, best_of=args.best_of)
    if overrides:
        config = replace(config, **overrides)
    return config


def _load_all(path, scoring: ScoringConfig):
    errors: list[tuple[int, str]] = []
    records = list(load_dataset(path, scoring, errors=errors))
    return records, errors


def cmd_validate(args) -> int:
    config = _build_config(args)
    records, errors = _load_all(args.input, config.scoring)
    report = {
        "input": args.input,
        "valid_records": len(records),
        "violations": [{"line": line, "message": message}
                       for line, message in errors],
    }
    _write_output(report, args.output)
    return EXIT_VALIDATION if errors else EXIT_OK


def cmd_replay(args) -> int:
    config = _build_config(args)
    errors: list[tuple[int, str]] = []
    records = load_dataset(args.input, config.scoring, errors=errors)
    report = replay_match(records, config)
    payload = report.as_dict(include_timing=not args.no_timing)
    if errors:
        payload["schema_violations"] = [
            {"line": line, "message": message} for line, message in errors]
    _write_output(payload, args.output)
    if errors:
        return EXIT_VALIDATION
    if report.failures:
        return EXIT_CLIENT
    return EXIT_OK


def cmd_stats(args) -> int:
    config = _build_config(args)
    errors: list[tuple[int, str]] = []
    long_term = LongTermMemory()
    index = 0
    for record in load_dataset(args.input, config.scoring, errors=errors):
        entry = MemoryEntry(rally_index=index, rally_ref=record.clip_id,
                            metadata=record, commentary=record.commentary)
        long_term = consolidate(long_term, entry)
        index += 1
    _write_output(long_term.report(), args.output)
    return EXIT_VALIDATION if errors else EXIT_OK


def _read_pairs(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            for key in ("clip_id", "prediction", "reference"):
                if key not in obj:
                    raise ConfigError(f"line {line_no}: missing {key!r}")
            pairs.append(obj)
    return pairs


def cmd_evaluate(args) -> int:
    pairs = _read_pairs(args.input)
    if not pairs:
        _write_output({"pairs": 0}, args.output)
        return EXIT_OK

    metric_inputs = [(p["prediction"], [p["reference"]]) for p in pairs]
    try:
        report = corpus_metrics(metric_inputs)
        per_pair_cider = cider_scores(metric_inputs)
    except CorpusTooSmall:
        report, per_pair_cider = None, [None] * len(pairs)

    metadata_by_clip = {}
    if args.dataset:
        config = _build_config(args)
        for record in load_dataset(args.dataset, config.scoring, errors=[]):
            metadata_by_clip[record.clip_id] = serialize_metadata(record)

    per_clip = []
    scorecards = []
    judge = MockJudgeClient() if args.judge == "mock" else None
    for obj, cider_value in zip(pairs, per_pair_cider):
        row = {
            "clip_id": obj["clip_id"],
            "bleu4": bleu4(obj["prediction"], [obj["reference"]]),
            "rouge_l": rouge_l(obj["prediction"], obj["reference"]),
            "cider": cider_value,
        }
        if judge is not None:
            metadata = obj.get("metadata") or metadata_by_clip.get(obj["clip_id"])
            if metadata:
                bundle = build_judge_prompt(metadata, obj["reference"],
                                            obj["prediction"])
                response = generate(judge, GenerationRequest(bundle=bundle))
                card = parse_scorecard(response.text)
                scorecards.append(card)
                row["judge"] = card.as_dict()
        per_clip.append(row)

    summary = aggregate(scorecards, metric_report=report) if (
        scorecards or report) else {"pairs": len(pairs)}
    summary["pairs"] = len(pairs)
    if args.per_clip:
        _write_jsonl(per_clip, args.per_clip)
    _write_output(summary, args.output)
    return EXIT_OK


def cmd_segment(args) -> int:
    params = SegmentationParams(
        confidence_threshold=args.threshold,
        max_gap_s=args.max_gap,
        min_hits=args.min_hits,
        padding_s=args.padding,
    )
    events = []
    with open(args.input, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            events.append(ImpactEvent(timestamp=float(obj["t"]),
                                      confidence=float(obj["conf"])))
    intervals = cluster_impacts(events, params)
    if args.flags:
        flags = []
        with open(args.flags, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                flags.append((bool(obj["broadcast_view"]),
                              bool(obj["scoreboard_visible"])))
        intervals = filter_intervals(intervals, flags)
    rows = [{"start": round(i.start, 3), "end": round(i.end, 3),
             "hits": i.hit_count} for i in intervals]
    _write_jsonl(rows, args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = _build_config(args)
    records = simulate_match(seed=args.seed, config=config.scoring,
                             min_points=args.min_points)
    _write_jsonl([rally_to_json(r) for r in records], args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="courtside",
        description="Deterministic rally-stream engine for tennis commentary "
                    "pipelines.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("--input", required=True, help="input JSONL file")
        p.add_argument("--config", help="pipeline config JSON file")
        p.add_argument("--output", help="write the result here instead of stdout")

    p = sub.add_parser("validate", help="schema-check a rally dataset")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("replay", help="run the commentary loop over a match")
    common(p)
    p.add_argument("--client", choices=("mock", "http"))
    p.add_argument("--k", type=int, help="short-term memory window size")
    p.add_argument("--token-cap", type=int, dest="token_cap")
    p.add_argument("--log-requests", dest="log_requests",
                   help="JSONL file capturing client traffic (credentials redacted)")
    p.add_argument("--no-timing", action="store_true",
                   help="omit latency fields for reproducible output")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("stats", help="consolidated statistics for a match file")
    common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("evaluate", help="score predictions against references")
    common(p)
    p.add_argument("--per-clip", dest="per_clip",
                   help="write per-clip metric rows to this JSONL file")
    p.add_argument("--judge", choices=("none", "mock"), default="none",
                   help="also run the deterministic mock judge")
    p.add_argument("--dataset", help="rally dataset supplying judge metadata")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("segment", help="cluster impact detections into intervals")
    common(p)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--max-gap", type=float, default=3.0, dest="max_gap")
    p.add_argument("--min-hits", type=int, default=2, dest="min_hits")
    p.add_argument("--padding", type=float, default=1.0)
    p.add_argument("--flags", help="JSONL of per-interval view/scoreboard flags")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("simulate", help="generate a synthetic match as JSONL")
    common(p, needs_input=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--best-of", type=int, choices=(3, 5), dest="best_of")
    p.add_argument("--min-points", type=int, dest="min_points",
                   help="steer the walk until at least this many rallies exist")
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
