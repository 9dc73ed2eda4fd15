"""Command line interface.

Exit codes: 0 success, 2 input error, 3 provider error, 4 internal error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .abstraction import AbstractNode, render_markup
from .errors import InputError, ViscaError
from .evaluate import b3_scores, classification_stats, load_truth, segments_to_clustering, truth_for_leaves
from .pipeline import (
    STAGES,
    PipelineConfig,
    dump_json,
    load_config,
    make_gateway,
    pruned_tree,
    read_json,
    run_pipeline,
    stage_abstract,
    stage_classify,
    stage_prune,
    stage_segment,
    stage_testgen,
)
from .snapshot import load_snapshot
from .testgen import FeatureSpec, GroundTruth, coverage_report

log = logging.getLogger("visca")


def _write(path: str | Path, text: str) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


def _config(args) -> PipelineConfig:
    overrides = {
        "provider": getattr(args, "provider", None),
        "endpoint": getattr(args, "endpoint", None),
        "model": getattr(args, "model", None),
        "temperature": getattr(args, "temperature", None),
        "cache_dir": getattr(args, "cache_dir", None),
        "workers": getattr(args, "workers", None),
        "pixel_tolerance": getattr(args, "pixel_tolerance", None),
        "uniformity": getattr(args, "uniformity", None),
        "depth_cap": getattr(args, "depth_cap", None),
        "vocabulary": getattr(args, "vocabulary", None),
    }
    config = load_config(getattr(args, "config", None), overrides)
    if config.api_key is None:
        config.api_key = os.environ.get("VISCA_API_KEY")
    return config


# -- subcommands ---------------------------------------------------------------


def cmd_capture(args) -> int:
    from .capture import capture

    snap = capture(args.url, args.out, args.host, args.port, (args.width, args.height))
    print(f"captured {len(snap.nodes)} nodes into {args.out}")
    return 0


def cmd_prune(args) -> int:
    config = _config(args)
    snapshot = load_snapshot(args.bundle)
    _, report = stage_prune(snapshot, config)
    _write(args.out, dump_json(report))
    print(f"pruned {len(report['pruned_node_ids'])} nodes ({report['before_count']} -> {report['after_count']})")
    return 0


def cmd_segment(args) -> int:
    config = _config(args)
    snapshot = load_snapshot(args.bundle)
    if args.prune_report:
        report = read_json(args.prune_report, "prune report")
        tree = pruned_tree(snapshot, report["pruned_node_ids"])
    else:
        tree, report = stage_prune(snapshot, config)
    seg, data = stage_segment(tree, report)
    _write(args.out, dump_json(data))
    print(f"{len(seg.candidates)} candidate segments, total potential {seg.total_potential():.4f}")
    return 0


def cmd_classify(args) -> int:
    config = _config(args)
    snapshot = load_snapshot(args.bundle)
    segments = read_json(args.segments, "segments file")
    gateway = make_gateway(config)
    result, data = stage_classify(snapshot, segments, gateway, config)
    _write(args.out, dump_json(data))
    print(f"classified {len(data['segments'])} segments with {result.llm_calls} model calls")
    return 0


def cmd_abstract(args) -> int:
    config = _config(args)
    snapshot = load_snapshot(args.bundle)
    classified = read_json(args.classified, "classified file")
    gateway = make_gateway(config)
    root, warnings = stage_abstract(snapshot, classified, gateway, config)
    _write(args.out, dump_json(root.to_dict()))
    if args.markup:
        _write(args.markup, render_markup(root))
    for w in warnings:
        log.warning(w)
    print(f"abstraction with {sum(1 for _ in root.walk())} nodes written to {args.out}")
    return 0


def cmd_testgen(args) -> int:
    config = _config(args)
    snapshot = load_snapshot(args.bundle)
    try:
        root = AbstractNode.from_dict(read_json(args.abstraction, "abstraction file"))
    except ValueError as exc:
        raise InputError(f"abstraction file is malformed: {exc}") from exc
    gateway = make_gateway(config)
    suite, script = stage_testgen(snapshot, root, gateway, config)
    _write(args.out, dump_json(suite))
    if args.webdriver_script:
        _write(args.webdriver_script, script)
    s = suite["summary"]
    print(f"{s['features']} features, {s['scripts']} scripts, {s['dropped']} dropped")
    return 0


def cmd_coverage(args) -> int:
    suite = read_json(args.suite, "suite file")
    try:
        truth = GroundTruth.load(args.truth, args.overrides)
    except FileNotFoundError as exc:
        raise InputError(f"ground truth not found: {exc.filename}") from exc
    features = [FeatureSpec.from_dict(f) for f in suite.get("features", [])]
    report = coverage_report(features, truth).to_dict()
    text = dump_json(report)
    if args.out:
        _write(args.out, text)
    print(text, end="")
    return 0


def cmd_eval_seg(args) -> int:
    snapshot = load_snapshot(args.bundle)
    segments = read_json(args.segments, "segments file")
    tree = pruned_tree(snapshot, segments.get("pruned_node_ids", []))
    hypothesis = segments_to_clustering(segments["candidates"], tree)
    truth = truth_for_leaves(load_truth(args.truth, snapshot), tree)
    scores = b3_scores(hypothesis, truth).to_dict()
    result: dict[str, Any] = {"b3": scores, "elements": len(hypothesis.clusters)}
    if args.classified:
        classified = read_json(args.classified, "classified file")
        labels = [r["class"] for r in classified["segments"] if r.get("candidate") and r.get("class")]
        if labels:
            result["classification"] = classification_stats([labels]).to_dict()
    text = dump_json(result)
    if args.out:
        _write(args.out, text)
    print(text, end="")
    return 0


def cmd_run(args) -> int:
    config = _config(args)
    result = run_pipeline(args.bundle, config, args.out_dir, from_stage=args.from_stage)
    for name in sorted(result.artifacts):
        print(result.artifacts[name])
    for w in result.manifest["warnings"]:
        log.warning(w)
    return 0


# -- parser ----------------------------------------------------------------------


def _provider_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model provider")
    g.add_argument("--config", help="JSON config file; ${VAR} references are read from the environment")
    g.add_argument("--provider", choices=["mock", "http"], help="model provider (default: mock)")
    g.add_argument("--endpoint", help="base URL of an OpenAI-compatible API (http provider)")
    g.add_argument("--model", help="model name sent to the provider")
    g.add_argument("--temperature", type=float, help="sampling temperature (default 0)")
    g.add_argument("--cache-dir", help="directory of the response cache")
    g.add_argument("--workers", type=int, help="parallel model requests per stage")
    g.add_argument("--vocabulary", help="template vocabulary JSON (default: bundled)")


def _prune_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pixel-tolerance", type=int, help="per-channel tolerance for pixel equality (default 2)")
    p.add_argument("--uniformity", type=float, help="dominant-colour share for padding/shift rules (default 0.95)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="visca",
        description="Segment web page snapshots into UI components, abstract them and generate tests.",
        epilog="The API key for the http provider is read from VISCA_API_KEY. "
        "Exit codes: 0 ok, 2 input error, 3 provider error, 4 internal error.",
    )
    parser.add_argument("--version", action="version", version=f"visca {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("capture", help="capture a snapshot bundle from a Chrome DevTools endpoint")
    p.add_argument("--url", required=True)
    p.add_argument("--out", required=True, help="bundle directory to write")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=9222, help="Chrome --remote-debugging-port")
    p.add_argument("--width", type=int, default=1280)
    p.add_argument("--height", type=int, default=800)
    p.set_defaults(func=cmd_capture)

    p = sub.add_parser("prune", help="remove visually redundant wrapper nodes")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True, help="prune report JSON")
    p.add_argument("--config")
    _prune_options(p)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("segment", help="score nodes and mark candidate segments")
    p.add_argument("--bundle", required=True)
    p.add_argument("--prune-report", help="prune report to replay (pruning runs when omitted)")
    p.add_argument("--out", required=True, help="segments JSON")
    p.add_argument("--config")
    _prune_options(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("classify", help="classify segments and extract their context")
    p.add_argument("--bundle", required=True)
    p.add_argument("--segments", required=True)
    p.add_argument("--out", required=True, help="classified JSON")
    p.add_argument("--depth-cap", type=int, help="classification depth cap (default 6)")
    _provider_options(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("abstract", help="build the component abstraction")
    p.add_argument("--bundle", required=True)
    p.add_argument("--classified", required=True)
    p.add_argument("--out", required=True, help="abstraction JSON")
    p.add_argument("--markup", help="also write JSX-like markup here")
    _provider_options(p)
    p.set_defaults(func=cmd_abstract)

    p = sub.add_parser("testgen", help="infer features and emit test scripts")
    p.add_argument("--abstraction", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True, help="suite JSON")
    p.add_argument("--webdriver-script", help="also write a Selenium script here")
    _provider_options(p)
    p.set_defaults(func=cmd_testgen)

    p = sub.add_parser("coverage", help="score a suite's features against ground truth")
    p.add_argument("--suite", required=True)
    p.add_argument("--truth", required=True, help="YAML list of ground-truth features")
    p.add_argument("--overrides", help="YAML map: inferred feature name -> matching truth names")
    p.add_argument("--out")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("eval-seg", help="B-Cubed scores of a segmentation against ground truth")
    p.add_argument("--bundle", required=True)
    p.add_argument("--segments", required=True)
    p.add_argument("--truth", required=True, help="JSON map: node id or XPath -> cluster id")
    p.add_argument("--classified", help="add classification statistics from this file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_seg)

    p = sub.add_parser("run", help="run the whole pipeline on a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--from", dest="from_stage", default="prune", choices=STAGES,
                   help="resume from this stage using artifacts already in --out-dir")
    p.add_argument("--depth-cap", type=int)
    _provider_options(p)
    _prune_options(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ViscaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # noqa: BLE001 - last-resort mapping onto the exit-code contract
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
