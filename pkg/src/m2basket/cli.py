"""``m2basket`` command line. Exit codes: 0 success, 1 configuration error, 2 data error."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import commands
from .config import RunConfig
from .errors import ConfigError, DataError

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY.PATH=VALUE",
                        help="override a config entry; VALUE is parsed as JSON when possible")
    parser.add_argument("--output-dir", help="shorthand for --set output_dir=DIR")


def _selector(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", help="model file written by train")
    parser.add_argument("--baseline", choices=commands.BASELINES)
    parser.add_argument("--manifest", help="synthetic ground-truth manifest (oracle only)")
    parser.add_argument("--name", help="label used in output file names")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="m2basket", description="Next-basket recommendation with mixed models.")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="parse, filter and split a raw interaction log")
    _common(p)
    p.add_argument("--input", help="shorthand for --set interactions=PATH")
    p.add_argument("--filter-distinct-items", action="store_true",
                   help="count distinct items instead of interactions in the per-user filter")

    p = sub.add_parser("train", help="grid search, then retrain the best cell on train+validation")
    _common(p)
    p.add_argument("--resume", action="store_true", help="reuse finished grid cells from the ledger")
    p.add_argument("--jobs", type=int, help="parallel grid workers")

    p = sub.add_parser("evaluate", help="multi-horizon test evaluation of a model or baseline")
    _common(p)
    _selector(p)

    p = sub.add_parser("compare", help="paired significance table between two reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--output", help="write the table as JSON")
    p.add_argument("--alpha", type=float, default=0.05)

    p = sub.add_parser("generate-synthetic", help="sample a synthetic corpus and its ground-truth manifest")
    _common(p)

    p = sub.add_parser("analyze-diversity", help="frequency-decile mix of top-k recommendations")
    _common(p)
    _selector(p)
    p.add_argument("--k", type=int, default=20)

    p = sub.add_parser("analyze-transitions", help="transition-row similarity inside an item cluster")
    _common(p)
    p.add_argument("--cluster", help="comma-separated item ids")
    p.add_argument("--cluster-file", help="JSON list or one item id per line")
    p.add_argument("--window", type=int, default=1)

    p = sub.add_parser("export-embeddings", help="write encoder rows as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--output", required=True)
    return parser


def _config(args) -> RunConfig:
    overrides = list(args.overrides)
    if args.output_dir:
        overrides.append(f"output_dir={json.dumps(args.output_dir)}")
    if getattr(args, "input", None):
        overrides.append(f"interactions={json.dumps(args.input)}")
    if getattr(args, "filter_distinct_items", False):
        overrides.append("filter.distinct_items=true")
    return RunConfig.load(args.config, overrides)


def _print(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True, default=str))


def run(args) -> None:
    cmd = args.command
    if cmd == "compare":
        result = commands.cmd_compare(args.report_a, args.report_b, args.output, args.alpha)
        print(f"horizon {result['horizon']}, {result['n_users']} users: {result['a']} vs {result['b']}")
        print(commands.format_compare(result["rows"], "A", "B"))
        return
    if cmd == "export-embeddings":
        _print(commands.cmd_export_embeddings(args.model, args.output))
        return
    cfg = _config(args)
    if cmd == "prepare":
        _print(commands.cmd_prepare(cfg))
    elif cmd == "train":
        _print(commands.cmd_train(cfg, resume=args.resume, jobs=args.jobs))
    elif cmd == "evaluate":
        summary = commands.cmd_evaluate(cfg, model_path=args.model, baseline=args.baseline,
                                        manifest_path=args.manifest, name=args.name)
        for h, info in summary["horizons"].items():
            print(f"{summary['method']} horizon {h}: {info['users']} users evaluated")
            for metric, value in info["means"].items():
                print(f"  {metric:<14}{value:.4f}")
    elif cmd == "generate-synthetic":
        _print(commands.cmd_generate_synthetic(cfg))
    elif cmd == "analyze-diversity":
        _print(commands.cmd_analyze_diversity(cfg, model_path=args.model, baseline=args.baseline,
                                              manifest_path=args.manifest, k=args.k, name=args.name))
    elif cmd == "analyze-transitions":
        cluster = [c.strip() for c in args.cluster.split(",") if c.strip()] if args.cluster else None
        _print(commands.cmd_analyze_transitions(cfg, cluster=cluster, cluster_file=args.cluster_file, window=args.window))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
