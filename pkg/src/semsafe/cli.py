"""Command-line interface.

Subcommands: run (single episode), batch (manifest sweep), serve (HTTP
API), dump-grounding (grid exports), bench (compiled vs numpy kernels).
Exit code 0 iff no internal errors occurred.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


def _cmd_run(args: argparse.Namespace) -> int:
    from semsafe.episode import run_episode
    from semsafe.harness import load_scenario

    world = load_scenario(args.scenario)
    record = run_episode(world, args.method, args.seed)
    if args.out:
        Path(args.out).write_text(record.to_jsonl())
    summary = {
        "scenario": record.scenario, "method": record.method, "seed": record.seed,
        "outcome": record.outcome, "final_t": record.final_t,
        "min_l_sem": round(record.min_l_sem, 6),
        "median_step_ms": round(record.median_compute_time() * 1e3, 3),
    }
    print(json.dumps(summary, indent=2))
    return 0


def _cmd_batch(args: argparse.Namespace) -> int:
    from semsafe.harness import load_manifest, run_batch, write_summary_csv

    scenarios = load_manifest(args.manifest)
    methods = args.methods.split(",") if args.methods else None
    summary, records = run_batch(
        scenarios, methods=methods, trials=args.trials,
        out_dir=args.out, workers=args.workers,
    )
    for cell in summary:
        print(
            f"{cell.method:8s} {cell.category:12s} n={cell.episodes:3d} "
            f"success={cell.success_rate:.2f} semantic_safety={cell.semantic_safety_rate:.2f} "
            f"t_perception={cell.timeout_perception_rate:.2f} "
            f"t_filter={cell.timeout_safety_filter_rate:.2f} "
            f"median_ms={cell.median_filter_latency * 1e3:.2f}"
        )
    if not args.out:
        write_summary_csv(summary, "summary.csv")
        print("wrote summary.csv")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from semsafe.server import serve

    serve(args.bind)
    return 0


def _cmd_dump_grounding(args: argparse.Namespace) -> int:
    from semsafe.harness import dump_grounding

    meta = dump_grounding(args.scenario, args.out, seconds=args.seconds,
                          method=args.method, seed=args.seed)
    print(json.dumps(meta, indent=2, sort_keys=True))
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    from semsafe.bench import run_benchmark

    run_benchmark(repeats=args.repeats)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="semsafe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one episode")
    p.add_argument("--scenario", required=True)
    p.add_argument("--method", default="lr", choices=["lr", "sb", "geom", "coarse"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the episode as line-delimited JSON")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("batch", help="run a manifest sweep and write artifacts")
    p.add_argument("--manifest", help="manifest JSON (defaults to the shipped suite)")
    p.add_argument("--methods", help="comma-separated subset, e.g. lr,geom")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_batch)

    p = sub.add_parser("serve", help="start the HTTP API")
    p.add_argument("--bind", default="127.0.0.1:8787")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("dump-grounding", help="export grounding grids as PNG + JSON")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", default="grounding_dump")
    p.add_argument("--seconds", type=float, default=6.0)
    p.add_argument("--method", default="lr")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_dump_grounding)

    p = sub.add_parser("bench", help="compare compiled and numpy kernel backends")
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(func=_cmd_bench)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface a clean error, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
