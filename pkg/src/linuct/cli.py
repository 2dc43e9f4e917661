"""Command-line entry points: run experiments, summarize results, print oracles."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from linuct.harness import ConfigError, load_config, oracle_text, run, summarize
from linuct.matgame import MatGameSpec


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linuct", description="Matrix-game planning benchmark harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute every (selector x seed) cell of a config")
    p_run.add_argument("config", help="experiment config file (INI key = value)")
    p_run.add_argument("--output", help="override the output directory")
    p_run.add_argument("--seeds", help="override the seed list, comma-separated")
    p_run.add_argument("--workers", type=int, help="override the worker count")

    p_sum = sub.add_parser("summarize", help="aggregate result files into a summary table")
    p_sum.add_argument("results", nargs="+", help="result files (csv or jsonl)")
    p_sum.add_argument("--output", help="write the summary CSV here instead of stdout")

    p_oracle = sub.add_parser("oracle", help="print the optimum of a matrix-game spec")
    p_oracle.add_argument("envspec", help="game spec file with a [matgame] section")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = load_config(args.config)
            if args.output:
                config.output = Path(args.output)
            if args.seeds:
                config.seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
            if args.workers:
                config.workers = args.workers
            results = run(config)
            for res in results:
                final = res.trace.cum_regret[-1]
                print(
                    f"{res.selector} seed={res.seed}: "
                    f"return={res.trace.rewards.sum():.3f} regret={final:.3f} -> {res.path}"
                )
            print(summarize([r.path for r in results]), end="")
            return 0
        if args.command == "summarize":
            table = summarize(args.results)
            if args.output:
                Path(args.output).write_text(table)
                print(f"wrote {args.output}")
            else:
                print(table, end="")
            return 0
        if args.command == "oracle":
            spec = MatGameSpec.from_config_text(Path(args.envspec).read_text())
            print(oracle_text(spec), end="")
            return 0
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
