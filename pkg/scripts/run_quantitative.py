#!/usr/bin/env python3
"""Run the paired 25-prompt experiment and print the headline comparison.

Thin wrapper over ``aesgrad experiment`` for people who prefer a script;
accepts the same overrides and prints the per-condition summary plus the
sign test over per-prompt means.
"""

from __future__ import annotations

import argparse
import sys

from aesgrad.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None, help="run config JSON (default: toy-default)")
    parser.add_argument("--keyword", default=None, help="add the keyword-append condition")
    parser.add_argument("--out-dir", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--max-workers", type=int, default=None)
    args = parser.parse_args()

    argv = ["experiment"]
    if args.config is not None:
        argv += ["--config", args.config]
    if args.keyword is not None:
        argv += ["--keyword", args.keyword]
    if args.out_dir is not None:
        argv += ["--out-dir", args.out_dir]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    if args.max_workers is not None:
        argv += ["--max-workers", str(args.max_workers)]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
