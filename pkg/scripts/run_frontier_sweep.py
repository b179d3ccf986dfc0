#!/usr/bin/env python3
"""Trace the behavioral/textual trade-off curve on one simulated dataset.

Simulates logs, judge-labels the training split, then trains one model per
mixing fraction and prints the frontier with non-dominated points starred.
Artifacts land under runs/sweep/.
"""

import sys

from paretorank.cli import main


def run(extra_args):
    out = "runs/sweep"
    steps = [
        ["simulate", "--out-dir", out],
        ["label", "--dataset", f"{out}/train.jsonl", "--truth", f"{out}/truth.jsonl",
         "--out-dir", out],
        ["sweep", "--train-dataset", f"{out}/augmented.jsonl",
         "--eval-dataset", f"{out}/eval.jsonl", "--out-dir", out],
    ]
    for step in steps:
        code = main(step + extra_args)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    raise SystemExit(run(sys.argv[1:]))
