#!/usr/bin/env python3
"""Run the headline five-seed comparison with default settings.

Trains the behavioral-plus-gold baseline and the judge-augmented model on
fresh simulated logs for each seed, then prints per-seed and mean deltas.
Artifacts land under runs/experiment/.
"""

import sys

from paretorank.cli import main

if __name__ == "__main__":
    args = ["experiment", "--out-dir", "runs/experiment", "--check"]
    raise SystemExit(main(args + sys.argv[1:]))
