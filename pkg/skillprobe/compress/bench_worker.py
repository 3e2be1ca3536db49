"""Subprocess entry point for ``run_isolated``; thread pinning comes from the parent's environment."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from skillprobe.compress.bench import benchmark
from skillprobe.model.serialization import load_weights
from skillprobe.tuning.prompts import PromptGroup


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="skillprobe single-thread forward benchmark")
    parser.add_argument("--full", required=True, help="Full weight file")
    parser.add_argument("--pruned", required=True, help="Pruned weight file")
    parser.add_argument("--inputs", required=True, help="Token-id batch (.npy)")
    parser.add_argument("--prompts", help="Prompt group file prepended to every input")
    parser.add_argument("--repetitions", type=int, default=30)
    parser.add_argument("--warmup", type=int, default=5)
    parser.add_argument("--out", required=True, help="Result JSON path")
    args = parser.parse_args(argv)

    full = load_weights(args.full)
    pruned = load_weights(args.pruned)
    ids = np.load(args.inputs)
    prompts = PromptGroup.load(args.prompts).values if args.prompts else None
    result = benchmark(full, pruned, ids, prompts, args.repetitions, args.warmup)
    Path(args.out).write_text(json.dumps(result.to_dict(), sort_keys=True), encoding="utf-8")
    return 0


if __name__ == "__main__":
    sys.exit(main())
