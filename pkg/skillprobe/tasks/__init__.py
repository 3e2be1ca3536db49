"""Tasks, datasets, synthetic generators, JSONL ingestion and subtask decomposition."""

from skillprobe.tasks.decompose import decompose
from skillprobe.tasks.jsonl import load_jsonl, load_vocab
from skillprobe.tasks.synthetic import (
    all_cue_tokens,
    build_synthetic_task,
    cue_block,
    cue_counts,
    filler_tokens,
    gen_synthetic_task,
)
from skillprobe.tasks.types import (
    SPLITS,
    BinarySubtask,
    Dataset,
    Sample,
    TaskSpec,
    default_decomposition,
    make_task_spec,
    split_counts,
)

__all__ = [
    "SPLITS",
    "BinarySubtask",
    "Dataset",
    "Sample",
    "TaskSpec",
    "all_cue_tokens",
    "build_synthetic_task",
    "cue_block",
    "cue_counts",
    "decompose",
    "default_decomposition",
    "filler_tokens",
    "gen_synthetic_task",
    "load_jsonl",
    "load_vocab",
    "make_task_spec",
    "split_counts",
]
