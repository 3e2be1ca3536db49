"""Soft-prompt groups, trial sets and the untrained prompt baselines."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from skillprobe.config import TuneConfig
from skillprobe.exception import FormatException, InputException, ShapeException, VocabException
from skillprobe.model.serialization import read_blob, split_payload, write_blob
from skillprobe.numerics.rng import SeededRng

PROMPT_MAGIC = b"SKPP"
PROVENANCES = ("tuned", "random", "hard")

PathLike = Union[str, Path]


@dataclass
class PromptGroup:
    """l soft-prompt embeddings of width d."""

    values: np.ndarray
    provenance: str = "tuned"
    seed: int = 0
    hard_tokens: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise ShapeException(f"prompt values must be (l, d), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ShapeException("prompt values must be finite")
        if self.provenance not in PROVENANCES:
            raise FormatException(f"unknown prompt provenance '{self.provenance}'")

    @property
    def length(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    def save(self, path: PathLike) -> int:
        header = {
            "l": self.length,
            "d": self.width,
            "provenance": self.provenance,
            "seed": int(self.seed),
            "hard_tokens": list(self.hard_tokens) if self.hard_tokens is not None else None,
        }
        return write_blob(path, PROMPT_MAGIC, header, [self.values])

    @classmethod
    def load(cls, path: PathLike) -> "PromptGroup":
        header, payload = read_blob(path, PROMPT_MAGIC)
        try:
            shape = (int(header["l"]), int(header["d"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatException(f"{path}: malformed prompt header ({exc})") from exc
        (values,) = split_payload(path, payload, [shape])
        hard = header.get("hard_tokens")
        return cls(
            values=values,
            provenance=str(header.get("provenance", "tuned")),
            seed=int(header.get("seed", 0)),
            hard_tokens=tuple(hard) if hard is not None else None,
        )


@dataclass
class TrialSet:
    """Prompt groups from independent tuning trials of one task."""

    task: str
    groups: List[PromptGroup] = field(default_factory=list)
    dev_accuracy: List[float] = field(default_factory=list)
    test_accuracy: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.groups)

    @property
    def best_trial(self) -> int:
        """Index of the highest dev accuracy (first on ties)."""
        if not self.dev_accuracy:
            raise InputException(f"trial set of task '{self.task}' is empty")
        return int(np.argmax(self.dev_accuracy))

    def validate(self) -> None:
        shapes = {group.values.shape for group in self.groups}
        if len(shapes) > 1:
            raise ShapeException(f"trial set of task '{self.task}' mixes prompt shapes {sorted(shapes)}")

    def save(self, directory: PathLike) -> List[Path]:
        root = Path(directory)
        written = []
        for k, group in enumerate(self.groups):
            path = root / f"trial_{k}" / "prompts.bin"
            group.save(path)
            written.append(path)
        meta = root / "trials.json"
        meta.write_text(
            json.dumps(
                {"task": self.task, "dev_accuracy": self.dev_accuracy, "test_accuracy": self.test_accuracy},
                indent=2,
                sort_keys=True,
            )
            + "\n",
            encoding="utf-8",
        )
        written.append(meta)
        return written

    @classmethod
    def load(cls, directory: PathLike) -> "TrialSet":
        root = Path(directory)
        meta = json.loads((root / "trials.json").read_text(encoding="utf-8"))
        groups = []
        k = 0
        while (root / f"trial_{k}" / "prompts.bin").exists():
            groups.append(PromptGroup.load(root / f"trial_{k}" / "prompts.bin"))
            k += 1
        trial_set = cls(
            task=meta["task"],
            groups=groups,
            dev_accuracy=[float(v) for v in meta.get("dev_accuracy", [])],
            test_accuracy=[float(v) for v in meta.get("test_accuracy", [])],
        )
        trial_set.validate()
        return trial_set


def make_random_prompts(config: TuneConfig, d: int, l: int, rng: SeededRng) -> PromptGroup:
    """Untuned N(0, prompt_init_std^2) prompts."""
    return PromptGroup(values=rng.normal((l, d), 0.0, config.prompt_init_std), provenance="random", seed=rng.seed)


def make_hard_prompt(token_ids: Sequence[int], embedding_table: np.ndarray) -> PromptGroup:
    """Prompt rows copied from the embedding table for the given tokens."""
    ids = [int(t) for t in token_ids]
    if not ids:
        raise InputException("hard prompt needs at least one token")
    for token in ids:
        if not 0 <= token < embedding_table.shape[0]:
            raise VocabException(f"hard-prompt token {token} outside vocabulary of size {embedding_table.shape[0]}")
    return PromptGroup(values=embedding_table[ids].copy(), provenance="hard", hard_tokens=tuple(ids))
