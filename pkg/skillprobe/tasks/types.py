"""Task and dataset representation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from skillprobe.config import LABEL_WORD_START
from skillprobe.exception import ConfigException, InputException, ValidationException

SPLITS = ("train", "dev", "test")
SPLIT_RATIOS = (0.6, 0.2, 0.2)


def split_counts(total: int) -> Tuple[int, int, int]:
    """60/20/20 sizes with half-up rounding; the test split takes the remainder."""
    n_train = int(math.floor(SPLIT_RATIOS[0] * total + 0.5))
    n_dev = int(math.floor(SPLIT_RATIOS[1] * total + 0.5))
    return n_train, n_dev, total - n_train - n_dev


@dataclass(frozen=True)
class Sample:
    uid: int
    tokens: Tuple[int, ...]
    label: int


@dataclass(frozen=True)
class BinarySubtask:
    """Relabeling rule: ``positive`` labels map to 1, ``negative`` to 0, others are excluded."""

    name: str
    positive: Tuple[int, ...]
    negative: Tuple[int, ...]

    def relabel(self, label: int) -> Optional[int]:
        if label in self.positive:
            return 1
        if label in self.negative:
            return 0
        return None


def default_decomposition(num_classes: int) -> List[BinarySubtask]:
    """3 classes: c0 vs c2 (c1 excluded) and c1 vs rest; more classes: one-vs-rest."""
    if num_classes <= 2:
        return []
    if num_classes == 3:
        return [
            BinarySubtask("c0_vs_c2", positive=(2,), negative=(0,)),
            BinarySubtask("c1_vs_rest", positive=(1,), negative=(0, 2)),
        ]
    return [
        BinarySubtask(f"c{c}_vs_rest", positive=(c,), negative=tuple(o for o in range(num_classes) if o != c))
        for c in range(num_classes)
    ]


@dataclass(frozen=True)
class TaskSpec:
    name: str
    num_classes: int
    verbalizer: Tuple[int, ...]
    family: str
    decomposition: Tuple[BinarySubtask, ...] = ()
    cue_tokens: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if len(self.verbalizer) != self.num_classes:
            raise ConfigException(f"task '{self.name}': verbalizer has {len(self.verbalizer)} words for {self.num_classes} classes")
        if len(set(self.verbalizer)) != len(self.verbalizer):
            raise ConfigException(f"task '{self.name}': verbalizer is not injective {self.verbalizer}")
        if bool(self.decomposition) != (self.num_classes > 2):
            raise ConfigException(f"task '{self.name}': decomposition must be present iff num_classes > 2")

    @property
    def is_binary(self) -> bool:
        return self.num_classes == 2

    def with_verbalizer(self, label_words: Sequence[int]) -> "TaskSpec":
        return TaskSpec(self.name, self.num_classes, tuple(int(w) for w in label_words), self.family, self.decomposition, self.cue_tokens)


def make_task_spec(
    name: str,
    num_classes: int,
    family: str,
    label_words: Optional[Sequence[int]] = None,
    cue_tokens: Sequence[int] = (),
) -> TaskSpec:
    words = tuple(int(w) for w in label_words) if label_words else tuple(LABEL_WORD_START + c for c in range(num_classes))
    return TaskSpec(
        name=name,
        num_classes=num_classes,
        verbalizer=words,
        family=family,
        decomposition=tuple(default_decomposition(num_classes)),
        cue_tokens=tuple(int(t) for t in cue_tokens),
    )


@dataclass(frozen=True)
class Dataset:
    """Labeled train/dev/test splits; immutable after construction."""

    num_classes: int
    train: Tuple[Sample, ...]
    dev: Tuple[Sample, ...]
    test: Tuple[Sample, ...]
    meta: Dict[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        seen: Dict[int, str] = {}
        for split in SPLITS:
            samples = getattr(self, split)
            if not samples:
                raise InputException(f"split '{split}' is empty")
            for sample in samples:
                if not 0 <= sample.label < self.num_classes:
                    raise ValidationException(f"label {sample.label} outside [0, {self.num_classes}) in split '{split}'")
                if sample.uid in seen:
                    raise ValidationException(f"sample {sample.uid} appears in both '{seen[sample.uid]}' and '{split}'")
                seen[sample.uid] = split

    def split(self, name: str) -> Tuple[Sample, ...]:
        if name not in SPLITS:
            raise InputException(f"unknown split '{name}'")
        return getattr(self, name)

    def labels(self, name: str) -> np.ndarray:
        return np.array([sample.label for sample in self.split(name)], dtype=np.int64)

    def tokens(self, name: str) -> List[Tuple[int, ...]]:
        return [sample.tokens for sample in self.split(name)]

    def sizes(self) -> Dict[str, int]:
        return {split: len(getattr(self, split)) for split in SPLITS}

    def relabel(self, rule: Callable[[int], Optional[int]], num_classes: int) -> "Dataset":
        """Apply ``rule`` to every label; samples mapped to None are dropped. Tokens are untouched."""
        parts = []
        for split in SPLITS:
            kept = []
            for sample in getattr(self, split):
                new_label = rule(sample.label)
                if new_label is not None:
                    kept.append(Sample(sample.uid, sample.tokens, int(new_label)))
            parts.append(tuple(kept))
        return Dataset(num_classes, *parts, meta=dict(self.meta))
