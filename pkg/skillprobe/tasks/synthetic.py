"""
Synthetic classification tasks with controllable skill structure.

Every family owns a disjoint block of cue tokens split into four cue classes. A sample of class c
carries 3-5 cue tokens of class c and 0-2 of every other active class, so the dominant cue class
decides the clean label. Labels are then flipped with probability ``noise``. Tasks of one family
share cue classes but differ in filler vocabulary and length (the variant).
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from skillprobe.config import (
    CUE_CLASSES,
    CUE_START,
    CUE_TOKENS_PER_CLASS,
    FAMILIES,
    FILLER_START,
    SyntheticTaskConfig,
)
from skillprobe.exception import ConfigException
from skillprobe.numerics.rng import SeededRng
from skillprobe.tasks.types import Dataset, Sample, TaskSpec, make_task_spec, split_counts

MIN_SIZE = 60
MIN_FILLER = 24
DOMINANT_RANGE = (3, 5)
MINOR_RANGE = (0, 2)
VARIANT_LENGTHS = {0: (12, 20), 1: (18, 28), 2: (14, 24)}


def cue_block(family: str) -> np.ndarray:
    """(CUE_CLASSES, CUE_TOKENS_PER_CLASS) token ids of a family's cue classes."""
    if family not in FAMILIES:
        raise ConfigException(f"unknown task family '{family}'; expected one of {FAMILIES}")
    start = CUE_START + FAMILIES.index(family) * CUE_CLASSES * CUE_TOKENS_PER_CLASS
    return np.arange(start, start + CUE_CLASSES * CUE_TOKENS_PER_CLASS).reshape(CUE_CLASSES, CUE_TOKENS_PER_CLASS)


def all_cue_tokens() -> np.ndarray:
    return np.arange(CUE_START, FILLER_START)


def filler_tokens(vocab_size: int, variant: int) -> np.ndarray:
    """Two thirds of the filler region, rotated by variant so variants overlap only partly."""
    region = np.arange(FILLER_START, vocab_size)
    if len(region) < MIN_FILLER:
        raise ConfigException(f"vocab_size={vocab_size} leaves fewer than {MIN_FILLER} filler tokens")
    width = max(1, (2 * len(region)) // 3)
    offset = (variant % 3) * (len(region) // 3)
    return np.roll(region, -offset)[:width]


def cue_counts(tokens: Sequence[int], family: str, num_classes: int) -> np.ndarray:
    """Per-class cue-token counts of one sample."""
    block = cue_block(family)[:num_classes]
    values = np.asarray(tokens)
    return np.array([np.isin(values, block[c]).sum() for c in range(num_classes)], dtype=np.int64)


def _draw_sample(
    rng: SeededRng, cls: int, num_classes: int, block: np.ndarray, filler: np.ndarray, lengths: Tuple[int, int]
) -> List[int]:
    tokens: List[int] = []
    for other in range(num_classes):
        low, high = DOMINANT_RANGE if other == cls else MINOR_RANGE
        count = int(rng.integers(low, high + 1))
        tokens.extend(int(t) for t in rng.choice(block[other], size=count, replace=True))
    length = max(len(tokens), int(rng.integers(lengths[0], lengths[1] + 1)))
    tokens.extend(int(t) for t in rng.choice(filler, size=length - len(tokens), replace=True))
    order = rng.permutation(len(tokens))
    return [tokens[i] for i in order]


def gen_synthetic_task(
    family: str,
    num_classes: int,
    size: int,
    vocab_size: int,
    rng: SeededRng,
    noise: float = 0.0,
    variant: int = 0,
    name: Optional[str] = None,
    label_words: Optional[Sequence[int]] = None,
) -> Tuple[TaskSpec, Dataset]:
    """Generate a balanced task of ``size`` samples split 60/20/20."""
    if size < MIN_SIZE:
        raise ConfigException(f"synthetic task size must be >= {MIN_SIZE}, got {size}")
    if not 2 <= num_classes <= CUE_CLASSES:
        raise ConfigException(f"num_classes must lie in [2, {CUE_CLASSES}], got {num_classes}")
    if not 0.0 <= noise < 1.0:
        raise ConfigException(f"noise must lie in [0, 1), got {noise}")
    block = cue_block(family)
    filler = filler_tokens(vocab_size, variant)
    lengths = VARIANT_LENGTHS.get(variant % 3, VARIANT_LENGTHS[0])

    classes = np.arange(size) % num_classes
    classes = classes[rng.permutation(size)]
    samples: List[Sample] = []
    for uid, cls in enumerate(classes):
        tokens = _draw_sample(rng, int(cls), num_classes, block, filler, lengths)
        label = int(cls)
        if noise > 0.0 and rng.random() < noise:
            others = [c for c in range(num_classes) if c != label]
            label = int(others[int(rng.integers(0, len(others)))])
        samples.append(Sample(uid=uid, tokens=tuple(tokens), label=label))

    n_train, n_dev, _ = split_counts(size)
    task = make_task_spec(
        name or f"{family}_{num_classes}way_v{variant}",
        num_classes,
        family,
        label_words=label_words,
        cue_tokens=block[:num_classes].reshape(-1),
    )
    dataset = Dataset(
        num_classes=num_classes,
        train=tuple(samples[:n_train]),
        dev=tuple(samples[n_train : n_train + n_dev]),
        test=tuple(samples[n_train + n_dev :]),
        meta={"family": family, "variant": variant, "noise": noise},
    )
    return task, dataset


def build_synthetic_task(config: SyntheticTaskConfig, vocab_size: int) -> Tuple[TaskSpec, Dataset]:
    """Generate the task a config entry describes, seeded by the entry's own seed."""
    return gen_synthetic_task(
        family=config.family,
        num_classes=config.num_classes,
        size=config.size,
        vocab_size=vocab_size,
        rng=SeededRng(config.seed),
        noise=config.noise,
        variant=config.variant,
        name=config.name,
        label_words=config.label_words,
    )
