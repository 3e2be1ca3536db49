"""Accuracy through the verbalizer at the MASK position."""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

from skillprobe.exception import InputException
from skillprobe.model.batching import pad_sequences
from skillprobe.model.hooks import ActivationHook
from skillprobe.model.transformer import forward
from skillprobe.model.weights import AdapterParams, ModelWeights
from skillprobe.tasks.types import Dataset, Sample, TaskSpec
from skillprobe.tuning.prompts import PromptGroup

EVAL_BATCH = 64

PromptLike = Union[PromptGroup, np.ndarray, None]


def prompt_values(prompts: PromptLike) -> Optional[np.ndarray]:
    if prompts is None:
        return None
    if isinstance(prompts, PromptGroup):
        return prompts.values
    return np.asarray(prompts, dtype=np.float64)


def label_logits(
    weights: ModelWeights,
    task: TaskSpec,
    samples: Sequence[Sample],
    prompts: PromptLike = None,
    adapters: Optional[AdapterParams] = None,
    hook: Optional[ActivationHook] = None,
    batch_size: int = EVAL_BATCH,
) -> np.ndarray:
    """(N, num_classes) logits of the task's label words."""
    values = prompt_values(prompts)
    verbalizer = list(task.verbalizer)
    blocks = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        ids = pad_sequences([sample.tokens for sample in chunk])
        result = forward(weights, ids, prompts=values, adapters=adapters, hook=hook)
        blocks.append(result.logits[:, verbalizer])
    return np.concatenate(blocks, axis=0)


def accuracy_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    """Argmax accuracy; ties resolve to the lowest label id."""
    if len(labels) == 0:
        raise InputException("cannot score an empty split")
    predictions = np.argmax(logits, axis=1)
    return float(np.mean(predictions == np.asarray(labels)))


def evaluate_samples(
    weights: ModelWeights,
    task: TaskSpec,
    samples: Sequence[Sample],
    prompts: PromptLike = None,
    adapters: Optional[AdapterParams] = None,
    hook: Optional[ActivationHook] = None,
) -> float:
    if not samples:
        raise InputException(f"task '{task.name}': cannot evaluate an empty sample list")
    logits = label_logits(weights, task, samples, prompts, adapters, hook)
    return accuracy_from_logits(logits, np.array([s.label for s in samples]))


def evaluate(
    weights: ModelWeights,
    task: TaskSpec,
    dataset: Dataset,
    split: str = "dev",
    prompts: PromptLike = None,
    adapters: Optional[AdapterParams] = None,
    hook: Optional[ActivationHook] = None,
) -> float:
    """Accuracy of the model (plus optional prompts/adapters) on one split."""
    return evaluate_samples(weights, task, dataset.split(split), prompts, adapters, hook)
