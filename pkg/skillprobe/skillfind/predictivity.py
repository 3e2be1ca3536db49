"""
Neuron-as-classifier statistics.

A neuron's baseline activation on one prompt token is its mean activation over the training split.
Thresholding the activation at that baseline gives a binary prediction; its dev accuracy, folded so
that strong negative correlation also counts, is the neuron's predictivity.
"""

from __future__ import annotations

from typing import Iterable, Optional, Tuple

import numpy as np

from skillprobe.exception import ConfigException, ContractException, InputException

AGGREGATORS = ("max", "mean")
POLARITIES = ("both", "positive")


class RunningMean:
    """Streaming mean over the leading (sample) axis of successive batches."""

    def __init__(self) -> None:
        self.total: Optional[np.ndarray] = None
        self.count = 0

    def update(self, batch: np.ndarray, mask: Optional[np.ndarray] = None) -> None:
        values = np.asarray(batch, dtype=np.float64)
        if mask is not None:
            values = values[np.asarray(mask, dtype=bool)]
        if values.shape[0] == 0:
            return
        partial = values.sum(axis=0)
        self.total = partial if self.total is None else self.total + partial
        self.count += int(values.shape[0])

    @property
    def mean(self) -> np.ndarray:
        if self.total is None or self.count == 0:
            raise InputException("baseline activation needs at least one training sample")
        return self.total / self.count


class AccuracyCounter:
    """Counts samples where ``1[a > a_bsl]`` equals the binary label."""

    def __init__(self, baseline: np.ndarray) -> None:
        self.baseline = np.asarray(baseline, dtype=np.float64)
        self.correct = np.zeros(self.baseline.shape, dtype=np.int64)
        self.count = 0

    def update(self, batch: np.ndarray, labels: np.ndarray, mask: Optional[np.ndarray] = None) -> None:
        values = np.asarray(batch, dtype=np.float64)
        labels = np.asarray(labels)
        if mask is not None:
            keep = np.asarray(mask, dtype=bool)
            values, labels = values[keep], labels[keep]
        if labels.size == 0:
            return
        if np.any((labels != 0) & (labels != 1)):
            raise ContractException(f"neuron accuracy needs binary labels, got {sorted(set(labels.tolist()))}")
        predicted = values > self.baseline
        target = labels.astype(bool).reshape((-1,) + (1,) * (values.ndim - 1))
        self.correct += np.sum(predicted == target, axis=0)
        self.count += int(labels.shape[0])

    @property
    def accuracy(self) -> np.ndarray:
        if self.count == 0:
            raise InputException("neuron accuracy needs at least one evaluation sample")
        return self.correct / self.count


def baseline_activation(batches: Iterable[np.ndarray]) -> np.ndarray:
    """Mean activation over all samples of all batches (axis 0 is the sample axis)."""
    running = RunningMean()
    for batch in batches:
        running.update(batch)
    return running.mean


def accuracy(batches: Iterable[Tuple[np.ndarray, np.ndarray]], a_bsl: np.ndarray) -> np.ndarray:
    """Fraction of samples whose thresholded activation matches the label; ties predict 0."""
    counter = AccuracyCounter(a_bsl)
    for activations, labels in batches:
        counter.update(activations, labels)
    return counter.accuracy


def predictivity(acc: np.ndarray, polarity: str = "both") -> np.ndarray:
    if polarity not in POLARITIES:
        raise ConfigException(f"Unknown polarity mode '{polarity}', expected one of {POLARITIES}")
    acc = np.asarray(acc, dtype=np.float64)
    if polarity == "positive":
        return acc.copy()
    return np.maximum(acc, 1.0 - acc)


def aggregate(pred: np.ndarray, mode: str = "max") -> np.ndarray:
    """Collapse ``(trials, tokens, ...)`` predictivities to one value per neuron.

    ``max``: mean over trials of the best token. ``mean``: mean over trials of the token average.
    """
    if mode not in AGGREGATORS:
        raise ConfigException(f"Unknown aggregator '{mode}', expected one of {AGGREGATORS}")
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim < 2 or pred.shape[0] == 0:
        raise InputException(f"aggregate needs (trials, tokens, ...) with at least one trial, got {pred.shape}")
    per_trial = pred.max(axis=1) if mode == "max" else pred.mean(axis=1)
    return per_trial.mean(axis=0)
