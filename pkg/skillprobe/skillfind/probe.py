"""Logistic-regression probe over the activations of chosen skill neurons."""

from __future__ import annotations

from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from skillprobe.config import FindConfig
from skillprobe.exception import ContractException, InputException
from skillprobe.model.weights import ModelWeights, NeuronId
from skillprobe.numerics.kernels import softmax
from skillprobe.numerics.rng import SeededRng
from skillprobe.skillfind.finder import activation_batches
from skillprobe.skillfind.table import PredictivityTable
from skillprobe.tasks.types import Dataset, Sample
from skillprobe.tuning.evaluate import PromptLike
from skillprobe.tuning.prompts import TrialSet
from skillprobe.utils.logger import logger_service

logger = logger_service.get_analysis_logger()


def neuron_features(
    weights: ModelWeights,
    samples: Sequence[Sample],
    prompts: PromptLike,
    neurons: Sequence[NeuronId],
    tokens: Sequence[int],
    token_source: str = "prompt",
    batch_size: int = 64,
) -> np.ndarray:
    """(N, k) activation of each chosen neuron at its chosen token."""
    if len(neurons) != len(tokens):
        raise InputException(f"{len(neurons)} neurons but {len(tokens)} token indices")
    layers = np.array([n.layer for n in neurons], dtype=np.int64)
    indices = np.array([n.index for n in neurons], dtype=np.int64)
    token_idx = np.array(tokens, dtype=np.int64)
    blocks = [acts[:, token_idx, layers, indices] for acts, _ in activation_batches(weights, samples, prompts, token_source, batch_size)]
    return np.concatenate(blocks, axis=0)


def logistic_probe(
    train_x: np.ndarray,
    train_y: np.ndarray,
    test_x: np.ndarray,
    test_y: np.ndarray,
    rng: SeededRng,
    steps: int = 500,
    learning_rate: float = 0.5,
) -> float:
    """Multinomial logistic regression by full-batch gradient descent; returns test accuracy.

    Features are standardized with training statistics.
    """
    train_y = np.asarray(train_y, dtype=np.int64)
    test_y = np.asarray(test_y, dtype=np.int64)
    if np.unique(train_y).size < 2:
        raise ContractException("logistic probe needs at least two classes in the training split")
    train_x = np.asarray(train_x, dtype=np.float64).reshape(len(train_y), -1)
    test_x = np.asarray(test_x, dtype=np.float64).reshape(len(test_y), -1)

    mean = train_x.mean(axis=0)
    std = train_x.std(axis=0)
    std[std == 0] = 1.0
    xs = (train_x - mean) / std
    xt = (test_x - mean) / std

    num_classes = int(max(train_y.max(), test_y.max() if test_y.size else 0)) + 1
    onehot = np.eye(num_classes)[train_y]
    weight = rng.normal((xs.shape[1], num_classes), 0.0, 0.01)
    bias = np.zeros(num_classes)
    for _ in range(steps):
        grad = (softmax(xs @ weight + bias, axis=1) - onehot) / len(train_y)
        weight -= learning_rate * (xs.T @ grad)
        bias -= learning_rate * grad.sum(axis=0)

    predictions = np.argmax(xt @ weight + bias, axis=1)
    return float(np.mean(predictions == test_y))


def subtask_probe(
    weights: ModelWeights,
    trial_set: TrialSet,
    dataset: Dataset,
    tables: Dict[str, PredictivityTable],
    config: Optional[FindConfig] = None,
    seed: int = 0,
) -> Dict[str, Any]:
    """Probe on the top-1 neuron of every subtask at its best token in the best trial."""
    config = config or FindConfig()
    best = trial_set.best_trial if config.token_source == "prompt" else 0
    prompts = trial_set.groups[best] if config.token_source == "prompt" else None
    neurons: List[NeuronId] = []
    tokens: List[int] = []
    for table in tables.values():
        neuron = table.top(1)[0]
        neurons.append(neuron)
        tokens.append(int(table.best_token[best, neuron.layer, neuron.index]))

    def features(split: str) -> np.ndarray:
        return neuron_features(weights, dataset.split(split), prompts, neurons, tokens, config.token_source, config.batch_size)

    accuracy = logistic_probe(
        features("train"),
        dataset.labels("train"),
        features("test"),
        dataset.labels("test"),
        SeededRng(seed, 0),
        steps=config.probe_steps,
        learning_rate=config.probe_learning_rate,
    )
    logger.info("task=%s probe_accuracy=%.4f neurons=%s", trial_set.task, accuracy, [(n.layer, n.index) for n in neurons])
    return {
        "accuracy": accuracy,
        "neurons": [{"target": name, "layer": n.layer, "index": n.index, "token": t} for name, n, t in zip(tables, neurons, tokens)],
    }
