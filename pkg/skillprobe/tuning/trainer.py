"""
Training regimes over a frozen or partially frozen model.

All regimes share one loop: cross-entropy over the label-word logits at MASK, Adam on the selected
tensors only, dev evaluation at step 0 and every ``eval_interval`` steps, early stopping after
``patience`` evaluations without improvement, and the best-dev snapshot returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from skillprobe.config import TuneConfig
from skillprobe.exception import InputException
from skillprobe.model.batching import pad_sequences
from skillprobe.model.transformer import backward, forward
from skillprobe.model.weights import PROMPT_TENSOR, AdapterParams, ModelWeights, TrainableSet
from skillprobe.numerics.kernels import cross_entropy
from skillprobe.numerics.optim import AdamState, adam_step
from skillprobe.numerics.rng import SeededRng
from skillprobe.tasks.types import Dataset, Sample, TaskSpec
from skillprobe.tuning.evaluate import evaluate_samples
from skillprobe.tuning.prompts import PromptGroup, TrialSet
from skillprobe.utils.logger import logger_service
from skillprobe.utils.workers import run_ordered

logger = logger_service.get_training_logger()

Params = Dict[str, np.ndarray]


@dataclass
class TuneResult:
    """Dev-accuracy curve and early-stopping outcome of one training run."""

    regime: str
    curve: List[Tuple[int, float]] = field(default_factory=list)
    best_step: int = 0
    best_accuracy: float = 0.0
    steps_run: int = 0
    early_stopped: bool = False
    stalled: bool = False


def verbalizer_loss(logits: np.ndarray, task: TaskSpec, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Cross-entropy restricted to label words; returns loss and the full-vocabulary logit gradient."""
    verbalizer = list(task.verbalizer)
    loss, d_label = cross_entropy(logits[:, verbalizer], labels)
    dlogits = np.zeros_like(logits)
    dlogits[:, verbalizer] = d_label
    return loss, dlogits


def _batches(samples: List[Sample], batch_size: int, rng: SeededRng):
    """Endless stream of shuffled mini-batches, reshuffled every epoch."""
    while True:
        order = rng.permutation(len(samples))
        for start in range(0, len(order), batch_size):
            yield [samples[int(i)] for i in order[start : start + batch_size]]


def train_loop(
    regime: str,
    task: TaskSpec,
    dataset: Dataset,
    params: Params,
    loss_and_grads: Callable[[Params, np.ndarray, np.ndarray], Tuple[float, Params]],
    score: Callable[[Params], float],
    config: TuneConfig,
    rng: SeededRng,
    learning_rate: float,
) -> Tuple[Params, TuneResult]:
    train = list(dataset.train)
    if not train:
        raise InputException(f"task '{task.name}' has no training samples")

    state = AdamState.for_params(params, learning_rate=learning_rate)
    result = TuneResult(regime=regime)
    first = score(params)
    result.curve.append((0, first))
    best_params = {name: value.copy() for name, value in params.items()}
    result.best_accuracy = first
    since_best = 0

    stream = _batches(train, config.batch_size, rng)
    for step in range(1, config.max_steps + 1):
        batch = next(stream)
        ids = pad_sequences([sample.tokens for sample in batch])
        labels = np.array([sample.label for sample in batch], dtype=np.int64)
        _, grads = loss_and_grads(params, ids, labels)
        params = adam_step(state, params, grads)
        result.steps_run = step

        if step % config.eval_interval == 0 or step == config.max_steps:
            accuracy = score(params)
            result.curve.append((step, accuracy))
            logger.info("task=%s regime=%s step=%s dev_acc=%.4f", task.name, regime, step, accuracy)
            if accuracy > result.best_accuracy:
                result.best_accuracy = accuracy
                result.best_step = step
                best_params = {name: value.copy() for name, value in params.items()}
                since_best = 0
            else:
                since_best += 1
                if since_best >= config.patience:
                    result.early_stopped = True
                    logger.info("task=%s regime=%s early stop at step %s (best %.4f @ %s)", task.name, regime, step, result.best_accuracy, result.best_step)
                    break

    if result.best_step == 0:
        result.stalled = True
        logger.warning("task=%s regime=%s never improved on the step-0 dev accuracy %.4f", task.name, regime, first)
    return best_params, result


def prompt_tune(
    weights: ModelWeights,
    task: TaskSpec,
    dataset: Dataset,
    config: TuneConfig,
    rng: SeededRng,
    init: Optional[PromptGroup] = None,
) -> Tuple[PromptGroup, TuneResult]:
    """Tune soft prompts only; the model stays frozen."""
    start = init.values.copy() if init is not None else rng.normal((config.num_prompts, weights.config.d), 0.0, config.prompt_init_std)
    trainable = TrainableSet.prompt()
    dev = dataset.dev

    def loss_and_grads(params: Params, ids: np.ndarray, labels: np.ndarray):
        out = forward(weights, ids, prompts=params[PROMPT_TENSOR], retain=True)
        loss, dlogits = verbalizer_loss(out.logits, task, labels)
        return loss, backward(out.tape, dlogits, trainable)

    def score(params: Params) -> float:
        return evaluate_samples(weights, task, dev, prompts=params[PROMPT_TENSOR])

    best, result = train_loop("prompt", task, dataset, {PROMPT_TENSOR: start}, loss_and_grads, score, config, rng, config.learning_rate)
    return PromptGroup(values=best[PROMPT_TENSOR], provenance="tuned", seed=rng.seed), result


def bitfit_tune(
    weights: ModelWeights, task: TaskSpec, dataset: Dataset, config: TuneConfig, rng: SeededRng
) -> Tuple[ModelWeights, TuneResult]:
    """Tune every bias vector (attention, FFN, layer norm) without prompts."""
    trainable = TrainableSet.biases(weights)
    dev = dataset.dev

    def loss_and_grads(params: Params, ids: np.ndarray, labels: np.ndarray):
        out = forward(weights.with_tensors(params), ids, retain=True)
        loss, dlogits = verbalizer_loss(out.logits, task, labels)
        return loss, backward(out.tape, dlogits, trainable)

    def score(params: Params) -> float:
        return evaluate_samples(weights.with_tensors(params), task, dev)

    start = {name: weights[name].copy() for name in trainable.names}
    lr = config.regime_learning_rate or config.learning_rate
    best, result = train_loop("bitfit", task, dataset, start, loss_and_grads, score, config, rng, lr)
    tuned = weights.with_tensors(best)
    tuned.kind = "bitfit"
    return tuned, result


def adapter_tune(
    weights: ModelWeights,
    adapters: AdapterParams,
    task: TaskSpec,
    dataset: Dataset,
    config: TuneConfig,
    rng: SeededRng,
) -> Tuple[AdapterParams, TuneResult]:
    """Tune adapter parameters on a frozen backbone without prompts."""
    trainable = TrainableSet.adapters(adapters)
    dev = dataset.dev

    def loss_and_grads(params: Params, ids: np.ndarray, labels: np.ndarray):
        out = forward(weights, ids, adapters=adapters.with_tensors(params), retain=True)
        loss, dlogits = verbalizer_loss(out.logits, task, labels)
        return loss, backward(out.tape, dlogits, trainable)

    def score(params: Params) -> float:
        return evaluate_samples(weights, task, dev, adapters=adapters.with_tensors(params))

    start = {name: adapters.tensors[name].copy() for name in trainable.names}
    lr = config.regime_learning_rate or config.learning_rate
    best, result = train_loop("adapter", task, dataset, start, loss_and_grads, score, config, rng, lr)
    return adapters.with_tensors(best), result


def run_trials(
    weights: ModelWeights,
    task: TaskSpec,
    dataset: Dataset,
    config: TuneConfig,
    seed: int,
    workers: Optional[int] = None,
) -> Tuple[TrialSet, List[TuneResult]]:
    """Independent prompt-tuning trials; trial k draws from stream k of ``seed``."""

    def run_one(k: int) -> Tuple[PromptGroup, TuneResult]:
        return prompt_tune(weights, task, dataset, config, SeededRng(seed, k))

    outcomes = run_ordered(run_one, list(range(config.trials)), workers)
    trial_set = TrialSet(task=task.name)
    results = []
    for group, result in outcomes:
        trial_set.groups.append(group)
        trial_set.dev_accuracy.append(result.best_accuracy)
        trial_set.test_accuracy.append(evaluate_samples(weights, task, dataset.test, prompts=group))
        results.append(result)
    logger.info(
        "task=%s trials=%s dev_acc=%s best_trial=%s",
        task.name,
        len(trial_set),
        [round(acc, 4) for acc in trial_set.dev_accuracy],
        trial_set.best_trial,
    )
    return trial_set, results
