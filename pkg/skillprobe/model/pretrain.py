"""Masked-LM pre-training of the toy encoder."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from skillprobe.config import MASK_ID, PAD_ID, UNK_ID, PretrainConfig
from skillprobe.exception import InputException, VocabException
from skillprobe.model.batching import pad_sequences
from skillprobe.model.transformer import backward, forward_mlm
from skillprobe.model.weights import ModelWeights, TrainableSet
from skillprobe.numerics.kernels import cross_entropy
from skillprobe.numerics.optim import AdamState, adam_step
from skillprobe.numerics.rng import SeededRng
from skillprobe.utils.logger import logger_service

logger = logger_service.get_training_logger()

MASK_SHARE = 0.8
RANDOM_SHARE = 0.1


@dataclass
class PretrainResult:
    losses: List[float] = field(default_factory=list)

    @property
    def initial_loss(self) -> float:
        return self.losses[0] if self.losses else float("nan")

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


def mask_batch(
    ids: np.ndarray, rng: SeededRng, mask_rate: float, vocab_size: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Select ~mask_rate of real tokens (at least one per row) and corrupt them 80/10/10.

    Returns ``(corrupted_ids, rows, cols, targets)``.
    """
    real = ids != PAD_ID
    chosen = (rng.random(ids.shape) < mask_rate) & real
    for row in np.flatnonzero(~chosen.any(axis=1) & real.any(axis=1)):
        candidates = np.flatnonzero(real[row])
        chosen[row, candidates[int(rng.integers(0, len(candidates)))]] = True

    rows, cols = np.nonzero(chosen)
    targets = ids[rows, cols].copy()
    corrupted = ids.copy()
    action = rng.random(len(rows))
    replace_mask = action < MASK_SHARE
    replace_random = (action >= MASK_SHARE) & (action < MASK_SHARE + RANDOM_SHARE)
    corrupted[rows[replace_mask], cols[replace_mask]] = MASK_ID
    corrupted[rows[replace_random], cols[replace_random]] = rng.integers(UNK_ID + 1, vocab_size, size=int(replace_random.sum()))
    return corrupted, rows, cols, targets


def mlm_pretrain(
    weights: ModelWeights,
    corpus: Sequence[Sequence[int]],
    rng: SeededRng,
    config: Optional[PretrainConfig] = None,
    steps: Optional[int] = None,
) -> Tuple[ModelWeights, PretrainResult]:
    """Train all weights with the masked-LM objective; the input weights are not modified."""
    config = config or PretrainConfig()
    total_steps = config.steps if steps is None else steps
    sequences = [list(seq) for seq in corpus if len(seq) > 0]
    if not sequences:
        raise InputException("pre-training corpus is empty")
    vocab = weights.config.vocab_size
    for seq in sequences:
        if min(seq) < 0 or max(seq) >= vocab:
            raise VocabException(f"corpus token outside vocabulary of size {vocab}")

    trainable = TrainableSet.all(weights)
    current = weights.copy()
    state = AdamState.for_params(current.tensors, learning_rate=config.learning_rate)
    result = PretrainResult()
    logger.info("MLM pre-training: %s sequences, %s steps, batch %s", len(sequences), total_steps, config.batch_size)

    for step in range(total_steps):
        picks = rng.integers(0, len(sequences), size=min(config.batch_size, len(sequences)))
        ids = pad_sequences([sequences[int(i)] for i in picks])
        corrupted, rows, cols, targets = mask_batch(ids, rng, config.mask_rate, vocab)
        out = forward_mlm(current, corrupted, rows, cols, retain=True)
        loss, dlogits = cross_entropy(out.logits, targets)
        result.losses.append(loss)
        grads = backward(out.tape, dlogits, trainable)
        current = current.with_tensors(adam_step(state, {n: current[n] for n in trainable.names}, grads))
        if (step + 1) % config.log_interval == 0:
            logger.info("MLM step %s/%s loss %.4f", step + 1, total_steps, loss)

    logger.info("MLM pre-training done: loss %.4f -> %.4f", result.initial_loss, result.final_loss)
    return current, result
