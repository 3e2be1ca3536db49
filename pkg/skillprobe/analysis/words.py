"""Related-word inspection of single neurons and label-word robustness of neuron orders."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from skillprobe.analysis.correlation import mean_pairwise
from skillprobe.config import LABEL_WORD_START, FindConfig, TuneConfig
from skillprobe.exception import ConfigException, InputException
from skillprobe.model.batching import pad_sequences
from skillprobe.model.transformer import forward, input_positions
from skillprobe.model.weights import ModelWeights, NeuronId, layer_prefix
from skillprobe.numerics.rng import SeededRng
from skillprobe.skillfind.finder import find_skill_neurons
from skillprobe.tasks.synthetic import all_cue_tokens
from skillprobe.tasks.types import Dataset, Sample, TaskSpec
from skillprobe.tuning.evaluate import PromptLike, prompt_values
from skillprobe.tuning.trainer import run_trials
from skillprobe.utils.logger import logger_service

logger = logger_service.get_analysis_logger()

Ranked = List[Tuple[int, float]]

LABEL_WORD_STREAM = 7919


def _top_bottom(token_ids: np.ndarray, scores: np.ndarray, k: int) -> Tuple[Ranked, Ranked]:
    """Top-k by descending score and bottom-k by ascending score; ties by token id."""
    top = np.lexsort((token_ids, -scores))[:k]
    bottom = np.lexsort((token_ids, scores))[:k]
    return (
        [(int(token_ids[i]), float(scores[i])) for i in top],
        [(int(token_ids[i]), float(scores[i])) for i in bottom],
    )


def cosine_scores(weights: ModelWeights, neuron: NeuronId) -> np.ndarray:
    """Cosine between every embedding-table row and the neuron's input weight row (0 for zero norms)."""
    key = weights[layer_prefix(neuron.layer) + "ffn.k"][neuron.index]
    table = weights["embed.tokens"]
    norms = np.linalg.norm(table, axis=1) * np.linalg.norm(key)
    dots = table @ key
    return np.divide(dots, norms, out=np.zeros_like(dots), where=norms > 0)


def token_activation_means(
    weights: ModelWeights,
    neuron: NeuronId,
    samples: Sequence[Sample],
    prompts: PromptLike = None,
    batch_size: int = 64,
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-vocabulary-token mean activation over every occurrence in ``samples``; returns (means, counts)."""
    if not samples:
        raise InputException("activation ranking needs a non-empty dataset")
    vocab = weights.config.vocab_size
    totals = np.zeros(vocab, dtype=np.float64)
    counts = np.zeros(vocab, dtype=np.int64)
    values = prompt_values(prompts)
    num_prompts = 0 if values is None else values.shape[0]
    for start in range(0, len(samples), batch_size):
        ids = pad_sequences([sample.tokens for sample in samples[start : start + batch_size]])
        result = forward(weights, ids, prompts=values, capture_positions=input_positions(num_prompts, ids.shape[1]))
        acts = result.trace.values[:, :, neuron.layer, neuron.index]
        valid = result.trace.token_mask
        np.add.at(totals, ids[valid], acts[valid])
        np.add.at(counts, ids[valid], 1)
    means = np.divide(totals, counts, out=np.zeros_like(totals), where=counts > 0)
    return means, counts


def related_words(
    weights: ModelWeights,
    neuron: NeuronId,
    dataset: Sequence[Sample],
    k: int = 10,
    prompts: PromptLike = None,
) -> Dict[str, Any]:
    """Top/bottom-k tokens by embedding cosine and by average activation.

    Tokens that never occur in ``dataset`` are left out of the activation ranking.
    """
    vocab = weights.config.vocab_size
    if not 0 < k <= vocab:
        raise ConfigException(f"k={k} must lie in [1, {vocab}]")
    neuron.validate(weights.config.num_layers, weights.config.d_m)

    all_ids = np.arange(vocab)
    cos_top, cos_bottom = _top_bottom(all_ids, cosine_scores(weights, neuron), k)
    means, counts = token_activation_means(weights, neuron, dataset, prompts)
    seen = np.flatnonzero(counts > 0)
    act_top, act_bottom = _top_bottom(seen, means[seen], k)
    return {
        "neuron": [neuron.layer, neuron.index],
        "cosine_top": cos_top,
        "cosine_bottom": cos_bottom,
        "activation_top": act_top,
        "activation_bottom": act_bottom,
    }


# -----------------------------------------------------------------------------
# Label-word robustness
# -----------------------------------------------------------------------------


def draw_label_words(task: TaskSpec, vocab_size: int, rng: SeededRng, avoid: Sequence[int] = ()) -> Tuple[int, ...]:
    """Distinct label words drawn uniformly from the non-special, non-cue vocabulary; collisions are redrawn."""
    banned = {int(t) for t in all_cue_tokens()} | set(task.cue_tokens) | {int(t) for t in avoid}
    available = vocab_size - LABEL_WORD_START - len({t for t in banned if t >= LABEL_WORD_START})
    if available < task.num_classes:
        raise ConfigException(f"vocabulary of size {vocab_size} has too few free tokens for {task.num_classes} label words")
    words: List[int] = []
    while len(words) < task.num_classes:
        token = int(rng.integers(LABEL_WORD_START, vocab_size))
        if token in banned or token in words:
            continue
        words.append(token)
    return tuple(words)


@dataclass
class RobustnessResult:
    task: str
    label_word_sets: List[Tuple[int, ...]]
    scores: List[np.ndarray] = field(default_factory=list)
    mean_rho: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {"task": self.task, "label_word_sets": self.label_word_sets, "mean_rho": self.mean_rho}


def label_word_robustness(
    weights: ModelWeights,
    task: TaskSpec,
    dataset: Dataset,
    tune_config: TuneConfig,
    find_config: FindConfig,
    seed: int,
    draws: int = 5,
    label_word_sets: Optional[Sequence[Sequence[int]]] = None,
    workers: Optional[int] = None,
) -> RobustnessResult:
    """Re-tune and re-find with each label-word set; report mean pairwise Spearman of the neuron scores.

    Every draw tunes with the same seed, so only the label words differ between runs.
    """
    if label_word_sets is None:
        rng = SeededRng(seed, LABEL_WORD_STREAM)
        sets = [draw_label_words(task, weights.config.vocab_size, rng, avoid=task.verbalizer) for _ in range(draws)]
    else:
        sets = [tuple(int(w) for w in words) for words in label_word_sets]
    if len(sets) < 2:
        raise ConfigException("label-word robustness needs at least two label-word sets")

    result = RobustnessResult(task=task.name, label_word_sets=sets)
    for words in sets:
        relabeled = task.with_verbalizer(words)
        trial_set, _ = run_trials(weights, relabeled, dataset, tune_config, seed, workers)
        _, neuron_set = find_skill_neurons(weights, trial_set, relabeled, dataset, find_config, workers)
        result.scores.append(neuron_set.scores.ravel())
    result.mean_rho = mean_pairwise(result.scores)
    logger.info("task=%s label-word draws=%s mean_rho=%.4f", task.name, len(sets), result.mean_rho)
    return result
