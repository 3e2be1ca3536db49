"""
Skill-neuron discovery.

Activations are captured at prompt-token positions (or pooled over input tokens for the prompt-free
comparison sources), streamed once over the train split for baselines and once over dev and test
for accuracies. Multi-class tasks reuse the original task's prompts and score every binary subtask
from the same forward passes through label masks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from skillprobe.config import FindConfig
from skillprobe.exception import ConfigException, FormatException, InputException
from skillprobe.model.batching import pad_sequences
from skillprobe.model.transformer import forward, input_positions, prompt_positions
from skillprobe.model.weights import AdapterParams, ModelWeights, NeuronId
from skillprobe.output.exporters import read_json, write_json
from skillprobe.skillfind.predictivity import AccuracyCounter, RunningMean, predictivity
from skillprobe.skillfind.table import PredictivityTable
from skillprobe.tasks.types import Dataset, Sample, TaskSpec
from skillprobe.tuning.evaluate import PromptLike, prompt_values
from skillprobe.tuning.prompts import TrialSet
from skillprobe.utils.logger import logger_service
from skillprobe.utils.workers import run_ordered

logger = logger_service.get_analysis_logger()

TOKEN_SOURCES = ("prompt", "input_mean", "input_max")

PathLike = Union[str, Path]
LabelRule = Callable[[int], Optional[int]]


# -----------------------------------------------------------------------------
# Activation streams
# -----------------------------------------------------------------------------


def activation_batches(
    weights: ModelWeights,
    samples: Sequence[Sample],
    prompts: PromptLike = None,
    token_source: str = "prompt",
    batch_size: int = 64,
    adapters: Optional[AdapterParams] = None,
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yield ``(activations (B, tokens, layers, d_m), labels)`` per batch.

    ``prompt`` captures every prompt position. ``input_mean`` / ``input_max`` run without prompts
    and pool over the non-padding input positions into a single pseudo-token.
    """
    if token_source not in TOKEN_SOURCES:
        raise ConfigException(f"Unknown token source '{token_source}', expected one of {TOKEN_SOURCES}")
    values = prompt_values(prompts)
    if token_source == "prompt" and values is None:
        raise InputException("prompt-token activations need a prompt group")

    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        ids = pad_sequences([sample.tokens for sample in chunk])
        labels = np.array([sample.label for sample in chunk], dtype=np.int64)
        if token_source == "prompt":
            result = forward(weights, ids, prompts=values, adapters=adapters, capture_positions=prompt_positions(values.shape[0]))
            yield result.trace.values, labels
            continue

        result = forward(weights, ids, adapters=adapters, capture_positions=input_positions(0, ids.shape[1]))
        trace = result.trace
        valid = trace.token_mask[:, :, None, None]
        if token_source == "input_mean":
            counts = np.maximum(valid.sum(axis=1, keepdims=True), 1)
            pooled = np.where(valid, trace.values, 0.0).sum(axis=1, keepdims=True) / counts
        else:
            pooled = np.where(valid, trace.values, -np.inf).max(axis=1, keepdims=True)
        yield pooled, labels


# -----------------------------------------------------------------------------
# Tables
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class _Target:
    name: str
    rule: LabelRule


def _targets(task: TaskSpec) -> List[_Target]:
    if task.is_binary:
        return [_Target(task.name, lambda label: label)]
    return [_Target(sub.name, sub.relabel) for sub in task.decomposition]


def _mapped(labels: np.ndarray, rule: LabelRule) -> Tuple[np.ndarray, np.ndarray]:
    mapped = [rule(int(label)) for label in labels]
    mask = np.array([m is not None for m in mapped], dtype=bool)
    return np.array([m if m is not None else 0 for m in mapped], dtype=np.int64), mask


def _trial_statistics(
    weights: ModelWeights,
    dataset: Dataset,
    targets: List[_Target],
    prompts: PromptLike,
    config: FindConfig,
) -> Dict[str, Dict[str, Any]]:
    """Baselines from train, then accuracy on dev and test, for every target of one prompt group."""
    def stream(split: str) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        return activation_batches(weights, dataset.split(split), prompts, config.token_source, config.batch_size)

    means = {target.name: RunningMean() for target in targets}
    for acts, labels in stream("train"):
        for target in targets:
            _, mask = _mapped(labels, target.rule)
            means[target.name].update(acts, mask)
    baselines = {name: running.mean for name, running in means.items()}

    stats: Dict[str, Dict[str, Any]] = {
        target.name: {"a_bsl": baselines[target.name], "train_count": means[target.name].count} for target in targets
    }
    for split in ("dev", "test"):
        counters = {target.name: AccuracyCounter(baselines[target.name]) for target in targets}
        for acts, labels in stream(split):
            for target in targets:
                mapped, mask = _mapped(labels, target.rule)
                counters[target.name].update(acts, mapped, mask)
        for name, counter in counters.items():
            stats[name][f"{split}_acc"] = counter.accuracy
            stats[name][f"{split}_count"] = counter.count
    return stats


def build_tables(
    weights: ModelWeights,
    trial_set: Optional[TrialSet],
    task: TaskSpec,
    dataset: Dataset,
    config: Optional[FindConfig] = None,
    workers: Optional[int] = None,
) -> Dict[str, PredictivityTable]:
    """One PredictivityTable per binary target (the task itself, or each subtask)."""
    config = config or FindConfig()
    targets = _targets(task)
    if config.token_source == "prompt":
        if trial_set is None or len(trial_set) == 0:
            raise InputException(f"task '{task.name}': skill-neuron finding needs at least one tuned prompt group")
        groups: List[PromptLike] = list(trial_set.groups)
    else:
        groups = [None]

    per_trial = run_ordered(lambda group: _trial_statistics(weights, dataset, targets, group, config), groups, workers)

    tables: Dict[str, PredictivityTable] = {}
    for target in targets:
        a_bsl = np.stack([stats[target.name]["a_bsl"] for stats in per_trial])
        acc = np.stack([stats[target.name]["dev_acc"] for stats in per_trial])
        test_acc = np.stack([stats[target.name]["test_acc"] for stats in per_trial])
        tables[target.name] = PredictivityTable(
            task=task.name,
            target=target.name,
            a_bsl=a_bsl,
            acc=acc,
            pred=predictivity(acc, config.polarity),
            test_acc=test_acc,
            test_pred=predictivity(test_acc, config.polarity),
            aggregator=config.aggregator,
            polarity=config.polarity,
            token_source=config.token_source,
            train_count=int(per_trial[0][target.name]["train_count"]),
            dev_count=int(per_trial[0][target.name]["dev_count"]),
            trial_dev_accuracy=list(trial_set.dev_accuracy) if trial_set is not None else [],
        )
        logger.info(
            "task=%s target=%s trials=%s top1_pred=%.4f",
            task.name,
            target.name,
            len(per_trial),
            float(tables[target.name].overall.max()),
        )
    return tables


# -----------------------------------------------------------------------------
# Ranking
# -----------------------------------------------------------------------------


def rank_neurons(scores: np.ndarray) -> List[NeuronId]:
    """Descending score; ties ordered by (layer, index)."""
    d_m = scores.shape[1]
    order = np.argsort(-scores.ravel(), kind="stable")
    return [NeuronId.from_flat(int(flat), d_m) for flat in order]


def interleave_rankings(rankings: Sequence[Sequence[NeuronId]], names: Sequence[str]) -> Tuple[List[NeuronId], List[str]]:
    """Round-robin merge; a duplicate is replaced by the next neuron of the same ranking."""
    pointers = [0] * len(rankings)
    seen = set()
    order: List[NeuronId] = []
    provenance: List[str] = []
    total = len({neuron for ranking in rankings for neuron in ranking})
    while len(order) < total:
        for slot, ranking in enumerate(rankings):
            p = pointers[slot]
            while p < len(ranking) and ranking[p] in seen:
                p += 1
            if p < len(ranking):
                seen.add(ranking[p])
                order.append(ranking[p])
                provenance.append(names[slot])
                p += 1
            pointers[slot] = p
    return order, provenance


@dataclass
class SkillNeuronSet:
    """Top-k skill neurons of a task plus the full task-level ordering behind them."""

    task: str
    neurons: List[NeuronId]
    ordering: List[NeuronId]
    scores: np.ndarray
    provenance: List[Optional[str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(set(self.ordering)) != len(self.ordering):
            raise FormatException(f"skill-neuron ordering of task '{self.task}' has duplicates")
        if not self.provenance:
            self.provenance = [None] * len(self.ordering)

    @property
    def total(self) -> int:
        return len(self.ordering)

    def prefix(self, count: int) -> List[NeuronId]:
        return list(self.ordering[: max(0, count)])

    def top_fraction(self, fraction: float) -> List[NeuronId]:
        """The first ceil(fraction * N) neurons of the ordering."""
        return self.prefix(int(math.ceil(fraction * self.total - 1e-12)))

    def mask(self, fraction: float) -> np.ndarray:
        """Boolean (layers, d_m) mask of the top fraction."""
        mask = np.zeros(self.scores.shape, dtype=bool)
        for neuron in self.top_fraction(fraction):
            mask[neuron.layer, neuron.index] = True
        return mask

    def to_dict(self) -> Dict[str, Any]:
        neurons = []
        for rank, neuron in enumerate(self.neurons):
            entry: Dict[str, Any] = {"layer": neuron.layer, "index": neuron.index, "pred": float(self.scores[neuron.layer, neuron.index])}
            if self.provenance[rank] is not None:
                entry["subtask"] = self.provenance[rank]
            neurons.append(entry)
        return {
            "task": self.task,
            "neurons": neurons,
            "ordering": [[n.layer, n.index] for n in self.ordering],
            "provenance": self.provenance,
            "scores": self.scores,
        }

    def save(self, path: PathLike) -> Path:
        return write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: PathLike) -> "SkillNeuronSet":
        data = read_json(path)
        try:
            ordering = [NeuronId(int(layer), int(index)) for layer, index in data["ordering"]]
            return cls(
                task=str(data["task"]),
                neurons=[NeuronId(int(item["layer"]), int(item["index"])) for item in data["neurons"]],
                ordering=ordering,
                scores=np.asarray(data["scores"], dtype=np.float64),
                provenance=list(data.get("provenance") or []),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatException(f"{path}: malformed skill-neuron file ({exc})") from exc


def select_skill_neurons(task: TaskSpec, tables: Dict[str, PredictivityTable], top_k: int) -> SkillNeuronSet:
    """Rank from aggregated dev predictivity; multi-class tasks take equal numbers per subtask."""
    first = next(iter(tables.values()))
    total = first.num_layers * first.d_m
    if not 0 < top_k <= total:
        raise ConfigException(f"top_k={top_k} must lie in [1, {total}] neurons")

    if task.is_binary:
        scores = first.overall
        ordering = rank_neurons(scores)
        return SkillNeuronSet(task=task.name, neurons=ordering[:top_k], ordering=ordering, scores=scores)

    names = list(tables)
    overall = [tables[name].overall for name in names]
    ordering, provenance = interleave_rankings([rank_neurons(scores) for scores in overall], names)
    keep = math.ceil(top_k / len(names)) * len(names)
    return SkillNeuronSet(
        task=task.name,
        neurons=ordering[:keep],
        ordering=ordering,
        scores=np.max(np.stack(overall), axis=0),
        provenance=list(provenance),
    )


def find_skill_neurons(
    weights: ModelWeights,
    trial_set: Optional[TrialSet],
    task: TaskSpec,
    dataset: Dataset,
    config: Optional[FindConfig] = None,
    workers: Optional[int] = None,
) -> Tuple[Dict[str, PredictivityTable], SkillNeuronSet]:
    config = config or FindConfig()
    total = weights.config.num_layers * weights.config.d_m
    if not 0 < config.top_k <= total:
        raise ConfigException(f"top_k={config.top_k} must lie in [1, {total}] neurons")
    tables = build_tables(weights, trial_set, task, dataset, config, workers)
    return tables, select_skill_neurons(task, tables, config.top_k)
