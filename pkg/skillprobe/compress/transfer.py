"""
Overlapping rate of activated neurons (ON) as a prompt-transferability indicator.

A neuron counts as activated by a prompt when its mean activation over the prompt tokens and the
reference split exceeds the threshold. ON is the Jaccard overlap of two activated sets, optionally
restricted to the target task's top skill neurons.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from skillprobe.analysis.correlation import spearman
from skillprobe.config import TransferConfig
from skillprobe.exception import ContractException, InputException
from skillprobe.model.weights import ModelWeights
from skillprobe.skillfind.finder import SkillNeuronSet, activation_batches
from skillprobe.tasks.types import Dataset, Sample, TaskSpec
from skillprobe.tuning.evaluate import PromptLike, evaluate_samples
from skillprobe.tuning.prompts import TrialSet
from skillprobe.utils.logger import logger_service

logger = logger_service.get_analysis_logger()

MIN_SOURCES = 3


def mean_prompt_activation(weights: ModelWeights, prompts: PromptLike, samples: Sequence[Sample], batch_size: int = 64) -> np.ndarray:
    """(layers, d_m) activation averaged over prompt tokens and samples."""
    if not samples:
        raise InputException("ON needs a non-empty reference split")
    total: Optional[np.ndarray] = None
    count = 0
    for acts, _ in activation_batches(weights, samples, prompts, "prompt", batch_size):
        partial = acts.sum(axis=(0, 1))
        total = partial if total is None else total + partial
        count += acts.shape[0] * acts.shape[1]
    return total / count


def activated(weights: ModelWeights, prompts: PromptLike, samples: Sequence[Sample], threshold: float = 0.0) -> np.ndarray:
    return mean_prompt_activation(weights, prompts, samples) > threshold


def jaccard(active_a: np.ndarray, active_b: np.ndarray, mask: Optional[np.ndarray] = None) -> Tuple[float, bool]:
    """|A ∩ B| / |A ∪ B| within ``mask``; an empty union gives ``(0.0, True)``."""
    a = np.asarray(active_a, dtype=bool)
    b = np.asarray(active_b, dtype=bool)
    if mask is not None:
        a = a & mask
        b = b & mask
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 0.0, True
    return int(np.count_nonzero(a & b)) / union, False


def on_metric(
    prompt_a: PromptLike,
    prompt_b: PromptLike,
    weights: ModelWeights,
    reference: Sequence[Sample],
    mask: Optional[np.ndarray] = None,
    threshold: float = 0.0,
) -> float:
    value, empty = jaccard(activated(weights, prompt_a, reference, threshold), activated(weights, prompt_b, reference, threshold), mask)
    if empty:
        logger.warning("ON union is empty; reporting 0")
    return value


@dataclass
class TransferReport:
    """Matrices are indexed [target, source]."""

    tasks: List[str]
    transfer: np.ndarray
    on_full: np.ndarray
    on_masked: np.ndarray
    rho_full: Dict[str, float] = field(default_factory=dict)
    rho_masked: Dict[str, float] = field(default_factory=dict)
    empty_union: List[Tuple[str, str, str]] = field(default_factory=list)

    @property
    def mean_rho_full(self) -> float:
        return float(np.mean(list(self.rho_full.values()))) if self.rho_full else 0.0

    @property
    def mean_rho_masked(self) -> float:
        return float(np.mean(list(self.rho_masked.values()))) if self.rho_masked else 0.0

    def rows(self) -> List[Dict[str, Any]]:
        rows = []
        for i, target in enumerate(self.tasks):
            for j, source in enumerate(self.tasks):
                rows.append(
                    {
                        "source": source,
                        "target": target,
                        "transfer_acc": float(self.transfer[i, j]),
                        "on": float(self.on_full[i, j]),
                        "on_masked": float(self.on_masked[i, j]),
                    }
                )
        return rows

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tasks": self.tasks,
            "transfer": self.transfer,
            "on": self.on_full,
            "on_masked": self.on_masked,
            "rho": self.rho_full,
            "rho_masked": self.rho_masked,
            "mean_rho": self.mean_rho_full,
            "mean_rho_masked": self.mean_rho_masked,
            "empty_union": [list(item) for item in self.empty_union],
        }


def transfer_indicator(
    weights: ModelWeights,
    tasks: Mapping[str, Tuple[TaskSpec, Dataset]],
    trial_sets: Mapping[str, TrialSet],
    neuron_sets: Mapping[str, SkillNeuronSet],
    config: Optional[TransferConfig] = None,
) -> TransferReport:
    """Zero-shot transfer of best-trial prompts and its rank correlation with ON, per target."""
    config = config or TransferConfig()
    names = list(tasks)
    if len(names) - 1 < MIN_SOURCES:
        raise ContractException(f"transfer indicator needs at least {MIN_SOURCES} sources per target, got {len(names) - 1}")
    prompts = {name: trial_sets[name].groups[trial_sets[name].best_trial] for name in names}

    n = len(names)
    report = TransferReport(tasks=names, transfer=np.zeros((n, n)), on_full=np.zeros((n, n)), on_masked=np.zeros((n, n)))
    for i, target in enumerate(names):
        task, dataset = tasks[target]
        reference = dataset.split(config.reference_split)
        mask = neuron_sets[target].mask(config.mask_fraction)
        active = {source: activated(weights, prompts[source], reference, config.threshold) for source in names}
        for j, source in enumerate(names):
            report.transfer[i, j] = evaluate_samples(weights, task, dataset.test, prompts=prompts[source])
            report.on_full[i, j], empty_full = jaccard(active[source], active[target])
            report.on_masked[i, j], empty_masked = jaccard(active[source], active[target], mask)
            for variant, empty in (("full", empty_full), ("masked", empty_masked)):
                if empty:
                    report.empty_union.append((source, target, variant))
                    logger.warning("ON union empty for source=%s target=%s (%s)", source, target, variant)

        others = [j for j in range(n) if j != i]
        report.rho_full[target] = spearman(report.on_full[i, others], report.transfer[i, others])
        report.rho_masked[target] = spearman(report.on_masked[i, others], report.transfer[i, others])
        logger.info("target=%s rho=%.4f rho_masked=%.4f", target, report.rho_full[target], report.rho_masked[target])
    return report
