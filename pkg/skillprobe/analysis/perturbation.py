"""
Gaussian perturbation of neuron activations and accuracy-vs-fraction curves.

Each (trial, fraction) cell owns the RNG stream ``cell_stream(trial, fraction_index)`` of the curve
seed, so the noise a cell draws is independent of the ordering being tested and of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid

from skillprobe.config import PerturbationConfig
from skillprobe.exception import ContractException
from skillprobe.model.hooks import GaussianNoiseHook, group_by_layer
from skillprobe.model.weights import AdapterParams, ModelWeights, NeuronId
from skillprobe.numerics.rng import SeededRng, cell_stream
from skillprobe.tasks.types import Dataset, TaskSpec
from skillprobe.tuning.evaluate import PromptLike, evaluate_samples
from skillprobe.utils.logger import logger_service
from skillprobe.utils.workers import run_ordered

logger = logger_service.get_analysis_logger()

Ordering = Sequence[NeuronId]


@dataclass
class PerturbationCurve:
    """Mean / std / s.e.m. accuracy over trials at every fraction of the grid."""

    order: str
    fractions: List[float]
    accuracies: np.ndarray  # (trials, fractions)
    mean: np.ndarray = field(init=False)
    std: np.ndarray = field(init=False)
    sem: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.accuracies = np.asarray(self.accuracies, dtype=np.float64)
        trials = self.accuracies.shape[0]
        self.mean = self.accuracies.mean(axis=0)
        self.std = self.accuracies.std(axis=0)
        self.sem = self.std / math.sqrt(trials) if trials else np.zeros_like(self.mean)

    def rows(self) -> List[Dict[str, Any]]:
        return [
            {"fraction": float(f), "mean": float(m), "std": float(s), "sem": float(e)}
            for f, m, s, e in zip(self.fractions, self.mean, self.std, self.sem)
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {"order": self.order, "fractions": self.fractions, "mean": self.mean, "std": self.std, "sem": self.sem}


def neurons_for_fraction(ordering: Ordering, fraction: float) -> List[NeuronId]:
    """The first ceil(fraction * N) neurons of an ordering."""
    count = int(math.ceil(fraction * len(ordering) - 1e-12))
    return list(ordering[: max(0, count)])


def perturbed_evaluate(
    weights: ModelWeights,
    task: TaskSpec,
    dataset: Dataset,
    neurons: Sequence[NeuronId],
    config: PerturbationConfig,
    rng: SeededRng,
    prompts: PromptLike = None,
    adapters: Optional[AdapterParams] = None,
    split: Optional[str] = None,
) -> float:
    """Accuracy with N(mu, sigma^2) noise added to ``neurons`` at every position of every sample."""
    for neuron in neurons:
        neuron.validate(weights.config.num_layers, weights.config.d_m)
    hook = GaussianNoiseHook(group_by_layer(neurons, weights.config.num_layers), config.mu, config.sigma, rng)
    samples = dataset.split(split or config.split)
    return evaluate_samples(weights, task, samples, prompts, adapters, None if hook.is_noop else hook)


def _per_trial(values: Union[Sequence[Any], None], trial: int, default: Any = None) -> Any:
    if not values:
        return default
    return values[trial % len(values)]


def perturbation_curve(
    weights: ModelWeights,
    task: TaskSpec,
    dataset: Dataset,
    orderings: Sequence[Ordering],
    config: PerturbationConfig,
    seed: int,
    prompts: Sequence[PromptLike] = (),
    adapters: Optional[AdapterParams] = None,
    order_name: str = "",
    workers: Optional[int] = None,
) -> PerturbationCurve:
    """Accuracy as growing prefixes of an ordering are perturbed.

    ``orderings`` and ``prompts`` hold one entry per trial, or a single entry shared by all trials.
    """
    config.validate()
    grid = list(config.fractions)
    cells = [(t, fi) for t in range(config.trials) for fi in range(len(grid))]

    def run_cell(cell) -> float:
        trial, fi = cell
        ordering = _per_trial(orderings, trial)
        neurons = neurons_for_fraction(ordering, grid[fi])
        rng = SeededRng(seed, cell_stream(trial, fi))
        return perturbed_evaluate(weights, task, dataset, neurons, config, rng, _per_trial(prompts, trial), adapters)

    results = run_ordered(run_cell, cells, workers)
    accuracies = np.array(results, dtype=np.float64).reshape(config.trials, len(grid))
    curve = PerturbationCurve(order=order_name, fractions=grid, accuracies=accuracies)
    logger.info(
        "task=%s order=%s acc@0=%.4f acc@1=%.4f",
        task.name,
        order_name,
        float(curve.mean[0]),
        float(curve.mean[-1]),
    )
    return curve


def random_order(num_layers: int, d_m: int, rng: SeededRng) -> List[NeuronId]:
    return [NeuronId.from_flat(int(flat), d_m) for flat in rng.permutation(num_layers * d_m)]


def random_orderings(num_layers: int, d_m: int, seed: int, trials: int, stream_offset: int = 1 << 20) -> List[List[NeuronId]]:
    """One independent random ordering per trial."""
    return [random_order(num_layers, d_m, SeededRng(seed, stream_offset + t)) for t in range(trials)]


def neuronal_importance(curve_source: PerturbationCurve, curve_random: PerturbationCurve) -> float:
    """Area between the random-order curve and the source-order curve over the fraction grid."""
    if list(curve_source.fractions) != list(curve_random.fractions):
        raise ContractException(
            f"fraction grids differ: {list(curve_source.fractions)} vs {list(curve_random.fractions)}"
        )
    return float(trapezoid(curve_random.mean - curve_source.mean, x=np.asarray(curve_source.fractions, dtype=np.float64)))


def area_between(source_mean: Sequence[float], random_mean: Sequence[float], fractions: Sequence[float]) -> float:
    """``neuronal_importance`` over raw arrays."""
    if not (len(source_mean) == len(random_mean) == len(fractions)):
        raise ContractException("curves and fraction grid must have equal length")
    return float(trapezoid(np.asarray(random_mean) - np.asarray(source_mean), x=np.asarray(fractions, dtype=np.float64)))


# -----------------------------------------------------------------------------
# Importance matrices
# -----------------------------------------------------------------------------


def zscore_rows(raw: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-row population z-scores; zero-variance rows become zeros with their flag set."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[1] < 2:
        raise ContractException(f"z-scoring needs at least two sources per row, got shape {raw.shape}")
    mean = raw.mean(axis=1, keepdims=True)
    std = raw.std(axis=1, keepdims=True)
    degenerate = std[:, 0] <= 1e-12 * np.maximum(1.0, np.abs(mean[:, 0]))
    safe = np.where(degenerate[:, None], 1.0, std)
    z = np.where(degenerate[:, None], 0.0, (raw - mean) / safe)
    for row in np.flatnonzero(degenerate):
        logger.warning("importance row %s has zero variance; emitting zeros", int(row))
    return z, degenerate


@dataclass
class ImportanceMatrix:
    """Raw importance areas indexed (evaluation task, source task) and their row z-scores."""

    sources: List[str]
    targets: List[str]
    raw: np.ndarray
    zscored: np.ndarray = field(init=False)
    zero_variance: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.raw = np.asarray(self.raw, dtype=np.float64)
        if self.raw.shape != (len(self.targets), len(self.sources)):
            raise ContractException(f"importance matrix shape {self.raw.shape} does not match {len(self.targets)}x{len(self.sources)}")
        self.zscored, self.zero_variance = zscore_rows(self.raw)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sources": self.sources,
            "targets": self.targets,
            "raw": self.raw,
            "zscored": self.zscored,
            "zero_variance": self.zero_variance,
        }
