"""Spearman rank correlation of neuron orderings, overall and per layer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional

import numpy as np
from scipy.stats import rankdata

from skillprobe.exception import ContractException
from skillprobe.utils.logger import logger_service

logger = logger_service.get_analysis_logger()


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation of average ranks. A constant input yields 0.0."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ContractException(f"spearman needs equal lengths, got {x.size} and {y.size}")
    if x.size < 2:
        raise ContractException("spearman needs at least two paired scores")
    rx = rankdata(x, method="average")
    ry = rankdata(y, method="average")
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = np.sqrt(np.sum(rx * rx) * np.sum(ry * ry))
    if denom == 0.0:
        logger.warning("spearman on a constant score vector; returning 0.0")
        return 0.0
    return float(np.clip(np.sum(rx * ry) / denom, -1.0, 1.0))


def _pairwise(vectors: List[np.ndarray]) -> np.ndarray:
    n = len(vectors)
    matrix = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            matrix[i, j] = matrix[j, i] = spearman(vectors[i], vectors[j])
    return matrix


@dataclass
class CorrelationResult:
    """Task-by-task correlation of neuron predictivity orders."""

    tasks: List[str]
    overall: np.ndarray
    per_layer: np.ndarray  # (layers, tasks, tasks)
    pooled: Optional[np.ndarray] = None

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {"tasks": self.tasks, "overall": self.overall, "per_layer": self.per_layer}
        if self.pooled is not None:
            payload["pooled"] = self.pooled
        return payload


def correlation_matrix(scores: Mapping[str, np.ndarray], pooled: bool = False) -> CorrelationResult:
    """``scores`` maps task name to a (layers, d_m) predictivity array over one shared model.

    The overall matrix averages the per-layer correlations; ``pooled`` also ranks all neurons at once.
    """
    tasks = list(scores)
    arrays = [np.asarray(scores[name], dtype=np.float64) for name in tasks]
    shapes = {arr.shape for arr in arrays}
    if len(shapes) != 1:
        raise ContractException(f"predictivity arrays come from different models: {sorted(shapes)}")
    num_layers = arrays[0].shape[0]
    per_layer = np.stack([_pairwise([arr[layer] for arr in arrays]) for layer in range(num_layers)])
    overall = per_layer.mean(axis=0)
    np.fill_diagonal(overall, 1.0)
    result = CorrelationResult(tasks=tasks, overall=overall, per_layer=per_layer)
    if pooled:
        result.pooled = _pairwise([arr.ravel() for arr in arrays])
    logger.info("correlation over %s tasks and %s layers", len(tasks), num_layers)
    return result


def mean_pairwise(vectors: List[np.ndarray]) -> float:
    """Mean Spearman correlation over all unordered pairs."""
    if len(vectors) < 2:
        raise ContractException("mean pairwise correlation needs at least two score vectors")
    matrix = _pairwise(vectors)
    upper = matrix[np.triu_indices(len(vectors), k=1)]
    return float(upper.mean())
