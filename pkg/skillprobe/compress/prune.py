"""
Skill-neuron-guided FFN pruning.

In every pruned layer the top keep-fraction neurons by predictivity stay active. The rest are held
at a constant baseline activation c, so their contribution ``c @ V_F`` is folded into b2 and their
rows of K, b1 and V are dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional

import numpy as np

from skillprobe.config import ModelConfig
from skillprobe.exception import ConfigException, ModelStateException, ShapeException
from skillprobe.model.hooks import ClampHook
from skillprobe.model.weights import ModelWeights, layer_prefix
from skillprobe.skillfind.table import PredictivityTable
from skillprobe.utils.logger import logger_service

logger = logger_service.get_analysis_logger()


def pruned_layer_range(num_layers: int, layer_fraction: float = 0.75) -> List[int]:
    """The top floor(layer_fraction * L) layers."""
    count = int(math.floor(layer_fraction * num_layers + 1e-12))
    return list(range(num_layers - count, num_layers))


def kept_count(d_m: int, keep_fraction: float) -> int:
    return int(math.ceil(keep_fraction * d_m - 1e-12))


@dataclass
class PrunePlan:
    """Kept / frozen neuron indices and clamp constants per pruned layer."""

    num_layers: int
    d_m: int
    keep_fraction: float
    kept: Dict[int, np.ndarray] = field(default_factory=dict)
    frozen: Dict[int, np.ndarray] = field(default_factory=dict)
    clamp: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def layers(self) -> List[int]:
        return sorted(self.kept)

    def validate(self) -> None:
        for layer in self.layers:
            union = np.concatenate([self.kept[layer], self.frozen[layer]])
            if union.size != self.d_m or not np.array_equal(np.sort(union), np.arange(self.d_m)):
                raise ShapeException(f"layer {layer}: kept and frozen neurons do not partition [0, {self.d_m})")
            if self.clamp[layer].shape != self.frozen[layer].shape:
                raise ShapeException(f"layer {layer}: {self.clamp[layer].size} clamp values for {self.frozen[layer].size} frozen neurons")

    def clamp_hook(self) -> ClampHook:
        """Hook that holds the frozen neurons of the full model at their clamp values."""
        return ClampHook(self.frozen, self.clamp)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "keep_fraction": self.keep_fraction,
            "layers": {str(layer): {"kept": self.kept[layer], "clamp_mean": float(np.mean(self.clamp[layer])) if self.clamp[layer].size else 0.0} for layer in self.layers},
        }


def build_prune_plan(
    scores: np.ndarray,
    table: PredictivityTable,
    keep_fraction: float = 0.02,
    layer_fraction: float = 0.75,
    trial: int = 0,
    clamp_mode: str = "mean_tokens",
) -> PrunePlan:
    """Keep each pruned layer's top neurons by ``scores``; clamp the rest to ``table`` baselines of ``trial``."""
    if not 0.0 < keep_fraction < 1.0:
        raise ConfigException(f"keep fraction must lie in (0, 1), got {keep_fraction}")
    num_layers, d_m = scores.shape
    if (table.num_layers, table.d_m) != (num_layers, d_m):
        raise ShapeException(f"table covers {table.num_layers}x{table.d_m} neurons, scores {num_layers}x{d_m}")
    baselines = table.clamp_values(trial, clamp_mode)
    keep = kept_count(d_m, keep_fraction)

    plan = PrunePlan(num_layers=num_layers, d_m=d_m, keep_fraction=keep_fraction)
    for layer in pruned_layer_range(num_layers, layer_fraction):
        order = np.argsort(-scores[layer], kind="stable")
        plan.kept[layer] = np.sort(order[:keep])
        plan.frozen[layer] = np.sort(order[keep:])
        plan.clamp[layer] = baselines[layer, plan.frozen[layer]].astype(np.float64)
    plan.validate()
    return plan


def fold(weights: ModelWeights, plan: PrunePlan) -> ModelWeights:
    """Drop frozen neurons and fold their constant contribution into b2."""
    if weights.pruned:
        raise ModelStateException("weights are already pruned")
    plan.validate()
    updates: Dict[str, np.ndarray] = {}
    for layer in plan.layers:
        prefix = layer_prefix(layer)
        k_mat, b1, v_mat, b2 = weights.ffn(layer)
        kept, frozen = plan.kept[layer], plan.frozen[layer]
        updates[prefix + "ffn.k"] = k_mat[kept].copy()
        updates[prefix + "ffn.b1"] = b1[kept].copy()
        updates[prefix + "ffn.v"] = v_mat[kept].copy()
        updates[prefix + "ffn.b2"] = b2 + plan.clamp[layer] @ v_mat[frozen] if frozen.size else b2.copy()

    tensors = dict(weights.tensors)
    tensors.update(updates)
    pruned = ModelWeights(
        config=weights.config,
        tensors=tensors,
        kind="pruned",
        kept_indices={layer: plan.kept[layer].copy() for layer in plan.layers},
    )
    pruned.check_shapes()
    logger.info(
        "folded %s layers: parameters %s -> %s",
        len(plan.layers),
        weights.parameter_count(),
        pruned.parameter_count(),
    )
    return pruned


# -----------------------------------------------------------------------------
# Closed-form counts
# -----------------------------------------------------------------------------


def _widths(config: ModelConfig, widths: Optional[Mapping[int, int]]) -> List[int]:
    widths = widths or {}
    return [int(widths.get(layer, config.d_m)) for layer in range(config.num_layers)]


def count_parameters(config: ModelConfig, widths: Optional[Mapping[int, int]] = None) -> int:
    """Embeddings + attention + layer norms + FFN at the given per-layer widths + final norm."""
    d = config.d
    total = config.vocab_size * d + config.max_positions * d + 2 * d
    for width in _widths(config, widths):
        total += 4 * d  # two layer norms
        total += 4 * d * d + 4 * d  # attention
        total += 2 * width * d + width + d  # ffn
    return total


def forward_flops(config: ModelConfig, seq_len: int, widths: Optional[Mapping[int, int]] = None) -> int:
    """Multiply-add FLOPs (2 per MAC) of one sequence through the encoder and the MASK-position head."""
    d, t = config.d, seq_len
    total = 2 * d * config.vocab_size
    for width in _widths(config, widths):
        total += 2 * t * d * d * 4  # q, k, v, o projections
        total += 2 * t * t * d * 2  # scores and context
        total += 2 * t * d * width * 2  # K and V
    return total


def flop_ratio(config: ModelConfig, seq_len: int, plan: PrunePlan) -> float:
    widths = {layer: len(plan.kept[layer]) for layer in plan.layers}
    return forward_flops(config, seq_len) / forward_flops(config, seq_len, widths)


def plan_widths(plan: PrunePlan) -> Dict[int, int]:
    return {layer: int(len(plan.kept[layer])) for layer in plan.layers}
